import logging
import os
from typing import Any, Dict

import psutil

logger = logging.getLogger(__name__)


def resource_snapshot() -> Dict[str, Any]:
    """Memory and CPU facts recorded alongside every run echo."""
    try:
        process = psutil.Process(os.getpid())
        memory = psutil.virtual_memory()
        return {
            "rss_bytes": process.memory_info().rss,
            "total_memory_bytes": memory.total,
            "available_memory_bytes": memory.available,
            "logical_cpus": psutil.cpu_count(logical=True),
            "physical_cpus": psutil.cpu_count(logical=False),
        }
    except psutil.Error as e:
        logger.warning(f"Resource snapshot failed: {e}")
        return {}


def default_worker_count(requested: int = 0) -> int:
    """Thread count for batch fan-out; 0 means one per physical core."""
    if requested > 0:
        return requested
    cores = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or 1
    return max(1, cores)
