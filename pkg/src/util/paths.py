import os
from datetime import datetime


def get_project_root():
    """Directory holding main.py, profiles/ and version.txt."""
    return os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def get_version():
    """Version string from version.txt, or 'unknown'."""
    try:
        with open(os.path.join(get_project_root(), "version.txt"), "r", encoding="utf-8") as f:
            return f.read().strip() or "unknown"
    except OSError:
        return "unknown"


def get_output_path(out_dir):
    """Ensure the run's output directory exists."""
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def get_logs_path(out_dir):
    """Get the path to the logs directory of a run."""
    logs_dir = os.path.join(out_dir, "logs")
    os.makedirs(logs_dir, exist_ok=True)
    return logs_dir


def get_log_file_path(out_dir, filename_prefix="run"):
    """Get a full path for a log file with timestamp."""
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    return os.path.join(get_logs_path(out_dir), f"{filename_prefix}_{timestamp}.log")


def get_checkpoint_dir(out_dir):
    checkpoint_dir = os.path.join(out_dir, "checkpoints")
    os.makedirs(checkpoint_dir, exist_ok=True)
    return checkpoint_dir


def get_checkpoint_file_path(out_dir, step):
    return os.path.join(get_checkpoint_dir(out_dir), f"step_{step:06d}.ckpt")


def get_report_file_path(out_dir, filename):
    """Get a full path for a report file, creating the output directory."""
    return os.path.join(get_output_path(out_dir), filename)
