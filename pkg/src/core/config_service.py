# src/core/config_service.py
import configparser
import dataclasses
import io
import json
import logging
import os
import typing
from enum import Enum
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence

from src.core.profile_manager import DEFAULT_PROFILE, ProfileManager
from src.domain.errors import ConfigError
from src.domain.models import RunConfig
from src.util import error_translator as codes
from src.util.compute_checksum import compute_sha256_text
from src.util.paths import get_output_path, get_version
from src.util.resources import resource_snapshot

logger = logging.getLogger(__name__)

SECTIONS = ("paths", "model", "train", "eval", "ood", "hessian", "perturb", "synthetic")
ECHO_FILE = "config_echo.ini"
RUN_INFO_FILE = "run_info.json"


def _parse_value(raw: Any, annotation: Any, key: str) -> Any:
    """Convert an INI/JSON/flag value to the annotated field type."""
    origin = typing.get_origin(annotation)
    try:
        if origin is tuple:
            (item_type, *_) = typing.get_args(annotation)
            items = raw if isinstance(raw, (list, tuple)) else [p for p in str(raw).split(",") if p.strip()]
            return tuple(_parse_value(item, item_type, key) for item in items)
        if isinstance(annotation, type) and issubclass(annotation, Enum):
            return annotation(str(raw).strip())
        if annotation is bool:
            if isinstance(raw, bool):
                return raw
            lowered = str(raw).strip().lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("true", "1", "yes")
        if annotation is int:
            return int(str(raw).strip())
        if annotation is float:
            return float(str(raw).strip())
        return str(raw).strip() if isinstance(raw, str) else str(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r}", code=codes.INVALID_CONFIG_VALUE, key=key)


def _format_value(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (tuple, list)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def apply_section(section_obj: Any, values: Mapping[str, Any], section: str) -> Any:
    """Copy of a config dataclass with the given keys overridden; unknown keys are rejected."""
    hints = typing.get_type_hints(type(section_obj))
    known = {f.name for f in dataclasses.fields(section_obj)}
    updates = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(code=codes.UNKNOWN_CONFIG_KEY, key=f"{section}.{key}")
        updates[key] = _parse_value(raw, hints[key], f"{section}.{key}")
    return dataclasses.replace(section_obj, **updates)


def section_to_strings(section_obj: Any) -> Dict[str, str]:
    return {f.name: _format_value(getattr(section_obj, f.name)) for f in dataclasses.fields(section_obj)}


def render_ini(config: RunConfig, sections: Sequence[str] = SECTIONS) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for section in sections:
        parser[section] = section_to_strings(getattr(config, section))
    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


def parse_ini_text(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    """Overlay INI text onto a config; unknown sections and keys raise ConfigError."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e), code=codes.INVALID_CONFIG_VALUE)
    config = base or RunConfig()
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(code=codes.UNKNOWN_CONFIG_KEY, key=section)
        updated = apply_section(getattr(config, section), dict(parser[section]), section)
        config = dataclasses.replace(config, **{section: updated})
    return config


def parse_overrides(pairs: Iterable[str]) -> Dict[str, Dict[str, str]]:
    """'section.key=value' strings grouped by section."""
    grouped: Dict[str, Dict[str, str]] = {}
    for pair in pairs:
        name, sep, value = pair.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot or not key:
            raise ConfigError(f"override '{pair}' is not section.key=value", code=codes.INVALID_CONFIG_VALUE)
        grouped.setdefault(section, {})[key] = value
    return grouped


class ConfigurationService:
    """Resolves a RunConfig from profile, INI file and command-line flags, in that order."""

    def __init__(self, profile_manager: Optional[ProfileManager] = None):
        self.profile_manager = profile_manager or ProfileManager()

    def resolve(self, profile: Optional[str] = None, ini_path: Optional[str] = None,
                flags: Optional[Mapping[str, Mapping[str, Any]]] = None,
                overrides: Iterable[str] = ()) -> RunConfig:
        profile_name = profile or DEFAULT_PROFILE
        config = self._apply(RunConfig(profile=profile_name), self.profile_manager.get_profile(profile_name).sections)

        if ini_path:
            if not os.path.exists(ini_path):
                raise ConfigError(f"config file {ini_path} not found", code=codes.MISSING_CONFIG_KEY)
            with open(ini_path, "r", encoding="utf-8") as f:
                config = parse_ini_text(f.read(), config)
            logger.info(f"Applied config file {ini_path}")

        if flags:
            config = self._apply(config, {s: {k: v for k, v in vals.items() if v is not None}
                                          for s, vals in flags.items()})
        config = self._apply(config, parse_overrides(overrides))
        return config

    def _apply(self, config: RunConfig, sections: Mapping[str, Mapping[str, Any]]) -> RunConfig:
        for section, values in sections.items():
            if section not in SECTIONS:
                raise ConfigError(code=codes.UNKNOWN_CONFIG_KEY, key=section)
            if values:
                updated = apply_section(getattr(config, section), values, section)
                config = dataclasses.replace(config, **{section: updated})
        return config

    def write_echo(self, config: RunConfig, command: str) -> Dict[str, str]:
        """Write config_echo.ini and run_info.json into the run's output directory."""
        out_dir = get_output_path(config.paths.out)
        echo = render_ini(config)
        echo_path = os.path.join(out_dir, ECHO_FILE)
        with open(echo_path, "w", encoding="utf-8") as f:
            f.write(echo)
        info = {
            "command": command,
            "profile": config.profile,
            "version": get_version(),
            "seed": config.train.seed,
            "config_sha256": compute_sha256_text(echo),
            "resources": resource_snapshot(),
        }
        info_path = os.path.join(out_dir, RUN_INFO_FILE)
        with open(info_path, "w", encoding="utf-8") as f:
            json.dump(info, f, indent=2)
        logger.info(f"Config echo written to {echo_path}")
        return {"echo": echo_path, "run_info": info_path}
