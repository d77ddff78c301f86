import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from src.domain.errors import ConfigError
from src.util import error_translator as codes

logger = logging.getLogger(__name__)

DEFAULT_PROFILE = "desk"


@dataclass
class ProfileConfig:
    """A named preset: INI-style section overrides applied before the user's config file."""
    name: str
    description: str
    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)


class ProfileManager:
    """Loads presets from the profiles/ directory."""

    _instance = None
    _profiles: Optional[Dict[str, ProfileConfig]] = None

    def __new__(cls, profiles_dir: Optional[str] = None):
        """Singleton pattern to ensure single instance."""
        if cls._instance is None:
            cls._instance = super(ProfileManager, cls).__new__(cls)
        return cls._instance

    def __init__(self, profiles_dir: Optional[str] = None):
        if profiles_dir is not None and profiles_dir != getattr(self, "_profiles_dir", None):
            self._profiles = None
        if self._profiles is None:
            self._profiles_dir = profiles_dir or self._get_default_profiles_dir()
            self._profiles = self._load_profiles(self._profiles_dir)
            logger.info(f"Profile Manager loaded {len(self._profiles)} profiles from {self._profiles_dir}")

    @staticmethod
    def _get_default_profiles_dir() -> str:
        return os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "profiles")

    def _load_profiles(self, directory: str) -> Dict[str, ProfileConfig]:
        profiles = {DEFAULT_PROFILE: self._get_desk_defaults()}
        if not os.path.isdir(directory):
            logger.warning(f"No profiles directory at {directory}, using built-in defaults")
            return profiles
        for filename in sorted(os.listdir(directory)):
            if not filename.endswith(".json"):
                continue
            path = os.path.join(directory, filename)
            try:
                with open(path, "r", encoding="utf-8") as f:
                    profile = self._parse_profile_config(json.load(f), filename[:-5])
                profiles[profile.name] = profile
            except (OSError, ValueError) as e:
                logger.error(f"Error loading profile {path}: {e}")
        return profiles

    def _parse_profile_config(self, profile_data: Dict[str, Any], fallback_name: str) -> ProfileConfig:
        return ProfileConfig(
            name=profile_data.get("name", fallback_name),
            description=profile_data.get("description", ""),
            sections={section: dict(values) for section, values in profile_data.get("sections", {}).items()},
        )

    def _get_desk_defaults(self) -> ProfileConfig:
        """Built-in desk profile, used when profiles/desk.json is absent."""
        return ProfileConfig(name=DEFAULT_PROFILE, description="Laptop-scale defaults")

    def get_profile(self, name: str = DEFAULT_PROFILE) -> ProfileConfig:
        try:
            return self._profiles[name]
        except KeyError:
            raise ConfigError(f"'{name}' (known: {', '.join(self.get_profile_names())})", code=codes.UNKNOWN_PROFILE)

    def get_profile_names(self) -> List[str]:
        return sorted(self._profiles)

    @classmethod
    def reset(cls) -> None:
        """Drop the cached instance; the next construction reloads from disk."""
        cls._instance = None
        cls._profiles = None
