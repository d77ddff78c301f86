"""Profile, INI file and flag resolution plus the run echo."""
import json

import pytest

from src.core.config_service import (ECHO_FILE, RUN_INFO_FILE, ConfigurationService, parse_ini_text,
                                     parse_overrides, render_ini)
from src.core.dependency_container import DependencyContainer
from src.core.profile_manager import ProfileManager
from src.domain.errors import ConfigError
from src.domain.models import COARSE_CATEGORIES, RunConfig, ScanMode
from src.util import error_translator as codes
from src.util.compute_checksum import compute_sha256_text


@pytest.fixture
def service():
    return ConfigurationService(ProfileManager())


class TestProfiles:

    def test_desk_is_default(self, service):
        config = service.resolve()
        assert config.profile == "desk"
        assert config.model.image_size == 32
        assert config.model.stage_depths == (2, 2)
        assert config.hessian.batch_size == 8

    def test_full_hessian_protocol(self, service):
        config = service.resolve("full-hessian")
        assert (config.hessian.num_samples, config.hessian.batch_size, config.hessian.k) == (3000, 15, 5)

    def test_unknown_profile(self, service):
        with pytest.raises(ConfigError) as info:
            service.resolve("cluster")
        assert info.value.code == codes.UNKNOWN_PROFILE

    def test_custom_profiles_dir(self, tmp_path):
        (tmp_path / "tiny.json").write_text(json.dumps({"sections": {"train": {"total_steps": 3}}}),
                                            encoding="utf-8")
        (tmp_path / "broken.json").write_text("{", encoding="utf-8")
        manager = ProfileManager(str(tmp_path))
        assert manager.get_profile_names() == ["desk", "tiny"]
        config = ConfigurationService(manager).resolve("tiny")
        assert config.train.total_steps == 3

    def test_singleton(self):
        assert ProfileManager() is ProfileManager()


class TestLayering:

    def test_ini_then_flags_then_overrides(self, service, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[train]\ntotal_steps = 5\nseed = 2\n\n[model]\nscan_mode = sequential\n", encoding="utf-8")
        config = service.resolve(ini_path=str(ini), flags={"train": {"seed": 9, "batch_size": None}},
                                 overrides=("train.learning_rate=0.5",))
        assert config.train.total_steps == 5
        assert config.train.seed == 9
        assert config.train.batch_size == 8
        assert config.train.learning_rate == 0.5
        assert config.model.scan_mode == ScanMode.SEQUENTIAL

    def test_missing_ini_file(self, service, tmp_path):
        with pytest.raises(ConfigError) as info:
            service.resolve(ini_path=str(tmp_path / "absent.ini"))
        assert info.value.code == codes.MISSING_CONFIG_KEY

    def test_unknown_key(self, service):
        with pytest.raises(ConfigError) as info:
            service.resolve(overrides=("train.momentum=0.9",))
        assert info.value.code == codes.UNKNOWN_CONFIG_KEY
        assert info.value.key == "train.momentum"

    def test_unknown_section(self):
        with pytest.raises(ConfigError) as info:
            parse_ini_text("[optimizer]\nlr = 1\n")
        assert info.value.code == codes.UNKNOWN_CONFIG_KEY

    def test_unparseable_value(self, service):
        with pytest.raises(ConfigError) as info:
            service.resolve(overrides=("hessian.k=five",))
        assert info.value.code == codes.INVALID_CONFIG_VALUE

    def test_malformed_override(self):
        with pytest.raises(ConfigError):
            parse_overrides(["total_steps=3"])
        assert parse_overrides(["ood.kinds=rotation,contrast"]) == {"ood": {"kinds": "rotation,contrast"}}

    def test_tuple_values(self, service):
        config = service.resolve(overrides=("ood.kinds=rotation,contrast",))
        assert config.ood.kinds == ("rotation", "contrast")

    def test_render_parse_roundtrip(self, service):
        config = service.resolve("full-hessian", overrides=("train.learning_rate=0.0003",))
        assert parse_ini_text(render_ini(config), RunConfig(profile="full-hessian")) == config


class TestEcho:

    def test_echo_files(self, service, tmp_path):
        config = service.resolve(flags={"paths": {"out": str(tmp_path / "run")}})
        written = service.write_echo(config, "train")
        echo = (tmp_path / "run" / ECHO_FILE).read_text(encoding="utf-8")
        info = json.loads((tmp_path / "run" / RUN_INFO_FILE).read_text(encoding="utf-8"))
        assert written["echo"].endswith(ECHO_FILE)
        assert "[hessian]" in echo and "num_samples = 32" in echo
        assert info["command"] == "train"
        assert info["config_sha256"] == compute_sha256_text(echo)
        assert parse_ini_text(echo) == config

    def test_echo_carries_perturb_synthetic_and_ladders(self, service, tmp_path):
        config = service.resolve(flags={"paths": {"out": str(tmp_path / "run")},
                                        "perturb": {"input": "imgs", "kind": "rotation", "level": 90.0},
                                        "synthetic": {"per_class": 3}},
                                 overrides=("ood.levels=contrast=1.0 0.5,rotation=0 180",))
        service.write_echo(config, "perturb")
        echo = (tmp_path / "run" / ECHO_FILE).read_text(encoding="utf-8")
        assert "[perturb]" in echo and "kind = rotation" in echo and "level = 90.0" in echo
        assert "[synthetic]" in echo and "per_class = 3" in echo
        assert "levels = contrast=1.0 0.5,rotation=0 180" in echo
        restored = parse_ini_text(echo)
        assert restored == config
        assert restored.ood.levels == ("contrast=1.0 0.5", "rotation=0 180")
        assert list(restored.ood.categories) == list(COARSE_CATEGORIES)


class TestDependencyContainer:

    def test_register_and_factory(self):
        container = DependencyContainer()
        container.register("value", 3)
        calls = []
        container.register_factory("derived", lambda c: calls.append(1) or c.get("value") * 2)
        assert container.get("derived") == 6
        assert container.get("derived") == 6
        assert calls == [1]
        assert container.has("value") and not container.has("absent")

    def test_missing_service(self):
        with pytest.raises(KeyError):
            DependencyContainer().get("absent")
