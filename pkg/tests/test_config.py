import json
from pathlib import Path

import pytest

from vadkit.config import default_configs, load_configs, resolve_checkpoint
from vadkit.errors import ConfigError, IoError

REPO_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "checkpoints.json"


class TestDefaults:
    def test_four_checkpoints(self):
        cfgs = default_configs()
        assert set(cfgs) == {"needle", "fme", "hook", "cortex"}
        assert cfgs["needle"].flips == ("vertical",)
        assert cfgs["fme"].flips == ("horizontal",)
        assert cfgs["hook"].flips == ()
        assert set(cfgs["cortex"].flips) == {"vertical", "horizontal", "both"}
        assert (cfgs["needle"].lam, cfgs["needle"].a0, cfgs["needle"].a1) == (6.0, 0, 2)
        assert (cfgs["cortex"].lam, cfgs["cortex"].a0, cfgs["cortex"].a1) == (3.0, 1, 3)
        assert cfgs["cortex"].snr_mode == "vessel"
        assert all(c.channel_fraction == 0.5 for c in cfgs.values())

    def test_shipped_file_matches_builtins(self):
        loaded = load_configs(REPO_CONFIG)
        assert loaded == default_configs()

    def test_resolve_by_name(self):
        assert resolve_checkpoint("hook").name == "hook"
        assert resolve_checkpoint("cortex", REPO_CONFIG).snr_mode == "vessel"

    def test_unknown_checkpoint(self):
        with pytest.raises(ConfigError, match="unknown checkpoint"):
            resolve_checkpoint("stage9")


class TestLoadConfigs:
    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            load_configs(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{nope")
        with pytest.raises(ConfigError):
            load_configs(p)

    def test_empty_document(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"checkpoints": {}}))
        with pytest.raises(ConfigError):
            load_configs(p)

    def test_invalid_checkpoint_body(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"checkpoints": {"x": {"lambda": -1}}}))
        with pytest.raises(ConfigError, match="lambda"):
            load_configs(p)
