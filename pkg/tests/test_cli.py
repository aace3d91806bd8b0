import numpy as np
import pytest

from dmdmpc import cli
from dmdmpc.config import ConfigError, RunConfig, parse_config

TINY = """\
[plant]
grid_size = 31
window_offset = 6
window_size = 18
actuators_per_axis = 3
source_radius = 4.0
u_max = 40.0

[excitation]
steps = 220
hold = 10

[truncation]
s_value = 18
r_value = 10

[reference]
sigma = 6.0
amplitude = 5.0

[run]
train_size = 180
validation_steps = 30
control_steps = 4
validate_tol = 1.0
ablation_orders = 6,10
ablation_sizes = 120,180
"""


@pytest.fixture(scope="module")
def tiny_cfg_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.cfg"
    path.write_text(TINY)
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, tiny_cfg_file):
    """Full pipeline run on the tiny configuration."""
    out = tmp_path_factory.mktemp("ws")
    base = ["--config", str(tiny_cfg_file), "--out", str(out), "--quiet"]
    assert cli.main(["excite", *base]) == 0
    assert cli.main(["identify", *base]) == 0
    return out


class TestUsage:
    def test_no_arguments(self, capsys):
        assert cli.main([]) == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 1

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["excite", "--bogus"])
        assert exc.value.code == 1

    def test_missing_dataset_is_config_error(self, tmp_path, capsys):
        code = cli.main(["identify", "--out", str(tmp_path), "--quiet"])
        assert code == 1
        assert "excite" in capsys.readouterr().err


class TestConfigParsing:
    def test_defaults_roundtrip(self):
        cfg = RunConfig({})
        assert cfg.get("plant", "grid_size") == 71
        assert cfg.get("run", "seed") == 2025
        text = cfg.to_text()
        assert "[plant]" in text and "grid_size = 71" in text

    def test_unknown_section_line_numbered(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("[plant]\ngrid_size = 31\n\n[warp]\nspeed = 9\n")
        with pytest.raises(ConfigError, match=r"bad\.cfg:4"):
            parse_config(p)

    def test_unknown_key_line_numbered(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("[plant]\nflux = 3\n")
        with pytest.raises(ConfigError, match=r"bad\.cfg:2"):
            parse_config(p)

    def test_type_error_line_numbered(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("[plant]\ngrid_size = large\n")
        with pytest.raises(ConfigError, match=r"bad\.cfg:2.*integer"):
            parse_config(p)

    def test_key_outside_section(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("grid_size = 31\n")
        with pytest.raises(ConfigError, match=r"bad\.cfg:1"):
            parse_config(p)

    def test_module_invariants_enforced_at_parse(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("[plant]\nalpha = -2.0\n")
        with pytest.raises(ConfigError, match="alpha"):
            parse_config(p)

    def test_invalid_config_exits_one(self, tmp_path, capsys):
        p = tmp_path / "bad.cfg"
        p.write_text("[mpc]\nhorizon = 0\n")
        assert cli.main(["excite", "--config", str(p), "--out", str(tmp_path)]) == 1
        assert "config error" in capsys.readouterr().err


class TestPipeline:
    def test_dataset_written(self, workspace):
        from dmdmpc.matio import load_dataset
        ds = load_dataset(workspace / "dataset")
        assert ds.n == 18 * 18
        assert ds.q == 9
        assert ds.m == 220
        assert (workspace / "dataset" / "manifest.cfg").exists()

    def test_model_written(self, workspace):
        from dmdmpc.dmdc import load_model
        model = load_model(workspace / "model")
        assert model.s == 18 and model.r == 10
        assert model.offset == 20.0
        assert (workspace / "model" / "energy.csv").exists()

    def test_validate_ok(self, workspace, tiny_cfg_file, capsys):
        code = cli.main(["validate", "--config", str(tiny_cfg_file),
                         "--out", str(workspace)])
        out = capsys.readouterr().out
        assert code == 0
        assert "max-abs error" in out
        assert (workspace / "validate" / "predicted_states.dmdmat").exists()

    def test_validate_numerical_failure_exits_two(self, workspace, tmp_path,
                                                  tiny_cfg_file, capsys):
        strict = tmp_path / "strict.cfg"
        strict.write_text(TINY.replace("validate_tol = 1.0",
                                       "validate_tol = 1e-12"))
        code = cli.main(["validate", "--config", str(strict),
                         "--out", str(workspace)])
        assert code == 2
        assert "FAILED" in capsys.readouterr().err

    def test_control_run(self, workspace, tiny_cfg_file):
        code = cli.main(["control", "--config", str(tiny_cfg_file),
                         "--out", str(workspace), "--quiet",
                         "--reference", "constant"])
        assert code == 0
        run_dir = workspace / "control-constant"
        assert (run_dir / "states.dmdmat").exists()
        assert (run_dir / "metrics.csv").exists()
        assert (run_dir / "run.json").exists()
        assert (run_dir / "manifest.cfg").exists()

    def test_excite_deterministic_bytes(self, tiny_cfg_file, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert cli.main(["excite", "--config", str(tiny_cfg_file),
                             "--out", str(out), "--quiet"]) == 0
        sa = (a / "dataset" / "states.dmdmat").read_bytes()
        sb = (b / "dataset" / "states.dmdmat").read_bytes()
        assert sa == sb

    def test_seed_flag_changes_data(self, tiny_cfg_file, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert cli.main(["excite", "--config", str(tiny_cfg_file),
                         "--out", str(a), "--quiet"]) == 0
        assert cli.main(["excite", "--config", str(tiny_cfg_file),
                         "--out", str(b), "--quiet", "--seed", "99"]) == 0
        sa = (a / "dataset" / "inputs.dmdmat").read_bytes()
        sb = (b / "dataset" / "inputs.dmdmat").read_bytes()
        assert sa != sb

    def test_manifest_records_resolved_config(self, workspace):
        text = (workspace / "dataset" / "manifest.cfg").read_text()
        assert "grid_size = 31" in text
        assert "seed = 2025" in text
