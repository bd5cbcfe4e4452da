"""Command line interface and experiment presets."""

import math
import os

import pytest

from bedd.cli import main
from bedd.experiments import preset_config
from bedd.scenario import ConfigError, ScenarioConfig


class TestPresets:
    def test_preset_a_disables_bearings(self):
        cfg = preset_config("a")
        assert cfg.bearing_factors is False
        assert cfg.channel.outlier_prob == 0.0

    def test_preset_b_enables_bearings(self):
        cfg = preset_config("b")
        assert cfg.bearing_factors is True
        assert cfg.channel.bearing_sigma == pytest.approx(math.radians(10.0))
        assert cfg.channel.outlier_prob == 0.0

    def test_preset_c_adds_outliers(self):
        cfg = preset_config("c")
        assert cfg.bearing_factors is True
        assert cfg.channel.outlier_prob == 0.05
        assert cfg.channel.outlier_min == pytest.approx(math.radians(40.0))
        assert cfg.channel.outlier_max == pytest.approx(math.radians(120.0))

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset_config("z")

    def test_preset_layers_on_base(self):
        base = ScenarioConfig(steps=33)
        assert preset_config("b", base).steps == 33


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    """One tiny CLI run shared by the query-command tests."""
    out = str(tmp_path_factory.mktemp("cli_run"))
    code = main(
        [
            "run", "--preset", "b", "--seed", "3", "--out", out,
            "--set", "steps=30", "--no-plots",
        ]
    )
    assert code == 0
    return out


class TestRunCommand:
    def test_outputs_written(self, run_dir):
        seed_dir = os.path.join(run_dir, "seed003")
        names = sorted(os.listdir(seed_dir))
        assert "metrics.csv" in names
        assert "trajectory_agent0.csv" in names
        assert "trajectory_agent4.csv" in names
        assert os.path.exists(os.path.join(run_dir, "merged_metrics.csv"))

    def test_stdout_summary(self, run_dir, capsys):
        # rerunning through main prints one line per seed
        code = main(
            ["run", "--preset", "a", "--seed", "1", "--out", run_dir,
             "--set", "steps=20", "--no-plots"]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "seed 1:" in out
        assert "mean ATE" in out

    def test_bad_override_key_exits_2(self, capsys):
        code = main(["run", "--preset", "a", "--set", "nope=1", "--no-plots"])
        assert code == 2
        assert "nope" in capsys.readouterr().err

    def test_malformed_set_exits_2(self):
        assert main(["run", "--preset", "a", "--set", "steps", "--no-plots"]) == 2

    def test_config_file(self, tmp_path):
        cfg_file = tmp_path / "s.cfg"
        cfg_file.write_text("steps = 20\nfleet_size = 3\n")
        out = str(tmp_path / "out")
        code = main(
            ["run", "--config", str(cfg_file), "--seed", "2", "--out", out,
             "--no-plots"]
        )
        assert code == 0
        assert os.path.exists(os.path.join(out, "seed002", "metrics.csv"))


class TestMetricsCommand:
    def test_recompute_from_csv(self, run_dir, capsys):
        code = main(["metrics", "--in", os.path.join(run_dir, "seed003")])
        out = capsys.readouterr().out
        assert code == 0
        for r in range(5):
            assert f"robot {r}:" in out


class TestPlotCommand:
    def test_writes_image(self, run_dir, tmp_path):
        target = str(tmp_path / "tracks.png")
        code = main(
            ["plot", "--in", os.path.join(run_dir, "seed003"), "--out", target]
        )
        assert code == 0
        assert os.path.getsize(target) > 1000


class TestEntrypoint:
    def test_console_script_help(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
