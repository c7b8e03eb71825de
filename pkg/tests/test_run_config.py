import pytest

from quermass.errors import ConfigError, ParameterDomainError
from quermass.run_config import (GridSpec, RunConfig, load_run_config, parse_grid, parse_run_text,
                                 parse_window, run_config_from_dict)

SCAN_TEXT = """
# wired scan of the worked example
beta = 2.0
R0 = 1
R1 = 1
window = 12x10
grid = s:0.5:1.5:3
sweeps = 50   # short
pressure = yes
"""


class TestParsers:
    def test_linspace_grid(self):
        grid = parse_grid("s:0.5:1.5:3")
        assert grid == GridSpec("s", (0.5, 1.0, 1.5))

    def test_list_grid(self):
        grid = parse_grid("z:1,2,4")
        assert grid.kind == "z"
        assert grid.s_values(2.0).tolist() == [0.5, 1.0, 2.0]

    @pytest.mark.parametrize("text", ["x:1,2", "s", "s:1:2", "s:0,1", "s:1:2:0"])
    def test_bad_grids(self, text):
        with pytest.raises(ValueError):
            parse_grid(text)

    def test_window(self):
        assert parse_window("8") == (8, 8)
        assert parse_window("12x10") == (12, 10)
        with pytest.raises(ValueError):
            parse_window("1x2x3")


class TestRunText:
    def test_values_and_lines(self):
        run = parse_run_text(SCAN_TEXT, "scan.conf")
        assert run.beta == 2.0
        assert run.window == (12, 10)
        assert run.sweeps == 50
        assert run.pressure is True
        assert run.lines["grid"] == 7
        assert run.grid.z_values(run.beta).tolist() == [1.0, 2.0, 3.0]

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError) as info:
            parse_run_text("beta = 1\ngamma = 2\n", "bad.conf")
        assert info.value.line == 2
        assert info.value.field == "gamma"
        assert "bad.conf:2" in str(info.value)

    def test_bad_value(self):
        with pytest.raises(ConfigError) as info:
            parse_run_text("sweeps = many\n")
        assert info.value.field == "sweeps"

    def test_duplicate_key(self):
        with pytest.raises(ConfigError):
            parse_run_text("beta = 1\nbeta = 2\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            parse_run_text("beta 1\n")

    def test_z_and_s_together(self):
        with pytest.raises(ConfigError) as info:
            parse_run_text("z = 1\ns = 2\n")
        assert info.value.field == "s"


class TestResolution:
    def test_s_sets_the_activity(self):
        run = RunConfig(beta=4.0, s=1.5)
        assert run.params().z == pytest.approx(6.0)

    def test_invalid_parameters_name_the_field(self):
        with pytest.raises(ConfigError) as info:
            parse_run_text("theta2 = -1\n", "p.conf").validate()
        assert info.value.field == "theta2"

    def test_range_checks(self):
        with pytest.raises(ConfigError) as info:
            RunConfig(sweeps=0).validate()
        assert info.value.field == "sweeps"
        with pytest.raises(ConfigError):
            RunConfig(boundary="periodic").validate()
        with pytest.raises(ConfigError):
            RunConfig(dimer_weight=0.3).validate()

    def test_sample_counts(self):
        run = parse_run_text("offset_samples = 1024\ni_gamma_samples = 0\n").validate()
        assert run.offset_samples == 1024 and run.i_gamma_samples == 0
        assert RunConfig().offset_samples == 256
        for key, value in (("offset_samples", 1), ("i_gamma_samples", 1)):
            with pytest.raises(ConfigError) as info:
                RunConfig(**{key: value}).validate()
            assert info.value.field == key

    def test_L_below_minimum(self):
        with pytest.raises(ParameterDomainError):
            RunConfig(L=2).validate()

    def test_window_geometry(self):
        run = RunConfig(window=(4, 6))
        window = run.window_geometry()
        delta = run.tiling().delta
        assert window.area == pytest.approx(24 * delta * delta)
        assert run.tile_box().i0 == -2 and run.tile_box().j0 == -3

    def test_overrides_win(self):
        run = RunConfig(seed=1).with_overrides(seed=9, out="/tmp/elsewhere")
        assert run.seed == 9 and run.out == "/tmp/elsewhere"
        assert run.threads == RunConfig().threads

    def test_dict_round_trip(self):
        run = parse_run_text(SCAN_TEXT, "scan.conf")
        assert run_config_from_dict(run.to_dict()) == run


class TestLoad:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_run_config(tmp_path / "absent.conf")

    def test_defaults_and_overrides(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("beta = 0.5\nwindow = 6\n")
        run = load_run_config(path, seed=3, threads=2)
        assert run.seed == 3 and run.threads == 2
        assert run.beta == 0.5
        assert run.source == str(path)
        assert load_run_config().source == "<defaults>"
