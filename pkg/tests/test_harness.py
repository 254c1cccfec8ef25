import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leakbeam.channel import SystemConfig, eta
from leakbeam.cli import main
from leakbeam.errors import ConfigurationError
from leakbeam.harness import (
    COLUMNS,
    RECIPES,
    build_spec,
    cdf_rows,
    parse_config_text,
    parse_grid,
    parse_value,
    render,
    run,
)


def data_rows(text):
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


class TestParsing:
    def test_grid_range(self):
        assert parse_grid("0:5:30") == (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)

    def test_grid_list_and_single(self):
        assert parse_grid("10,20") == (10.0, 20.0)
        assert parse_grid("7.5") == (7.5,)

    @given(st.integers(-10, 10), st.integers(1, 5), st.integers(0, 8))
    def test_grid_inclusive(self, start, step, n):
        g = parse_grid(f"{start}:{step}:{start + step * n}")
        assert len(g) == n + 1 and g[0] == start and g[-1] == start + step * n

    def test_bad_values_name_the_key(self):
        with pytest.raises(ConfigurationError, match="'B'"):
            parse_value("B", "six")
        with pytest.raises(ConfigurationError, match="'snr_db'"):
            parse_value("snr_db", "0:x:30")

    def test_unknown_key_suggestion(self):
        with pytest.raises(ConfigurationError, match="did you mean 'delta'"):
            parse_config_text("detla = 0.8\n")

    def test_config_text(self):
        vals = parse_config_text("# comment\nN = 4\nschemes = zf, malc\nsnr_db = 0:10:20\n\n")
        assert vals["N"] == 4 and vals["schemes"] == ("zf", "malc")
        assert vals["snr_db"] == (0.0, 10.0, 20.0)


class TestBuildSpec:
    def test_defaults(self):
        spec = build_spec({}, {"schemes": ("zf",)})
        cfg = spec.config
        assert (cfg.N, cfg.K, cfg.B, cfg.delta, cfg.epsilon, cfg.L_rand) == (4, 4, 6, 0.8, 0.01, 1000)
        assert cfg.alpha == (1.5, 1.5, 1.0, 1.0) and cfg.xi == (1.0,) * 4
        np.testing.assert_allclose(cfg.P_n, [25.0] * 4)   # 20 dB split over antennas
        assert spec.n_trials == 500 and spec.output_format == "csv"

    def test_empty_scheme_list(self):
        with pytest.raises(ConfigurationError, match="no schemes"):
            build_spec({}, {})
        with pytest.raises(ConfigurationError, match="unknown scheme"):
            build_spec({}, {"schemes": ("zf", "mmse")})

    def test_precedence(self):
        spec = build_spec({"B": 4, "trials": 9, "schemes": ("zf",)},
                          {"B": 8, "recipe": "fig5"})
        assert spec.config.B == 8            # flag over file
        assert spec.n_trials == 9            # file over recipe and defaults
        assert spec.schemes == ("zf",)       # file over recipe
        assert spec.config.L_algo1 == 1      # recipe over defaults

    def test_other_user_counts(self):
        spec = build_spec({}, {"schemes": ("zf",), "K": 2})
        assert spec.config.alpha == (1.0, 1.0)

    def test_recipes_are_complete(self):
        for name, rec in RECIPES.items():
            assert rec["kind"] in COLUMNS, name
        assert RECIPES["fig2"]["kind"] == "cdf"
        assert build_spec({}, {"recipe": "fig4"}).snr_db_grid == parse_grid("0:5:30")

    def test_cdf_command_rejects_rate_recipe(self):
        with pytest.raises(ConfigurationError):
            build_spec({}, {"recipe": "fig4"}, command="cdf")


class TestCdfGrid:
    @pytest.mark.parametrize("quantity,N,B", [("D", 2, 2), ("D", 4, 6), ("V", 2, 4), ("V", 4, 4)])
    def test_empirical_tracks_analytical(self, quantity, N, B):
        n = 20000
        rows = cdf_rows(quantity, N, B, n, 25, seed=0)
        x = np.array([r["x"] for r in rows])
        an = np.array([r["analytical"] for r in rows])
        emp = np.array([r["empirical"] for r in rows])
        assert np.all(np.diff(x) > 0) and np.all(np.diff(an) >= 0)
        # well inside the 99.9% Kolmogorov band for n samples
        assert np.max(np.abs(an - emp)) <= 1.95 / np.sqrt(n)

    def test_rows_are_deterministic(self):
        assert cdf_rows("V", 4, 6, 500, 5, 3) == cdf_rows("V", 4, 6, 500, 5, 3)


class TestRunAndRender:
    def test_rate_rows(self):
        spec = build_spec({}, {"schemes": ("zf", "slnr"), "snr_db": (0.0, 10.0), "trials": 3})
        columns, rows = run(spec)
        assert columns == COLUMNS["rate"]
        assert [(r["scheme"], r["snr_db"]) for r in rows] == [("zf", 0.0), ("zf", 10.0),
                                                ("slnr", 0.0), ("slnr", 10.0)]

    def test_json_and_csv_carry_same_data(self):
        spec = build_spec({}, {"schemes": ("zf",), "trials": 2})
        columns, rows = run(spec)
        as_csv = data_rows(render(spec, columns, rows))
        spec_j = build_spec({}, {"schemes": ("zf",), "trials": 2, "format": "json"})
        as_json = json.loads(render(spec_j, columns, rows))
        assert float(as_csv[0]["mean_rate"]) == as_json["records"][0]["mean_rate"]
        assert as_json["metadata"]["config"]["schemes"] == "zf"

    def test_output_reproduces_itself(self, tmp_path):
        out = tmp_path / "first.csv"
        assert main(["run", "--scheme", "zf,aslnr", "--snr-db", "5", "--trials", "2",
                     "--set", "B=4", "--seed", "11", "--out", str(out)]) == 0
        again = tmp_path / "second.csv"
        assert main(["run", "--config", str(out), "--out", str(again)]) == 0
        assert out.read_bytes() == again.read_bytes()
        vals = parse_config_text(out.read_text())
        assert vals["B"] == 4 and vals["seed"] == 11


class TestCli:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "leakbeam" in capsys.readouterr().out

    def test_errors_exit_with_two(self, capsys):
        assert main(["run"]) == 2
        assert "no schemes" in capsys.readouterr().err
        assert main(["run", "--scheme", "zf", "--set", "Bx=3"]) == 2
        assert "did you mean" in capsys.readouterr().err
        assert main(["run", "--scheme", "zf", "--trials", "many"]) == 2
        assert "'trials'" in capsys.readouterr().err
        assert main(["run", "--scheme", "zf", "--set", "novalue"]) == 2

    def test_cdf_command(self, capsys):
        assert main(["cdf", "--set", "cdf_samples=1000", "--set", "cdf_points=4",
                     "--set", "cdf_pairs=4:6"]) == 0
        rows = data_rows(capsys.readouterr().out)
        assert len(rows) == 4 and rows[0]["quantity"] == "V"

    def test_gp_recipe(self, capsys):
        assert main(["run", "--recipe", "fig5", "--trials", "2", "--snr-db", "10",
                     "--set", "L_rand=50"]) == 0
        rows = data_rows(capsys.readouterr().out)
        assert {r["scheme"] for r in rows} == {"malc-pa", "ralc-pa"}
        assert all(float(r["mean_pd"]) >= 0 for r in rows)

    def test_verify_single_criterion(self, capsys):
        assert main(["verify", "--only", "3"]) == 0
        out = capsys.readouterr().out
        assert "criterion  3 [PASS]" in out
