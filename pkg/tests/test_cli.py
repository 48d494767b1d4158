import json

import numpy as np
import pytest

from vixpricer.american import SolverConfig
from vixpricer.cli import (EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, EXIT_VERIFY,
                           bundled_config_names, cmd_boundary, cmd_futures,
                           cmd_mc_check, cmd_price, cmd_skew, load_config,
                           main)


def test_bundled_catalog():
    names = bundled_config_names()
    for expected in ("fig1", "fig1_nu12", "fig1_mix", "fig2", "fig3", "fig4",
                     "fig5", "fig7"):
        assert expected in names


class TestCaptionParameters:
    def test_fig1(self):
        cfg = load_config("fig1")
        assert (cfg.cir.alpha, cfg.cir.beta, cfg.cir.kappa) == (2.94, 17.10, 2.05)
        assert (cfg.contract.strike, cfg.contract.maturity,
                cfg.contract.rate) == (0.15, 1.0, 0.05)
        assert cfg.model.family == "a1" and cfg.model.terms == ((1.0, 1.0),)

    def test_fig1_variants_use_adjusted_speeds(self):
        assert load_config("fig1_nu12").cir.alpha == 3.64
        assert load_config("fig1_nu12").model.terms == ((1.0, 1.2),)
        assert load_config("fig1_mix").cir.alpha == 3.27
        assert load_config("fig1_mix").model.terms == ((0.5, 1.0), (0.5, 1.2))

    def test_fig2(self):
        cfg = load_config("fig2")
        assert (cfg.cir.alpha, cfg.cir.beta, cfg.cir.kappa) == (3.0, 0.68, 1.0)
        assert cfg.model.family == "a2"
        # the caption's kappa keeps the factor strictly positive
        assert cfg.cir.beta >= 0.5 * cfg.cir.kappa**2

    def test_fig4_is_the_identity_model_with_fig1_coefficients(self):
        cfg = load_config("fig4")
        assert cfg.model.family == "a2"
        assert (cfg.cir.alpha, cfg.cir.beta, cfg.cir.kappa) == (2.94, 17.10, 2.05)

    def test_fig5(self):
        cfg = load_config("fig5")
        assert cfg.model.terms == ((0.1, 0.75),)
        assert cfg.model.terms_a2 == ((0.02, 1.0),)
        assert (cfg.cir.alpha, cfg.cir.beta, cfg.cir.kappa) == (0.2, 0.1, 0.7)
        assert cfg.contract.rate == 0.01
        assert cfg.contract.maturity == pytest.approx(2.0 / 12.0)
        assert cfg.state == {"x0": 0.137, "y0": 0.776}
        # the caption's factor level reproduces its VIX level
        from vixpricer.models import f_eval
        assert f_eval(cfg.model, 0.776) == pytest.approx(0.137, abs=6e-4)

    def test_fig7(self):
        cfg = load_config("fig7")
        assert (cfg.cir.alpha, cfg.cir.beta, cfg.cir.kappa) == (1.0, 2.0, 1.0)
        assert cfg.model.terms == ((0.07, 1.0),)
        assert cfg.model.terms_a2 == ((0.07, 1.0),)
        assert (cfg.contract.strike, cfg.contract.rate) == (0.15, 0.05)


class TestConfigLoading:
    def test_load_from_path(self, tmp_path):
        doc = {"model": {"class": "a1", "terms": [{"weight": 1.0, "power": 1.0}]},
               "cir": {"alpha": 2.94, "beta": 17.10, "kappa": 2.05},
               "contract": {"strike": 0.15, "maturity": 1.0, "rate": 0.05},
               "state": {"x0": 0.2}}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(doc))
        cfg = load_config(str(path))
        assert cfg.contract.kind == "call"
        assert cfg.initial_state() == 0.2

    def test_missing_file(self):
        with pytest.raises(ValueError):
            load_config("/nonexistent/path.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ValueError):
            load_config(str(path))

    def test_invalid_parameters(self, tmp_path):
        doc = {"model": {"class": "a1", "terms": [{"weight": 1.0, "power": 1.0}]},
               "cir": {"alpha": 1.0, "beta": 0.1, "kappa": 1.0},
               "contract": {"strike": 0.15, "maturity": 1.0, "rate": 0.05}}
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="Feller"):
            load_config(str(path))

    def test_mixture_state_resolution(self):
        cfg = load_config("fig5")
        assert cfg.initial_factor("lower") == pytest.approx(0.776, abs=2e-2)
        lower = cfg.initial_factor("lower")
        upper = cfg.initial_factor("upper")
        assert lower < upper


class TestCommands:
    def test_futures_zero_horizon_returns_spot(self):
        cfg = load_config("fig1")
        header, rows, _ = cmd_futures(cfg, [0.0])
        assert header == ["T", "F_quadrature", "F_taylor", "rel_gap"]
        assert rows[0][1] == pytest.approx(0.2)
        assert rows[0][3] == 0.0

    def test_futures_mixture_emits_both_branches(self):
        cfg = load_config("fig5")
        header, rows, _ = cmd_futures(cfg, [0.0, 1.0 / 12.0])
        assert header[0] == "branch"
        starts = {r[0]: r[2] for r in rows if r[1] == 0.0}
        assert starts["lower"] == pytest.approx(0.137)
        assert starts["upper"] == pytest.approx(0.137)
        assert len(rows) == 4

    def test_futures_single_branch_flag(self):
        cfg = load_config("fig5")
        _, rows, _ = cmd_futures(cfg, [0.0], branch="lower")
        assert len(rows) == 1 and rows[0][0] == "lower"

    def test_boundary_and_price_commands(self):
        cfg = load_config("fig1")
        cfg.solver = SolverConfig(n_steps=24)
        boundary = cmd_boundary(cfg)
        assert np.all(np.diff(boundary.values) <= 1e-12)
        header, rows, meta = cmd_price(cfg, 0.0, [0.1, 0.2, 0.3],
                                       boundary=boundary)
        assert header == ["state", "european", "american", "intrinsic"]
        for _, eu, am, intrinsic in rows:
            assert am >= max(eu, intrinsic) - 1e-6
        assert "nonconvexity_witness" in meta

    def test_skew_command(self):
        cfg = load_config("fig1")
        header, rows, _ = cmd_skew(cfg, 0.5, [-0.1, 0.0, 0.1])
        assert header == ["moneyness", "implied_vol"]
        assert all(v > 0 for _, v in rows)

    def test_mc_check_futures_zero_horizon(self):
        cfg = load_config("fig1")
        report = cmd_mc_check(cfg, "futures", 1000, 1, horizon=0.0)
        assert report["z"] == 0.0
        assert report["analytic"] == report["mc_mean"]

    def test_mc_check_european(self):
        cfg = load_config("fig1")
        report = cmd_mc_check(cfg, "european", 200_000, 5)
        assert abs(report["z"]) < 4.0
        assert report["std_error"] > 0.0

    def test_mc_check_american_reports_bias(self):
        cfg = load_config("fig1")
        cfg.solver = SolverConfig(n_steps=24)
        report = cmd_mc_check(cfg, "american", 20_000, 5, mc_steps=50)
        assert report["bias_indicator"] >= 0.0
        assert report["mc_time_steps"] == 50
        assert abs(report["z"]) < 6.0


class TestMainEntry:
    def test_futures_csv_deterministic(self, tmp_path, capsys):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        args = ["futures", "--config", "fig1", "--t-grid", "0.25,0.5",
                "--out"]
        assert main(args + [str(out1)]) == EXIT_OK
        assert main(args + [str(out2)]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()
        header = out1.read_text().splitlines()[0]
        assert header == "T,F_quadrature,F_taylor,rel_gap"

    def test_futures_json_format(self, capsys):
        assert main(["futures", "--config", "fig1", "--t-grid", "0.5",
                     "--format", "json"]) == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["columns"][0] == "T"
        assert len(payload["rows"]) == 1

    def test_boundary_csv_output(self, tmp_path):
        doc = {"model": {"class": "a1", "terms": [{"weight": 1.0, "power": 1.0}]},
               "cir": {"alpha": 2.94, "beta": 17.10, "kappa": 2.05},
               "contract": {"strike": 0.15, "maturity": 1.0, "rate": 0.05},
               "state": {"x0": 0.2},
               "solver": {"n_steps": 16}}
        path = tmp_path / "quick.json"
        path.write_text(json.dumps(doc))
        out = tmp_path / "bdry.csv"
        assert main(["boundary", "--config", str(path), "--out", str(out)]) == EXIT_OK
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "t,b"
        vals = [float(l.split(",")[1]) for l in lines[1:]]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_bad_config_exit_code(self, capsys):
        assert main(["boundary", "--config", "/no/such/file.json"]) == EXIT_CONFIG

    def test_assumption_violation_exit_code(self, tmp_path):
        # reciprocal map with beta <= kappa^2: no valid benefit sign change
        doc = {"model": {"class": "a1", "terms": [{"weight": 1.0, "power": 1.0}]},
               "cir": {"alpha": 2.94, "beta": 4.0, "kappa": 2.05},
               "contract": {"strike": 0.15, "maturity": 1.0, "rate": 0.05},
               "state": {"x0": 0.2}}
        path = tmp_path / "weak.json"
        path.write_text(json.dumps(doc))
        assert main(["boundary", "--config", str(path)]) == EXIT_SOLVER

    def test_mc_check_verification_exit(self, monkeypatch):
        import vixpricer.cli as cli
        report = {"target": "european", "z": 5.3, "analytic": 1.0,
                  "mc_mean": 0.9, "std_error": 0.01, "n_paths": 10, "seed": 0}
        monkeypatch.setattr(cli, "cmd_mc_check",
                            lambda *a, **k: report)
        assert main(["mc-check", "--config", "fig1", "--target", "european",
                     "--n", "10"]) == EXIT_VERIFY

    def test_price_csv_metadata_comment(self, tmp_path):
        doc = {"model": {"class": "a2", "terms": [{"weight": 1.0, "power": 1.0}]},
               "cir": {"alpha": 3.0, "beta": 0.68, "kappa": 1.0},
               "contract": {"strike": 0.15, "maturity": 1.0, "rate": 0.05},
               "state": {"x0": 0.2},
               "solver": {"n_steps": 16}}
        path = tmp_path / "quick.json"
        path.write_text(json.dumps(doc))
        out = tmp_path / "price.csv"
        assert main(["price", "--config", str(path), "--state-grid",
                     "0.1,0.2,0.3", "--out", str(out)]) == EXIT_OK
        first = out.read_text().splitlines()[0]
        assert first.startswith("# nonconvexity_witness")
