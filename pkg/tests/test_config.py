"""Experiment document parsing, validation paths, and builders."""

import copy
import json

import numpy as np
import pytest

import switchstab as ss


def base_doc():
    return {
        "system": {
            "kind": "linear",
            "A": [[[-1.0]], [[-3.0]]],
            "B": [[[1.0]], [[1.0]]],
        },
        "lyapunov": {
            "P": [[[1.0]], [[1.0]]],
            "rates": [1.0, 3.0],
            "chi": {"c": 1.0, "p": 2.0},
        },
        "switching": {"kind": "uh", "T": 1.0, "q": [0.5, 0.5]},
        "disturbance": {"kind": "sinusoid", "amplitude": 0.5, "omega": 2.0},
        "experiment": {
            "x0": [5.0], "horizon": 18.0, "step": 0.01,
            "n_paths": 400, "nu_max": 8, "seed": 2026,
        },
        "outputs": {"dir": "/tmp/out"},
    }


def parse(doc):
    return ss.loads_config(json.dumps(doc))


def expect_error(doc, path_fragment):
    with pytest.raises(ss.ConfigError) as exc:
        parse(doc)
    assert path_fragment in str(exc.value)


class TestParsing:
    def test_valid_document(self):
        cfg = parse(base_doc())
        assert cfg.system.n_modes == 2
        assert cfg.switching.kind == "uh"
        assert cfg.experiment.x0 == (5.0,)
        assert cfg.outputs.dir == "/tmp/out"
        assert cfg.controller is None

    def test_not_json(self):
        with pytest.raises(ss.ConfigError, match="not valid JSON"):
            ss.loads_config("{nope")

    def test_missing_required_block(self):
        doc = base_doc()
        del doc["switching"]
        expect_error(doc, "switching")

    def test_unknown_top_level_key(self):
        doc = base_doc()
        doc["extra"] = 1
        expect_error(doc, "extra")

    def test_missing_field_reports_dotted_path(self):
        doc = base_doc()
        del doc["experiment"]["horizon"]
        expect_error(doc, "experiment")

    def test_unknown_nested_key(self):
        doc = base_doc()
        doc["lyapunov"]["bogus"] = 3
        expect_error(doc, "lyapunov")

    def test_system_shape_mismatches(self):
        doc = base_doc()
        doc["system"]["A"] = [[[-1.0]], [[-3.0, 0.0], [0.0, -1.0]]]
        expect_error(doc, "system.A[1]")
        doc = base_doc()
        doc["system"]["B"] = [[[1.0]]]
        expect_error(doc, "system.B")

    def test_lyapunov_shape_mismatches(self):
        doc = base_doc()
        doc["lyapunov"]["P"] = [[[1.0]]]
        expect_error(doc, "lyapunov.P")
        doc = base_doc()
        doc["lyapunov"]["rates"] = [1.0]
        expect_error(doc, "lyapunov.rates")

    def test_switching_kinds_and_errors(self):
        doc = base_doc()
        doc["switching"] = {"kind": "class-g", "lambda_tilde": 0.2, "lambda_bar": 0.2}
        assert parse(doc).switching.kind == "class-g"
        doc["switching"] = {"kind": "ctmc", "Q": [[-1.0, 1.0], [1.0, -1.0]]}
        assert parse(doc).switching.Q == ((-1.0, 1.0), (1.0, -1.0))
        doc["switching"] = {"kind": "dwell"}
        expect_error(doc, "switching.kind")
        doc["switching"] = {"kind": "uh", "T": 1.0, "q": [1.0, 0.0, 0.0]}
        expect_error(doc, "switching.q")

    def test_sigma0_range(self):
        doc = base_doc()
        doc["switching"]["sigma0"] = 2
        expect_error(doc, "switching.sigma0")
        doc["switching"]["sigma0"] = 1
        assert parse(doc).switching.sigma0 == 1

    def test_disturbance_kinds(self):
        doc = base_doc()
        doc["disturbance"] = {"kind": "zero"}
        assert parse(doc).disturbance.kind == "zero"
        doc["disturbance"] = {"kind": "constant", "value": [0.3]}
        assert parse(doc).disturbance.value == (0.3,)
        doc["disturbance"] = {"kind": "piecewise-constant-random",
                              "amplitude": 0.5, "dwell": 0.2, "seed": 4}
        assert parse(doc).disturbance.dwell == 0.2
        doc["disturbance"] = {"kind": "constant", "value": [0.3, 0.4]}
        expect_error(doc, "disturbance.value")
        doc["disturbance"] = {"kind": "noise"}
        expect_error(doc, "disturbance.kind")

    def test_experiment_validation(self):
        doc = base_doc()
        doc["experiment"]["x0"] = [1.0, 2.0]
        expect_error(doc, "experiment.x0")
        doc = base_doc()
        doc["experiment"]["horizon"] = -1.0
        expect_error(doc, "experiment")
        doc = base_doc()
        doc["experiment"]["n_paths"] = 0
        expect_error(doc, "experiment")

    def test_controller_requires_G(self):
        doc = base_doc()
        doc["controller"] = {"kind": "universal"}
        expect_error(doc, "controller")

    def test_controller_K_shape(self):
        doc = base_doc()
        doc["system"]["G"] = [[[1.0]], [[1.0]]]
        doc["controller"] = {"kind": "linear", "K": [[-1.0, 0.0]]}
        expect_error(doc, "controller.K")
        doc["controller"] = {"kind": "linear", "K": [[-1.0]]}
        assert parse(doc).controller.K == ((-1.0,),)

    def test_controller_kinds(self):
        doc = base_doc()
        doc["system"]["G"] = [[[1.0]], [[1.0]]]
        doc["controller"] = {"kind": "universal", "theta": 1.2}
        assert parse(doc).controller.theta == 1.2
        doc["controller"] = {"kind": "pid"}
        expect_error(doc, "controller.kind")

    def test_error_carries_path_attribute(self):
        doc = base_doc()
        del doc["experiment"]["seed"]
        with pytest.raises(ss.ConfigError) as exc:
            parse(doc)
        assert exc.value.path.startswith("experiment")


class TestRoundTrip:
    def test_to_dict_reparses_identically(self):
        doc = base_doc()
        doc["system"]["G"] = [[[1.0]], [[1.0]]]
        doc["controller"] = {"kind": "universal", "theta": 1.5}
        doc["experiment"]["rho"] = {"c": 0.5, "p": 1.0}
        doc["experiment"]["eta_ball"] = 1.6
        cfg = parse(doc)
        again = ss.loads_config(json.dumps(cfg.to_dict()))
        assert again.to_dict() == cfg.to_dict()

    def test_defaults_materialize_in_to_dict(self):
        cfg = parse(base_doc())
        d = cfg.to_dict()
        assert d["experiment"]["theta"] == 1.5
        assert d["experiment"]["grid_points"] == 50
        assert d["outputs"]["trajectories"] == 0


class TestBuilders:
    def test_build_system_and_family(self):
        cfg = parse(base_doc())
        sys = cfg.build_system()
        fam = cfg.build_family()
        assert sys.n_modes == 2 and sys.kind == "linear-affine"
        assert fam.rates == (1.0, 3.0) and fam.mu == 1.0

    def test_build_switching_variants(self):
        cfg = parse(base_doc())
        params = cfg.build_switching()
        assert isinstance(params, ss.UHParams) and params.T == 1.0
        doc = base_doc()
        doc["switching"] = {"kind": "class-g", "lambda_tilde": 0.2, "lambda_bar": 0.3}
        params = parse(doc).build_switching()
        assert isinstance(params, ss.ClassGParams)
        assert params.n_modes == 2
        doc["switching"] = {"kind": "ctmc", "Q": [[-2.0, 2.0], [1.0, -1.0]]}
        params = parse(doc).build_switching()
        assert isinstance(params, ss.CTMCParams)

    def test_build_disturbance(self):
        cfg = parse(base_doc())
        d = cfg.build_disturbance()
        assert d.kind == "sinusoid" and d.sup_norm == 0.5 and d.dim == 1

    def test_build_batch_spec_with_overrides(self):
        cfg = parse(base_doc())
        spec = cfg.build_batch_spec()
        assert spec.n_paths == 400 and spec.base_seed == 2026
        spec = cfg.build_batch_spec(seed=7, n_paths=10)
        assert spec.n_paths == 10 and spec.base_seed == 7
        assert spec.horizon == 18.0 and spec.step == 0.01

    def test_build_regime_and_grid(self):
        cfg = parse(base_doc())
        assert cfg.build_regime() is None
        doc = base_doc()
        doc["experiment"]["rho"] = {"c": 0.5, "p": 1.0}
        doc["experiment"]["eta_ball"] = 1.6
        doc["experiment"]["grid_points"] = 13
        cfg = parse(doc)
        regime = cfg.build_regime()
        assert regime.eta_ball == 1.6 and regime.rho.c == 0.5
        grid = cfg.build_grid()
        assert grid.size == 13 and grid[0] == 0.0 and grid[-1] == 18.0

    def test_load_config_from_file(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(base_doc()))
        cfg = ss.load_config(p)
        assert cfg.experiment.seed == 2026
