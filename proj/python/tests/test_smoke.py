import json
import math
from pathlib import Path

import numpy as np
import pytest

import kinlim

CONFIGS = Path(__file__).resolve().parents[2] / "configs"


def small_config(**overrides):
    cfg = {
        "grid_size": 16,
        "velocity_model": {"velocities": [-1.0, 1.0], "weights": [0.5, 0.5]},
        "noise_model": {"modes": [{"shape": "cos:1", "chain": {"telegraph": {"sigma": 1.0, "rate": 1.0}}}]},
        "initial_density": {"terms": [{"shape": "const"}, {"shape": "cos:1", "amplitude": 0.5}]},
        "epsilons": [0.2, 0.1],
        "ensemble_size": 100,
        "spde_ensemble_size": 100,
        "final_time": 0.02,
        "spde_steps": 64,
        "functionals": [{"id": "lin", "kind": "linear", "weight": "cos:1"}],
        "seed": 3,
    }
    cfg.update(overrides)
    return json.dumps(cfg)


def test_version():
    assert kinlim.__version__ == "0.1.0"


def test_diffusion_matrix_two_speed():
    assert kinlim.diffusion_matrix([[-1.0], [1.0]], [0.5, 0.5]) == [[1.0]]


def test_diffusion_matrix_rejects_uncentered():
    with pytest.raises(kinlim.KinlimError):
        kinlim.diffusion_matrix([[1.0], [2.0]], [0.5, 0.5])


def test_telegraph_autocovariance():
    sigma, rate = 1.5, 0.75
    c = kinlim.integrated_autocovariance([-sigma, sigma], [[0.0, rate], [rate, 0.0]])
    assert c == pytest.approx(sigma**2 / rate, rel=1e-12)


def test_sobolev_single_mode():
    x = np.arange(32) / 32
    diff = np.cos(2 * np.pi * x)
    d = kinlim.sobolev_distance(diff, np.zeros(32), eta=1.0)
    assert d == pytest.approx(math.sqrt(0.5) / math.sqrt(1 + 4 * math.pi**2), rel=1e-12)
    assert kinlim.sobolev_distance(diff, np.zeros(32), eta=0.0) == pytest.approx(math.sqrt(0.5), rel=1e-12)


def test_bad_config_raises_value_error():
    with pytest.raises(ValueError):
        kinlim.Experiment.from_json(small_config(bogus=1))
    with pytest.raises(ValueError):
        kinlim.Experiment.from_json(small_config(epsilons=[0.1, 0.2]))


def test_shipped_configs_load():
    for path in sorted(CONFIGS.glob("*.json")):
        exp = kinlim.Experiment.from_file(str(path))
        assert exp.drift_consistency() < 1e-14


def test_kinetic_ensemble_is_deterministic():
    exp = kinlim.Experiment.from_json(small_config())
    a = exp.run_kinetic(0, 64, 1)
    b = exp.run_kinetic(0, 64, 2)
    assert a["trajectories"] == 64
    assert a["gronwall_violations"] == 0
    assert a["stats"]["lin"]["mean"] == b["stats"]["lin"]["mean"]
    np.testing.assert_array_equal(a["density"][-1], b["density"][-1])
    assert a["density"][-1].shape == (16,)


def test_limit_ensemble_and_converge():
    exp = kinlim.Experiment.from_json(small_config())
    lim = exp.run_limit(50)
    assert lim["trajectories"] == 50
    rep = exp.converge()
    assert {r["functional"] for r in rep["rows"]} == {"lin"}
    assert len(rep["sobolev"]) == 2
    assert rep["moments_bounded"]
    assert rep["verdicts"]["lin"] in (
        "consistent with convergence",
        "inconclusive, increase ensemble",
        "not consistent with convergence",
    )


def test_generator_residual_scales_linearly():
    exp = kinlim.Experiment.from_json(small_config())
    rows = exp.diagnose_generator(50)
    ratios = [r["scaling_ratio"] for r in rows if not math.isnan(r["scaling_ratio"])]
    assert ratios and all(1.5 <= r <= 2.5 for r in ratios)
