import copy

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flashsim.calibration import (
    CalibrationSpace, SimulationObjective, SurrogateCalibrator, coverage_ratios, grid_refine,
    p_value, surrogate_search,
)
from flashsim.config import CALIBRATED, preset_config
from flashsim.facts import bootstrap_weights, moment_vector

SPACE = CalibrationSpace({k: (0.0, 1.0 if k == "theta_mm" else 2.0) for k in CALIBRATED})
CENTER = (SPACE.lower + SPACE.upper) / 2


def quadratic(theta, seeds):
    z = (np.asarray(theta) - CENTER) / (SPACE.upper - SPACE.lower)
    return [float(np.sum(z ** 2)) for _ in seeds]


class Counting:
    def __init__(self, f):
        self.f, self.calls = f, 0

    def __call__(self, theta, seeds):
        self.calls += len(seeds)
        return self.f(theta, seeds)


def test_space_sobol_inside_bounds():
    x = SPACE.sobol(50, 0)
    assert x.shape == (50, 7)
    assert all(SPACE.contains(t) for t in x)
    with pytest.raises(ValueError):
        CalibrationSpace({"bogus": (0, 1)})
    with pytest.raises(ValueError):
        CalibrationSpace({"kappa1": (1, 1)})


@pytest.mark.slow
def test_quadratic_minimum_found():
    rep = surrogate_search(quadratic, SPACE, 200, n_rep=1, seed=0)
    th = np.array(list(rep.theta_hat.values()))
    assert np.linalg.norm(th - CENTER) / SPACE.diameter < 0.05
    # incumbent never gets worse
    assert np.all(np.diff(rep.incumbent_trace) <= 0)


def test_budget_equal_to_design_is_pure_design():
    f = Counting(quadratic)
    rep = surrogate_search(f, SPACE, 20, n_rep=2, seed=1, design_fraction=1.0)
    assert f.calls == 20 and len(rep.eval_log) == 20
    assert rep.cv_rmse == []
    with pytest.raises(ValueError):
        surrogate_search(quadratic, SPACE, 0, n_rep=3)


def test_search_uses_budget_and_common_seeds():
    f = Counting(quadratic)
    rep = surrogate_search(f, SPACE, 60, n_rep=3, seed=2, batch_size=5, pool_size=500)
    assert f.calls == 60
    seeds = {(r["replication"], r["seed"]) for r in rep.eval_log}
    assert len(seeds) == 3


def test_search_deterministic():
    a = surrogate_search(quadratic, SPACE, 40, n_rep=1, seed=5, pool_size=500)
    b = surrogate_search(quadratic, SPACE, 40, n_rep=1, seed=5, pool_size=500)
    assert a.theta_hat == b.theta_hat and a.eval_log == b.eval_log


def test_failed_points_are_penalised():
    def flaky(theta, seeds):
        return [np.nan if theta[0] > 1.5 else quadratic(theta, [s])[0] for s in seeds]
    rep = surrogate_search(flaky, SPACE, 40, n_rep=1, seed=3, pool_size=500)
    assert np.isfinite(rep.d_hat) and rep.theta_hat["mu_ell"] <= 1.5


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=7, max_size=7), st.floats(0.01, 0.5),
       st.integers(2, 5))
def test_grid_refine_never_worse_and_in_bounds(u, radius, points):
    c = SPACE.scale(u)
    f = Counting(quadratic)
    rep = grid_refine(f, SPACE, c, radius * (SPACE.upper - SPACE.lower), points, seeds=(0,))
    th = np.array(list(rep.theta_hat.values()))
    assert SPACE.contains(th)
    assert rep.d_hat <= quadratic(c, [0])[0] + 1e-12
    assert f.calls <= 1 + 7 * points


def test_grid_refine_exact_on_grid():
    # the minimum is on the grid: one coordinate sweep lands on it
    c = CENTER.copy()
    c[0] += 0.2
    rep = grid_refine(quadratic, SPACE, c, np.full(7, 0.2), 3, seeds=(0,))
    np.testing.assert_allclose(list(rep.theta_hat.values()), CENTER)
    assert rep.d_hat == pytest.approx(0.0)
    with pytest.raises(ValueError):
        grid_refine(quadratic, SPACE, SPACE.upper + 1, 0.1)


def test_p_value_granularity_and_minimum():
    d = np.arange(60, dtype=float)
    assert p_value(d, 29.5) == pytest.approx(30 / 60)
    assert p_value(d, 0.0) == pytest.approx(1 / 60)
    assert p_value(np.append(d, np.nan), 100) == 1.0
    with pytest.raises(ValueError):
        p_value(np.arange(19.0), 5)


def _ar_returns(n, seed):
    rng = np.random.default_rng(seed)
    vol = np.exp(np.convolve(rng.normal(0, 0.3, n), np.ones(50) / 7, "same"))
    return 1e-4 * vol * rng.standard_t(4, n)


@pytest.fixture(scope="module")
def weights():
    return bootstrap_weights(_ar_returns(30_000, 0), block_size=1800, n_boot=60, seed=0)


def test_identical_distribution_p_value_near_095(weights):
    # distances of independent draws from the same process sit near the
    # bootstrap distribution of distances
    from flashsim.facts import differentials
    ref = weights.reference
    d = [differentials(moment_vector(_ar_returns(30_000, s)), ref) @ weights.weights
         for s in range(1, 61)]
    assert 0.7 <= p_value(d, weights.d_critical) <= 1.0


def test_p_value_invariant_to_weight_scaling(weights):
    d = np.random.default_rng(0).gamma(2.0, weights.d_critical / 3, 60)
    assert p_value(d, weights.d_critical) == p_value(7.0 * d, 7.0 * weights.d_critical)


def test_coverage_ratios_bounds(weights):
    mvs = [moment_vector(_ar_returns(30_000, s)) for s in range(100, 120)]
    mcr = coverage_ratios(mvs, weights)
    assert set(mcr) == set(weights.moment_sd)
    assert all(0 <= v <= 1 for v in mcr.values())
    assert coverage_ratios([weights.reference] * 20, weights) == {k: 1.0 for k in mcr}


def test_simulation_objective_reproducible(weights):
    cfg = preset_config("calibration")
    cfg.total_steps = 45_000
    obj = SimulationObjective(cfg, SPACE, weights)
    th = SPACE.scale(np.full(7, 0.4))
    a = obj(th, [1, 2])
    assert a == obj(th, [1, 2]) and len(a) == 2
    assert obj.batch([th, th], [1]) == [[a[0]], [a[0]]]


def test_calibrator_params():
    est = SurrogateCalibrator(budget=10)
    assert est.get_params()["budget"] == 10
    assert est.set_params(n_rep=2) is est and est.n_rep == 2
    with pytest.raises(ValueError):
        est.set_params(nope=1)
    with pytest.raises(Exception):
        est.score()
