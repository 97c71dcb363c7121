import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alf import bayesopt, rl
from alf.bayesopt import GpModel, bayes_optimize, expected_improvement, gp_posterior, random_search
from alf.errors import DimensionError, InvalidArgumentError
from alf.kelm import KernelSpec


def test_posterior_prior():
    assert gp_posterior(GpModel(), [0.3]) == (0.0, 1.0)


def test_posterior_interpolates_without_noise():
    rng = np.random.default_rng(0)
    X = rng.random((6, 2))
    y = np.sin(3 * X[:, 0]) + X[:, 1]
    gp = GpModel(X, y, KernelSpec(1.0), noise_var=0.0)
    for x, v in zip(X, y):
        m, s2 = gp_posterior(gp, x)
        assert m == pytest.approx(v, abs=1e-9)
        assert s2 <= 1e-9


def test_posterior_one_point_closed_form():
    gp = GpModel([[0.0]], [2.0], KernelSpec(1.0), noise_var=1.0)
    m, s2 = gp_posterior(gp, [0.0])
    assert m == pytest.approx(1.0, abs=1e-12)
    assert s2 == pytest.approx(0.5, abs=1e-12)


def test_posterior_validation():
    gp = GpModel([[0.0, 1.0]], [1.0])
    with pytest.raises(DimensionError):
        gp_posterior(gp, [0.0])
    with pytest.raises(DimensionError):
        GpModel([[0.0]], [1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        GpModel([[0.0]], [1.0], noise_var=-1.0)


def test_ei_examples():
    assert expected_improvement(0.5, 0.0, 1.0) == 0.0
    assert expected_improvement(2.0, 0.0, 1.0, xi=0.25) == pytest.approx(0.75)
    assert expected_improvement(1.0, 1.0, 1.0) == pytest.approx(0.39894, abs=1e-5)
    assert expected_improvement(2.0, 1.0, 1.0) == pytest.approx(1.08332, abs=1e-5)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(0, 10), st.floats(-5, 5), st.floats(0, 1))
def test_ei_non_negative(mean, var, best, xi):
    assert expected_improvement(mean, var, best, xi) >= 0


def test_ei_monotone_in_variance():
    var = np.linspace(0, 4, 401)
    for gain in (0.0, 0.1, 1.0, 3.0):
        ei = expected_improvement(np.full(var.size, gain), var, 0.0)
        assert np.all(np.diff(ei) >= -1e-15)


def test_latin_hypercube_strata():
    u = bayesopt.latin_hypercube(7, 3, np.random.default_rng(1))
    for j in range(3):
        assert sorted(np.floor(u[:, j] * 7).astype(int)) == list(range(7))


def test_select_gamma_uses_grid():
    X = np.linspace(0, 1, 8)[:, None]
    g = bayesopt.select_gamma(X, np.sin(6 * X[:, 0]), 1e-6)
    assert g in bayesopt.GAMMA_GRID


def quad(x):
    return -float((x[0] - 0.6) ** 2)


def test_budget_equal_init_is_stratified_search():
    res = bayes_optimize(quad, [[0.0, 1.0]], budget=5, init=5, seed=3)
    xs = np.array([h[1][0] for h in res.history])
    assert sorted(np.floor(xs * 5).astype(int)) == list(range(5))


def test_quadratic_hits():
    hits = sum(abs(bayes_optimize(quad, [[0.0, 1.0]], 20, 5, seed=s).best_x[0] - 0.6) <= 0.05
               for s in range(50))
    assert hits >= 45


def test_history_monotone_and_deterministic():
    a = bayes_optimize(quad, [[0.0, 1.0]], 12, 4, seed=7)
    b = bayes_optimize(quad, [[0.0, 1.0]], 12, 4, seed=7)
    assert np.all(np.diff(a.best_trace) >= 0)
    assert np.array_equal(a.best_trace, b.best_trace)
    assert a.best_y == a.best_trace[-1] == quad(a.best_x)


def test_multidimensional_bounds():
    f = lambda x: -float(np.sum((x - np.array([2.0, -1.0])) ** 2))  # noqa: E731
    res = bayes_optimize(f, [[0.0, 4.0], [-3.0, 1.0]], 25, 6, seed=0)
    assert np.all(res.best_x >= [0.0, -3.0]) and np.all(res.best_x <= [4.0, 1.0])
    assert res.best_y > -0.5


def test_bayes_validation():
    with pytest.raises(InvalidArgumentError):
        bayes_optimize(quad, [[0.0, 1.0]], budget=3, init=5)
    with pytest.raises(InvalidArgumentError):
        bayes_optimize(quad, [[1.0, 0.0]])


def test_alpha_tuning_against_random_search():
    """BO with 10 trials vs 20-point random search, median over 20 paired trials."""
    env = rl.chain_mdp(5, slip=0.2)
    cache = {}

    def f(x):
        key = float(x[0])
        if key not in cache:
            cache[key] = rl.mean_training_return(env, key)
        return cache[key]

    bo = [bayes_optimize(f, [[0.01, 1.0]], 10, 4, seed=t).best_y for t in range(20)]
    rs = [random_search(f, [[0.01, 1.0]], 20, seed=1000 + t).best_y for t in range(20)]
    assert np.median(bo) >= np.median(rs)


def test_history_csv(tmp_path):
    res = bayes_optimize(quad, [[0.0, 1.0]], 6, 3, seed=0)
    bayesopt.write_history(res, tmp_path / "h.csv")
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["round", "x_1", "y", "best_so_far"] and len(rows) == 7
