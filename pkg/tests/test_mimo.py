import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alf.errors import DimensionError, InvalidArgumentError, UnsupportedSizeError
from alf.mimo import (ChannelRealization, PowerAllocation, derive_seed, grid_oracle, project_feasible,
                      sample_channel, throughput, uniform_allocation, water_level, waterfill)
from alf.bench import kkt_residual


def ch(g, noise=1.0, budget=1.0):
    return ChannelRealization(np.asarray(g, dtype=float), noise, budget)


gains_st = st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=40)
budget_st = st.floats(1e-2, 1e3)
noise_st = st.floats(1e-2, 1e2)


# -- instances -----------------------------------------------------------------

def test_sample_channel_deterministic():
    a = sample_channel(1, seed=7)
    b = sample_channel(1, seed=7)
    assert np.array_equal(a.gains, b.gains)


def test_sample_channel_statistics():
    c = sample_channel(50, 1.0, 10.0, seed=1)
    assert c.n_antennas == 50
    assert np.all(c.gains > 0)
    assert 0.6 <= c.gains.mean() <= 1.4


@pytest.mark.parametrize("args", [(0, 1.0, 1.0), (3, 0.0, 1.0), (3, 1.0, -1.0)])
def test_sample_channel_rejects_bad_arguments(args):
    with pytest.raises(InvalidArgumentError):
        sample_channel(*args, seed=0)


def test_channel_invariants():
    with pytest.raises(InvalidArgumentError):
        ch([1.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        ch([1.0], noise=0.0)
    with pytest.raises(InvalidArgumentError):
        PowerAllocation([-0.1, 1.0])


def test_derive_seed_is_xor():
    assert derive_seed(5, 3) == 6
    assert derive_seed(0, 9) == 9


# -- throughput ------------------------------------------------------------------

def test_throughput_examples():
    assert throughput(ch([1.0, 2.0]), [0.0, 0.0]) == 0.0
    assert throughput(ch([1.0]), [1.0]) == 1.0
    expected = np.log2(1 + 0.875 * 4) + np.log2(1 + 0.125)
    assert throughput(ch([4.0, 1.0]), PowerAllocation([0.875, 0.125])) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(2.3399, abs=1e-4)


def test_throughput_length_mismatch():
    with pytest.raises(DimensionError):
        throughput(ch([1.0, 2.0]), [1.0])


@settings(max_examples=50, deadline=None)
@given(gains_st, st.integers(0, 39), st.floats(1e-6, 10.0))
def test_throughput_strictly_monotone(g, i, bump):
    c = ch(g)
    i = i % len(g)
    p = np.full(len(g), 0.1)
    q = p.copy()
    q[i] += bump
    assert throughput(c, q) > throughput(c, p)


# -- water-filling ---------------------------------------------------------------

def test_waterfill_examples():
    assert np.allclose(waterfill(ch([2.0], budget=5.0)).powers, [5.0])
    assert np.allclose(waterfill(ch([1, 1, 1, 1], budget=4.0)).powers, [1, 1, 1, 1], atol=1e-12)
    assert np.allclose(waterfill(ch([4.0, 1.0])).powers, [0.875, 0.125], atol=1e-12)


def test_waterfill_matches_fine_grid():
    c = ch([4.0, 1.0])
    p1 = np.arange(0, 1 + 1e-12, 1e-4)
    rate = np.log2(1 + 4 * p1) + np.log2(1 + (1 - p1))
    assert abs(p1[np.argmax(rate)] - waterfill(c).powers[0]) <= 1e-3


def test_water_level_counts_active():
    c = ch([4.0, 1.0, 0.01])
    mu, k = water_level(c)
    # floors 0.25, 1, 100: two active channels share (1 + 0.25 + 1) / 2
    assert k == 2
    assert mu == pytest.approx(1.125, abs=1e-15)
    p = waterfill(c).powers
    assert p[2] == 0.0
    assert np.allclose(p[:2] + c.floors[:2], mu)


@settings(max_examples=200, deadline=None)
@given(gains_st, noise_st, budget_st)
def test_waterfill_kkt_and_feasibility(g, noise, budget):
    c = ch(g, noise, budget)
    p = waterfill(c).powers
    assert np.all(p >= 0)
    assert abs(p.sum() - budget) <= 1e-9 * budget
    # absolute KKT residual, scaled by the water level for large floors
    mu, _ = water_level(c)
    assert kkt_residual(c, p) <= 1e-9 * max(1.0, mu)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_waterfill_beats_random_feasible(seed):
    c = sample_channel(8, 1.0, 5.0, seed=seed)
    best = throughput(c, waterfill(c))
    rng = np.random.default_rng(seed)
    alloc = rng.dirichlet(np.ones(8), size=1000) * c.budget
    rates = np.log2(1 + alloc * c.gains / c.noise_power).sum(axis=1)
    assert best >= rates.max() - 1e-9


# -- grid oracle -----------------------------------------------------------------

def test_grid_oracle_examples():
    assert np.allclose(grid_oracle(ch([2.0], budget=5.0), 0.01).powers, [5.0])
    assert np.allclose(grid_oracle(ch([4.0, 1.0]), 1e-4).powers, waterfill(ch([4.0, 1.0])).powers, atol=1e-3)
    assert np.allclose(grid_oracle(ch([1.0, 1.0], budget=2.0), 0.01).powers, [1.0, 1.0], atol=0.01)


def test_grid_oracle_rejects_large_instances():
    with pytest.raises(UnsupportedSizeError):
        grid_oracle(ch([1, 1, 1, 1]), 0.1)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_grid_oracle_agrees_with_waterfill(n):
    step = 0.01
    for seed in range(10):
        c = sample_channel(n, 1.0, 1.0, seed=100 * n + seed)
        assert np.abs(grid_oracle(c, step).powers - waterfill(c).powers).max() <= 10 * step


# -- projection ------------------------------------------------------------------

def test_project_feasible_examples():
    assert np.allclose(project_feasible([-1.0, 3.0], 2.0).powers, [0.0, 2.0])
    assert np.allclose(project_feasible([1.0, 1.0], 2.0).powers, [1.0, 1.0])
    assert np.allclose(project_feasible([0.0, 0.0], 2.0).powers, [1.0, 1.0])


def test_project_feasible_non_finite():
    p = project_feasible([np.nan, np.inf, 1.0], 3.0).powers
    assert np.all(np.isfinite(p)) and p.sum() == pytest.approx(3.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), budget_st)
def test_project_feasible_idempotent(raw, budget):
    once = project_feasible(raw, budget).powers
    twice = project_feasible(once, budget).powers
    assert np.all(once >= 0)
    assert abs(once.sum() - budget) <= 1e-9 * budget
    assert np.allclose(once, twice, rtol=1e-12, atol=1e-12 * budget)


def test_uniform_allocation():
    assert np.allclose(uniform_allocation(ch([1, 2, 3, 4], budget=2.0)).powers, 0.5)
