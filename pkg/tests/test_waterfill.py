import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uplinkgame.model import NetworkInstance, user_rate
from uplinkgame.waterfill import (
    InfeasibleMaskError,
    best_response,
    best_responses,
    br_residual,
    clamped_level,
    water_fill,
)

from .conftest import random_instance, random_profile
from .oracles import rate_objective, simplex_grid_chunks, waterfill_bisection

seeds = st.integers(0, 2 ** 32 - 1)


def test_two_channel_reply():
    r = water_fill([1.0, 1.5], 1.0)
    np.testing.assert_allclose(r.allocation, [0.75, 0.25], atol=1e-15)
    assert r.water_level == pytest.approx(1.75, abs=1e-15)
    assert r.active_set == frozenset({0, 1})


@pytest.mark.parametrize("c, b", [(0.3, 2.0), (5.0, 1e-3)])
def test_single_channel_takes_everything(c, b):
    r = water_fill([c], b)
    assert r.allocation[0] == b
    assert r.water_level == pytest.approx(c + b, rel=1e-15)


def test_only_best_channel_active():
    r = water_fill([0.5, 1.0, 2.0], 0.3)
    np.testing.assert_allclose(r.allocation, [0.3, 0.0, 0.0], atol=1e-15)
    assert r.water_level == pytest.approx(0.8, abs=1e-15)
    alloc, level = waterfill_bisection([0.5, 1.0, 2.0], 0.3)
    np.testing.assert_allclose(r.allocation, alloc, atol=1e-12)
    assert r.active_set == frozenset({0})


@given(seeds)
def test_matches_bisection(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 40))
    e = 10 ** rng.uniform(-3, 3, size=k)
    b = float(10 ** rng.uniform(-3, 3))
    r = water_fill(e, b)
    alloc, level = waterfill_bisection(e, b)
    scale = max(b, 1.0)
    np.testing.assert_allclose(r.allocation, alloc, atol=1e-10 * scale)
    assert r.allocation.sum() == pytest.approx(b, rel=1e-12)
    assert np.all(r.allocation >= 0)


@given(seeds)
def test_masked_matches_bisection(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 20))
    e = 10 ** rng.uniform(-2, 2, size=k)
    caps = rng.uniform(0.05, 1.0, size=k)
    caps[rng.random(k) < 0.3] = np.inf
    b = float(rng.uniform(0.1, 1.0) * min(caps.sum(), 5.0))
    r = water_fill(e, b, caps)
    alloc, _ = waterfill_bisection(e, b, caps)
    np.testing.assert_allclose(r.allocation, alloc, atol=1e-10)
    assert np.all(r.allocation <= caps)
    assert r.allocation.sum() == pytest.approx(b, rel=1e-12)


@given(seeds)
def test_kkt_conditions(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 30))
    e = 10 ** rng.uniform(-2, 2, size=k)
    r = water_fill(e, 1.0)
    on = r.allocation > 0
    np.testing.assert_allclose(r.allocation[on] + e[on], r.water_level, rtol=1e-12)
    assert np.all(e[~on] >= r.water_level * (1 - 1e-12))


@given(seeds)
def test_infinite_mask_is_bitwise_unmasked(seed):
    rng = np.random.default_rng(seed)
    e = 10 ** rng.uniform(-2, 2, size=int(rng.integers(1, 30)))
    a = water_fill(e, 0.7)
    b = water_fill(e, 0.7, np.full(e.shape, np.inf))
    assert np.array_equal(a.allocation, b.allocation)
    assert a.water_level == b.water_level


@pytest.mark.parametrize("seed", range(6))
def test_beats_simplex_grid(seed):
    rng = np.random.default_rng(seed)
    k = seed + 1
    e = 10 ** rng.uniform(-1, 1, size=k)
    b = float(rng.uniform(0.5, 2.0))
    best = rate_objective(water_fill(e, b).allocation, e)
    for pts in simplex_grid_chunks(k, 50, b):
        assert best - rate_objective(pts, e).max() >= -1e-9


def test_clamped_level_all_capped():
    # caps sum exactly to the budget, so every channel sits at its cap
    alloc = water_fill([1.0, 2.0, 3.0], 1.0, [0.2, 0.3, 0.5]).allocation
    np.testing.assert_allclose(alloc, [0.2, 0.3, 0.5])
    lvl = clamped_level(np.array([1.0, 2.0]), 0.5, np.array([np.inf, np.inf]))
    assert lvl == pytest.approx(1.5)


@pytest.mark.parametrize("e, b, mask", [([0.0, 1.0], 1.0, None), ([1.0, np.nan], 1.0, None),
                                         ([1.0, 1.0], 0.0, None), ([1.0], 1.0, [1.0, 1.0]),
                                         ([], 1.0, None)])
def test_invalid_inputs(e, b, mask):
    with pytest.raises(ValueError):
        water_fill(e, b, mask)


def test_infeasible_mask():
    with pytest.raises(InfeasibleMaskError):
        water_fill([1.0, 1.0], 1.0, [0.3, 0.3])


# -- best responses ----------------------------------------------------------------

def test_example1_fixed_points(ex1, ex1_ne):
    p_tilde, p_hat = ex1_ne
    np.testing.assert_allclose(best_response(ex1, p_tilde, 0).allocation, [0.75, 0.25],
                               atol=1e-15)
    np.testing.assert_allclose(best_response(ex1, p_tilde, 1).allocation, [0.0, 1.0],
                               atol=1e-15)
    for p in (p_tilde, p_hat):
        assert np.max(np.abs(br_residual(ex1, p))) <= 1e-15


def test_example1_non_fixed_point(ex1):
    p = np.array([[1.0, 0.0], [1.0, 0.0]])
    s = br_residual(ex1, p)
    assert np.max(np.abs(s)) > 0
    np.testing.assert_allclose(s.sum(axis=1), 0.0, atol=1e-15)
    # both users see channel 1 crowded and move everything to channel 2
    np.testing.assert_allclose(best_responses(ex1, p), [[0.0, 1.0], [0.0, 1.0]], atol=1e-15)


def test_single_user_is_classical_waterfilling():
    inst = NetworkInstance([[2.0, 1.0, 0.5]], [0.2, 0.1, 0.3], [1.5])
    r = best_response(inst, np.zeros((1, 3)), 0)
    alloc, _ = waterfill_bisection(inst.noise / inst.gain[0], 1.5)
    np.testing.assert_allclose(r.allocation, alloc, atol=1e-12)


@given(seeds)
def test_best_response_maximizes_own_rate(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, mask=bool(seed % 2))
    p = random_profile(rng, inst)
    p = np.minimum(p, inst.caps)
    i = int(rng.integers(inst.n_users))
    q = p.copy()
    q[i] = best_response(inst, p, i).allocation
    best = user_rate(inst, q, i)
    for _ in range(10):
        alt = p.copy()
        row = rng.exponential(size=inst.n_channels)
        alt[i] = np.minimum(row / row.sum() * inst.budget[i], inst.caps[i])
        assert user_rate(inst, alt, i) <= best + 1e-12


def test_best_responses_use_one_snapshot(rng):
    inst = random_instance(rng, 4, 6)
    p = random_profile(rng, inst)
    batch = best_responses(inst, p)
    for i in range(4):
        np.testing.assert_array_equal(batch[i], best_response(inst, p, i).allocation)


def test_residual_rejects_slack(ex1):
    with pytest.raises(ValueError, match="does not spend"):
        br_residual(ex1, [[0.5, 0.25], [0.0, 1.0]])


def test_best_response_index_checked(ex1, ex1_ne):
    with pytest.raises(IndexError):
        best_response(ex1, ex1_ne[0], 5)
