import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance, unit_config
from ofdm_energy import oracles
from ofdm_energy.errors import InfeasibleError, UnboundedError
from ofdm_energy.model import ChannelMatrix, DemandVector, energy_report, validate_allocation
from ofdm_energy.temin import (
    FrameSearch,
    bs_energy_gradient,
    o_fn,
    ofdma_allocation,
    p2_pointwise,
    solve_p2,
    solve_temin,
    solve_temin_tmax,
    v_of_T,
)
from ofdm_energy.wsre import solve_wsremin_tdma

A = math.log(2.0)


def conic_power(cfg, f, qbar, T):
    """Minimum average power by a generic exponential-cone solve.

    Per pair, ``rho`` is the time share, ``x`` the nats carried per unit of
    frame, and ``t = rho + f * rho * p`` so that ``rho exp(x / rho) <= t``
    encodes the rate; the power is ``(t - rho) / f``.
    """
    K, N = f.shape
    rho = cp.Variable((K, N), nonneg=True)
    x = cp.Variable((K, N), nonneg=True)
    t = cp.Variable((K, N))
    cons = [cp.sum(rho, axis=0) <= 1, cp.sum(x, axis=1) >= cfg.a * qbar / T]
    cons += [cp.constraints.ExpCone(x[k, n], rho[k, n], t[k, n]) for k in range(K) for n in range(N)]
    prob = cp.Problem(cp.Minimize(cp.sum(cp.multiply(1 / f, t - rho))), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def test_o_fn_hand_values():
    cfg = unit_config()
    assert o_fn(cfg, 2.0, 0.5 * A / 2.0, 0.3) == pytest.approx(0.3)
    assert o_fn(cfg, 2.0, A / 2.0, 0.3) == pytest.approx(0.3)
    assert o_fn(cfg, 2.0, 2 * A / 2.0, 0.3) == pytest.approx((1 - 2 * math.log(2)) / 2.0 + 0.3)


def test_pointwise_cases():
    cfg = unit_config()
    assert p2_pointwise(cfg, 2.0, 0.1, 0.3) == (0.0, 0.0)
    lam, f = 3 * A / 2.0, 2.0
    beta = -o_fn(cfg, f, lam, 0.0) - 1e-3
    m, rho = p2_pointwise(cfg, f, lam, beta)
    assert rho == 1.0
    assert m == pytest.approx(math.log(lam * f / A) / A)
    tie = -o_fn(cfg, f, lam, 0.0)
    assert p2_pointwise(cfg, f, lam, tie)[1] == 0.0


def test_single_mt_is_water_filling():
    cfg = unit_config()
    f = np.array([[0.3, 1.2, 2.0, 0.05]])
    chan = ChannelMatrix.from_gains(f, cfg)
    sol = solve_p2(cfg, chan, DemandVector([6.0]), 2.0)
    assert np.allclose(sol.rho, 1.0)
    ref, _ = oracles.waterfill_by_sorting(f[0], A * 3.0)
    assert sol.v == pytest.approx(ref, rel=1e-8)


def test_disjoint_strengths_get_whole_subcarriers():
    cfg = unit_config(K=2)
    f = np.array([[5.0, 4.0, 0.01, 0.02], [0.02, 0.01, 6.0, 3.0]])
    chan = ChannelMatrix.from_gains(f, cfg)
    rates = np.array([4.0, 4.0])
    sol = solve_p2(cfg, chan, DemandVector(rates), 1.0)
    bound, assign = oracles.p2_assignment_bound(cfg.a, f, rates)
    assert assign == (0, 0, 1, 1)
    assert np.allclose(sol.rho, [[1, 1, 0, 0], [0, 0, 1, 1]], atol=1e-9)
    assert sol.v == pytest.approx(bound, rel=1e-8)


def test_duplicated_mt_leaves_power_unchanged():
    cfg = unit_config(K=2)
    f = np.array([[0.8, 1.7, 0.4], [2.1, 0.2, 1.1]])
    base = solve_p2(cfg, ChannelMatrix.from_gains(f, cfg), DemandVector([3.0, 2.0]), 1.0).v
    cfg3 = unit_config(K=3)
    f3 = np.vstack([f, f[:1]])
    split = solve_p2(cfg3, ChannelMatrix.from_gains(f3, cfg3), DemandVector([1.5, 2.0, 1.5]), 1.0).v
    assert split == pytest.approx(base, rel=1e-4)


@settings(max_examples=15)
@given(seed=st.integers(0, 10_000), K=st.integers(1, 2), N=st.integers(1, 4))
def test_never_worse_than_best_assignment(seed, K, N):
    rng = np.random.default_rng(seed)
    cfg = unit_config(K=K)
    f = rng.exponential(size=(K, N)) + 0.05
    rates = rng.uniform(0.2, 2.0, K)
    chan = ChannelMatrix.from_gains(f, cfg)
    sol = solve_p2(cfg, chan, DemandVector(rates), 1.0)
    bound, _ = oracles.p2_assignment_bound(cfg.a, f, rates)
    assert sol.v <= bound * (1 + 1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_matches_conic_solver(seed):
    rng = np.random.default_rng(seed)
    K, N = 3, 4
    cfg = unit_config(K=K)
    f = rng.exponential(size=(K, N)) + 0.05
    dem = DemandVector(rng.uniform(0.5, 3.0, K))
    sol = solve_p2(cfg, ChannelMatrix.from_gains(f, cfg), dem, 1.0)
    assert sol.v == pytest.approx(conic_power(cfg, f, dem.qbar, 1.0), rel=1e-6)


def test_dual_value_matches_grid_search():
    """Reduced dual over the two water levels, maximized on a zooming grid."""
    cfg = unit_config(K=2)
    f = np.array([[0.9, 2.2], [1.6, 0.7]])
    c = np.array([1.2, 0.8]) * A
    sol = solve_p2(cfg, ChannelMatrix.from_gains(f, cfg), DemandVector(c / A), 1.0)

    def G(mu):
        z = mu[:, None] * f
        q = np.where(z > 1, mu[:, None] - 1 / f - mu[:, None] * np.log(np.maximum(z, 1)), 0.0)
        return q.min(axis=0).sum() + mu @ c

    lo, hi = np.array([0.0, 0.0]), np.array([20.0, 20.0])
    best = (-math.inf, None)
    for _ in range(8):
        g1 = np.linspace(lo[0], hi[0], 121)
        g2 = np.linspace(lo[1], hi[1], 121)
        for x in g1:
            for y in g2:
                val = G(np.array([x, y]))
                if val > best[0]:
                    best = (val, (x, y))
        step = (hi - lo) / 120
        lo = np.maximum(np.array(best[1]) - 3 * step, 0)
        hi = np.array(best[1]) + 3 * step
    assert sol.dual_value == pytest.approx(best[0], rel=1e-4)
    assert sol.v == pytest.approx(best[0], rel=1e-4)


def test_full_dual_agrees_with_reduced():
    rng = np.random.default_rng(11)
    cfg, chan, dem = random_instance(rng, 2, 3)
    a = solve_p2(cfg, chan, dem, 0.01)
    b = solve_p2(cfg, chan, dem, 0.01, dual="full")
    assert b.v == pytest.approx(a.v, rel=1e-5)


def test_default_scenario_gap_and_sharing(cell):
    cfg, chan, dem = cell
    sol = solve_p2(cfg, chan, dem, 0.012)
    assert sol.rel_gap < 1e-4
    assert np.allclose(sol.rho.sum(axis=0), 1.0, atol=1e-6)
    assert np.allclose(sol.m.sum(axis=1), dem.qbar / 0.012, rtol=1e-6)
    assert validate_allocation(cfg, chan, dem, ofdma_allocation(sol)) == []


def test_v_decreases_with_frame_length(cell):
    cfg, chan, dem = cell
    v = lambda T: v_of_T(cfg, chan, dem, T)[0]  # noqa: E731
    assert v(0.02) < v(0.01)
    assert 0 < v(100.0) < 1e-6 * v(0.01)


def test_v_midpoint_convex(cell):
    cfg, chan, dem = cell
    search = FrameSearch(cfg, chan, dem)
    rng = np.random.default_rng(5)
    T0 = search.min_time()
    for _ in range(8):
        T1, T2 = T0 * np.exp(rng.uniform(0, 3, 2))
        assert search.v(0.5 * (T1 + T2)) <= 0.5 * (search.v(T1) + search.v(T2)) * (1 + 1e-6)


def test_gradient_against_finite_differences(cell):
    cfg, chan, dem = cell
    search = FrameSearch(cfg, chan, dem)
    for T in (0.011, 0.02, 0.05):
        sol = search.p2(T)
        g = bs_energy_gradient(cfg, dem, T, sol.cert, sol.v)
        d = 1e-3 * T
        fd = ((T + d) * search.v(T + d) - (T - d) * search.v(T - d)) / (2 * d) + cfg.P_tc
        assert fd == pytest.approx(g, rel=1e-2)


def test_gradient_tends_to_constant_power(cell):
    cfg, chan, dem = cell
    sol = solve_p2(cfg, chan, dem, 50.0)
    assert bs_energy_gradient(cfg, dem, 50.0, sol.cert, sol.v) == pytest.approx(cfg.P_tc, rel=1e-3)


def test_gradient_nondecreasing(cell):
    cfg, chan, dem = cell
    search = FrameSearch(cfg, chan, dem)
    grads = []
    for T in np.geomspace(search.min_time(), 0.1, 8):
        sol = search.p2(T)
        grads.append(bs_energy_gradient(cfg, dem, T, sol.cert, sol.v))
    assert np.all(np.diff(grads) >= -1e-9 * np.abs(grads[:-1]))


@pytest.mark.parametrize("P_tc", [0.05, 0.5, 2.0, 20.0, 200.0])
def test_scalar_frame_length(P_tc):
    cfg = unit_config(P_tc=P_tc, P_avg=10.0)
    chan = ChannelMatrix.from_gains([[1.3]], cfg)
    _, rep = solve_temin(cfg, chan, DemandVector([2.0]))
    ref, _ = oracles.temin_scalar(cfg.a, cfg.P_avg, P_tc, 1.3, 2.0)
    assert rep.E_t == pytest.approx(ref, rel=1e-3)


def test_dichotomy_at_optimum(cell):
    for P_tc in (20.0, 2000.0):
        cfg, chan, dem = cell
        cfg = cfg.replace(P_tc=P_tc)
        search = FrameSearch(cfg, chan, dem)
        T = search.best()
        stationary = abs(search.y(T)) <= 1e-6 * P_tc
        saturated = abs(search.v(T) - cfg.P_avg) <= 1e-6 * cfg.P_avg
        assert stationary or saturated
        assert saturated == (P_tc == 2000.0)


def test_ofdma_beats_tdma_on_bs_energy(cell):
    cfg, chan, dem = cell
    alloc, rep = solve_temin(cfg, chan, dem)
    _, tdma = solve_wsremin_tdma(cfg, chan, dem)
    assert rep.E_t < energy_report(cfg, dem, tdma).E_t
    assert validate_allocation(cfg, chan, dem, alloc) == []


def test_zero_constant_power_is_unbounded(cell):
    cfg, chan, dem = cell
    with pytest.raises(UnboundedError):
        solve_temin(cfg.replace(P_tc=0.0), chan, dem)


def test_zero_constant_power_with_cap_uses_cap(cell):
    cfg, chan, dem = cell
    alloc, _ = solve_temin_tmax(cfg.replace(P_tc=0.0, T_max=0.05), chan, dem)
    assert alloc.T == pytest.approx(0.05)


def test_tmax_cases(cell):
    cfg, chan, dem = cell
    search = FrameSearch(cfg, chan, dem)
    free, _ = solve_temin(cfg, chan, dem, search=search)
    same, _ = solve_temin_tmax(cfg.replace(T_max=2 * free.T), chan, dem, search=search)
    assert same.T == free.T
    T_cap = 0.5 * (free.T + search.min_time())
    capped, _ = solve_temin_tmax(cfg.replace(T_max=T_cap), chan, dem, search=search)
    assert capped.T == pytest.approx(T_cap)
    with pytest.raises(InfeasibleError) as exc:
        solve_temin_tmax(cfg.replace(T_max=0.5 * search.min_time()), chan, dem, search=search)
    assert exc.value.details["v_at_T_max"] > cfg.P_avg
