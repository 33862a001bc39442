import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import unit_config
from ofdm_energy import oracles
from ofdm_energy.errors import InfeasibleError
from ofdm_energy.model import ChannelMatrix, DemandVector, energy_report, validate_allocation
from ofdm_energy.scenario import default_paper_scenario, generate_channels
from ofdm_energy.temin import solve_temin
from ofdm_energy.tsofdma import (
    GroupingSolver,
    cci_matrix,
    cog_grouping,
    exhaustive_grouping,
    make_grouping,
    set_partitions,
    solve_multi_slot,
    solve_singletons,
    solve_wstremin,
    solve_wstremin_tmax,
    split_b1_b2,
)
from ofdm_energy.wsre import min_total_time, solve_wsremin_tdma


def small_cell(K=3, seed=0, **overrides):
    spec = default_paper_scenario()
    spec = spec.replace(
        K=K,
        N=8,
        distances=spec.distances[:K],
        qbar_bits=spec.qbar_bits[:K],
        config=spec.config.__class__(alphas=(1.0,) * K),
    )
    cfg = spec.system_config(**overrides)
    return cfg, generate_channels(spec, seed, cfg), spec.demand()


def stirling2(n, k):
    return sum((-1) ** i * math.comb(k, i) * (k - i) ** n for i in range(k + 1)) // math.factorial(k)


def test_cci_identical_rows():
    cfg = unit_config(K=3)
    pi = cci_matrix(ChannelMatrix.from_gains(np.tile([1.0, 2.0, 3.0], (3, 1)), cfg))
    assert np.allclose(pi, 1.0)


def test_cci_orthogonal_supports():
    cfg = unit_config(K=2)
    h = np.array([[1.0, 1.0, 1e-9, 1e-9], [1e-9, 1e-9, 1.0, 1.0]])
    pi = cci_matrix(ChannelMatrix.from_gains(h, cfg))
    assert pi[0, 1] < 1e-8


def test_cci_direct_recomputation():
    rng = np.random.default_rng(0)
    h = rng.exponential(size=(3, 4))
    pi = cci_matrix(ChannelMatrix.from_gains(h, unit_config(K=3)))
    for i in range(3):
        for j in range(3):
            ref = h[i] @ h[j] / math.sqrt((h[i] @ h[i]) * (h[j] @ h[j]))
            assert pi[i, j] == pytest.approx(ref, rel=1e-12)


def test_cog_forced_partitions(cell):
    _, chan, _ = cell
    assert sorted(cog_grouping(chan, 4).phi) == [(0,), (1,), (2,), (3,)]
    assert [sorted(s) for s in cog_grouping(chan, 1).phi] == [[0, 1, 2, 3]]


def test_cog_separates_correlated_pairs():
    # MTs 0/1 share one spectral shape and 2/3 another, nearly orthogonal to it
    h = np.array(
        [
            [1.0, 0.9, 0.01, 0.02],
            [0.95, 1.0, 0.02, 0.01],
            [0.01, 0.03, 1.0, 0.8],
            [0.02, 0.01, 0.85, 1.0],
        ]
    )
    g = cog_grouping(ChannelMatrix.from_gains(h, unit_config(K=4)), 2)
    slot_of = {m: j for j, s in enumerate(g.phi) for m in s}
    assert slot_of[0] != slot_of[1]
    assert slot_of[2] != slot_of[3]


def test_cog_tie_goes_to_lower_index():
    h = np.tile([1.0, 2.0], (3, 1))
    g = cog_grouping(ChannelMatrix.from_gains(h, unit_config(K=3)), 2)
    assert g.phi == ((0, 2), (1,))


def test_split_cases():
    pi = np.eye(4)
    assert split_b1_b2(make_grouping(pi, [(0,), (1,), (2,), (3,)]))[1] == []
    assert split_b1_b2(make_grouping(pi, [(0, 1, 2, 3)]))[0] == []
    assert split_b1_b2(make_grouping(pi, [(0,), (1, 2), (3,)])) == ([0, 2], [1])


def test_invalid_partition_rejected():
    with pytest.raises(ValueError):
        make_grouping(np.eye(3), [(0,), (0, 1)])


@pytest.mark.parametrize("n,k", [(4, 2), (4, 3), (5, 3), (6, 2)])
def test_partition_counts(n, k):
    parts = list(set_partitions(range(n), k))
    assert len(parts) == stirling2(n, k)
    assert len({frozenset(frozenset(b) for b in p) for p in parts}) == len(parts)


@given(n=st.integers(1, 6), k=st.integers(1, 6))
def test_partitions_cover_items(n, k):
    for p in set_partitions(range(n), k):
        assert sorted(x for b in p for x in b) == list(range(n))
        assert len(p) == k


def test_singletons_without_bs_weight_match_receiver_solver(cell):
    cfg, chan, dem = cell
    plan = solve_singletons(cfg, chan, dem, (1, 3))
    sub = (1, 3)
    sol, _ = solve_wsremin_tdma(cfg.subset(sub), chan.subset(sub), dem.subset(sub))
    assert np.allclose(plan.durations, sol.t_on, rtol=1e-10)


def test_singletons_stretch_with_bs_weight(cell):
    # receivers alone want the shortest slots; a costly BS circuit wants longer ones
    cfg, chan, dem = cell
    totals = [sum(solve_singletons(cfg.replace(alpha0=a0), chan, dem, range(4)).durations) for a0 in (0.0, 0.01, 1.0, 1e3)]
    assert all(b >= a * (1 - 1e-9) for a, b in zip(totals, totals[1:]))
    t_min, _ = min_total_time(cfg, chan.f, dem.qbar)
    assert totals[0] == pytest.approx(t_min, rel=1e-6)
    assert totals[-1] > 1.2 * t_min


@pytest.mark.parametrize("alpha0", [0.0, 0.1, 1.0, 10.0])
def test_single_mt_slot_matches_scalar_search(alpha0):
    cfg = unit_config(alpha0=alpha0, P_tc=2.0, P_rc=0.5)
    f = np.array([[0.4, 1.7, 0.9]])
    plan = solve_singletons(cfg, ChannelMatrix.from_gains(f, cfg), DemandVector([3.0]), (0,))
    ref, _ = oracles.singleton_scalar(cfg.a, cfg.P_avg, 0.5 + alpha0 * 2.0, alpha0, f[0], 3.0)
    assert plan.objective == pytest.approx(ref, rel=1e-6)


def test_multi_slot_without_receiver_weight_is_temin():
    cfg, chan, dem = small_cell(K=2, alphas=(0.0, 0.0), alpha0=1.0)
    plan = solve_multi_slot(cfg, chan, dem, (0, 1))
    alloc, rep = solve_temin(cfg, chan, dem)
    assert plan.duration == pytest.approx(alloc.T, rel=1e-8)
    assert plan.objective == pytest.approx(rep.E_t, rel=1e-9)


def test_full_slot_is_temin_with_receivers_folded_in():
    cfg, chan, dem = small_cell(K=3, alpha0=1.0)
    plan = solve_multi_slot(cfg, chan, dem, (0, 1, 2))
    inflated = cfg.replace(P_tc=cfg.P_tc + 3 * cfg.P_rc)
    alloc, rep = solve_temin(inflated, chan, dem)
    assert plan.duration == pytest.approx(alloc.T, rel=1e-8)
    assert plan.objective == pytest.approx(rep.E_t, rel=1e-9)


def test_multi_slot_scale_invariance():
    cfg, chan, dem = small_cell(K=2, alpha0=0.05)
    a = solve_multi_slot(cfg, chan, dem, (0, 1))
    b = solve_multi_slot(cfg.replace(alpha0=0.1, alphas=(2.0, 2.0)), chan, dem, (0, 1))
    assert b.objective == pytest.approx(2 * a.objective, rel=1e-9)
    assert b.duration == pytest.approx(a.duration, rel=1e-8)
    assert np.allclose(b.rho, a.rho, atol=1e-6)


def test_two_mts_pick_better_extreme():
    cfg, chan, dem = small_cell(K=2, alpha0=0.02)
    solver = GroupingSolver(cfg, chan, dem)
    _, rep, J, _ = solve_wstremin(cfg, chan, dem, solver=solver)
    both = {1: solver.objective(make_grouping(solver.pi, [(0, 1)])), 2: solver.objective(make_grouping(solver.pi, [(0,), (1,)]))}
    assert J in (1, 2)
    assert rep.wstre == pytest.approx(min(both.values()), rel=1e-12)


def test_zero_bs_weight_recovers_tdma(cell):
    cfg, chan, dem = cell
    alloc, rep, J, _ = solve_wstremin(cfg, chan, dem)
    _, tdma = solve_wsremin_tdma(cfg, chan, dem)
    assert J == 4
    assert rep.E_r_weighted == pytest.approx(energy_report(cfg, dem, tdma).E_r_weighted, rel=1e-3)
    assert validate_allocation(cfg, chan, dem, alloc) == []


def test_huge_bs_weight_recovers_ofdma(cell):
    cfg, chan, dem = cell
    _, rep, J, _ = solve_wstremin(cfg.replace(alpha0=1e6), chan, dem)
    _, ofdma = solve_temin(cfg, chan, dem)
    assert J == 1
    assert rep.E_t == pytest.approx(ofdma.E_t, rel=1e-2)


def test_envelope_and_exhaustive_dominance(cell):
    cfg, chan, dem = cell
    cfg = cfg.replace(alpha0=0.025)
    solver = GroupingSolver(cfg, chan, dem)
    _, rep, _, _ = solve_wstremin(cfg, chan, dem, solver=solver)
    ends = [solver.objective(make_grouping(solver.pi, [tuple(range(4))])), solver.objective(make_grouping(solver.pi, [(k,) for k in range(4)]))]
    assert rep.wstre <= min(ends) * (1 + 1e-12)
    g, best = exhaustive_grouping(cfg, chan, dem, 2, solver=solver)
    assert best <= solver.objective(cog_grouping(chan, 2)) * (1 + 1e-12)
    assert g.J == 2


def test_exhaustive_extremes_are_unique(cell):
    cfg, chan, dem = cell
    solver = GroupingSolver(cfg.replace(alpha0=0.025), chan, dem)
    g1, _ = exhaustive_grouping(solver.cfg, chan, dem, 1, solver=solver)
    g4, _ = exhaustive_grouping(solver.cfg, chan, dem, 4, solver=solver)
    assert g1.phi == ((0, 1, 2, 3),)
    assert g4.phi == ((0,), (1,), (2,), (3,))


def test_exhaustive_refuses_large_cells():
    K = 7
    cfg = unit_config(K=K)
    chan = ChannelMatrix.from_gains(np.ones((K, 2)), cfg)
    with pytest.raises(ValueError, match="K <= 6"):
        exhaustive_grouping(cfg, chan, DemandVector(np.ones(K)), 2)


def test_tmax_inactive_matches_free(cell):
    cfg, chan, dem = cell
    cfg = cfg.replace(alpha0=0.025)
    free, rep, J, g = solve_wstremin(cfg, chan, dem)
    capped, rep2, J2, g2 = solve_wstremin_tmax(cfg.replace(T_max=10 * free.T), chan, dem)
    assert (J2, g2.phi) == (J, g.phi)
    assert rep2.wstre == pytest.approx(rep.wstre, rel=1e-12)


def test_tmax_near_and_below_minimum(cell):
    cfg, chan, dem = cell
    solver = GroupingSolver(cfg, chan, dem)
    shortest = min(solver.min_frame_time(cog_grouping(chan, J)) for J in range(1, 5))
    alloc, _, _, _ = solve_wstremin_tmax(cfg.replace(T_max=1.01 * shortest), chan, dem)
    assert alloc.T <= 1.01 * shortest * (1 + 1e-9)
    with pytest.raises(InfeasibleError) as exc:
        solve_wstremin_tmax(cfg.replace(T_max=0.99 * shortest), chan, dem)
    assert exc.value.details["min_time"] == pytest.approx(shortest)
