"""Acceptance suite: ten end-to-end checks of the solvers, each with its own tolerance.

``run_acceptance("full")`` runs every check at its stated size;
``"quick"`` shrinks seed and grid counts so the whole suite finishes in a
couple of minutes.  Criterion 10 is advisory: a failure is reported but
does not make the suite fail.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import oracles
from .model import (
    Allocation,
    ChannelMatrix,
    DemandVector,
    SystemConfig,
    energy_report,
    subcarrier_rate,
    validate_allocation,
)
from .scenario import default_paper_scenario, generate_channels
from .temin import FrameSearch, bs_energy_gradient, ofdma_allocation, solve_p2, solve_temin
from .tsofdma import GroupingSolver, cog_grouping, exhaustive_grouping, make_grouping, solve_wstremin
from .wsre import solve_wsremin_tdma, tdma_invariant_errors, tdma_rebase

__all__ = ["CriterionResult", "CRITERIA", "run_acceptance", "default_alpha0_grid", "default_instance"]


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: Dict = field(default_factory=dict)
    runtime_s: float = 0.0
    advisory: bool = False

    def line(self):
        status = "PASS" if self.passed else ("WARN" if self.advisory else "FAIL")
        return f"[{status}] criterion {self.number}: {self.title} ({self.runtime_s:.1f} s)"


def default_instance(seed, **cfg_overrides):
    """Default four-MT cell with the channel drawn from ``seed``."""
    spec = default_paper_scenario()
    cfg = spec.system_config(**cfg_overrides)
    return cfg, generate_channels(spec, seed, cfg), spec.demand()


def default_alpha0_grid(cfg: SystemConfig, points=25):
    """Log-spaced BS weights from 1e-3 to 1e3 times ``P_rc / P_tc``."""
    ref = cfg.P_rc / cfg.P_tc if cfg.P_tc > 0 else 1.0
    return [float(x) for x in np.logspace(-3, 3, points) * ref]


def _random_instance(rng, K, N):
    spec = default_paper_scenario()
    cfg = spec.system_config(alphas=tuple(rng.uniform(0.5, 2.0, K)))
    d = rng.uniform(300.0, 800.0, K)
    h = rng.exponential(size=(K, N)) * d[:, None] ** -4.0
    chan = ChannelMatrix.from_gains(h, cfg)
    demand = DemandVector(rng.uniform(2e3, 1.5e4, K))
    return cfg, chan, demand


def _wsre_objective(cfg, sol):
    return float(cfg.P_rc * np.dot(cfg.alpha_vec, sol.t_on))


def criterion_1(scale):
    rng = np.random.default_rng(101)
    worst, rows = 0.0, []
    for i in range(20):
        K = int(rng.choice([1, 2, 3]))
        N = int(rng.choice([2, 4]))
        cfg, chan, dem = _random_instance(rng, K, N)
        sol, _ = solve_wsremin_tdma(cfg, chan, dem)
        mine = _wsre_objective(cfg, sol)
        ref, _ = oracles.p1_reference(cfg.a, cfg.W, cfg.P_avg, cfg.P_rc, cfg.alpha_vec, chan.f, dem.qbar)
        err = abs(mine - ref) / ref
        worst = max(worst, err)
        rows.append((K, N, mine, ref, err))
    return worst <= 1e-3, {"max_rel_err": worst, "instances": len(rows)}


def criterion_2(scale):
    rng = np.random.default_rng(202)
    seeds = range(10 if scale == "full" else 3)
    outputs = []
    for s in seeds:
        outputs.append(default_instance(s))
    for _ in range(20 if scale == "full" else 5):
        outputs.append(_random_instance(rng, int(rng.choice([1, 2, 3, 4])), int(rng.choice([2, 4, 8]))))
    worst = {"water_level": 0.0, "demand": 0.0, "power": 0.0, "beta_margin": 0.0}
    for cfg, chan, dem in outputs:
        sol, _ = solve_wsremin_tdma(cfg, chan, dem)
        errs = tdma_invariant_errors(cfg, chan, dem, sol)
        for key in worst:
            worst[key] = max(worst[key], errs[key])
    ok = worst["water_level"] <= 1e-6 and worst["demand"] <= 1e-6 and worst["power"] <= 1e-6 and worst["beta_margin"] < 1
    return ok, {"solver_outputs": len(outputs), **{f"max_{k}": v for k, v in worst.items()}}


def random_feasible_allocation(rng, K, N, cfg):
    """A random allocation where several MTs share subcarriers, with demands set to what it delivers."""
    h = rng.exponential(size=(K, N)) * rng.uniform(300.0, 800.0, K)[:, None] ** -4.0
    chan = ChannelMatrix.from_gains(h, cfg)
    rho = rng.dirichlet(np.ones(K + 1), size=N).T[:K]
    rho *= rng.uniform(0.5, 1.0, N)
    p = rng.uniform(0.1, 1.0, (K, N))
    p *= cfg.P_avg * rng.uniform(0.3, 1.0) / float(np.sum(rho * p))
    T = float(rng.uniform(1e-3, 1e-1))
    busy = rho.max(axis=1) * T
    t_on = busy + rng.uniform(0.0, 1.0, K) * (T - busy)
    delivered = T * np.sum(rho * subcarrier_rate(cfg, chan.h, p), axis=1)
    demand = DemandVector(delivered * (1 - 1e-12))
    return chan, demand, Allocation(T=T, rho=rho, p=p, t_on=t_on)


def criterion_3(scale):
    rng = np.random.default_rng(303)
    spec = default_paper_scenario()
    worst_increase = -math.inf
    infeasible = 0
    for _ in range(100):
        K = int(rng.integers(2, 6))
        N = int(rng.integers(2, 9))
        cfg = spec.system_config(alphas=tuple(rng.uniform(0.2, 3.0, K)))
        chan, dem, alloc = random_feasible_allocation(rng, K, N, cfg)
        out = tdma_rebase(cfg, chan, dem, alloc)
        if validate_allocation(cfg, chan, dem, out):
            infeasible += 1
        before = float(np.dot(cfg.alpha_vec, alloc.t_on))
        after = float(np.dot(cfg.alpha_vec, out.t_on))
        worst_increase = max(worst_increase, (after - before) / before)
    return infeasible == 0 and worst_increase <= 1e-12, {"infeasible_outputs": infeasible, "max_rel_increase": worst_increase}


def criterion_4(scale):
    seeds = range(11 if scale == "full" else 3)
    worst_gap, worst_share, worst_demand = 0.0, 0.0, 0.0
    for s in seeds:
        cfg, chan, dem = default_instance(s)
        alloc, _ = solve_temin(cfg, chan, dem)
        sol = solve_p2(cfg, chan, dem, alloc.T)
        c = dem.qbar / alloc.T
        worst_gap = max(worst_gap, sol.rel_gap)
        worst_share = max(worst_share, float(np.max(np.abs(sol.rho.sum(axis=0) - 1.0))))
        worst_demand = max(worst_demand, float(np.max(np.abs(sol.m.sum(axis=1) - c) / c)))
    ok = worst_gap < 1e-4 and worst_share <= 1e-6 and worst_demand <= 1e-6
    return ok, {"instances": len(seeds), "max_rel_gap": worst_gap, "max_share_err": worst_share, "max_rate_err": worst_demand}


def criterion_5(scale):
    cfg, chan, dem = default_instance(0)
    search = FrameSearch(cfg, chan, dem)
    T_min = search.min_time()
    rng = np.random.default_rng(505)
    pairs = 50 if scale == "full" else 10
    worst_convex = -math.inf
    for _ in range(pairs):
        T1, T2 = T_min * np.exp(rng.uniform(0.0, math.log(20.0), 2))
        v1, v2, vm = search.v(T1), search.v(T2), search.v(0.5 * (T1 + T2))
        avg = 0.5 * (v1 + v2)
        worst_convex = max(worst_convex, (vm - avg) / avg)
    points = 20 if scale == "full" else 5
    worst_grad = 0.0
    for T in T_min * np.exp(rng.uniform(0.0, math.log(20.0), points)):
        sol = search.p2(T)
        g = bs_energy_gradient(cfg, dem, T, sol.cert, sol.v)
        d = 1e-3 * T
        Fp = (T + d) * search.v(T + d) + cfg.P_tc * (T + d)
        Fm = (T - d) * search.v(T - d) + cfg.P_tc * (T - d)
        fd = (Fp - Fm) / (2 * d)
        scale_ref = abs(g - cfg.P_tc)
        worst_grad = max(worst_grad, abs(fd - g) / scale_ref)
    ok = worst_convex <= 1e-6 and worst_grad <= 1e-2
    return ok, {"pairs": pairs, "max_convexity_violation": worst_convex, "grad_points": points, "max_grad_rel_err": worst_grad}


def criterion_6(scale):
    worst = 0.0
    rng = np.random.default_rng(606)
    for P_tc in (0.05, 0.5, 2.0, 20.0, 200.0):
        cfg = SystemConfig(W=1.0, N0=1.0, P_avg=10.0, P_tc=P_tc, P_rc=0.5, alphas=(1.0,))
        f = float(rng.uniform(0.2, 3.0))
        q = float(rng.uniform(0.5, 5.0))
        chan = ChannelMatrix.from_gains([[f]], cfg)
        _, rep = solve_temin(cfg, chan, DemandVector([q]))
        ref, _ = oracles.temin_scalar(cfg.a, cfg.P_avg, cfg.P_tc, f, q)
        worst = max(worst, abs(rep.E_t - ref) / ref)
    branches = {"stationary": 0, "power_limited": 0}
    dichotomy_ok = True
    # a large constant BS power pushes the stationary point below the power-feasible range
    cases = [(s, P_tc) for s in range(10 if scale == "full" else 3) for P_tc in (20.0, 2000.0)]
    for s, P_tc in cases:
        cfg, chan, dem = default_instance(s, P_tc=P_tc)
        search = FrameSearch(cfg, chan, dem)
        T = search.best()
        y = search.y(T)
        v = search.v(T)
        if abs(y) <= 1e-6 * cfg.P_tc:
            branches["stationary"] += 1
        elif abs(v - cfg.P_avg) <= 1e-6 * cfg.P_avg and y > 0:
            branches["power_limited"] += 1
        else:
            dichotomy_ok = False
    ok = worst <= 1e-3 and dichotomy_ok and all(branches.values())
    return ok, {"max_scalar_rel_err": worst, **branches}


def criterion_7(scale):
    seeds = range(10 if scale == "full" else 3)
    bs_ok = mt_ok = 0
    bs_strict = mt_strict = 0
    for s in seeds:
        cfg, chan, dem = default_instance(s)
        _, tdma = solve_wsremin_tdma(cfg, chan, dem)
        rep_tdma = energy_report(cfg, dem, tdma)
        ofdma, rep_ofdma = solve_temin(cfg, chan, dem)
        bs_ok += rep_ofdma.E_t <= rep_tdma.E_t
        mt_ok += rep_tdma.E_r_weighted <= rep_ofdma.E_r_weighted
        bs_strict += rep_ofdma.E_t < rep_tdma.E_t * (1 - 1e-9)
        mt_strict += rep_tdma.E_r_weighted < rep_ofdma.E_r_weighted * (1 - 1e-9)
    n = len(seeds)
    need = math.ceil(0.9 * n)
    ok = bs_ok == n and mt_ok == n and bs_strict >= need and mt_strict >= need
    return ok, {"seeds": n, "bs_strict": bs_strict, "mt_strict": mt_strict}


def criterion_8(scale):
    seeds = range(20 if scale == "full" else 3)
    envelope_ok = dominance_ok = True
    worst_cog_gap = 0.0
    alpha0_values = (0.0, 0.025, 1.0) if scale == "full" else (0.025,)
    for s in seeds:
        cfg0, chan, dem = default_instance(s)
        for a0 in alpha0_values:
            cfg = cfg0.replace(alpha0=a0)
            solver = GroupingSolver(cfg, chan, dem)
            _, rep, J, g = solve_wstremin(cfg, chan, dem, solver=solver)
            K = chan.K
            extremes = [
                solver.objective(make_grouping(solver.pi, [tuple(range(K))])),
                solver.objective(make_grouping(solver.pi, [(k,) for k in range(K)])),
            ]
            envelope_ok &= rep.wstre <= min(extremes) * (1 + 1e-12)
            if a0 == 0.025:
                for J in (2, 3):
                    cog = solver.objective(cog_grouping(chan, J))
                    _, best = exhaustive_grouping(cfg, chan, dem, J, solver=solver)
                    dominance_ok &= best <= cog * (1 + 1e-12)
                    worst_cog_gap = max(worst_cog_gap, (cog - best) / best)
    return envelope_ok and dominance_ok, {"seeds": len(seeds), "max_cog_excess": worst_cog_gap}


def tradeoff_curve(cfg, chan, dem, grouping, alpha0_grid):
    """Energy report of a fixed grouping at each BS weight."""
    out = []
    for a0 in alpha0_grid:
        c = cfg.replace(alpha0=float(a0))
        solver = GroupingSolver(c, chan, dem)
        _, rep = solver.solve(grouping)
        out.append(rep)
    return out


def criterion_9(scale):
    t0 = time.perf_counter()
    seeds = range(3 if scale == "full" else 1)
    points = 25 if scale == "full" else 7
    mono_tol = 1e-6
    ok = True
    worst = {"E_t_rise": 0.0, "E_r_drop": 0.0, "se_rise": 0.0, "se_tail_change": 0.0}
    se_order_ok = True
    for s in seeds:
        cfg, chan, dem = default_instance(s)
        grid = default_alpha0_grid(cfg, points)
        K = chan.K
        se_last = {}
        for J in range(1, K + 1):
            if J == 1:
                g = make_grouping(np.eye(K), [tuple(range(K))])
            elif J == K:
                g = make_grouping(np.eye(K), [(k,) for k in range(K)])
            else:
                g = cog_grouping(chan, J)
            reps = tradeoff_curve(cfg, chan, dem, g, grid)
            Et = np.array([r.E_t for r in reps])
            Er = np.array([r.E_r_weighted for r in reps])
            se = np.array([r.se for r in reps])
            worst["E_t_rise"] = max(worst["E_t_rise"], float(np.max(np.diff(Et) / Et[:-1])))
            worst["E_r_drop"] = max(worst["E_r_drop"], float(np.max(-np.diff(Er) / Er[:-1])))
            worst["se_rise"] = max(worst["se_rise"], float(np.max(np.diff(se) / se[:-1])))
            worst["se_tail_change"] = max(worst["se_tail_change"], abs(se[-1] - se[-2]) / se[-2])
            se_last[J] = se[-1]
        se_order_ok &= se_last[1] >= se_last[K]
    runtime = time.perf_counter() - t0
    ok = (
        worst["E_t_rise"] <= mono_tol
        and worst["E_r_drop"] <= mono_tol
        and worst["se_rise"] <= mono_tol
        and worst["se_tail_change"] < 0.01
        and se_order_ok
        and (scale != "full" or runtime < 600)
    )
    return ok, {"seeds": len(seeds), "grid_points": points, **worst, "se_J1_ge_JK": se_order_ok, "sweep_runtime_s": runtime}


def criterion_10(scale):
    seeds = range(10 if scale == "full" else 2)
    ee = {"A_mt": [], "A_bs": [], "B_mt": [], "B_bs": []}
    for s in seeds:
        cfg, chan, dem = default_instance(s)
        _, tdma = solve_wsremin_tdma(cfg, chan, dem)
        rep_a = energy_report(cfg, dem, tdma)
        _, rep_b = solve_temin(cfg, chan, dem)
        ee["A_mt"].append(rep_a.ee_mt)
        ee["A_bs"].append(rep_a.ee_bs)
        ee["B_mt"].append(rep_b.ee_mt)
        ee["B_bs"].append(rep_b.ee_bs)
    m = {k: float(np.mean(v)) for k, v in ee.items()}
    mt_gain = m["A_mt"] / m["B_mt"]
    bs_loss = 1.0 - m["A_bs"] / m["B_bs"]
    return mt_gain >= 2.0 and bs_loss <= 0.40, {"mt_ee_gain": mt_gain, "bs_ee_reduction": bs_loss, "seeds": len(seeds)}


CRITERIA: Dict[int, tuple] = {
    1: ("D-TDMA receiver energy matches an SLSQP reference within 0.1%", criterion_1, 30.0, False),
    2: ("water-filling structure and tight constraints on every D-TDMA output", criterion_2, None, False),
    3: ("TDMA rebase keeps feasibility and never lengthens weighted on-time", criterion_3, 10.0, False),
    4: ("OFDMA power duality gap below 1e-4 with exact recovered sharing", criterion_4, None, False),
    5: ("v(T) midpoint convexity and energy gradient vs finite differences", criterion_5, 60.0, False),
    6: ("frame-length optimum vs scalar oracle and stationary/power-limited dichotomy", criterion_6, None, False),
    7: ("OFDMA is BS-optimal and D-TDMA is MT-optimal", criterion_7, None, False),
    8: ("TS-OFDMA lower envelope and exhaustive grouping beats COG", criterion_8, None, False),
    9: ("monotone BS/MT tradeoff and spectral efficiency along the BS weight sweep", criterion_9, 600.0, False),
    10: ("point B to A: MT efficiency x2 or more, BS efficiency down at most 40%", criterion_10, None, True),
}


def run_criterion(number, scale="full"):
    title, fn, budget, advisory = CRITERIA[number]
    t0 = time.perf_counter()
    passed, detail = fn(scale)
    runtime = time.perf_counter() - t0
    if budget is not None and scale == "full" and runtime > budget:
        passed = False
        detail = {**detail, "over_budget_s": budget}
    result = CriterionResult(number, title, bool(passed), detail, runtime, advisory)
    if advisory and not passed:
        warnings.warn(f"criterion {number} outside its advisory envelope: {detail}", stacklevel=2)
    return result


def run_acceptance(scale="full", only=None, *, progress: Optional[Callable[[CriterionResult], None]] = None):
    """Run the suite; returns the list of results in criterion order."""
    if scale not in ("full", "quick"):
        raise ValueError("scale must be 'full' or 'quick'")
    results = []
    for number in sorted(only or CRITERIA):
        res = run_criterion(number, scale)
        results.append(res)
        if progress:
            progress(res)
    return results


def suite_passed(results: List[CriterionResult]):
    return all(r.passed or r.advisory for r in results)
