"""Time-slotted OFDMA: MTs are grouped into orthogonal slots, OFDMA inside each.

A grouping with J slots splits into single-MT slots, pooled into one D-TDMA
problem with BS energy in the objective, and multi-MT slots, each solved as
an OFDMA frame whose constant power includes the members' receivers.  Each
multi-MT slot, and the pool of single-MT slots, keeps its own average power
budget ``P_avg``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import AllocationError, InfeasibleError
from .model import (
    Allocation,
    ChannelMatrix,
    DemandVector,
    EnergyReport,
    Slot,
    SystemConfig,
    energy_report,
    validate_allocation,
)
from .numerics import root_positive
from .temin import FrameSearch
from .wsre import solve_tdma_weighted

__all__ = [
    "Grouping",
    "SlotPlan",
    "cci_matrix",
    "cog_grouping",
    "make_grouping",
    "split_b1_b2",
    "set_partitions",
    "solve_singletons",
    "solve_multi_slot",
    "GroupingSolver",
    "solve_grouping",
    "solve_wstremin",
    "exhaustive_grouping",
    "solve_wstremin_tmax",
]

MAX_EXHAUSTIVE_K = 6


@dataclass(frozen=True)
class Grouping:
    """Partition of the MTs into ``J`` slots plus the correlation data behind it."""

    phi: tuple
    pi: np.ndarray
    sum_cci: tuple

    def __post_init__(self):
        phi = tuple(tuple(sorted(int(m) for m in s)) for s in self.phi)
        object.__setattr__(self, "phi", phi)
        K = self.pi.shape[0]
        members = sorted(m for s in phi for m in s)
        if members != list(range(K)) or any(len(s) == 0 for s in phi):
            raise ValueError(f"slots {phi} do not partition {K} MTs")

    @property
    def J(self):
        return len(self.phi)

    @property
    def K(self):
        return self.pi.shape[0]


def cci_matrix(chan: ChannelMatrix):
    """Inner products of the L2-normalized channel gain rows."""
    hn = chan.h / np.linalg.norm(chan.h, axis=1, keepdims=True)
    pi = hn @ hn.T
    pi = 0.5 * (pi + pi.T)
    np.fill_diagonal(pi, 1.0)
    return np.clip(pi, 0.0, 1.0)


def _slot_cci(pi, members):
    idx = list(members)
    sub = pi[np.ix_(idx, idx)]
    return float(sub.sum() - np.trace(sub))


def make_grouping(pi, phi):
    """Grouping from an explicit partition, with its per-slot sum-CCI."""
    phi = tuple(tuple(sorted(s)) for s in phi)
    return Grouping(phi=phi, pi=pi, sum_cci=tuple(_slot_cci(pi, s) for s in phi))


def cog_grouping(chan: ChannelMatrix, J: int) -> Grouping:
    """Channel-orthogonality-based grouping into ``J`` slots.

    The ``J`` MTs with the largest total correlation to the others seed one
    slot each.  The rest follow in descending total correlation, each joining
    the slot whose sum-CCI grows least.  Ties go to the lower MT index and
    the lower slot index.
    """
    K = chan.K
    if not 1 <= J <= K:
        raise ValueError(f"J must lie in [1, {K}], got {J}")
    pi = cci_matrix(chan)
    total = pi.sum(axis=1) - 1.0
    order = sorted(range(K), key=lambda k: (-total[k], k))
    slots = [[k] for k in order[:J]]
    for k in order[J:]:
        increase = [2.0 * float(pi[k, s].sum()) for s in slots]
        slots[int(np.argmin(increase))].append(k)
    return make_grouping(pi, slots)


def split_b1_b2(grouping: Grouping):
    """Indices of single-MT slots and of multi-MT slots."""
    b1 = [j for j, s in enumerate(grouping.phi) if len(s) == 1]
    b2 = [j for j, s in enumerate(grouping.phi) if len(s) >= 2]
    return b1, b2


def set_partitions(items: Sequence, J: int):
    """All partitions of ``items`` into exactly ``J`` nonempty blocks."""
    items = list(items)
    n = len(items)
    if J < 1 or J > n:
        return

    def rec(i, blocks):
        remaining = n - i
        empty_needed = J - len(blocks)
        if remaining < empty_needed:
            return
        if i == n:
            if len(blocks) == J:
                yield tuple(tuple(b) for b in blocks)
            return
        x = items[i]
        for b in blocks:
            b.append(x)
            yield from rec(i + 1, blocks)
            b.pop()
        if len(blocks) < J:
            blocks.append([x])
            yield from rec(i + 1, blocks)
            blocks.pop()

    yield from rec(0, [])


@dataclass(frozen=True)
class SlotPlan:
    """Solved part of a TS-OFDMA frame.

    ``rho`` and ``p`` have one row per member; ``rho`` is the sharing
    within the part (each member's fraction of the part's duration).
    ``objective`` is the part's contribution to the weighted energy.
    """

    members: tuple
    durations: tuple
    rho: np.ndarray
    p: np.ndarray
    objective: float
    multi: bool

    @property
    def duration(self):
        return float(sum(self.durations))


def _weights(cfg, members):
    return cfg.alpha_vec[list(members)]


def solve_singletons(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector, mts, *, time_price=0.0):
    """Single-MT slots pooled under one average power budget.

    Per-MT time cost ``alpha_k P_rc + alpha0 P_tc`` and transmit energy
    weighted by ``alpha0``.
    """
    mts = tuple(sorted(int(m) for m in mts))
    if not mts:
        raise ValueError("need at least one MT")
    alphas = _weights(cfg, mts)
    cost = alphas * cfg.P_rc + cfg.alpha0 * cfg.P_tc
    if np.any(cost + time_price <= 0):
        raise ValueError("an MT with zero weight in a single-MT slot has no defined slot length (alpha0 = 0)")
    sol = solve_tdma_weighted(
        cfg, chan.f[list(mts)], demand.qbar[list(mts)], cost, cfg.alpha0, time_price=time_price
    )
    t = sol.t_on
    obj = float(np.dot(cost, t) + cfg.alpha0 * sol.tx_energy)
    rho = np.repeat((t / t.sum())[:, None], chan.N, axis=1)
    return SlotPlan(members=mts, durations=tuple(float(x) for x in t), rho=rho, p=sol.p, objective=obj, multi=False)


def solve_multi_slot(
    cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector, members, *, time_price=0.0, T_cap=None
):
    """One OFDMA slot shared by ``members``.

    The slot length trades the constant power
    ``alpha0 P_tc + sum_k alpha_k P_rc`` against transmit energy.  With
    ``alpha0 = 0`` only the constant term is left and the slot is as short
    as the power budget allows.
    """
    members = tuple(sorted(int(m) for m in members))
    if len(members) < 2:
        raise ValueError("a multi-MT slot needs at least two MTs")
    sub_cfg = cfg.subset(members)
    sub_chan = chan.subset(members)
    sub_dem = demand.subset(members)
    P_rx = float(np.sum(_weights(cfg, members))) * cfg.P_rc + time_price
    if cfg.alpha0 > 0:
        search = FrameSearch(sub_cfg, sub_chan, sub_dem, P_fixed=cfg.P_tc + P_rx / cfg.alpha0)
        T = search.best(T_cap)
    else:
        if P_rx <= 0:
            raise ValueError("slot with all-zero weights and alpha0 = 0 has no defined length")
        search = FrameSearch(sub_cfg, sub_chan, sub_dem)
        T = search.best(T_cap, min_time_only=True)
    sol = search.p2(T)
    E_t = T * sol.v + cfg.P_tc * T
    obj = cfg.alpha0 * E_t + (P_rx - time_price) * T
    return SlotPlan(members=members, durations=(float(T),), rho=sol.rho, p=sol.p, objective=float(obj), multi=True)


def _assemble(cfg, chan, grouping, plans):
    """Frame from solved parts: multi-MT slots first (longest first), then single-MT slots by index."""
    K, N = chan.K, chan.N
    multi = sorted((pl for pl in plans if pl.multi), key=lambda pl: (-pl.duration, pl.members))
    singles = [pl for pl in plans if not pl.multi]
    T = sum(pl.duration for pl in plans)
    rho = np.zeros((K, N))
    p = np.zeros((K, N))
    t_on = np.zeros(K)
    slots = []
    for pl in multi:
        Tj = pl.duration
        for i, k in enumerate(pl.members):
            rho[k] = pl.rho[i] * Tj / T
            p[k] = pl.p[i]
            t_on[k] = Tj
        slots.append(Slot(pl.members, Tj))
    single_slots = []
    for pl in singles:
        for i, k in enumerate(pl.members):
            tk = pl.durations[i]
            rho[k] = tk / T
            p[k] = pl.p[i]
            t_on[k] = tk
            single_slots.append(Slot((k,), tk))
    slots.extend(sorted(single_slots, key=lambda s: s.members))
    return Allocation(T=T, rho=rho, p=p, t_on=t_on, grouping=tuple(slots))


class GroupingSolver:
    """Solves groupings of one instance, caching every solved part.

    Single-MT slots of a grouping are pooled, so their cache key is the
    whole set of singletons; multi-MT slots are keyed by their members.
    """

    def __init__(self, cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector):
        if cfg.K != chan.K or chan.K != demand.K:
            raise ValueError("config, channel and demand disagree on the number of MTs")
        self.cfg, self.chan, self.demand = cfg, chan, demand
        self.pi = cci_matrix(chan)
        self._cache: Dict[tuple, SlotPlan] = {}

    def _part(self, kind, members, time_price=0.0, T_cap=None):
        key = (kind, members, time_price, T_cap)
        plan = self._cache.get(key)
        if plan is None:
            if kind == "single":
                plan = solve_singletons(self.cfg, self.chan, self.demand, members, time_price=time_price)
            else:
                plan = solve_multi_slot(
                    self.cfg, self.chan, self.demand, members, time_price=time_price, T_cap=T_cap
                )
            self._cache[key] = plan
        return plan

    def plans(self, grouping: Grouping, time_price=0.0):
        b1, b2 = split_b1_b2(grouping)
        out = [self._part("multi", grouping.phi[j], time_price) for j in b2]
        if b1:
            out.append(self._part("single", tuple(sorted(grouping.phi[j][0] for j in b1)), time_price))
        return out

    def objective(self, grouping: Grouping, time_price=0.0):
        """Weighted energy of a grouping (time price excluded)."""
        return float(sum(pl.objective for pl in self.plans(grouping, time_price)))

    def solve(self, grouping: Grouping, time_price=0.0):
        alloc = _assemble(self.cfg, self.chan, grouping, self.plans(grouping, time_price))
        bad = validate_allocation(self.cfg, self.chan, self.demand, alloc)
        if bad:
            raise AllocationError(bad)
        return alloc, energy_report(self.cfg, self.demand, alloc)

    def min_frame_time(self, grouping: Grouping):
        """Shortest frame for this grouping under the per-slot power budgets."""
        probe = self.cfg.replace(alpha0=0.0, alphas=tuple(1.0 / self.cfg.P_rc for _ in range(self.cfg.K)))
        sub = GroupingSolver(probe, self.chan, self.demand)
        return sum(pl.duration for pl in sub.plans(grouping))

    def frame_time(self, grouping: Grouping, time_price=0.0):
        return sum(pl.duration for pl in self.plans(grouping, time_price))


def solve_grouping(cfg, chan, demand, grouping, *, solver=None):
    """``(Allocation, EnergyReport)`` of one fixed grouping."""
    solver = solver or GroupingSolver(cfg, chan, demand)
    return solver.solve(grouping)


def _candidates(solver, J_values):
    K = solver.chan.K
    for J in J_values:
        if J == K:
            yield J, make_grouping(solver.pi, [(k,) for k in range(K)])
        elif J == 1:
            yield J, make_grouping(solver.pi, [tuple(range(K))])
        else:
            yield J, cog_grouping(solver.chan, J)


def solve_wstremin(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector, *, J_values=None, solver=None):
    """Best TS-OFDMA schedule over the slot counts ``J_values`` (default ``1..K``).

    ``J = K`` and ``J = 1`` use their unique groupings, every other ``J`` the
    correlation-based grouping.  Returns ``(Allocation, EnergyReport, J, Grouping)``
    for the smallest weighted energy; ties go to the larger ``J``.
    """
    solver = solver or GroupingSolver(cfg, chan, demand)
    K = chan.K
    J_values = sorted(set(J_values or range(1, K + 1)), reverse=True)
    best = None
    for J, g in _candidates(solver, J_values):
        obj = solver.objective(g)
        if best is None or obj < best[0]:
            best = (obj, J, g)
    _, J, g = best
    alloc, rep = solver.solve(g)
    return alloc, rep, J, g


def exhaustive_grouping(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector, J: int, *, solver=None):
    """Best of all partitions of the MTs into ``J`` slots; returns ``(Grouping, objective)``.

    Refuses ``K > 6``; the number of partitions grows like the Stirling
    numbers of the second kind.
    """
    K = chan.K
    if K > MAX_EXHAUSTIVE_K:
        raise ValueError(f"exhaustive grouping is limited to K <= {MAX_EXHAUSTIVE_K}, got K={K}")
    if not 1 <= J <= K:
        raise ValueError(f"J must lie in [1, {K}], got {J}")
    solver = solver or GroupingSolver(cfg, chan, demand)
    best = None
    for phi in set_partitions(range(K), J):
        g = make_grouping(solver.pi, phi)
        obj = solver.objective(g)
        if best is None or obj < best[1]:
            best = (g, obj)
    return best


def _fit_time(solver, grouping, T_max, rtol):
    """Smallest time price whose frame fits in ``T_max`` (zero if already fits)."""
    if solver.frame_time(grouping) <= T_max:
        return 0.0
    cfg = solver.cfg
    scale = float(np.max(cfg.alpha_vec)) * cfg.P_rc + cfg.alpha0 * cfg.P_tc
    return root_positive(lambda nu: solver.frame_time(grouping, nu) - T_max, max(scale, 1e-12), rtol=rtol, side="hi")


def solve_wstremin_tmax(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector, *, J_values=None):
    """:func:`solve_wstremin` with the frame capped at ``cfg.T_max``.

    Candidates whose minimum frame time exceeds ``T_max`` are dropped.  For
    the rest, a common price on slot time is raised until the frame fits.
    Raises :class:`InfeasibleError` (with ``min_time``) when no candidate fits.
    """
    if cfg.T_max is None:
        raise ValueError("cfg.T_max is not set")
    T_max = cfg.T_max
    solver = GroupingSolver(cfg, chan, demand)
    K = chan.K
    J_values = sorted(set(J_values or range(1, K + 1)), reverse=True)
    best = None
    shortest = math.inf
    for J, g in _candidates(solver, J_values):
        t_min = solver.min_frame_time(g)
        shortest = min(shortest, t_min)
        if t_min >= T_max:
            continue
        nu = _fit_time(solver, g, T_max, cfg.tol.time)
        obj = solver.objective(g, nu)
        if best is None or obj < best[0]:
            best = (obj, J, g, nu)
    if best is None:
        raise InfeasibleError(
            f"no grouping fits T_max={T_max:.6g} s; the shortest frame needs {shortest:.6g} s",
            min_time=shortest,
            T_max=T_max,
        )
    _, J, g, nu = best
    alloc, rep = solver.solve(g, nu)
    return alloc, rep, J, g
