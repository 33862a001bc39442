"""Receiver-energy minimization under dynamic TDMA.

Each MT gets an exclusive slot and uses every subcarrier in it.  Given the
power price ``beta``, every MT's optimum is a water-filling over its own
channel with a private water level; ``beta`` is bisected until the frame
meets the average power budget with equality.

The core routine :func:`solve_tdma_weighted` also covers the variants where
BS energy is part of the objective (slots of single MTs in TS-OFDMA) and
where the frame length is capped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import AllocationError, InfeasibleError, NumericError
from .model import (
    Allocation,
    ChannelMatrix,
    DemandVector,
    DualCertificate,
    Slot,
    SystemConfig,
    invert_rate,
    subcarrier_rate,
    validate_allocation,
)
from .numerics import bisect_log, bisect_positive

__all__ = [
    "TdmaSolution",
    "u_n",
    "lambda_root",
    "waterfill_power",
    "on_time",
    "water_level",
    "solve_tdma_weighted",
    "solve_wsremin_tdma",
    "solve_wsremin_tdma_tmax",
    "min_total_time",
    "tdma_allocation",
    "tdma_rebase",
    "tdma_invariant_errors",
]


@dataclass(frozen=True)
class TdmaSolution:
    """Optimal D-TDMA schedule with its multipliers.

    Attributes
    ----------
    t_on : ndarray (K,)
        Slot length of each MT (s).
    p : ndarray (K, N)
        Transmit power on every subcarrier during the MT's slot (W).
    s : ndarray (K, N)
        Bits delivered per subcarrier, ``t_on[k] * rate[k, n]``.
    water_level : ndarray (K,)
        ``p[k, n] + 1/f[k, n]`` on every active subcarrier (W).
    cert : DualCertificate
        Demand prices ``lam`` and the scalar power price ``beta``.
    tx_weight : float
        Weight on transmit energy in the objective (0 for pure receiver energy).
    """

    t_on: np.ndarray
    p: np.ndarray
    s: np.ndarray
    water_level: np.ndarray
    cert: DualCertificate
    tx_weight: float = 0.0

    @property
    def total_time(self):
        return float(np.sum(self.t_on))

    @property
    def tx_energy(self):
        return float(np.dot(self.t_on, self.p.sum(axis=1)))


def u_n(cfg: SystemConfig, f_kn, beta, lambda_k):
    """Per-subcarrier term of the on-time stationarity condition.

    ``(lam/a - beta/f)^+ - (lam/a) * (ln(lam f/(a beta)))^+``; zero whenever
    ``lam * f <= a * beta``.
    """
    a = cfg.a
    f_kn = np.asarray(f_kn, dtype=float)
    lam = np.asarray(lambda_k, dtype=float)
    x = lam * f_kn / (a * beta)
    active = x > 1.0
    logx = np.log(np.where(active, x, 1.0))
    val = np.where(active, lam / a - beta / f_kn - (lam / a) * logx, 0.0)
    return float(val) if np.ndim(val) == 0 else val


def _psi(w, f_row):
    """sum_n (w ln(w f_n) - w + 1/f_n)^+ ; increasing and convex in the water level w."""
    z = w * f_row
    act = z > 1.0
    if not np.any(act):
        return 0.0
    fa = f_row[act]
    return float(np.sum(w * np.log(w * fa) - w + 1.0 / fa))


def water_level(f_row, target, *, max_doublings=60):
    """Water level ``w`` solving ``sum_n (w ln(w f_n) - w + 1/f_n)^+ = target``.

    The bracket starts at ``1/max(f)`` (where the left side is zero) and its
    upper end is doubled until it overshoots.
    """
    f_row = np.asarray(f_row, dtype=float)
    lo = 1.0 / float(np.max(f_row))
    if target <= 0:
        return lo
    hi = 2.0 * lo
    for _ in range(max_doublings):
        if _psi(hi, f_row) >= target:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NumericError(f"water level bracket did not close after {max_doublings} doublings")
    return brentq(lambda w: _psi(w, f_row) - target, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)


def lambda_root(cfg: SystemConfig, f_row, beta, alpha_k):
    """Demand price of one MT for a given power price ``beta``.

    Solves ``alpha_k P_rc - beta P_avg + sum_n u_n(beta, lam) = 0``.  The sum of
    ``u_n`` is zero up to ``lam = a beta / max_n f`` and strictly decreasing
    beyond, so the root is unique.
    """
    if not 0 < beta < alpha_k * cfg.P_rc / cfg.P_avg:
        raise ValueError("need 0 < beta < alpha_k * P_rc / P_avg")
    target = (alpha_k * cfg.P_rc - beta * cfg.P_avg) / beta
    return cfg.a * beta * water_level(f_row, target)


def waterfill_power(cfg: SystemConfig, f_kn, beta, lambda_k):
    """Water-filling power ``(lam/(a beta) - 1/f)^+``."""
    p = np.maximum(np.asarray(lambda_k) / (cfg.a * beta) - 1.0 / np.asarray(f_kn, dtype=float), 0.0)
    return float(p) if np.ndim(p) == 0 else p


def on_time(cfg: SystemConfig, qbar_k, f_row, beta, lambda_k):
    """Slot length needed to deliver ``qbar_k`` bits at the water level ``lam/(a beta)``."""
    x = lambda_k * np.asarray(f_row, dtype=float) / (cfg.a * beta)
    denom = float(np.sum(np.log(np.maximum(x, 1.0))))
    if denom <= 0:
        raise NumericError("no active subcarrier for this MT at the given duals")
    return cfg.a * qbar_k / denom


def _tdma_state(a, f, qbar, cost, tx_weight, P_avg, beta):
    gamma = tx_weight + beta
    K = f.shape[0]
    w = np.empty(K)
    for k in range(K):
        w[k] = water_level(f[k], (cost[k] - beta * P_avg) / gamma)
    p = np.maximum(w[:, None] - 1.0 / f, 0.0)
    L = np.log(np.maximum(w[:, None] * f, 1.0))
    rate_nats = L.sum(axis=1)
    with np.errstate(divide="ignore"):
        t = np.where(rate_nats > 0, a * qbar / np.where(rate_nats > 0, rate_nats, 1.0), np.inf)
    return w, p, L, t


def _excess_power(t, p, P_avg):
    if not np.all(np.isfinite(t)):
        return -math.inf
    return float(np.sum(t * (p.sum(axis=1) - P_avg)))


def solve_tdma_weighted(cfg: SystemConfig, f, qbar, cost, tx_weight=0.0, *, time_price=0.0):
    """D-TDMA optimum of ``sum_k cost_k t_k + tx_weight * sum_k t_k sum_n p_kn``.

    Subject to the per-MT demands and ``sum_k t_k sum_n p_kn <= P_avg sum_k t_k``.
    ``time_price`` is added to every ``cost_k`` (it prices a cap on the frame
    length).  With ``tx_weight = 0`` this is plain weighted receiver-energy
    minimization.

    The power price ``beta`` is located by bisection (in log scale) on the
    frame's power excess, which is nonincreasing in ``beta``; the returned
    point is on the feasible side of the final bracket.
    """
    f = np.atleast_2d(np.asarray(f, dtype=float))
    qbar = np.atleast_1d(np.asarray(qbar, dtype=float))
    cost = np.atleast_1d(np.asarray(cost, dtype=float)) + time_price
    a, P_avg = cfg.a, cfg.P_avg
    if np.any(cost <= 0):
        raise ValueError("every MT needs a positive time cost; zero cost leaves its on-time undetermined")
    if tx_weight < 0:
        raise ValueError("tx_weight must be >= 0")

    beta = 0.0
    if tx_weight > 0:
        state = _tdma_state(a, f, qbar, cost, tx_weight, P_avg, 0.0)
        if _excess_power(state[3], state[1], P_avg) > 0:
            beta = None
    else:
        beta = None

    if beta is None:
        beta_max = float(np.min(cost)) / P_avg

        def excess(b):
            w, p, L, t = _tdma_state(a, f, qbar, cost, tx_weight, P_avg, b)
            return _excess_power(t, p, P_avg)

        lo = 0.5 * beta_max
        for _ in range(1100):
            if excess(lo) > 0:
                break
            lo *= 0.5
        else:
            raise NumericError("could not bracket the power price from below")
        beta = bisect_log(excess, lo, beta_max, rtol=cfg.tol.bisect, side="hi")
        state = _tdma_state(a, f, qbar, cost, tx_weight, P_avg, beta)

    w, p, L, t = state
    gamma = tx_weight + beta
    s = t[:, None] * L / a
    cert = DualCertificate(lam=a * gamma * w, beta=beta, gap=0.0)
    return TdmaSolution(t_on=t, p=p, s=s, water_level=w, cert=cert, tx_weight=float(tx_weight))


def tdma_allocation(t_on, p, members=None):
    """Sequential single-MT slots (MT index order) as an :class:`Allocation`."""
    t_on = np.asarray(t_on, dtype=float)
    T = float(t_on.sum())
    N = p.shape[1]
    rho = np.repeat((t_on / T)[:, None], N, axis=1)
    members = range(len(t_on)) if members is None else members
    grouping = tuple(Slot((int(m),), float(t)) for m, t in zip(members, t_on))
    return Allocation(T=T, rho=rho, p=p, t_on=t_on, grouping=grouping)


def _gate(cfg, chan, demand, alloc):
    bad = validate_allocation(cfg, chan, demand, alloc)
    if bad:
        raise AllocationError(bad)
    return alloc


def solve_wsremin_tdma(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector):
    """Minimize the weighted MT receiver energy with dynamic TDMA.

    Returns ``(TdmaSolution, Allocation)``.  BS energy is ignored here
    (``cfg.alpha0`` is not used).
    """
    alphas = cfg.alpha_vec
    if np.any(alphas <= 0):
        raise ValueError("every MT weight must be positive for receiver-energy minimization")
    sol = solve_tdma_weighted(cfg, chan.f, demand.qbar, alphas * cfg.P_rc)
    alloc = tdma_allocation(sol.t_on, sol.p)
    return sol, _gate(cfg, chan, demand, alloc)


def min_total_time(cfg: SystemConfig, f, qbar):
    """Shortest D-TDMA frame meeting the demands under the power budget."""
    sol = solve_tdma_weighted(cfg, f, qbar, np.ones(np.atleast_2d(f).shape[0]))
    return sol.total_time, sol


def _capped(cfg, f, qbar, cost, tx_weight, T_max):
    """Bisect the price of frame time so that ``sum t_k`` lands on ``T_max``."""
    sol = solve_tdma_weighted(cfg, f, qbar, cost, tx_weight)
    if sol.total_time <= T_max:
        return sol
    T_min, _ = min_total_time(cfg, f, qbar)
    if T_min >= T_max:
        raise InfeasibleError(
            f"demands need at least {T_min:.6g} s of D-TDMA airtime, above T_max={T_max:.6g} s",
            min_time=T_min,
            T_max=T_max,
        )

    def over(nu):
        return solve_tdma_weighted(cfg, f, qbar, cost, tx_weight, time_price=nu).total_time - T_max

    nu = bisect_positive(over, float(np.max(cost)), rtol=cfg.tol.bisect, side="hi")
    return solve_tdma_weighted(cfg, f, qbar, cost, tx_weight, time_price=nu)


def solve_wsremin_tdma_tmax(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector):
    """Receiver-energy D-TDMA schedule whose frame fits in ``cfg.T_max``.

    If the unconstrained optimum already fits it is returned unchanged.
    Otherwise a price on frame time is bisected until the frame length hits
    ``T_max``.  Raises :class:`InfeasibleError` (carrying ``min_time``) when
    even the minimum-time schedule is longer than ``T_max``.  Under a binding
    cap the TDMA restriction is a heuristic, not a proven optimum.
    """
    if cfg.T_max is None:
        raise ValueError("cfg.T_max is not set")
    alphas = cfg.alpha_vec
    if np.any(alphas <= 0):
        raise ValueError("every MT weight must be positive for receiver-energy minimization")
    sol = _capped(cfg, chan.f, demand.qbar, alphas * cfg.P_rc, 0.0, cfg.T_max)
    alloc = tdma_allocation(sol.t_on, sol.p)
    return sol, _gate(cfg, chan, demand, alloc)


def tdma_rebase(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector, alloc: Allocation):
    """Turn any feasible allocation into a D-TDMA one with no longer on-times.

    MT ``k`` keeps its busiest subcarrier's airtime ``max_n rho[k,n] T`` as its
    slot and uses every subcarrier for that whole slot; rates are scaled down
    so each (MT, subcarrier) pair carries the same bits as before, and powers
    are recomputed from the new rates.

    Stacking the slots back to back can give a frame shorter than the
    input's.  Energy never grows, but average power could, so the frame is
    then stretched with idle time just enough to meet ``P_avg``; it never
    exceeds the input frame.
    """
    bad = validate_allocation(cfg, chan, demand, alloc)
    if bad:
        raise AllocationError(bad)
    rho_a, T_a = alloc.rho, alloc.T
    t_b = rho_a.max(axis=1) * T_a
    bits = subcarrier_rate(cfg, chan.h, alloc.p) * rho_a * T_a
    with np.errstate(divide="ignore", invalid="ignore"):
        r_b = np.where(rho_a > 0, bits / t_b[:, None], 0.0)
    p_b = invert_rate(cfg, chan.f, r_b)
    energy = float(np.sum(t_b[:, None] * p_b))
    T_b = max(float(t_b.sum()), energy / cfg.P_avg)
    rho_b = np.repeat((t_b / T_b)[:, None], alloc.N, axis=1)
    grouping = tuple(Slot((k,), float(t_b[k])) for k in range(alloc.K))
    return Allocation(T=T_b, rho=rho_b, p=p_b, t_on=t_b, grouping=grouping)


def tdma_invariant_errors(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector, sol: TdmaSolution):
    """Relative errors of the optimality structure of a D-TDMA solution.

    Keys: ``water_level`` (spread of ``p + 1/f`` on active subcarriers),
    ``demand`` (``sum_n s`` vs the demand), ``power`` (frame power vs the
    budget, only meaningful when the power price is positive), and
    ``beta_margin`` (``beta`` relative to its upper limit; must be < 1).
    """
    f = chan.f
    active = sol.p > 0
    lvl = np.where(active, sol.p + 1.0 / f, np.nan)
    spread = np.nanmax(np.abs(lvl - sol.water_level[:, None]) / sol.water_level[:, None])
    dem = np.max(np.abs(sol.s.sum(axis=1) - demand.qbar) / demand.qbar)
    lhs = float(np.sum(sol.t_on[:, None] * sol.p))
    rhs = cfg.P_avg * sol.total_time
    beta = float(sol.cert.beta)
    beta_cap = float(np.min(cfg.alpha_vec)) * cfg.P_rc / cfg.P_avg
    return {
        "water_level": float(spread),
        "demand": float(dem),
        "power": abs(lhs - rhs) / rhs,
        "beta_margin": beta / beta_cap,
    }
