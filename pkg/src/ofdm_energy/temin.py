"""BS transmit-energy minimization under OFDMA.

For a fixed frame length the problem is a power minimization with per-MT
rate targets and subcarrier time sharing.  Its Lagrange dual is maximized by
the ellipsoid method and a primal point is recovered from the optimal duals
by a small feasibility LP over the (MT, subcarrier) pairs that tie.  The
frame length is then a bracketed root of the derivative of the BS energy,
which is available in closed form from the demand prices.

Internally the demand prices are carried as water levels ``mu = lam / a``
(watts) and rate targets as ``c~ = a * Qbar / T`` (nats per subcarrier
use).  For fixed ``mu`` the best subcarrier prices are
``beta_n = -min_k q(mu_k, f_kn)``, so the ellipsoid only has to search the
K-dimensional space of ``mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import AllocationError, InfeasibleError, LPRecoveryError, UnboundedError
from .model import (
    Allocation,
    ChannelMatrix,
    DemandVector,
    DualCertificate,
    SystemConfig,
    energy_report,
    validate_allocation,
)
from .numerics import ellipsoid_maximize, lp_feasible, root_positive

__all__ = [
    "P2Solution",
    "o_fn",
    "p2_pointwise",
    "solve_p2",
    "v_of_T",
    "bs_energy_gradient",
    "FrameSearch",
    "ofdma_allocation",
    "solve_temin",
    "solve_temin_tmax",
]

_TIE_LADDER = (1.0, 10.0, 1e2, 1e3, 1e4, 1e5)
_GAP_ACCEPT = 1e-7
_MAX_RESTARTS = 3
# residual accepted before the exact polish of the water levels
_PRIMAL_RTOL = 1e-6


@dataclass(frozen=True)
class P2Solution:
    """Solution of the fixed-length power minimization.

    ``m`` holds the per-pair rate shares (bits/s) and ``p`` the powers used
    while a pair is active (W).  ``v`` is the minimum average power and
    ``dual_value`` the best dual bound found, so ``gap = v - dual_value``.
    ``A1`` are the pairs decided by the dual alone, ``A2`` the tied pairs
    handed to the LP.  ``mu`` are the water levels ``lam / a`` (W).
    """

    T: float
    m: np.ndarray
    rho: np.ndarray
    p: np.ndarray
    v: float
    dual_value: float
    cert: DualCertificate
    A1: tuple
    A2: tuple
    mu: np.ndarray
    iterations: int = 0
    used_lp: bool = False

    @property
    def rel_gap(self):
        return self.cert.gap / self.v if self.v > 0 else 0.0


def o_fn(cfg: SystemConfig, f_kn, lambda_k, beta_n):
    """Pair cost ``(lam/a - 1/f)^+ - (lam/a) (ln(lam f / a))^+ + beta``."""
    mu = np.asarray(lambda_k, dtype=float) / cfg.a
    f_kn = np.asarray(f_kn, dtype=float)
    z = mu * f_kn
    val = np.where(z > 1.0, mu - 1.0 / f_kn - mu * np.log(np.maximum(z, 1.0)), 0.0) + beta_n
    return float(val) if np.ndim(val) == 0 else val


def p2_pointwise(cfg: SystemConfig, f_kn, lambda_k, beta_n):
    """Per-pair minimizer ``(m, rho)`` of the Lagrangian; ties (``o == 0``) give ``rho = 0``."""
    o = o_fn(cfg, f_kn, lambda_k, beta_n)
    rho = np.where(np.asarray(o) < 0, 1.0, 0.0)
    z = np.asarray(lambda_k, dtype=float) * np.asarray(f_kn, dtype=float) / cfg.a
    m = rho * np.log(np.maximum(z, 1.0)) / cfg.a
    if np.ndim(m) == 0:
        return float(m), float(rho)
    return m, rho


def _q_and_log(mu, f):
    z = mu[:, None] * f
    L = np.log(np.maximum(z, 1.0))
    q = np.where(z > 1.0, mu[:, None] - 1.0 / f - mu[:, None] * L, 0.0)
    return q, L


def _reduced_dual(mu, f, ct):
    q, L = _q_and_log(mu, f)
    cols = np.arange(f.shape[1])
    win = np.argmin(q, axis=0)
    value = float(q[win, cols].sum() + mu @ ct)
    won = np.bincount(win, weights=L[win, cols], minlength=f.shape[0])
    return value, ct - won


def _equal_share_level(f_row, target, share):
    """Level ``mu`` with ``share * sum_n ln(mu f_n)^+ = target``."""

    def resid(mu):
        return share * float(np.sum(np.log(np.maximum(mu * f_row, 1.0)))) - target

    lo = 1.0 / float(np.max(f_row))
    hi = 2.0 * lo
    while resid(hi) < 0:
        lo, hi = hi, 2.0 * hi
    return brentq(resid, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)


def _polish(rho, f, ct):
    """Exact water levels for fixed sharing: ``sum_n rho_kn ln(mu_k f_kn)^+ = c~_k``."""
    K = f.shape[0]
    mu = np.empty(K)
    for k in range(K):
        use = rho[k] > 0
        if not np.any(use):
            raise LPRecoveryError(f"MT {k} received no subcarrier time")
        fr, wr = f[k, use], rho[k, use]

        def resid(x):
            return float(np.sum(wr * np.log(np.maximum(x * fr, 1.0)))) - ct[k]

        lo = 1.0 / float(np.max(fr))
        hi = 2.0 * lo
        while resid(hi) < 0:
            lo, hi = hi, 2.0 * hi
        mu[k] = brentq(resid, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
    return mu


def _recover(mu, f, ct, tie0):
    """Sharing factors for converged levels ``mu``.

    Returns ``(rho, tie_mask, used_lp)``.  Pairs within ``tau * beta_n`` of
    their subcarrier's best cost are free LP variables; every other pair is
    fixed at zero.  ``tau`` is escalated until the LP is feasible.
    """
    K, N = f.shape
    q, L = _q_and_log(mu, f)
    qmin = q.min(axis=0)
    beta = -qmin
    win = np.argmin(q, axis=0)

    rho = np.zeros((K, N))
    rho[win, np.arange(N)] = 1.0
    delivered = (rho * L).sum(axis=1)
    winners = rho > 0
    if np.all(np.abs(delivered - ct) <= _PRIMAL_RTOL * ct):
        return rho, winners, False

    last = None
    for mult in _TIE_LADDER:
        tau = tie0 * mult
        free = (q - qmin[None, :] <= tau * np.maximum(beta, 1e-300)[None, :]) | winners
        idx = np.argwhere(free)
        nv = len(idx)
        A = np.zeros((N + K, nv))
        b = np.concatenate([np.ones(N), np.ones(K)])
        for j, (k, n) in enumerate(idx):
            A[n, j] = 1.0
            A[N + k, j] = L[k, n] / ct[k]
        res = lp_feasible(A, b, 0.0, 1.0, tol=_PRIMAL_RTOL)
        last = (res, idx, free)
        if res.feasible:
            break
    res, idx, free = last
    rho = np.zeros((K, N))
    for j, (k, n) in enumerate(idx):
        rho[k, n] = res.x[j]
    col = rho.sum(axis=0)
    rho = np.where(col[None, :] > 0, rho / np.where(col > 0, col, 1.0)[None, :], rho)
    if not res.feasible and np.any((rho * L).sum(axis=1) <= 0):
        raise LPRecoveryError(
            "primal recovery failed: some MT has no usable tied subcarrier",
            lam=mu,
            beta=beta,
            tie_set=[tuple(map(int, t)) for t in idx],
        )
    return rho, free, True


def _p2_reduced(f, ct, cfg, radius_scale=10.0):
    K = f.shape[0]
    scale = np.array([_equal_share_level(f[k], ct[k], 1.0 / K) for k in range(K)])

    def oracle(x):
        val, g = _reduced_dual(scale * x, f, ct)
        return val, scale * g

    center = np.ones(K)
    radius = radius_scale * math.sqrt(K)
    best = None
    iters = 0
    for _ in range(_MAX_RESTARTS + 1):
        res = ellipsoid_maximize(
            oracle,
            center,
            radius,
            volume_tol=cfg.tol.ellipsoid_volume,
            gap_tol=cfg.tol.ellipsoid_gap,
        )
        iters += res.iterations
        if best is None or res.value > best.value:
            best = res
        yield scale * best.x, best.value, iters
        center = best.x
        radius *= 10.0


def _p2_full(f, ct, cfg, a):
    K, N = f.shape
    mu0 = np.array([_equal_share_level(f[k], ct[k], 1.0 / K) for k in range(K)])
    q0, _ = _q_and_log(mu0, f)
    beta0 = np.maximum(-q0.min(axis=0), 1e-12 * float(np.max(-q0)) + 1e-300)
    scale = np.concatenate([a * mu0, beta0])

    def oracle(x):
        z = scale * x
        mu, beta = z[:K] / a, z[K:]
        q, L = _q_and_log(mu, f)
        o = q + beta[None, :]
        act = o < 0
        val = float(np.sum(np.where(act, o, 0.0)) + mu @ ct - beta.sum())
        g_lam = (ct - np.sum(np.where(act, L, 0.0), axis=1)) / a
        g_beta = act.sum(axis=0) - 1.0
        return val, scale * np.concatenate([g_lam, g_beta])

    center = np.ones(K + N)
    radius = 10.0 * math.sqrt(K + N)
    best = None
    iters = 0
    for _ in range(_MAX_RESTARTS + 1):
        res = ellipsoid_maximize(
            oracle,
            center,
            radius,
            volume_tol=cfg.tol.ellipsoid_volume,
            gap_tol=cfg.tol.ellipsoid_gap,
        )
        iters += res.iterations
        if best is None or res.value > best.value:
            best = res
        yield scale[:K] * best.x[:K] / a, best.value, iters
        center = best.x
        radius *= 10.0


def solve_p2(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector, T, *, dual="reduced"):
    """Minimum average power that delivers ``Qbar_k / T`` bits/s to every MT.

    ``dual="reduced"`` runs the ellipsoid over the demand prices only (the
    subcarrier prices are eliminated in closed form); ``dual="full"`` runs
    it over both sets of prices and is meant for small instances.  The
    ellipsoid is restarted from a 10x larger ball if the recovered primal
    leaves a relative gap above ``1e-7``.

    Raises :class:`LPRecoveryError` if no sharing pattern consistent with
    the converged prices can be found.
    """
    if not T > 0:
        raise ValueError("frame length must be positive")
    if dual not in ("reduced", "full"):
        raise ValueError(f"unknown dual mode {dual!r}")
    f = chan.f
    K, N = f.shape
    a = cfg.a
    ct = a * demand.qbar / T

    runs = _p2_reduced(f, ct, cfg) if dual == "reduced" else _p2_full(f, ct, cfg, a)
    out = None
    failure = None
    for mu_d, g_best, iters in runs:
        try:
            rho, free, used_lp = _recover(mu_d, f, ct, cfg.tol.tie)
            mu = _polish(rho, f, ct)
        except LPRecoveryError as exc:
            failure = exc
            continue
        q, L = _q_and_log(mu, f)
        p = np.where(rho > 0, np.maximum(mu[:, None] - 1.0 / f, 0.0), 0.0)
        v = float(np.sum(rho * p))
        g_pol, _ = _reduced_dual(mu, f, ct)
        dual_value = max(g_best, g_pol)
        gap = max(v - dual_value, 0.0)
        out = (mu, rho, free, used_lp, L, p, v, dual_value, gap, q, iters)
        if gap <= _GAP_ACCEPT * v:
            break

    if out is None:
        raise failure
    mu, rho, free, used_lp, L, p, v, dual_value, gap, q, iters = out
    beta = -q.min(axis=0)
    m = rho * L / a
    A2 = tuple((int(k), int(n)) for k, n in np.argwhere(free))
    A1 = tuple((int(k), int(n)) for k, n in np.argwhere(~free))
    cert = DualCertificate(lam=a * mu, beta=np.maximum(beta, 0.0), gap=gap)
    sol = P2Solution(
        T=float(T),
        m=m,
        rho=rho,
        p=p,
        v=v,
        dual_value=dual_value,
        cert=cert,
        A1=A1,
        A2=A2,
        mu=mu,
        iterations=iters,
        used_lp=used_lp,
    )
    return sol


def v_of_T(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector, T, **kwargs):
    """Minimum OFDMA average power for frame length ``T`` and its certificate."""
    sol = solve_p2(cfg, chan, demand, T, **kwargs)
    return sol.v, sol.cert


def bs_energy_gradient(cfg: SystemConfig, demand: DemandVector, T, cert: DualCertificate, v=None, *, P_fixed=None):
    """Derivative of ``T v(T) + P_tc T`` with respect to ``T``.

    Equals ``v(T) - sum_k lam_k Qbar_k / T + P_tc``.  ``v`` defaults to the
    dual value ``sum_k lam_k c_k - sum_n beta_n`` stored in ``cert``, which
    coincides with the primal value at zero gap.  ``P_fixed`` overrides
    ``P_tc`` (used for slots whose constant power includes receivers).
    """
    lam_q = float(np.dot(cert.lam, demand.qbar)) / T
    if v is None:
        v = lam_q - float(np.sum(cert.beta))
    P = cfg.P_tc if P_fixed is None else P_fixed
    return v - lam_q + P


class FrameSearch:
    """Memoized ``T -> solve_p2`` with the searches over the frame length.

    ``P_fixed`` is the constant power charged per second of frame (``P_tc``
    for BS energy alone).
    """

    def __init__(self, cfg, chan, demand, P_fixed=None, **p2_kwargs):
        self.cfg, self.chan, self.demand = cfg, chan, demand
        self.P_fixed = cfg.P_tc if P_fixed is None else float(P_fixed)
        self._kw = p2_kwargs
        self._cache = {}

    def p2(self, T):
        T = float(T)
        sol = self._cache.get(T)
        if sol is None:
            sol = solve_p2(self.cfg, self.chan, self.demand, T, **self._kw)
            self._cache[T] = sol
        return sol

    def v(self, T):
        return self.p2(T).v

    def y(self, T):
        sol = self.p2(T)
        return bs_energy_gradient(self.cfg, self.demand, T, sol.cert, sol.v, P_fixed=self.P_fixed)

    def guess(self):
        f = self.chan.f
        med = float(np.median(f))
        rate = self.chan.N * self.cfg.W * math.log2(1.0 + self.cfg.P_avg * med / self.chan.N)
        return self.demand.total / rate

    def stationary(self, T0=None):
        """``T'`` with zero gradient; raises :class:`UnboundedError` if ``P_fixed == 0``."""
        if self.P_fixed <= 0:
            raise UnboundedError(
                "with no constant power the BS energy decreases for every frame length; "
                "the infimum is approached only as T grows without bound"
            )
        T0 = self.guess() if T0 is None else T0
        return root_positive(lambda T: -self.y(T), T0, rtol=self.cfg.tol.time)

    def min_time(self, T0=None):
        """Shortest frame whose OFDMA power fits the budget (feasible side)."""
        T0 = self.guess() if T0 is None else T0
        P = self.cfg.P_avg
        return root_positive(lambda T: self.v(T) - P, T0, rtol=self.cfg.tol.time, side="hi")

    def best(self, T_max=None, *, min_time_only=False):
        """Optimal frame length, honoring the power budget and an optional cap."""
        P = self.cfg.P_avg
        if T_max is not None and self.v(T_max) > P * (1 + self.cfg.tol.slack):
            shortest = self.min_time(T_max)
            raise InfeasibleError(
                f"OFDMA needs {self.v(T_max):.6g} W on average at T_max={T_max:.6g} s, above P_avg={P:.6g} W; "
                f"the shortest feasible frame is {shortest:.6g} s",
                v_at_T_max=self.v(T_max),
                T_max=T_max,
                min_time=shortest,
            )
        if min_time_only:
            return self.min_time(T_max)
        if T_max is not None and self.P_fixed <= 0:
            return float(T_max)
        if T_max is not None and self.y(T_max) <= 0:
            return float(T_max)
        T1 = self.stationary(T_max)
        if self.v(T1) > P:
            T1 = self.min_time(T1)
        if T_max is not None:
            T1 = min(T1, float(T_max))
        return T1


def ofdma_allocation(sol: P2Solution):
    """OFDMA schedule from a power-minimization solution; every MT listens for the whole frame."""
    K = sol.rho.shape[0]
    return Allocation(T=sol.T, rho=sol.rho, p=sol.p, t_on=np.full(K, sol.T))


def _finish(cfg, chan, demand, sol):
    alloc = ofdma_allocation(sol)
    bad = validate_allocation(cfg, chan, demand, alloc)
    if bad:
        raise AllocationError(bad)
    return alloc, energy_report(cfg, demand, alloc)


def solve_temin(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector, *, search=None):
    """Minimize the BS energy with OFDMA.

    The frame length is the root of the energy gradient, pushed up to the
    shortest power-feasible length when the root violates the budget.
    Returns ``(Allocation, EnergyReport)``.  With ``P_tc = 0`` the energy
    keeps falling as the frame grows and :class:`UnboundedError` is raised.
    """
    search = search or FrameSearch(cfg, chan, demand)
    T = search.best()
    return _finish(cfg, chan, demand, search.p2(T))


def solve_temin_tmax(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector, *, search=None):
    """:func:`solve_temin` with the frame capped at ``cfg.T_max``.

    Raises :class:`InfeasibleError` carrying ``v_at_T_max`` and ``min_time`` when OFDMA needs
    more than ``P_avg`` on average even at ``T_max``.
    """
    if cfg.T_max is None:
        raise ValueError("cfg.T_max is not set")
    search = search or FrameSearch(cfg, chan, demand)
    T = search.best(cfg.T_max)
    return _finish(cfg, chan, demand, search.p2(T))
