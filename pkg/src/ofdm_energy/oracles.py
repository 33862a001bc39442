"""Reference solvers built from first principles, used to cross-check the main solvers.

They share no code with the solvers they check: water-filling is done by
sorting, the TDMA problem is handed to SLSQP, scalar problems go to
golden-section search, and OFDMA assignments are enumerated.
All of them are slow and meant for small instances.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import lambertw

__all__ = [
    "waterfill_by_sorting",
    "p1_reference",
    "wsre_single_grid",
    "lambda_root_closed_form",
    "p2_assignment_bound",
    "temin_scalar",
    "singleton_scalar",
]


def waterfill_by_sorting(f_row, nats):
    """Least total power delivering ``nats`` (sum of ``ln(1 + f p)``) on parallel channels.

    Returns ``(total_power, p)``.  Channels are sorted by gain and the active
    set grown until the common level clears the next channel's floor.
    """
    f_row = np.asarray(f_row, dtype=float)
    order = np.argsort(-f_row)
    fs = f_row[order]
    p = np.zeros_like(f_row)
    if nats <= 0:
        return 0.0, p
    logs = np.log(fs)
    level = None
    for m in range(1, len(fs) + 1):
        lw = (nats - logs[:m].sum()) / m
        if lw > 700.0:
            continue
        w = math.exp(lw)
        if w * fs[m - 1] > 1.0 and (m == len(fs) or w * fs[m] <= 1.0):
            level = w
            break
    if level is None and (nats - logs.sum()) / len(fs) > 700.0:
        return math.inf, np.full_like(f_row, math.inf)
    if level is None:
        raise ArithmeticError("water-filling by sorting found no consistent active set")
    p[order] = np.maximum(level - 1.0 / fs, 0.0)
    return float(p.sum()), p


def p1_reference(a, W, P_avg, P_rc, alphas, f, qbar):
    """Weighted D-TDMA receiver energy by SLSQP over the slot lengths.

    For fixed slot lengths each MT's cheapest power is a water-filling, so
    the problem reduces to ``min sum alpha_k P_rc t_k`` subject to
    ``sum_k t_k (P_k(Qbar_k / t_k) - P_avg) <= 0``, solved over ``log t``.
    Returns ``(objective, t)``.
    """
    f = np.atleast_2d(f)
    qbar = np.asarray(qbar, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    K = f.shape[0]

    def excess(u):
        t = np.exp(u)
        return -sum(t[k] * (waterfill_by_sorting(f[k], a * qbar[k] / t[k])[0] - P_avg) for k in range(K))

    # start well inside the feasible set: each MT alone at full power, slowed down 4x
    t0 = np.empty(K)
    for k in range(K):
        lo, hi = 1e-12, 1.0
        while waterfill_by_sorting(f[k], a * qbar[k] / hi)[0] > P_avg:
            hi *= 2
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            if waterfill_by_sorting(f[k], a * qbar[k] / mid)[0] > P_avg:
                lo = mid
            else:
                hi = mid
        t0[k] = 4 * hi
    scale = float(np.dot(alphas, t0)) * P_rc

    res = minimize(
        lambda u: float(np.dot(alphas, np.exp(u))) * P_rc / scale,
        np.log(t0),
        jac=lambda u: alphas * np.exp(u) * P_rc / scale,
        constraints=[{"type": "ineq", "fun": lambda u: excess(u) / (scale / P_rc * P_avg)}],
        method="SLSQP",
        options={"ftol": 1e-14, "maxiter": 2000},
    )
    t = np.exp(res.x)
    # tiny constraint slack from SLSQP is removed by rescaling up to feasibility
    while excess(np.log(t)) < 0:
        t *= 1 + 1e-9
    return float(np.dot(alphas, t) * P_rc), t


def wsre_single_grid(a, P_avg, P_rc, f_row, qbar, *, points=2001, rounds=8):
    """Single-MT receiver energy on a zooming grid over the water level.

    Each water level fixes the power and rate, hence the slot length; the
    cheapest level whose power fits ``P_avg`` wins.  Returns ``(energy, t)``.
    """
    f_row = np.asarray(f_row, dtype=float)
    lo, hi = 1.0 / f_row.max(), 1.0 / f_row.max() + 2.0 * P_avg + 1.0 / f_row.min()
    best = (math.inf, None)
    for _ in range(rounds):
        w = np.linspace(lo, hi, points)[1:]
        power = np.maximum(w[:, None] - 1.0 / f_row[None, :], 0.0).sum(axis=1)
        nats = np.log(np.maximum(w[:, None] * f_row[None, :], 1.0)).sum(axis=1)
        t = a * qbar / nats
        energy = np.where(power <= P_avg, P_rc * t, np.inf)
        i = int(np.argmin(energy))
        if energy[i] < best[0]:
            best = (float(energy[i]), float(t[i]))
        step = (hi - lo) / points
        lo, hi = max(w[i] - 2 * step, 1.0 / f_row.max()), w[i] + 2 * step
    return best


def lambda_root_closed_form(a, beta, P_rc, P_avg, alpha, f):
    """Demand price of a single-subcarrier MT via the Lambert W function.

    With ``z = lam f / (a beta)`` the stationarity condition reads
    ``z ln z - z + 1 = c`` where ``c = f (alpha P_rc - beta P_avg) / beta``;
    its root is ``z = exp(1 + W0((c - 1) / e))``.
    """
    c = f * (alpha * P_rc - beta * P_avg) / beta
    z = math.exp(1.0 + float(lambertw((c - 1.0) / math.e, 0).real))
    return a * beta * z / f


def p2_assignment_bound(a, f, rates, *, max_pairs=4096):
    """Best whole-subcarrier assignment for the OFDMA power problem.

    ``rates`` are bits/s per MT.  Every map of subcarriers to MTs is tried,
    each MT water-filling over its own subcarriers.  Time sharing can only
    do better, so this is an upper bound on the optimum.  Returns
    ``(power, assignment)``.
    """
    f = np.atleast_2d(f)
    K, N = f.shape
    if K**N > max_pairs:
        raise ValueError("instance too large for exhaustive assignment")
    best = (math.inf, None)
    for assign in itertools.product(range(K), repeat=N):
        assign = np.asarray(assign)
        total = 0.0
        for k in range(K):
            mine = assign == k
            if not mine.any():
                total = math.inf
                break
            total += waterfill_by_sorting(f[k, mine], a * rates[k])[0]
        if total < best[0]:
            best = (total, tuple(int(x) for x in assign))
    return best


def temin_scalar(a, P_avg, P_tc, f, qbar):
    """Single-MT single-subcarrier BS energy ``T (exp(a Q / T) - 1)/f + P_tc T`` by golden-section.

    The frame can be no shorter than ``a Q / ln(1 + P_avg f)``.  Returns
    ``(energy, T)``.
    """
    T_min = a * qbar / math.log1p(P_avg * f)

    def energy(T):
        return T * math.expm1(a * qbar / T) / f + P_tc * T

    hi = T_min
    while energy(2 * hi) < energy(hi):
        hi *= 2
    res = minimize_scalar(energy, bounds=(T_min, 2 * hi), method="bounded", options={"xatol": 1e-14 * hi})
    T = float(res.x)
    if energy(T_min) <= res.fun:
        T = T_min
    return energy(T), T


def singleton_scalar(a, P_avg, cost, tx_weight, f_row, qbar):
    """Single-MT slot with time cost ``cost`` and transmit energy weighted by ``tx_weight``.

    Golden-section over the slot length; the power at each length is a
    sorting-based water-filling.  Returns ``(objective, t)``.
    """
    def power(t):
        return waterfill_by_sorting(f_row, a * qbar / t)[0]

    lo, hi = 1e-12, 1.0
    while power(hi) > P_avg:
        hi *= 2
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if power(mid) > P_avg:
            lo = mid
        else:
            hi = mid
    t_min = hi

    def obj(t):
        return cost * t + tx_weight * t * power(t)

    if tx_weight == 0:
        return obj(t_min), t_min
    top = t_min
    while obj(2 * top) < obj(top):
        top *= 2
    res = minimize_scalar(obj, bounds=(t_min, 2 * top), method="bounded", options={"xatol": 1e-13 * top})
    t = float(res.x)
    if obj(t_min) <= res.fun:
        t = t_min
    return obj(t), t
