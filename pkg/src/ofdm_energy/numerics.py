"""Monotone bisection, the central-cut ellipsoid method and a phase-1 simplex."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, EllipsoidDegeneracyError

__all__ = [
    "Bracket",
    "bisect_monotone",
    "expand_bracket",
    "bisect_log",
    "bisect_positive",
    "root_positive",
    "Ellipsoid",
    "EllipsoidResult",
    "ellipsoid_maximize",
    "LPResult",
    "lp_feasible",
]


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    tol: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise BracketError(f"bracket needs lo < hi, got [{self.lo}, {self.hi}]")
        if not self.tol > 0:
            raise BracketError("bracket tolerance must be positive")

    @property
    def width(self):
        return self.hi - self.lo


def bisect_monotone(f, bracket: Bracket, *, side="mid", full_output=False, max_iter=400):
    """Root of a nonincreasing scalar function by plain bisection.

    ``f(lo) >= 0 >= f(hi)`` is required.  Iteration stops when the bracket is
    narrower than ``bracket.tol`` or can no longer be split in floating point.
    ``side`` picks what is returned: the midpoint, or the ``"lo"``/``"hi"``
    end of the final bracket (useful when only one side is feasible).
    """
    lo, hi = float(bracket.lo), float(bracket.hi)
    f_lo, f_hi = f(lo), f(hi)
    if f_lo < 0 or f_hi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f(lo)={f_lo}, f(hi)={f_hi}")
    if f_lo == 0 and side != "hi":
        hi = lo
    elif f_hi == 0 and side != "lo":
        lo = hi
    for _ in range(max_iter):
        if hi - lo < bracket.tol:
            break
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        fm = f(mid)
        if fm > 0:
            lo = mid
        elif fm < 0:
            hi = mid
        elif side == "lo":
            hi = mid
        elif side == "hi":
            lo = mid
        else:
            lo = hi = mid
    x = {"lo": lo, "hi": hi}.get(side, 0.5 * (lo + hi))
    if full_output:
        return x, (lo, hi)
    return x


def expand_bracket(f, x0, *, grow=2.0, max_steps=60, direction=+1):
    """Walk ``x0`` geometrically until the nonincreasing ``f`` changes sign.

    ``direction=+1`` multiplies by ``grow`` until ``f(x) <= 0``;
    ``direction=-1`` divides until ``f(x) >= 0``.  Returns the last point
    visited before the sign change and the first point after it.
    """
    prev = x = float(x0)
    for _ in range(max_steps):
        v = f(x)
        if (direction > 0 and v <= 0) or (direction < 0 and v >= 0):
            return prev, x
        prev = x
        x = x * grow if direction > 0 else x / grow
    raise BracketError(f"no sign change after {max_steps} expansions from {x0}")


def bisect_log(f, lo, hi, *, rtol, side="mid"):
    """Bisection of a nonincreasing ``f`` on ``[lo, hi]`` (both > 0) in log space.

    ``rtol`` bounds the final bracket ratio ``hi/lo - 1``.
    """
    u = bisect_monotone(
        lambda z: f(math.exp(z)),
        Bracket(math.log(lo), math.log(hi), math.log1p(rtol)),
        side=side,
    )
    if side == "lo":
        return min(math.exp(u), hi)
    if side == "hi":
        return max(math.exp(u), lo)
    return math.exp(u)


def bisect_positive(f, x0, *, rtol, side="mid", max_steps=200):
    """Root of a nonincreasing ``f`` on (0, inf), starting the search at ``x0``.

    The bracket is grown geometrically (factor 2) from ``x0`` until ``f``
    changes sign, then refined by :func:`bisect_log`.
    """
    v0 = f(x0)
    if v0 == 0:
        return float(x0)
    if v0 > 0:
        lo, hi = expand_bracket(f, x0, max_steps=max_steps, direction=+1)
    else:
        hi, lo = expand_bracket(f, x0, max_steps=max_steps, direction=-1)
    if f(hi) == 0 and side != "lo":
        return hi
    if f(lo) == 0 and side != "hi":
        return lo
    return bisect_log(f, lo, hi, rtol=rtol, side=side)


def root_positive(f, x0, *, rtol, side="mid", max_steps=200):
    """Like :func:`bisect_positive` but refines with Brent's method in ``log x``.

    Brent keeps a bisection fallback, so it is never slower than plain
    bisection and usually needs a handful of evaluations.  ``side="hi"``
    (``"lo"``) guarantees ``f(x) <= 0`` (``>= 0``) at the returned point by
    stepping outward in ratios of ``1 + rtol`` if needed.
    """
    v0 = f(x0)
    if v0 == 0:
        return float(x0)
    if v0 > 0:
        lo, hi = expand_bracket(f, x0, max_steps=max_steps, direction=+1)
    else:
        hi, lo = expand_bracket(f, x0, max_steps=max_steps, direction=-1)
    f_lo, f_hi = f(lo), f(hi)
    if f_hi == 0:
        return hi
    if f_lo == 0:
        return lo
    u = brentq(lambda z: f(math.exp(z)), math.log(lo), math.log(hi), xtol=0.5 * math.log1p(rtol), rtol=1e-15)
    x = math.exp(u)
    step = rtol
    for _ in range(200):
        fx = f(x)
        if side == "hi" and fx > 0:
            x = min(x * (1 + step), hi)
        elif side == "lo" and fx < 0:
            x = max(x / (1 + step), lo)
        else:
            return x
        step *= 2
    raise BracketError("could not step onto the requested side of the root")


@dataclass
class Ellipsoid:
    """{z : (z - center)^T shape^{-1} (z - center) <= 1}; ``log_volume`` is relative to the start."""

    center: np.ndarray
    shape: np.ndarray
    log_volume: float = 0.0


@dataclass
class EllipsoidResult:
    x: np.ndarray
    value: float
    upper_bound: float
    iterations: int
    reason: str
    ellipsoid: Ellipsoid
    trace: List[float] = field(default_factory=list)


def ellipsoid_maximize(
    oracle: Callable,
    center,
    radius,
    *,
    nonneg=True,
    max_iter: Optional[int] = None,
    volume_tol=1e-12,
    gap_tol=1e-12,
    abs_gap_tol=0.0,
):
    """Maximize a concave function with the central-cut ellipsoid method.

    Parameters
    ----------
    oracle : callable
        ``oracle(x) -> (value, supergradient)``.  A supergradient ``s`` of the
        concave objective is the negative of a subgradient of its convex
        negation, so objective cuts keep ``{z : s.(z - x) >= 0}``.
    center, radius
        Initial ball (``radius`` may be per-coordinate), which must contain
        a maximizer.
    nonneg : bool
        Restrict to the nonnegative orthant via feasibility cuts.
    max_iter : int, optional
        Defaults to ``500 * n**2``.
    volume_tol : float
        Stop once the geometric-mean semi-axis has shrunk by this factor.
    gap_tol, abs_gap_tol : float
        Stop once the certified bound ``min_i g(x_i) + sqrt(s_i' P s_i)`` is
        within ``abs_gap_tol + gap_tol*|best|`` of the best value seen.

    Returns
    -------
    EllipsoidResult
        Best feasible iterate, its value, the certified upper bound and the
        running-best trace (one entry per iteration).
    """
    x = np.array(center, dtype=float)
    n = x.size
    r = np.broadcast_to(np.asarray(radius, dtype=float), (n,))
    P = np.diag(r**2)
    if max_iter is None:
        max_iter = 500 * n * n
    log_vol_step = math.log(0.25) if n == 1 else n * math.log(n * n / (n * n - 1.0)) + math.log((n - 1.0) / (n + 1.0))
    log_axis_stop = math.log(volume_tol)
    log_vol = 0.0

    best_x, best_val, upper = None, -math.inf, math.inf
    trace: List[float] = []
    reason = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        if nonneg and x.min() < 0:
            i = int(np.argmin(x))
            g = np.zeros(n)
            g[i] = 1.0
        else:
            val, s = oracle(x)
            s = np.asarray(s, dtype=float)
            if val > best_val:
                best_val, best_x = float(val), x.copy()
            sPs = float(s @ P @ s)
            if not math.isfinite(sPs) or sPs < 0:
                raise EllipsoidDegeneracyError(f"shape matrix lost definiteness at iteration {it}", trace)
            if sPs == 0.0:
                upper = min(upper, float(val))
                trace.append(best_val)
                reason = "zero_supergradient"
                break
            upper = min(upper, float(val) + math.sqrt(sPs))
            g = s
        trace.append(best_val)
        if best_x is not None and upper - best_val <= abs_gap_tol + gap_tol * abs(best_val):
            reason = "gap"
            break

        Pg = P @ g
        gPg = float(g @ Pg)
        if not math.isfinite(gPg) or gPg <= 0:
            raise EllipsoidDegeneracyError(f"shape matrix lost definiteness at iteration {it}", trace)
        gt = Pg / math.sqrt(gPg)
        if n == 1:
            x = x + 0.5 * gt
            P = 0.25 * P
        else:
            x = x + gt / (n + 1.0)
            P = (n * n / (n * n - 1.0)) * (P - (2.0 / (n + 1.0)) * (gt[:, None] * gt[None, :]))
            P = 0.5 * (P + P.T)
            if P.diagonal().min() <= 0:
                raise EllipsoidDegeneracyError(f"non-positive pivot in shape matrix at iteration {it}", trace)
        log_vol += log_vol_step
        if log_vol / (2 * n) < log_axis_stop:
            reason = "volume"
            break

    if best_x is None:
        raise EllipsoidDegeneracyError("ellipsoid never visited a feasible point", trace)
    return EllipsoidResult(
        x=best_x,
        value=best_val,
        upper_bound=upper,
        iterations=it,
        reason=reason,
        ellipsoid=Ellipsoid(center=x, shape=P, log_volume=log_vol),
        trace=trace,
    )


@dataclass
class LPResult:
    """Outcome of :func:`lp_feasible`.

    ``x`` always respects the bounds.  When ``feasible`` is False it is the
    bounded point with the smallest L1 equality residual, and
    ``phase1_objective`` is that residual (the infeasibility certificate).
    """

    x: np.ndarray
    feasible: bool
    phase1_objective: float
    residual: float
    pivots: int


def lp_feasible(A, b, lo, hi, *, tol=1e-9, pivot_tol=1e-12, max_pivots=10000):
    """Find ``x`` with ``A x = b`` and ``lo <= x <= hi`` by phase-1 simplex.

    Dense tableau with Bland's rule, so it terminates on degenerate systems.
    Upper bounds become explicit rows with their slack as starting basis;
    equality rows start on artificial variables whose sum is minimized.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    m, n = A.shape
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,)).copy()
    if b.shape != (m,):
        raise ValueError(f"A is {m}x{n} but b has shape {b.shape}")
    if np.any(lo > hi) or not np.all(np.isfinite(lo)):
        raise ValueError("bounds need finite lo <= hi")

    u = hi - lo
    bounded = np.nonzero(np.isfinite(u))[0]
    nu = bounded.size
    rhs_eq = b - A @ lo
    sign = np.where(rhs_eq < 0, -1.0, 1.0)

    # columns: y (n) | bound slacks (nu) | artificials (m) | rhs
    rows = m + nu
    cols = n + nu + m
    T = np.zeros((rows, cols + 1))
    T[:m, :n] = A * sign[:, None]
    T[:m, n + nu : n + nu + m] = np.eye(m)
    T[:m, -1] = rhs_eq * sign
    for j, i in enumerate(bounded):
        T[m + j, i] = 1.0
        T[m + j, n + j] = 1.0
        T[m + j, -1] = u[i]
    basis = list(range(n + nu, n + nu + m)) + [n + j for j in range(nu)]

    cost = np.zeros(cols)
    cost[n + nu :] = 1.0
    pivots = 0
    while True:
        cb = cost[basis]
        reduced = cost - cb @ T[:, :cols]
        entering = next((j for j in range(cols) if reduced[j] < -pivot_tol and j not in basis), None)
        if entering is None:
            break
        column = T[:, entering]
        ratios = [
            (T[r, -1] / column[r], basis[r], r) for r in range(rows) if column[r] > pivot_tol
        ]
        if not ratios:
            break  # cannot happen for a phase-1 problem (objective bounded below)
        best = min(t[0] for t in ratios)
        leave_row = min((t for t in ratios if t[0] <= best + 1e-15 * max(1.0, abs(best))), key=lambda t: t[1])[2]
        T[leave_row] /= T[leave_row, entering]
        for r in range(rows):
            if r != leave_row and T[r, entering] != 0.0:
                T[r] -= T[r, entering] * T[leave_row]
        basis[leave_row] = entering
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("simplex pivot limit exceeded")

    values = np.zeros(cols)
    for r, j in enumerate(basis):
        values[j] = T[r, -1]
    y = np.clip(values[:n], 0.0, np.where(np.isfinite(u), u, np.inf))
    x = np.clip(lo + y, lo, hi)
    phase1 = float(np.sum(np.maximum(values[n + nu :], 0.0)))
    resid = float(np.max(np.abs(A @ x - b))) if m else 0.0
    return LPResult(x=x, feasible=resid <= tol, phase1_objective=phase1, residual=resid, pivots=pivots)
