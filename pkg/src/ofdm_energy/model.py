"""Domain types and closed-form rate/energy formulas for the OFDM downlink.

Units are fixed throughout the package: bits, seconds, watts, joules and
hertz.  The noise density enters in dBm/Hz only through
:meth:`SystemConfig.from_dbm` and is stored in W/Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import AllocationError

__all__ = [
    "Tolerances",
    "SystemConfig",
    "ChannelMatrix",
    "DemandVector",
    "Slot",
    "Allocation",
    "EnergyReport",
    "DualCertificate",
    "Violation",
    "dbm_to_watt",
    "subcarrier_rate",
    "invert_rate",
    "energy_report",
    "validate_allocation",
]


def dbm_to_watt(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Tolerances:
    """Numerical knobs shared by the solvers.

    bisect
        Bisection width on the power price, relative to its upper bracket.
    time
        Relative bracket width for searches over frame/slot durations.
    slack
        Relative slack allowed when validating constraints.
    ellipsoid_volume
        Stop the ellipsoid once its geometric-mean semi-axis has shrunk by
        this factor.
    ellipsoid_gap
        Stop the ellipsoid once its certified optimality gap falls below
        this fraction of the dual value.
    tie
        Initial relative threshold for declaring a (user, subcarrier) pair
        tied in the dual solution.
    """

    bisect: float = 1e-10
    time: float = 1e-9
    slack: float = 1e-9
    ellipsoid_volume: float = 1e-12
    ellipsoid_gap: float = 1e-13
    tie: float = 1e-7


@dataclass(frozen=True)
class SystemConfig:
    """Physical constants and energy weights of one base station cell.

    Parameters
    ----------
    W : float
        Subcarrier bandwidth (Hz).
    N0 : float
        One-sided noise power spectral density (W/Hz).
    P_avg : float
        Average transmit power limit at the BS (W).
    P_tc : float
        BS power drawn regardless of transmission (W).
    P_rc : float
        MT receiver power while switched on (W).
    alphas : sequence of float
        Per-MT energy weights; its length fixes the number of MTs.
    alpha0 : float
        Weight on BS energy.
    gamma : float
        SNR gap (>= 1).
    T_max : float, optional
        Upper limit on the frame length (s).
    """

    W: float
    N0: float
    P_avg: float
    P_tc: float
    P_rc: float
    alphas: tuple
    alpha0: float = 0.0
    gamma: float = 1.0
    T_max: Optional[float] = None
    tol: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(x) for x in self.alphas))
        problems = []
        if not self.W > 0:
            problems.append("W must be > 0")
        if not self.N0 > 0:
            problems.append("N0 must be > 0")
        if not self.gamma >= 1:
            problems.append("gamma must be >= 1")
        if not self.P_avg > 0:
            problems.append("P_avg must be > 0")
        if not self.P_tc >= 0:
            problems.append("P_tc must be >= 0")
        if not self.P_rc > 0:
            problems.append("P_rc must be > 0")
        if not self.alpha0 >= 0 or any(not a >= 0 for a in self.alphas):
            problems.append("energy weights must be >= 0")
        if len(self.alphas) == 0:
            problems.append("need at least one MT weight")
        elif self.alpha0 == 0 and all(a == 0 for a in self.alphas):
            problems.append("at least one energy weight must be positive")
        if self.T_max is not None and not self.T_max > 0:
            problems.append("T_max must be > 0 when given")
        if problems:
            raise ValueError("invalid SystemConfig: " + "; ".join(problems))

    @classmethod
    def from_dbm(cls, *, N0_dbm_per_hz, **kwargs):
        """Build a config with the noise density given in dBm/Hz."""
        return cls(N0=float(dbm_to_watt(N0_dbm_per_hz)), **kwargs)

    @property
    def K(self):
        return len(self.alphas)

    @property
    def a(self):
        """ln(2)/W, the nats-per-bit factor that keeps appearing in the rate inverse."""
        return math.log(2.0) / self.W

    @property
    def noise_per_subcarrier(self):
        """Gamma * N0 * W (W)."""
        return self.gamma * self.N0 * self.W

    @property
    def alpha_vec(self):
        return np.asarray(self.alphas, dtype=float)

    def replace(self, **changes):
        return replace(self, **changes)

    def subset(self, idx):
        """Config restricted to the MTs in ``idx`` (weights re-indexed)."""
        return replace(self, alphas=tuple(self.alphas[i] for i in idx))


@dataclass(frozen=True)
class ChannelMatrix:
    """Channel power gains ``h`` (K x N) and normalized gains ``f = h/(Gamma N0 W)``."""

    h: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        h = _frozen(self.h)
        f = _frozen(self.f)
        if h.ndim != 2 or h.shape != f.shape:
            raise ValueError(f"h and f must be matching 2-D arrays, got {h.shape} and {f.shape}")
        if not np.all(np.isfinite(h)) or np.any(h <= 0):
            raise ValueError("channel gains must be finite and strictly positive")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "f", f)

    @classmethod
    def from_gains(cls, h, cfg: SystemConfig):
        h = np.asarray(h, dtype=float)
        if h.ndim == 1:
            h = h[None, :]
        return cls(h=h, f=h / cfg.noise_per_subcarrier)

    @property
    def K(self):
        return self.h.shape[0]

    @property
    def N(self):
        return self.h.shape[1]

    def subset(self, idx):
        idx = list(idx)
        return ChannelMatrix(h=self.h[idx], f=self.f[idx])


@dataclass(frozen=True)
class DemandVector:
    """Bits each MT must receive within the frame."""

    qbar: np.ndarray

    def __post_init__(self):
        q = _frozen(np.atleast_1d(self.qbar))
        if q.ndim != 1 or q.size == 0:
            raise ValueError("qbar must be a non-empty 1-D vector")
        if not np.all(np.isfinite(q)) or np.any(q <= 0):
            raise ValueError("every demand must be finite and > 0")
        object.__setattr__(self, "qbar", q)

    @property
    def K(self):
        return self.qbar.size

    @property
    def total(self):
        return float(self.qbar.sum())

    def subset(self, idx):
        return DemandVector(self.qbar[list(idx)])


@dataclass(frozen=True)
class Slot:
    """One orthogonal time slot: the MTs it serves and its duration (s)."""

    members: tuple
    duration: float


@dataclass(frozen=True)
class Allocation:
    """A complete downlink schedule.

    ``rho[k, n]`` is the fraction of the frame during which subcarrier ``n``
    carries MT ``k``; ``p[k, n]`` is the power used while it does.  Shape
    checks happen here; feasibility is checked by :func:`validate_allocation`.
    """

    T: float
    rho: np.ndarray
    p: np.ndarray
    t_on: np.ndarray
    grouping: Optional[tuple] = None

    def __post_init__(self):
        rho = _frozen(self.rho)
        p = _frozen(self.p)
        t_on = _frozen(np.atleast_1d(self.t_on))
        if rho.ndim != 2 or rho.shape != p.shape:
            raise ValueError(f"rho and p must be matching K x N arrays, got {rho.shape}, {p.shape}")
        if t_on.shape != (rho.shape[0],):
            raise ValueError(f"t_on must have length K={rho.shape[0]}, got {t_on.shape}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t_on", t_on)
        if self.grouping is not None:
            object.__setattr__(
                self,
                "grouping",
                tuple(Slot(tuple(int(m) for m in s.members), float(s.duration)) for s in self.grouping),
            )

    @property
    def K(self):
        return self.rho.shape[0]

    @property
    def N(self):
        return self.rho.shape[1]

    @property
    def average_power(self):
        return float(np.sum(self.rho * self.p))


@dataclass(frozen=True)
class EnergyReport:
    E_t: float
    E_r: np.ndarray
    E_r_weighted: float
    wstre: float
    ee_bs: float
    ee_mt: float
    se: float

    def as_dict(self):
        return {
            "E_t": self.E_t,
            "E_r": [float(x) for x in self.E_r],
            "E_r_weighted": self.E_r_weighted,
            "wstre": self.wstre,
            "ee_bs": self.ee_bs,
            "ee_mt": self.ee_mt,
            "se": self.se,
        }


@dataclass(frozen=True)
class DualCertificate:
    """Optimal multipliers of a solver run.

    ``lam`` prices each MT's demand; ``beta`` is the scalar power price of the
    TDMA problem or the per-subcarrier occupancy prices of the OFDMA problem.
    ``gap`` is the duality gap the solver observed (objective units).
    """

    lam: np.ndarray
    beta: object
    gap: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lam", _frozen(np.atleast_1d(self.lam)))
        if np.ndim(self.beta) == 0:
            object.__setattr__(self, "beta", float(self.beta))
        else:
            object.__setattr__(self, "beta", _frozen(self.beta))
        if np.any(self.lam < 0) or np.any(np.asarray(self.beta) < 0):
            raise ValueError("dual variables must be nonnegative")

    def as_dict(self):
        beta = self.beta if isinstance(self.beta, float) else [float(x) for x in self.beta]
        return {"lambda": [float(x) for x in self.lam], "beta": beta, "gap": float(self.gap)}


@dataclass(frozen=True)
class Violation:
    """A broken constraint: which one, where, and by how much (negative slack)."""

    constraint: str
    indices: tuple
    slack: float

    def __str__(self):
        return f"{self.constraint}{list(self.indices)} slack={self.slack:.3e}"


def subcarrier_rate(cfg: SystemConfig, h, p):
    """Achievable rate (bits/s) on one subcarrier with gain ``h`` and power ``p``.

    Vectorized over ``h`` and ``p``.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("transmit power must be nonnegative")
    snr = np.asarray(h, dtype=float) * p / cfg.noise_per_subcarrier
    r = cfg.W * np.log1p(snr) / math.log(2.0)
    return float(r) if np.ndim(r) == 0 else r


def invert_rate(cfg: SystemConfig, f, r):
    """Power needed for rate ``r`` on a subcarrier with normalized gain ``f``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("rate must be nonnegative")
    p = np.expm1(cfg.a * r) / np.asarray(f, dtype=float)
    return float(p) if np.ndim(p) == 0 else p


def _structural_violations(cfg, alloc):
    eps = cfg.tol.slack
    out = []
    if not alloc.T > 0:
        out.append(Violation("frame_length", (), alloc.T))
    for k, n in zip(*np.nonzero(alloc.rho < -eps)):
        out.append(Violation("share_bounds", (int(k), int(n)), float(alloc.rho[k, n])))
    for k, n in zip(*np.nonzero(alloc.rho > 1 + eps)):
        out.append(Violation("share_bounds", (int(k), int(n)), float(1 - alloc.rho[k, n])))
    p_floor = -eps * cfg.P_avg
    for k, n in zip(*np.nonzero(alloc.p < p_floor)):
        out.append(Violation("power_bounds", (int(k), int(n)), float(alloc.p[k, n])))
    col = alloc.rho.sum(axis=0)
    for n in np.nonzero(col > 1 + eps)[0]:
        out.append(Violation("subcarrier_share", (int(n),), float(1 - col[n])))

    busy = alloc.T * alloc.rho.max(axis=1)
    t = alloc.t_on
    for k in range(alloc.K):
        if busy[k] > t[k] * (1 + eps) + eps * alloc.T:
            out.append(Violation("on_time_lower", (k,), float(t[k] - busy[k])))
        if t[k] > alloc.T * (1 + eps):
            out.append(Violation("on_time_upper", (k,), float(alloc.T - t[k])))

    if alloc.grouping is not None:
        seen = [m for s in alloc.grouping for m in s.members]
        if sorted(seen) != list(range(alloc.K)) or any(len(s.members) == 0 for s in alloc.grouping):
            out.append(Violation("grouping_partition", tuple(seen), -1.0))
        total = sum(s.duration for s in alloc.grouping)
        # slots run back to back; any remainder of the frame is idle
        if total - alloc.T > eps * max(alloc.T, 1e-300) * 10:
            out.append(Violation("grouping_duration", (), alloc.T - total))
        for s in alloc.grouping:
            for m in s.members:
                if 0 <= m < alloc.K and abs(t[m] - s.duration) > 10 * eps * max(s.duration, 1e-300):
                    out.append(Violation("grouping_on_time", (m,), s.duration - t[m]))
    return out


def validate_allocation(cfg: SystemConfig, chan: ChannelMatrix, demand: DemandVector, alloc: Allocation):
    """List every constraint the allocation breaks; empty means feasible.

    Checks subcarrier sharing, delivered bits, average power, variable
    bounds, on-time bounds and (if present) the slot grouping, each with
    the relative slack ``cfg.tol.slack``.
    """
    if alloc.rho.shape != chan.h.shape or demand.K != alloc.K:
        raise ValueError(
            f"shape mismatch: allocation {alloc.rho.shape}, channel {chan.h.shape}, demand {demand.K}"
        )
    eps = cfg.tol.slack
    out = _structural_violations(cfg, alloc)

    rate = cfg.W * np.log2(1.0 + chan.f * np.maximum(alloc.p, 0.0))
    delivered = alloc.T * np.sum(alloc.rho * rate, axis=1)
    for k in range(alloc.K):
        if delivered[k] < demand.qbar[k] * (1 - eps):
            out.append(Violation("demand", (k,), float(delivered[k] - demand.qbar[k])))

    pbar = alloc.average_power
    if pbar > cfg.P_avg * (1 + eps):
        out.append(Violation("average_power", (), float(cfg.P_avg - pbar)))
    return out


def energy_report(cfg: SystemConfig, demand: DemandVector, alloc: Allocation) -> EnergyReport:
    """BS/MT energies, their weighted objective, and efficiency figures."""
    bad = _structural_violations(cfg, alloc)
    if bad:
        raise AllocationError(bad)
    if demand.K != alloc.K or cfg.K != alloc.K:
        raise ValueError("config, demand and allocation disagree on the number of MTs")
    E_t = alloc.T * alloc.average_power + alloc.T * cfg.P_tc
    E_r = cfg.P_rc * np.asarray(alloc.t_on, dtype=float)
    E_rw = float(np.dot(cfg.alpha_vec, E_r))
    total_bits = demand.total
    E_r_sum = float(E_r.sum())
    return EnergyReport(
        E_t=float(E_t),
        E_r=E_r,
        E_r_weighted=E_rw,
        wstre=float(cfg.alpha0 * E_t + E_rw),
        ee_bs=total_bits / E_t if E_t > 0 else math.inf,
        ee_mt=total_bits / E_r_sum if E_r_sum > 0 else math.inf,
        se=total_bits / (alloc.T * alloc.N * cfg.W),
    )
