"""Reproducible cell scenarios: MT placement, demands and frequency-selective channels.

Scenario files are JSON with a ``schema_version`` and unit-suffixed keys::

    {
      "schema_version": 1,
      "K": 4, "N": 16,
      "distances_m": [400, 600, 800, 700],
      "qbar_bits": [8500, 11500, 14500, 17500],
      "taps": 6, "pathloss_exp": 4.0, "seed": 0,
      "config": {"W_hz": 20000, "N0_dbm_per_hz": -174, "P_avg_w": 30,
                 "P_tc_w": 20, "P_rc_w": 0.5, "alphas": [1, 1, 1, 1],
                 "alpha0": 0.0, "gamma": 1.0, "T_max_s": null}
    }
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ScenarioError
from .model import ChannelMatrix, DemandVector, SystemConfig

__all__ = [
    "SCHEMA_VERSION",
    "ConfigValues",
    "ScenarioSpec",
    "default_paper_scenario",
    "channel_taps",
    "generate_channels",
    "load_scenario",
    "save_scenario",
    "scenario_to_dict",
    "bundled_scenario_path",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ConfigValues:
    """System constants in file units (Hz, dBm/Hz, W, s)."""

    W_hz: float = 20e3
    N0_dbm_per_hz: float = -174.0
    P_avg_w: float = 30.0
    P_tc_w: float = 20.0
    P_rc_w: float = 0.5
    alphas: tuple = (1.0, 1.0, 1.0, 1.0)
    alpha0: float = 0.0
    gamma: float = 1.0
    T_max_s: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))


@dataclass(frozen=True)
class ScenarioSpec:
    K: int
    N: int
    distances: tuple
    qbar_bits: tuple
    taps: int = 6
    pathloss_exp: float = 4.0
    seed: int = 0
    config: ConfigValues = field(default_factory=ConfigValues)

    def __post_init__(self):
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        object.__setattr__(self, "qbar_bits", tuple(float(q) for q in self.qbar_bits))
        problems = []
        if self.K < 1 or self.N < 1:
            problems.append("K and N must be >= 1")
        if len(self.distances) != self.K or len(self.qbar_bits) != self.K:
            problems.append(f"K={self.K} but {len(self.distances)} distances and {len(self.qbar_bits)} demands")
        if len(self.config.alphas) != self.K:
            problems.append(f"K={self.K} but {len(self.config.alphas)} MT weights")
        if self.taps < 1:
            problems.append("taps must be >= 1")
        if not self.pathloss_exp > 0:
            problems.append("pathloss_exp must be > 0")
        if any(not d > 0 for d in self.distances):
            problems.append("distances must be > 0")
        if problems:
            raise ValueError("invalid ScenarioSpec: " + "; ".join(problems))

    def system_config(self, **overrides) -> SystemConfig:
        c = self.config
        kwargs = dict(
            W=c.W_hz,
            P_avg=c.P_avg_w,
            P_tc=c.P_tc_w,
            P_rc=c.P_rc_w,
            alphas=c.alphas,
            alpha0=c.alpha0,
            gamma=c.gamma,
            T_max=c.T_max_s,
        )
        kwargs.update(overrides)
        return SystemConfig.from_dbm(N0_dbm_per_hz=c.N0_dbm_per_hz, **kwargs)

    def demand(self) -> DemandVector:
        return DemandVector(np.asarray(self.qbar_bits))

    def replace(self, **changes):
        return replace(self, **changes)


def default_paper_scenario() -> ScenarioSpec:
    """Four MTs at 400/600/800/700 m needing 8.5/11.5/14.5/17.5 kbit over 16 subcarriers."""
    return ScenarioSpec(
        K=4,
        N=16,
        distances=(400.0, 600.0, 800.0, 700.0),
        qbar_bits=(8.5e3, 11.5e3, 14.5e3, 17.5e3),
        taps=6,
        pathloss_exp=4.0,
        seed=0,
        config=ConfigValues(),
    )


def _mt_rng(seed, k):
    # one independent stream per MT so adding MTs leaves earlier draws intact
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(k),))))


def channel_taps(spec: ScenarioSpec, seed: int, k: int, redraw: int = 0):
    """Time-domain taps of MT ``k``: i.i.d. CN(0, d^-exp / taps) at delays 0..taps-1."""
    rng = _mt_rng(seed, k)
    var = spec.distances[k] ** (-spec.pathloss_exp) / spec.taps
    for _ in range(redraw + 1):
        taps = np.sqrt(var / 2.0) * (rng.standard_normal(spec.taps) + 1j * rng.standard_normal(spec.taps))
    return taps


def generate_channels(spec: ScenarioSpec, seed: Optional[int] = None, cfg: Optional[SystemConfig] = None) -> ChannelMatrix:
    """Frequency-domain power gains ``|FFT_N(taps)|^2`` for every MT.

    The FFT is unnormalized, so ``mean_n h[k, n]`` equals the tap energy of
    MT ``k``.  A realization with an exactly zero gain is redrawn from the
    same stream (and logged); this has probability zero for ``taps >= 1``.
    """
    seed = spec.seed if seed is None else seed
    cfg = cfg or spec.system_config()
    h = np.empty((spec.K, spec.N))
    for k in range(spec.K):
        redraw = 0
        while True:
            H = np.fft.fft(channel_taps(spec, seed, k, redraw), n=spec.N)
            row = np.abs(H) ** 2
            if np.all(row > 0):
                break
            redraw += 1
            log.warning("zero channel gain for MT %d (seed %d); redrawing taps", k, seed)
        h[k] = row
    return ChannelMatrix.from_gains(h, cfg)


_TOP_KEYS = {
    "schema_version": int,
    "K": int,
    "N": int,
    "distances_m": list,
    "qbar_bits": list,
    "taps": int,
    "pathloss_exp": float,
    "seed": int,
    "config": dict,
}
_CONFIG_KEYS = {
    "W_hz": float,
    "N0_dbm_per_hz": float,
    "P_avg_w": float,
    "P_tc_w": float,
    "P_rc_w": float,
    "alphas": list,
    "alpha0": float,
    "gamma": float,
    "T_max_s": (float, type(None)),
}
_OPTIONAL_CONFIG = {"alpha0", "gamma", "T_max_s"}


def _line_of(text, key):
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def _check(obj, schema, where, text, optional=()):
    for key, typ in schema.items():
        if key not in obj:
            if key in optional:
                continue
            raise ScenarioError(f"{where}: missing required field '{key}'")
        val = obj[key]
        types = typ if isinstance(typ, tuple) else (typ,)
        ok = isinstance(val, types) or (float in types and isinstance(val, int) and not isinstance(val, bool))
        if not ok or isinstance(val, bool):
            line = _line_of(text, key)
            at = f" (line {line})" if line else ""
            raise ScenarioError(f"{where}: field '{key}'{at} should be {'/'.join(t.__name__ for t in types)}, got {val!r}")
    extra = set(obj) - set(schema)
    if extra:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(extra)}")


def _parse(text, source):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ScenarioError(f"{source}: top level must be an object")
    _check(raw, _TOP_KEYS, source, text)
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ScenarioError(f"{source}: unsupported schema_version {raw['schema_version']} (expected {SCHEMA_VERSION})")
    _check(raw["config"], _CONFIG_KEYS, f"{source}: config", text, optional=_OPTIONAL_CONFIG)
    c = raw["config"]
    try:
        config = ConfigValues(
            W_hz=c["W_hz"],
            N0_dbm_per_hz=c["N0_dbm_per_hz"],
            P_avg_w=c["P_avg_w"],
            P_tc_w=c["P_tc_w"],
            P_rc_w=c["P_rc_w"],
            alphas=c["alphas"],
            alpha0=c.get("alpha0", 0.0),
            gamma=c.get("gamma", 1.0),
            T_max_s=c.get("T_max_s"),
        )
        spec = ScenarioSpec(
            K=raw["K"],
            N=raw["N"],
            distances=raw["distances_m"],
            qbar_bits=raw["qbar_bits"],
            taps=raw["taps"],
            pathloss_exp=raw["pathloss_exp"],
            seed=raw["seed"],
            config=config,
        )
        spec.system_config()
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    return spec


def load_scenario(path) -> ScenarioSpec:
    path = Path(path)
    return _parse(path.read_text(), str(path))


def scenario_to_dict(spec: ScenarioSpec):
    c = asdict(spec.config)
    c["alphas"] = list(c["alphas"])
    return {
        "schema_version": SCHEMA_VERSION,
        "K": spec.K,
        "N": spec.N,
        "distances_m": list(spec.distances),
        "qbar_bits": list(spec.qbar_bits),
        "taps": spec.taps,
        "pathloss_exp": spec.pathloss_exp,
        "seed": spec.seed,
        "config": c,
    }


def save_scenario(spec: ScenarioSpec, path):
    Path(path).write_text(json.dumps(scenario_to_dict(spec), indent=2) + "\n")


def bundled_scenario_path() -> Path:
    """Path of the default scenario file shipped with the package."""
    return Path(str(resources.files("ofdm_energy") / "data" / "default_scenario.json"))
