"""Command-line front end: single solves, BS-weight sweeps and the acceptance suite.

Exit codes: 0 success, 1 usage or internal error, 2 infeasible.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from .acceptance import default_alpha0_grid, run_acceptance, suite_passed
from .errors import InfeasibleError, UnboundedError
from .model import energy_report, validate_allocation
from .scenario import bundled_scenario_path, generate_channels, load_scenario, scenario_to_dict
from .temin import FrameSearch, solve_temin, solve_temin_tmax
from .tsofdma import (
    MAX_EXHAUSTIVE_K,
    GroupingSolver,
    cog_grouping,
    exhaustive_grouping,
    make_grouping,
    solve_wstremin,
    solve_wstremin_tmax,
)
from .wsre import solve_wsremin_tdma, solve_wsremin_tdma_tmax

log = logging.getLogger("ofdm_energy")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

CSV_COLUMNS = (
    "seed",
    "J",
    "mode",
    "alpha0",
    "E_t_J",
    "E_r_weighted_J",
    "ee_bs_bits_per_J",
    "ee_mt_bits_per_J",
    "se_bits_per_s_per_Hz",
    "T_s",
    "runtime_ms",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which this tool reserves for infeasibility
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def fmt(x):
    """Floats with 12 significant digits; everything else via ``str``."""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def package_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def parse_float_list(text):
    """``"0,0.1,1"`` or a log range ``"logspace:1e-3:1e3:25"``."""
    text = text.strip()
    if text.startswith("logspace:"):
        try:
            _, lo, hi, n = text.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
        except ValueError:
            raise UsageError(f"bad range {text!r}; expected logspace:LO:HI:COUNT") from None
        if lo <= 0 or hi <= 0 or n < 1:
            raise UsageError("logspace bounds must be positive and COUNT >= 1")
        return [float(x) for x in np.logspace(math.log10(lo), math.log10(hi), n)]
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad number list {text!r}") from None
    if not vals:
        raise UsageError("empty list")
    return vals


def parse_int_list(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None
    if not vals:
        raise UsageError("empty list")
    return vals


def _scenario(args):
    path = args.scenario or bundled_scenario_path()
    return load_scenario(path)


def _config(spec, args, **extra):
    overrides = dict(extra)
    if getattr(args, "tmax", None) is not None:
        overrides["T_max"] = args.tmax
    cfg = spec.system_config(**overrides)
    if getattr(args, "tol", None) is not None:
        cfg = cfg.replace(tol=replace(cfg.tol, bisect=args.tol, time=args.tol))
    return cfg


def _allocation_dict(alloc):
    out = {
        "T_s": alloc.T,
        "rho": alloc.rho.tolist(),
        "p_w": alloc.p.tolist(),
        "t_on_s": alloc.t_on.tolist(),
    }
    if alloc.grouping is not None:
        out["slots"] = [{"members": list(s.members), "duration_s": s.duration} for s in alloc.grouping]
    return out


def run_solve(spec, args):
    seed = spec.seed if args.seed is None else args.seed
    cfg = _config(spec, args, **({"alpha0": args.alpha0} if args.alpha0 is not None else {}))
    chan = generate_channels(spec, seed, cfg)
    demand = spec.demand()
    capped = cfg.T_max is not None
    cert, extra = None, {}
    if args.solver == "wsre":
        sol, alloc = (solve_wsremin_tdma_tmax if capped else solve_wsremin_tdma)(cfg, chan, demand)
        cert = sol.cert
    elif args.solver == "temin":
        search = FrameSearch(cfg, chan, demand)
        alloc, _ = (solve_temin_tmax if capped else solve_temin)(cfg, chan, demand, search=search)
        cert = search.p2(alloc.T).cert
    else:
        J_values = parse_int_list(args.J) if args.J else None
        if J_values and any(not 1 <= J <= chan.K for J in J_values):
            raise UsageError(f"J values must lie in 1..{chan.K}")
        fn = solve_wstremin_tmax if capped else solve_wstremin
        alloc, _, J, g = fn(cfg, chan, demand, J_values=J_values)
        extra = {"J": J, "groups": [list(s) for s in g.phi]}
    rep = energy_report(cfg, demand, alloc)
    bad = validate_allocation(cfg, chan, demand, alloc)
    return {
        "solver": args.solver,
        "seed": seed,
        "alpha0": cfg.alpha0,
        "T_max_s": cfg.T_max,
        **extra,
        "allocation": _allocation_dict(alloc),
        "report": rep.as_dict(),
        "certificate": cert.as_dict() if cert is not None else None,
        "validation": {"violations": [str(v) for v in bad], "count": len(bad)},
        "version": package_version(),
    }


def cmd_solve(args):
    spec = _scenario(args)
    result = run_solve(spec, args)
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


@dataclass(frozen=True)
class SweepSpec:
    """Grid of a tradeoff sweep."""

    alpha0_grid: tuple
    J_values: tuple
    modes: tuple
    seeds: tuple
    aggregate: str = "per-seed"

    def __post_init__(self):
        if not self.alpha0_grid or not self.J_values or not self.modes or not self.seeds:
            raise UsageError("sweep grids must be nonempty")
        if any(a < 0 for a in self.alpha0_grid):
            raise UsageError("alpha0 values must be >= 0")
        if any(m not in ("cog", "exhaustive") for m in self.modes):
            raise UsageError("mode must be cog or exhaustive")
        if self.aggregate not in ("per-seed", "mean"):
            raise UsageError("aggregate must be per-seed or mean")


def _grouping_for(solver, J, mode):
    K = solver.chan.K
    if J == 1:
        return make_grouping(solver.pi, [tuple(range(K))])
    if J == K:
        return make_grouping(solver.pi, [(k,) for k in range(K)])
    if mode == "cog":
        return cog_grouping(solver.chan, J)
    g, _ = exhaustive_grouping(solver.cfg, solver.chan, solver.demand, J, solver=solver)
    return g


def sweep_cell(spec, cfg_overrides, seed, J, mode, alpha0):
    """One CSV row: fixed seed, slot count, grouping mode and BS weight."""
    t0 = time.perf_counter()
    cfg = spec.system_config(**cfg_overrides, alpha0=alpha0)
    chan = generate_channels(spec, seed, cfg)
    demand = spec.demand()
    solver = GroupingSolver(cfg, chan, demand)
    _, rep = solver.solve(_grouping_for(solver, J, mode))
    T = demand.total / (rep.se * chan.N * cfg.W)
    return {
        "seed": seed,
        "J": J,
        "mode": mode,
        "alpha0": float(alpha0),
        "E_t_J": rep.E_t,
        "E_r_weighted_J": rep.E_r_weighted,
        "ee_bs_bits_per_J": rep.ee_bs,
        "ee_mt_bits_per_J": rep.ee_mt,
        "se_bits_per_s_per_Hz": rep.se,
        "T_s": T,
        "runtime_ms": 1e3 * (time.perf_counter() - t0),
    }


def _cell(job):
    return sweep_cell(*job)


def run_sweep(spec, sweep: SweepSpec, *, workers=1, cfg_overrides=None):
    """All sweep rows, sorted by (seed, J, mode, alpha0) whatever the completion order."""
    cfg_overrides = cfg_overrides or {}
    if "exhaustive" in sweep.modes and spec.K > MAX_EXHAUSTIVE_K:
        raise UsageError(f"exhaustive mode needs K <= {MAX_EXHAUSTIVE_K}, scenario has K={spec.K}")
    if any(not 1 <= J <= spec.K for J in sweep.J_values):
        raise UsageError(f"J values must lie in 1..{spec.K}")
    jobs = [
        (spec, cfg_overrides, s, J, m, a)
        for s in sweep.seeds
        for J in sweep.J_values
        for m in sweep.modes
        for a in sweep.alpha0_grid
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_cell, jobs))
    else:
        rows = [_cell(j) for j in jobs]
    rows.sort(key=lambda r: (r["seed"], r["J"], r["mode"], r["alpha0"]))
    if sweep.aggregate == "mean":
        rows = _mean_rows(rows)
    return rows


def _mean_rows(rows):
    groups = {}
    for r in rows:
        groups.setdefault((r["J"], r["mode"], r["alpha0"]), []).append(r)
    out = []
    for (J, mode, a0), rs in sorted(groups.items()):
        row = {"seed": "mean", "J": J, "mode": mode, "alpha0": a0}
        for col in CSV_COLUMNS[4:]:
            row[col] = float(np.mean([r[col] for r in rs]))
        out.append(row)
    return out


def write_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([fmt(r[c]) for c in CSV_COLUMNS])


def cmd_tradeoff(args):
    spec = _scenario(args)
    cfg0 = _config(spec, args)
    grid = parse_float_list(args.alpha0) if args.alpha0 else default_alpha0_grid(cfg0)
    J_values = parse_int_list(args.J) if args.J else list(range(1, spec.K + 1))
    base = spec.seed if args.seed is None else args.seed
    sweep = SweepSpec(
        alpha0_grid=tuple(grid),
        J_values=tuple(sorted(set(J_values))),
        modes=tuple(sorted(set(m.strip() for m in args.mode.split(",")))),
        seeds=tuple(range(base, base + args.seeds)) if args.seeds >= 1 else (),
        aggregate=args.aggregate,
    )
    overrides = {}
    if args.tol is not None:
        overrides["tol"] = replace(cfg0.tol, bisect=args.tol, time=args.tol)
    rows = run_sweep(spec, sweep, workers=args.workers, cfg_overrides=overrides)
    out = Path(args.out)
    write_csv(rows, out)
    meta = {
        "scenario": scenario_to_dict(spec),
        "sweep": {
            "alpha0_grid": list(sweep.alpha0_grid),
            "J_values": list(sweep.J_values),
            "modes": list(sweep.modes),
            "seeds": list(sweep.seeds),
            "aggregate": sweep.aggregate,
        },
        "tolerances": {"bisect": args.tol, "time": args.tol} if args.tol is not None else "default",
        "units": {"energy": "J", "efficiency": "bits/J", "spectral_efficiency": "bits/s/Hz", "time": "s"},
        "version": package_version(),
        "numpy": np.__version__,
        "python": platform.python_version(),
        "rows": len(rows),
    }
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    log.info("wrote %d rows to %s", len(rows), out)
    return EXIT_OK


def cmd_accept(args):
    only = parse_int_list(args.only) if args.only else None

    def show(res):
        print(res.line(), flush=True)

    results = run_acceptance(args.scale, only, progress=show)
    report = {
        "scale": args.scale,
        "passed": suite_passed(results),
        "criteria": [
            {
                "number": r.number,
                "title": r.title,
                "passed": r.passed,
                "advisory": r.advisory,
                "runtime_s": r.runtime_s,
                "detail": {k: (v.item() if isinstance(v, np.generic) else v) for k, v in r.detail.items()},
            }
            for r in results
        ],
    }
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK if report["passed"] else EXIT_ERROR


def build_parser():
    p = _Parser(prog="ofdm-energy", description="Energy tradeoffs of BS and MT in downlink OFDM scheduling.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one scenario")
    s.add_argument("--scenario", help="scenario JSON (default: bundled default)")
    s.add_argument("--solver", required=True, choices=("wsre", "temin", "wstremin"))
    s.add_argument("--alpha0", type=float, help="BS energy weight")
    s.add_argument("--J", help="slot counts to consider, e.g. 1,2,4 (wstremin only)")
    s.add_argument("--tmax", type=float, help="frame length cap in seconds")
    s.add_argument("--seed", type=int, help="channel seed (default: scenario seed)")
    s.add_argument("--tol", type=float, help="relative search tolerance")
    s.add_argument("--out", help="output JSON (default: stdout)")
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("tradeoff", help="sweep the BS weight for each slot count")
    t.add_argument("--scenario")
    t.add_argument("--alpha0", help="comma list or logspace:LO:HI:COUNT (default: 25 points around P_rc/P_tc)")
    t.add_argument("--J", help="comma list of slot counts (default: 1..K)")
    t.add_argument("--mode", default="cog", help="cog, exhaustive, or both comma-separated")
    t.add_argument("--seeds", type=int, default=1, help="number of channel realizations")
    t.add_argument("--seed", type=int, help="first channel seed (default: scenario seed)")
    t.add_argument("--aggregate", default="per-seed", choices=("per-seed", "mean"))
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--tol", type=float)
    t.add_argument("--out", required=True, help="CSV path; metadata goes to PATH.meta.json")
    t.set_defaults(func=cmd_tradeoff)

    a = sub.add_parser("accept", help="run the acceptance suite")
    a.add_argument("--scale", default="quick", choices=("quick", "full"))
    a.add_argument("--only", help="comma list of criterion numbers")
    a.add_argument("--out", help="JSON report path")
    a.set_defaults(func=cmd_accept)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        details = ", ".join(f"{k}={fmt(v)}" for k, v in exc.details.items())
        print(f"infeasible: {exc}" + (f" [{details}]" if details else ""), file=sys.stderr)
        return EXIT_INFEASIBLE
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (UnboundedError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
