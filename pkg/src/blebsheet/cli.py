"""Command line runner: single scenarios, pressure sweeps, geometry checks.

Exit codes: 0 success (including a sweep that finds no critical pressure in
range), 1 solver failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, parse_config
from .dynamics import Operators, StepError, build_pressure, initial_state, simulate, step
from .energy import gamma_ladder
from .geometry import verification_report
from .grid import build_grid
from .linalg import LinearSolveError, NewtonError
from .model import pressure_pulse
from .output import write_csv, write_diagnostics, write_manifest, write_snapshot
from .stationary import StationaryError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="blebsheet",
        description="Membrane-height / linker-protein simulations on the unit square",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario from a config file")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--out", default=None, help="override the output directory")
    run_p.add_argument("--n", type=int, default=None, help="override the grid size")
    run_p.add_argument("--tau", type=float, default=None, help="override the time step")
    run_p.add_argument("--workers", type=int, default=None, help="override worker count")

    sweep_p = sub.add_parser("sweep", help="pressure sweep with bisection detector")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--out", default=None)
    sweep_p.add_argument("--workers", type=int, default=None)

    geo_p = sub.add_parser("verify-geometry", help="shape-derivative verification table")
    geo_p.add_argument("--out", default="out")

    args = parser.parse_args(argv)
    try:
        if args.command == "verify-geometry":
            return _cmd_geometry(Path(args.out))
        config = parse_config(args.config)
        config = _apply_overrides(config, args)
        if args.command == "sweep" or config.scenario == "pressure_sweep":
            return _cmd_sweep(config)
        return _cmd_run(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (LinearSolveError, NewtonError, StepError, StationaryError, RuntimeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


def _apply_overrides(config: ScenarioConfig, args) -> ScenarioConfig:
    from .config import parse_config_dict

    doc = config.to_dict()
    if getattr(args, "out", None):
        doc["output_dir"] = args.out
    if getattr(args, "n", None):
        doc["n"] = args.n
    if getattr(args, "tau", None):
        doc["tau"] = args.tau
    if getattr(args, "workers", None):
        doc["workers"] = args.workers
    return parse_config_dict(doc)


def _outdir(config: ScenarioConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_run(config: ScenarioConfig) -> int:
    if config.scenario == "gamma_limit":
        return _cmd_gamma(config)
    if config.scenario == "geometry_verify":
        return _cmd_geometry(_outdir(config))

    start = time.perf_counter()
    final_state, diagnostics, snapshots = simulate(config)
    out = _outdir(config)
    write_diagnostics(out / "diagnostics.csv", diagnostics)
    grid = build_grid(config.n)
    snapshot_files = []
    for step_index, snap in sorted(snapshots.items()):
        name = f"snapshot_step{step_index}.csv"
        write_snapshot(out / name, grid, snap)
        snapshot_files.append(name)
    write_manifest(
        out / "manifest.json",
        config,
        time.perf_counter() - start,
        extra={
            "final_max_h": float(final_state.h.max()),
            "decay_rate": diagnostics.decay_rate,
            "decay_fit_r2": diagnostics.decay_fit_r2,
            "snapshots": snapshot_files,
        },
    )
    print(f"wrote diagnostics and {len(snapshot_files)} snapshot(s) to {out}")
    return 0


def sweep_point(peak: float, config: ScenarioConfig) -> float:
    """Max height after ten steps for one peak pressure (sweep protocol)."""
    grid = build_grid(config.n)
    ops = Operators(grid)
    state, _ = initial_state(config, grid)
    pressure = pressure_pulse(grid, peak=peak, center=(0.5, 0.5), radius=0.4)
    opts = config.solve_options()
    for _ in range(10):
        state = step(state, config.tau, config.params, pressure, grid,
                     config.scheme, opts, ops=ops)
    return float(state.h.max())


def run_sweep(config: ScenarioConfig):
    """Sampled response curve plus the bisection detector.

    Returns (rows, critical_pressure or None).  The detector bisects the
    indicator ``max_h(10 tau) > h_star`` between the first bracketing pair of
    samples, to the configured pressure tolerance.
    """
    peaks = [float(p) for p in np.linspace(config.sweep_min, config.sweep_max,
                                           config.sweep_samples)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            values = list(pool.map(_sweep_point_star, [(p, config.to_dict()) for p in peaks]))
    else:
        values = [sweep_point(p, config) for p in peaks]
    rows = list(zip(peaks, values))

    h_star = config.params.h_star
    crossed = [v > h_star for v in values]
    if not any(crossed):
        return rows, None
    if crossed[0]:
        return rows, peaks[0]
    i = crossed.index(True)
    lo, hi = peaks[i - 1], peaks[i]
    while hi - lo > config.sweep_bisect_tol:
        mid = 0.5 * (lo + hi)
        if sweep_point(mid, config) > h_star:
            hi = mid
        else:
            lo = mid
    return rows, float(0.5 * (lo + hi))


def _sweep_point_star(payload):
    from .config import parse_config_dict

    peak, doc = payload
    return sweep_point(peak, parse_config_dict(doc))


def _cmd_sweep(config: ScenarioConfig) -> int:
    start = time.perf_counter()
    rows, critical = run_sweep(config)
    out = _outdir(config)
    write_csv(out / "sweep.csv", ["peak_pressure", "max_h"], rows)
    extra = {
        "critical_pressure": critical,
        "critical_pressure_found": critical is not None,
    }
    write_manifest(out / "manifest.json", config, time.perf_counter() - start, extra)
    if critical is None:
        print("no critical pressure in range")
    else:
        print(f"critical pressure ~ {critical:.1f} Pa")
    return 0


def _cmd_gamma(config: ScenarioConfig) -> int:
    start = time.perf_counter()
    grid = build_grid(config.n)
    pressure = build_pressure(config, grid)
    # fixed supercritical bump test field for the gap ladder
    h_test = 0.8 * np.sin(np.pi * grid.node_x) * np.sin(np.pi * grid.node_y)
    rows = gamma_ladder(
        config.theta_ladder, 1.0, config.params, pressure, grid, h_test,
        config.solve_options(),
    )
    out = _outdir(config)
    write_csv(
        out / "gamma_ladder.csv",
        ["theta", "J_theta", "J0", "gap", "minimizer_distance"],
        [(r["theta"], r["J_theta"], r["J0"], r["gap"], r["minimizer_distance"]) for r in rows],
    )
    write_manifest(out / "manifest.json", config, time.perf_counter() - start)
    print(f"wrote gamma ladder ({len(rows)} rungs) to {out}")
    return 0


def _cmd_geometry(out: Path) -> int:
    start = time.perf_counter()
    rows = verification_report()
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "geometry_report.csv",
        ["kind", "variant", "R", "l", "formula", "fd_value", "rel_err", "stability"],
        [
            (r["kind"], r["variant"], r["R"], r["l"], r["formula"],
             r["fd_value"], r["rel_err"], r["stability"])
            for r in rows
        ],
    )
    print(f"wrote geometry report ({len(rows)} rows) to {out} "
          f"in {time.perf_counter() - start:.2f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
