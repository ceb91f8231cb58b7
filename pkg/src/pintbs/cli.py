"""Command-line experiment harness.

Subcommands: ``solve`` (serial fine benchmark vs the closed form),
``parareal`` (convergence + runtime study, optional exactness mode),
``bounds`` (analytic speedup table from per-slice costs), ``sweep``
(parameter sweeps along r / sigma1 / sigma2).

All outputs are CSV/JSON under the output directory; identical config and
seed produce byte-identical data CSVs.  The PINTBS_OUT environment variable
overrides the --out flag.  Exit codes: 0 ok, 2 config error, 3 missing
artifact, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass

from .analytic import analytic_field
from .core import Field, Grid2D, ModelParams, relative_error, write_field_csv
from .discretization import CgConfig
from .errors import (ConfigError, MissingArtifactError, NumericalError,
                     PintbsError, ValidationError, WeightFormatError)
from .fno import load_weights
from .parareal import (TimePartition, convergence_study, exactness_defect,
                       parameter_sweep, parareal_run, serial_fine_reference)
from .propagators import PropagatorSpec, advance, measure_cost
from .speedup import CostInputs, compare_measured, parareal_bound, spacetime_bound

log = logging.getLogger(__name__)

EXACTNESS_TOL = 1e-10
SWEEP_VALUES = (0.1, 0.4, 1.0, 3.0, 5.0)


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Everything a run needs; defaults reproduce the reference benchmark."""

    sigma1: float = 0.3
    sigma2: float = 0.3
    rho: float = 0.5
    r: float = 1.0
    s1: float = 100.0
    s2: float = 100.0
    cash: float = 1.0
    maturity: float = 1.0
    nx: int = 301
    ny: int = 301
    x_max: float = 300.0
    y_max: float = 300.0
    p_time: int = 10
    p_space: int = 1
    k: int = 4
    coarse: str = "numeric"
    weights: str | None = None
    out: str = "out"
    seed: int = 0
    rel_tol_fine: float = 1e-10
    rel_tol_coarse: float = 1e-6
    max_iters: int = 2000
    jacobi: bool = False
    bicgstab_fallback: bool = True

    def __post_init__(self) -> None:
        if self.coarse not in ("numeric", "fno"):
            raise ConfigError(f"coarse must be 'numeric' or 'fno', got {self.coarse!r}")
        if self.p_time < 1 or self.p_space < 1 or self.k < 0:
            raise ConfigError("p_time and p_space must be >= 1 and k >= 0")

    def params(self) -> ModelParams:
        try:
            return ModelParams(self.sigma1, self.sigma2, self.rho, self.r,
                               self.s1, self.s2, self.cash, self.maturity)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc

    def grid(self) -> Grid2D:
        try:
            return Grid2D(self.nx, self.ny, self.x_max, self.y_max)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc

    def fine_cg(self) -> CgConfig:
        return CgConfig(rel_tol=self.rel_tol_fine, max_iters=self.max_iters,
                        workers=self.p_space, jacobi=self.jacobi,
                        bicgstab_fallback=self.bicgstab_fallback)

    def coarse_cg(self) -> CgConfig:
        return CgConfig(rel_tol=self.rel_tol_coarse, max_iters=self.max_iters,
                        workers=self.p_space, jacobi=self.jacobi,
                        bicgstab_fallback=self.bicgstab_fallback)

    def coarse_spec(self, precision: str = "single") -> PropagatorSpec:
        if self.coarse == "fno":
            if not self.weights:
                raise ConfigError("coarse 'fno' requires --weights")
            return PropagatorSpec.coarse_fno(load_weights(self.weights))
        return PropagatorSpec.coarse_numeric(precision=precision, cg=self.coarse_cg())


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus CLI overrides."""
    known = {f.name for f in dataclasses.fields(RunConfig)}
    values: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise MissingArtifactError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        for key in raw:
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
        values.update(raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    if os.environ.get("PINTBS_OUT"):
        values["out"] = os.environ["PINTBS_OUT"]
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def write_csv(path: str, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_summary(out_dir: str, payload: dict) -> None:
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_solve(cfg: RunConfig) -> int:
    """Serial fine solve of the benchmark; errors measured against the closed form."""
    os.makedirs(cfg.out, exist_ok=True)
    p = cfg.params()
    grid = cfg.grid()
    fine = PropagatorSpec.fine(cg=cfg.fine_cg())
    part = TimePartition(p.maturity, cfg.p_time)
    bounds = part.boundaries()

    stats: list[dict] = []
    u = analytic_field(grid, 0.0, p)
    start = time.perf_counter()
    for n in range(part.p_time):
        u = advance(fine, u, bounds[n], bounds[n + 1], p, stats=stats)
    seconds = time.perf_counter() - start

    exact = analytic_field(grid, p.maturity, p)
    err = relative_error(u, exact)
    write_field_csv(u, os.path.join(cfg.out, "solution.csv"))
    for i, row in enumerate(stats):
        row["step"] = i
    write_csv(os.path.join(cfg.out, "solver_stats.csv"), stats,
              ["step", "t_from", "t_to", "precision", "iters", "residual", "converged"])
    _write_summary(cfg.out, {
        "command": "solve", "seed": cfg.seed, "grid": [grid.nx, grid.ny],
        "p_time": cfg.p_time, "fine_steps": len(stats),
        "rel_error_vs_closed_form": err, "wall_seconds": seconds,
    })
    if any(not row["converged"] for row in stats):
        raise NumericalError("one or more implicit steps did not converge")
    print(f"solve: {len(stats)} fine steps, rel error vs closed form {err:.3e}")
    return 0


def _measure_slice_costs(cfg: RunConfig, fine: PropagatorSpec,
                         coarse: PropagatorSpec, u0: Field,
                         part: TimePartition, p: ModelParams) -> tuple[float, float]:
    bounds = part.boundaries()
    c_f = measure_cost(fine, u0, bounds[0], bounds[1], p, reps=3).mean_seconds
    c_c = measure_cost(coarse, u0, bounds[0], bounds[1], p, reps=3).mean_seconds
    return c_f, c_c


def cmd_parareal(cfg: RunConfig, exactness: bool = False) -> int:
    """Parareal convergence and runtime study with the configured coarse kind."""
    os.makedirs(cfg.out, exist_ok=True)
    p = cfg.params()
    grid = cfg.grid()
    part = TimePartition(p.maturity, cfg.p_time)
    fine = PropagatorSpec.fine(cg=cfg.fine_cg())
    u0 = analytic_field(grid, 0.0, p)

    if exactness:
        coarse = PropagatorSpec.coarse_numeric(precision="double", cg=cfg.coarse_cg())
        reference = serial_fine_reference(u0, part, fine, p)
        res, states = parareal_run(u0, part, fine, coarse, cfg.p_time, p,
                                   reference=reference, record_trajectories=True)
        rows = [{"k": k, "defect": exactness_defect(states, reference, k)}
                for k in range(1, cfg.p_time + 1)]
        write_csv(os.path.join(cfg.out, "exactness.csv"), rows, ["k", "defect"])
        worst = max(row["defect"] for row in rows)
        _write_summary(cfg.out, {
            "command": "parareal", "mode": "exactness", "seed": cfg.seed,
            "grid": [grid.nx, grid.ny], "p_time": cfg.p_time,
            "worst_defect": worst, "tolerance": EXACTNESS_TOL,
        })
        print(f"exactness: worst defect over k-front slices {worst:.3e}")
        if worst > EXACTNESS_TOL:
            raise NumericalError(
                f"exactness defect {worst:.3e} exceeds {EXACTNESS_TOL:.0e}")
        return 0

    coarse = cfg.coarse_spec()
    label = cfg.coarse
    t_serial_start = time.perf_counter()
    reference = serial_fine_reference(u0, part, fine, p)
    serial_seconds = time.perf_counter() - t_serial_start

    res, _ = parareal_run(u0, part, fine, coarse, cfg.k, p, reference=reference)
    conv_rows = [{"coarse_kind": label, "p_time": cfg.p_time, "k": k, "rel_error": e}
                 for k, e in enumerate(res.error_history)]
    write_csv(os.path.join(cfg.out, "convergence.csv"), conv_rows,
              ["coarse_kind", "p_time", "k", "rel_error"])

    c_f, c_c = _measure_slice_costs(cfg, fine, coarse, u0, part, p)
    runtime_rows = []
    cumulative = res.iteration_seconds[0]
    for k in range(1, cfg.k + 1):
        cumulative += res.iteration_seconds[k]
        ci = CostInputs(c_fine=c_f, c_coarse=c_c, p_time=cfg.p_time, k=k,
                        p_space=cfg.p_space)
        row = compare_measured(ci, serial_seconds, cumulative)
        row.update({"coarse_kind": label, "seconds": cumulative})
        runtime_rows.append(row)
    write_csv(os.path.join(cfg.out, "runtime.csv"), runtime_rows,
              ["coarse_kind", "p_time", "p_space", "k", "seconds",
               "measured_speedup", "bound_speedup", "within_bound"])
    _write_summary(cfg.out, {
        "command": "parareal", "seed": cfg.seed, "coarse": label,
        "grid": [grid.nx, grid.ny], "p_time": cfg.p_time, "k": cfg.k,
        "serial_fine_seconds": serial_seconds,
        "c_fine_slice": c_f, "c_coarse_slice": c_c,
        "final_rel_error": res.error_history[-1],
    })
    print(f"parareal[{label}]: error history "
          + " ".join(f"{e:.2e}" for e in res.error_history))
    return 0


def cmd_bounds(args: argparse.Namespace) -> int:
    """Analytic speedup table for given per-slice costs."""
    out_dir = os.environ.get("PINTBS_OUT") or args.out
    os.makedirs(out_dir, exist_ok=True)
    ci = CostInputs(c_fine=args.cfine, c_coarse=args.ccoarse,
                    p_time=args.ptime, k=args.k, p_space=args.pspace)
    b = parareal_bound(ci)
    st = spacetime_bound(ci)
    row = {
        "p_time": ci.p_time, "p_space": ci.p_space, "k": ci.k,
        "c_fine": ci.c_fine, "c_coarse": ci.c_coarse,
        "speedup": b.speedup, "cost_ratio_cap": b.cost_ratio_cap,
        "iteration_cap": b.iteration_cap, "cap": b.cap,
        "spacetime_speedup": st.speedup, "spacetime_cap": st.cap,
    }
    write_csv(os.path.join(out_dir, "bounds.csv"), [row], list(row.keys()))
    print(f"bound at (P={ci.p_time}, K={ci.k}): {b.speedup:.4g}; "
          f"caps: cost ratio {b.cost_ratio_cap:.4g}, P/K {b.iteration_cap:.4g}; "
          f"space-time {st.speedup:.4g}")
    return 0


def cmd_sweep(cfg: RunConfig, axes: list[str], values: list[float]) -> int:
    """Convergence sweeps along r / sigma axes with the configured coarse kind."""
    os.makedirs(cfg.out, exist_ok=True)
    p = cfg.params()
    grid = cfg.grid()
    part = TimePartition(p.maturity, cfg.p_time)
    fine = PropagatorSpec.fine(cg=cfg.fine_cg())
    coarse = cfg.coarse_spec()
    rows = []
    for axis in axes:
        rows.extend(parameter_sweep(p, axis, values, grid, part, fine, coarse, cfg.k))
    write_csv(os.path.join(cfg.out, "sweep.csv"), rows,
              ["axis", "value", "k", "rel_error"])
    _write_summary(cfg.out, {
        "command": "sweep", "seed": cfg.seed, "axes": axes, "values": values,
        "grid": [grid.nx, grid.ny], "p_time": cfg.p_time, "k": cfg.k,
        "coarse": cfg.coarse,
    })
    print(f"sweep: {len(rows)} rows over axes {', '.join(axes)}")
    return 0


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        nx, ny = text.lower().split("x")
        return int(nx), int(ny)
    except ValueError as exc:
        raise ConfigError(f"--grid expects NXxNY, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pintbs",
        description="Parallel-in-time pricing experiments for the two-asset digital option")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--coarse", choices=["numeric", "fno"])
        sp.add_argument("--ptime", type=int, dest="p_time")
        sp.add_argument("--pspace", type=int, dest="p_space")
        sp.add_argument("--k", type=int)
        sp.add_argument("--weights", help="FNO1 weight file for --coarse fno")
        sp.add_argument("--out", help="output directory (PINTBS_OUT overrides)")
        sp.add_argument("--grid", help="grid as NXxNY, e.g. 301x301")
        sp.add_argument("--seed", type=int)

    sp_solve = sub.add_parser("solve", help="serial fine benchmark")
    common(sp_solve)
    sp_par = sub.add_parser("parareal", help="parareal convergence and runtime study")
    common(sp_par)
    sp_par.add_argument("--exactness", action="store_true",
                        help="all-double exactness mode (coarse = numeric)")
    sp_bounds = sub.add_parser("bounds", help="analytic speedup bounds")
    sp_bounds.add_argument("--cfine", type=float, required=True)
    sp_bounds.add_argument("--ccoarse", type=float, required=True)
    sp_bounds.add_argument("--ptime", type=int, default=8)
    sp_bounds.add_argument("--pspace", type=int, default=1)
    sp_bounds.add_argument("--k", type=int, default=1)
    sp_bounds.add_argument("--out", default="out")
    sp_sweep = sub.add_parser("sweep", help="parameter sweeps (r, sigma1, sigma2)")
    common(sp_sweep)
    sp_sweep.add_argument("--axis", choices=["r", "sigma1", "sigma2", "all"],
                          default="all")
    sp_sweep.add_argument("--values",
                          help="comma-separated sweep values "
                               f"(default {','.join(str(v) for v in SWEEP_VALUES)})")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides: dict = {
        "coarse": args.coarse, "p_time": args.p_time, "p_space": args.p_space,
        "k": args.k, "weights": args.weights, "out": args.out, "seed": args.seed,
    }
    if args.grid:
        overrides["nx"], overrides["ny"] = _parse_grid(args.grid)
    return load_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("PINTBS_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "bounds":
            return cmd_bounds(args)
        cfg = _config_from_args(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "parareal":
            return cmd_parareal(cfg, exactness=args.exactness)
        if args.command == "sweep":
            axes = ["r", "sigma1", "sigma2"] if args.axis == "all" else [args.axis]
            values = ([float(v) for v in args.values.split(",")]
                      if args.values else list(SWEEP_VALUES))
            return cmd_sweep(cfg, axes, values)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (MissingArtifactError, WeightFormatError) as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, ValidationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except PintbsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
