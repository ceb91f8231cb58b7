"""Fine and coarse slice propagators with a common advance contract.

A propagator advances a field across one time slice [t_from, t_to].  The
fine propagator takes three implicit-Euler substeps in double precision at a
tight solver tolerance; the numerical coarse propagator takes a single
implicit-Euler step in single precision at a loose tolerance; the learned
coarse propagator runs FNO inference in single precision.  A user plugin can
stand in as a fourth kind, as long as it honors the same contract.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache
from statistics import fmean, stdev
from typing import Callable, Literal

from .core import Field, Grid2D, ModelParams, Precision, cast_precision
from .discretization import CgConfig, StencilOperator, implicit_euler_step
from .errors import ValidationError
from .fno import FnoModel, fno_coarse_advance

PropagatorKind = Literal["fine_numeric", "coarse_numeric", "coarse_fno", "coarse_plugin"]

FINE_SUBSTEPS = 3
FINE_REL_TOL = 1e-10
COARSE_REL_TOL = 1e-6

PluginFn = Callable[[Field, float, float, ModelParams], Field]


@dataclass(frozen=True, slots=True)
class PropagatorSpec:
    """Propagator identity: kind, substep count, working precision, handles.

    The fine kind is pinned to 3 substeps in double precision.  Coarse kinds
    default to a single step in single precision; coarse_numeric may be
    promoted to double for exactness studies.
    """

    kind: PropagatorKind
    substeps: int = 0          # 0 means: kind default (3 fine, 1 coarse)
    precision: Precision = "double"
    model: FnoModel | None = None
    plugin: PluginFn | None = None
    cg: CgConfig | None = None

    def __post_init__(self) -> None:
        if self.kind == "fine_numeric":
            object.__setattr__(self, "substeps", self.substeps or FINE_SUBSTEPS)
            if self.substeps != FINE_SUBSTEPS:
                raise ValidationError("the fine propagator takes exactly 3 substeps")
            if self.precision != "double":
                raise ValidationError("the fine propagator runs in double precision")
        elif self.kind in ("coarse_numeric", "coarse_fno", "coarse_plugin"):
            object.__setattr__(self, "substeps", self.substeps or 1)
            if self.substeps != 1:
                raise ValidationError("coarse propagators take a single step per slice")
            if self.kind == "coarse_fno" and self.model is None:
                raise ValidationError("coarse_fno requires a loaded FnoModel")
            if self.kind == "coarse_fno" and self.precision != "single":
                raise ValidationError("FNO inference runs in single precision")
            if self.kind == "coarse_plugin" and self.plugin is None:
                raise ValidationError("coarse_plugin requires a plugin callable")
        else:
            raise ValidationError(f"unknown propagator kind {self.kind!r}")
        if self.cg is None:
            tol = FINE_REL_TOL if self.kind == "fine_numeric" else COARSE_REL_TOL
            object.__setattr__(self, "cg", CgConfig(rel_tol=tol))

    @classmethod
    def fine(cls, cg: CgConfig | None = None) -> "PropagatorSpec":
        return cls(kind="fine_numeric", precision="double", cg=cg)

    @classmethod
    def coarse_numeric(cls, precision: Precision = "single",
                       cg: CgConfig | None = None) -> "PropagatorSpec":
        return cls(kind="coarse_numeric", precision=precision, cg=cg)

    @classmethod
    def coarse_fno(cls, model: FnoModel) -> "PropagatorSpec":
        return cls(kind="coarse_fno", precision="single", model=model)


@lru_cache(maxsize=12)
def _cached_operator(grid: Grid2D, params: ModelParams, dtau: float,
                     precision: Precision) -> StencilOperator:
    return StencilOperator(grid, params, dtau, precision)


def advance(spec: PropagatorSpec, u: Field, t_from: float, t_to: float,
            p: ModelParams, stats: list | None = None) -> Field:
    """Propagate u across [t_from, t_to]; output precision follows ``spec``."""
    if not t_to > t_from:
        raise ValidationError("t_to must exceed t_from")
    if spec.kind == "coarse_fno":
        return fno_coarse_advance(spec.model, cast_precision(u, "single"),
                                  t_from, t_to, p)
    if spec.kind == "coarse_plugin":
        out = spec.plugin(u, t_from, t_to, p)
        if not isinstance(out, Field) or out.grid != u.grid:
            raise ValidationError("plugin must return a Field on the same grid")
        return out

    w = cast_precision(u, spec.precision)
    dt_sub = (t_to - t_from) / spec.substeps
    op = _cached_operator(u.grid, p, dt_sub, spec.precision)
    for s in range(spec.substeps):
        w = implicit_euler_step(w, t_from + s * dt_sub, t_from + (s + 1) * dt_sub,
                                p, spec.cg, op=op, stats=stats)
    return w


@dataclass(frozen=True, slots=True)
class CostMeasurement:
    mean_seconds: float
    stddev_seconds: float
    samples: tuple[float, ...] = field(repr=False, default=())


def measure_cost(spec: PropagatorSpec, u: Field, t_from: float, t_to: float,
                 p: ModelParams, reps: int = 5) -> CostMeasurement:
    """Wall-clock cost of one slice advance (mean/stddev over reps).

    One untimed warmup advance runs first so operator caches and spectral
    basis tables do not pollute the first sample.
    """
    if reps < 1:
        raise ValidationError("reps must be at least 1")
    advance(spec, u, t_from, t_to, p)
    samples = []
    for _ in range(reps):
        start = time.perf_counter()
        advance(spec, u, t_from, t_to, p)
        samples.append(time.perf_counter() - start)
    spread = stdev(samples) if reps > 1 else 0.0
    return CostMeasurement(fmean(samples), spread, tuple(samples))
