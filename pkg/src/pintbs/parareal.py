"""Parareal iteration over a uniform partition of diffusion time.

Iteration 0 is a serial coarse sweep.  Each subsequent iteration runs the
fine propagator on every slice concurrently (they only read the previous
iterate) and then applies the serial corrections

    u_{n+1} <- F(u_n_prev) + [ G(u_n_new) - G(u_n_prev) ]

with the coarse outputs upcast to double before the combination, so an
unchanged slice start cancels the coarse terms exactly and the classical
k-slice exactness property survives floating point.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import Field, Grid2D, ModelParams, cast_precision, l2_norm, relative_error
from .errors import ValidationError
from .propagators import PropagatorSpec, advance

log = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class TimePartition:
    """Uniform slices of [t0, t_end] (diffusion time)."""

    t_end: float
    p_time: int
    t0: float = 0.0

    def __post_init__(self) -> None:
        if self.p_time < 1:
            raise ValidationError("p_time must be at least 1")
        if not self.t_end > self.t0:
            raise ValidationError("t_end must exceed t0")

    def boundaries(self) -> np.ndarray:
        return np.linspace(self.t0, self.t_end, self.p_time + 1)

    @property
    def slice_length(self) -> float:
        return (self.t_end - self.t0) / self.p_time


@dataclass(slots=True)
class PararealState:
    """One Parareal iterate: slice-boundary fields plus bookkeeping."""

    fields: list[Field]
    coarse: list[Field]        # G evaluated at this iterate's slice starts
    iteration: int


@dataclass(slots=True)
class PararealResult:
    fields: list[Field]
    error_history: list[float]           # endpoint error per iteration (0 = coarse init)
    iteration_seconds: list[float]
    slice_errors: list[list[float]] = field(default_factory=list)  # per iter, per slice
    converged_at: int | None = None


def serial_fine_reference(u0: Field, partition: TimePartition,
                          fine: PropagatorSpec, p: ModelParams) -> list[Field]:
    """Sequential fine trajectory at all slice boundaries."""
    bounds = partition.boundaries()
    traj = [cast_precision(u0, fine.precision)]
    for n in range(partition.p_time):
        traj.append(advance(fine, traj[-1], bounds[n], bounds[n + 1], p))
    return traj


def _correct(fine_prev: Field, g_new: Field, g_old: Field) -> Field:
    """fine_prev + (g_new - g_old), grouped so equal coarse inputs cancel exactly."""
    delta = g_new.values.astype(np.float64) - g_old.values.astype(np.float64)
    return Field(fine_prev.grid, fine_prev.values + delta, "double")


def parareal_run(u0: Field, partition: TimePartition, fine: PropagatorSpec,
                 coarse: PropagatorSpec, k_max: int, p: ModelParams,
                 reference: Sequence[Field] | None = None,
                 concurrent: bool = True,
                 record_trajectories: bool = False,
                 tol: float | None = None) -> tuple[PararealResult, list[PararealState]]:
    """Run k_max Parareal iterations; returns the result and recorded states.

    ``reference`` (a serial fine trajectory) feeds the error history; without
    it the history stays empty.  ``record_trajectories`` keeps every
    iterate's state (memory scales with k_max * p_time), otherwise only the
    final state is returned.  With both a reference and ``tol``,
    ``converged_at`` reports the first iteration whose endpoint error is at
    or below tol (iterations still run through k_max).
    """
    if k_max < 0:
        raise ValidationError("k_max must be non-negative")
    if reference is not None and len(reference) != partition.p_time + 1:
        raise ValidationError("reference trajectory length does not match the partition")
    if tol is not None and not tol > 0:
        raise ValidationError("tol must be positive")

    bounds = partition.boundaries()
    n_slices = partition.p_time
    result = PararealResult([], [], [])
    states: list[PararealState] = []

    def record(state: PararealState) -> None:
        if reference is not None:
            errs = [relative_error(state.fields[n], reference[n])
                    for n in range(1, n_slices + 1)]
            result.slice_errors.append(errs)
            result.error_history.append(errs[-1])
            if tol is not None and result.converged_at is None and errs[-1] <= tol:
                result.converged_at = state.iteration
        if record_trajectories:
            states.append(state)

    # iteration 0: serial coarse sweep
    start = time.perf_counter()
    u0d = cast_precision(u0, "double")
    fields = [u0d]
    coarse_vals: list[Field] = []
    for n in range(n_slices):
        g = advance(coarse, fields[-1], bounds[n], bounds[n + 1], p)
        coarse_vals.append(g)
        fields.append(cast_precision(g, "double"))
    state = PararealState(fields, coarse_vals, 0)
    result.iteration_seconds.append(time.perf_counter() - start)
    record(state)

    for k in range(1, k_max + 1):
        start = time.perf_counter()
        prev = state

        def fine_eval(n: int) -> Field:
            return advance(fine, prev.fields[n], bounds[n], bounds[n + 1], p)

        if concurrent and n_slices > 1:
            with ThreadPoolExecutor(max_workers=n_slices) as pool:
                fine_vals = list(pool.map(fine_eval, range(n_slices)))
        else:
            fine_vals = [fine_eval(n) for n in range(n_slices)]

        fields = [u0d]
        coarse_vals = []
        for n in range(n_slices):
            g_new = advance(coarse, fields[-1], bounds[n], bounds[n + 1], p)
            coarse_vals.append(g_new)
            fields.append(_correct(fine_vals[n],
                                   cast_precision(g_new, "double"),
                                   cast_precision(prev.coarse[n], "double")))
        state = PararealState(fields, coarse_vals, k)
        result.iteration_seconds.append(time.perf_counter() - start)
        record(state)

    result.fields = state.fields
    if not record_trajectories:
        states = [state]
    return result, states


def exactness_defect(states: Sequence[PararealState],
                     reference: Sequence[Field], k: int) -> float:
    """Largest relative error over slices 0..k of the k-th iterate.

    The classical property: after k iterations the first k slices coincide
    with the serial fine trajectory.
    """
    state = next(s for s in states if s.iteration == k)
    worst = 0.0
    for n in range(1, min(k, len(reference) - 1) + 1):
        if l2_norm(reference[n]) == 0.0:
            continue
        worst = max(worst, relative_error(state.fields[n], reference[n]))
    return worst


def convergence_study(u0: Field, partition: TimePartition, fine: PropagatorSpec,
                      coarse_specs: dict[str, PropagatorSpec], k_max: int,
                      p: ModelParams, concurrent: bool = True) -> list[dict]:
    """Serial fine reference plus one Parareal run per coarse kind.

    Returns rows with keys (coarse_kind, p_time, k, rel_error), one per
    iteration, matching the convergence CSV schema.
    """
    reference = serial_fine_reference(u0, partition, fine, p)
    rows = []
    for label, coarse in coarse_specs.items():
        res, _ = parareal_run(u0, partition, fine, coarse, k_max, p,
                              reference=reference, concurrent=concurrent)
        for k, err in enumerate(res.error_history):
            rows.append({"coarse_kind": label, "p_time": partition.p_time,
                         "k": k, "rel_error": err})
        log.info("convergence %s: final error %.3e", label, res.error_history[-1])
    return rows


def parameter_sweep(base: ModelParams, axis: str, values: Sequence[float],
                    u0_grid: Grid2D, partition: TimePartition,
                    fine: PropagatorSpec, coarse: PropagatorSpec, k_max: int,
                    concurrent: bool = True) -> list[dict]:
    """Re-run the convergence experiment along one parameter axis.

    Returns rows with keys (axis, value, k, rel_error).  The payoff terminal
    state is re-evaluated per value because the initial condition depends on
    the thresholds only, but the reference trajectory depends on everything.
    """
    from .analytic import analytic_field

    if axis not in ("r", "sigma1", "sigma2"):
        raise ValidationError(f"unsupported sweep axis {axis!r}")
    rows = []
    for value in values:
        p = replace(base, **{axis: float(value)})
        u0 = analytic_field(u0_grid, partition.t0, p)
        reference = serial_fine_reference(u0, partition, fine, p)
        res, _ = parareal_run(u0, partition, fine, coarse, k_max, p,
                              reference=reference, concurrent=concurrent)
        for k, err in enumerate(res.error_history):
            rows.append({"axis": axis, "value": float(value), "k": k, "rel_error": err})
        log.info("sweep %s=%g: final error %.3e", axis, value, res.error_history[-1])
    return rows
