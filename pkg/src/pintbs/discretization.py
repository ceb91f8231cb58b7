"""Implicit-Euler finite differences for the transformed two-asset equation.

One backward step of length dtau solves (I + dtau * L) u_new = u_old, where L
collects the centered second-order differences of the diffusion, cross, and
advection terms plus the reaction term.  The system matrix is never formed;
``StencilOperator`` holds the nine precomputed coefficient planes and the
solver applies them matrix-free.  Boundary nodes carry Dirichlet data (closed
form at the new time level) and are eliminated into the right-hand side.

The solve starts as conjugate gradient with breakdown detection.  The system
is nonsymmetric (advection plus variable diffusion coefficients), and on this
operator family plain CG stalls rather than converging, at every grid size we
measured; stalling is therefore detected alongside indefinite curvature, and
by default the solve restarts with BiCGStab, which converges robustly here.
Disabling the fallback turns either breakdown into ``SolverBreakdownError``.
Convergence is always declared against the true residual; in single precision
the true residual can floor near the dtype's attainable accuracy slightly
above a tight tolerance, in which case the solve stops early and reports the
floor honestly instead of burning the iteration budget.

Vector operations run over contiguous row blocks per ``workers``; reductions
are accumulated block-wise in a fixed order so results are independent of the
worker count, bit for bit.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analytic import analytic_boundary_masked
from .core import DTYPES, Field, Grid2D, ModelParams, Precision
from .errors import SolverBreakdownError, ValidationError

log = logging.getLogger(__name__)

# Curvature this small relative to ||p||^2 counts as breakdown, not rounding.
_BREAKDOWN_REL = 1e-300
# No 5% improvement of the best recurrence residual over this many iterations
# counts as a stall; on this operator CG stalls within ~30-80 iterations.
# BiCGStab residuals oscillate (gaps up to ~40 seen in converging runs), so
# its window is wide and acts only as a safety net against a true spin.
_STALL_WINDOW_CG = 30
_STALL_WINDOW_BICG = 200
_STALL_FACTOR = 0.95
# A restart must at least halve the true residual to earn another pass.
_PROGRESS_FACTOR = 0.5


@dataclass(frozen=True, slots=True)
class CgConfig:
    """Matrix-free Krylov solve settings.

    rel_tol      : convergence threshold on ||A x - b|| / ||b||
    max_iters    : iteration cap; the best iterate is returned when hit
    workers      : row-block parallel workers for vector operations
    jacobi       : diagonal preconditioning of the CG stage (off = plain)
    bicgstab_fallback : restart with BiCGStab after a CG breakdown or stall;
        on by default because the implicit operator is nonsymmetric and plain
        CG does not converge on it (disable to get SolverBreakdownError
        instead, e.g. for diagnostics)
    """

    rel_tol: float = 1e-10
    max_iters: int = 2000
    workers: int = 1
    jacobi: bool = False
    bicgstab_fallback: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.rel_tol <= 1e-2:
            raise ValidationError("rel_tol must lie in (0, 1e-2]")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be at least 1")
        if self.workers < 1:
            raise ValidationError("workers must be at least 1")


@dataclass(frozen=True, slots=True)
class CgResult:
    field: "Field"
    iters: int
    final_residual: float
    converged: bool


class StencilOperator:
    """Nine-point operator for one implicit step of length dtau.

    Acts as the identity on boundary rows.  Coefficient planes are stored in
    the operator's precision and indexed over interior nodes.
    """

    __slots__ = ("grid", "params", "dtau", "precision",
                 "center", "west", "east", "south", "north", "gamma")

    def __init__(self, grid: Grid2D, params: ModelParams, dtau: float,
                 precision: Precision = "double") -> None:
        if dtau < 0:
            raise ValidationError("dtau must be non-negative")
        self.grid = grid
        self.params = params
        self.dtau = float(dtau)
        self.precision = precision

        dx, dy = grid.dx, grid.dy
        x = grid.x_nodes()[1:-1]
        y = grid.y_nodes()[1:-1]
        alpha = (dtau * params.sigma1**2 / (2.0 * dx * dx)) * x * x       # (nx-2,)
        beta = (dtau * params.sigma2**2 / (2.0 * dy * dy)) * y * y        # (ny-2,)
        adv_x = (dtau * params.r / (2.0 * dx)) * x
        adv_y = (dtau * params.r / (2.0 * dy)) * y
        gamma = (dtau * params.rho * params.sigma1 * params.sigma2
                 / (4.0 * dx * dy)) * np.outer(x, y)

        dtype = DTYPES[precision]
        ones_y = np.ones_like(beta)
        self.center = (1.0 + dtau * params.r
                       + 2.0 * np.add.outer(alpha, beta)).astype(dtype)
        self.west = np.outer(-alpha + adv_x, ones_y).astype(dtype)
        self.east = np.outer(-alpha - adv_x, ones_y).astype(dtype)
        self.south = (-beta + adv_y)[None, :].repeat(x.size, axis=0).astype(dtype)
        self.north = (-beta - adv_y)[None, :].repeat(x.size, axis=0).astype(dtype)
        self.gamma = gamma.astype(dtype)

    def apply_interior(self, u: np.ndarray, out: np.ndarray,
                       row_slice: slice = slice(None)) -> None:
        """out[rows] = (A u)[rows] over interior rows; u is the full array.

        ``row_slice`` indexes interior rows (0 .. nx-3), letting workers fill
        disjoint slabs of ``out`` concurrently.
        """
        r0, r1, _ = row_slice.indices(self.grid.nx - 2)
        s = slice(r0, r1)
        uc = u[1 + r0:1 + r1, 1:-1]
        uw = u[r0:r1, 1:-1]
        ue = u[2 + r0:2 + r1, 1:-1]
        us = u[1 + r0:1 + r1, :-2]
        un = u[1 + r0:1 + r1, 2:]
        une = u[2 + r0:2 + r1, 2:]
        usw = u[r0:r1, :-2]
        use = u[2 + r0:2 + r1, :-2]
        unw = u[r0:r1, 2:]
        out[s] = (self.center[s] * uc + self.west[s] * uw + self.east[s] * ue
                  + self.south[s] * us + self.north[s] * un
                  + self.gamma[s] * (use + unw - une - usw))


def build_operator(grid: Grid2D, params: ModelParams, dtau: float,
                   precision: Precision = "double") -> StencilOperator:
    return StencilOperator(grid, params, dtau, precision)


def apply_operator(op: StencilOperator, field: Field) -> Field:
    """Full-field A u: stencil on interior nodes, identity on the boundary."""
    if field.grid != op.grid:
        raise ValidationError("field grid does not match operator grid")
    if field.precision != op.precision:
        raise ValidationError("field precision does not match operator precision")
    out = field.values.copy()
    op.apply_interior(field.values, out[1:-1, 1:-1])
    return Field(field.grid, out, field.precision)


class _BlockOps:
    """Row-block parallel matvec/axpy with deterministic reductions.

    Dot products are always reduced row-block by row-block in index order,
    independent of the worker count, so iterates match bitwise between
    workers=1 and workers=N runs.
    """

    def __init__(self, op: StencilOperator, workers: int) -> None:
        self.op = op
        self.workers = workers
        n_rows = op.grid.nx - 2
        if workers > 1:
            bounds = np.linspace(0, n_rows, workers + 1).astype(int)
            self.slabs = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])
                          if b > a]
            self.pool: ThreadPoolExecutor | None = ThreadPoolExecutor(max_workers=workers)
        else:
            self.slabs = [slice(0, n_rows)]
            self.pool = None

    def close(self) -> None:
        if self.pool is not None:
            self.pool.shutdown(wait=True)

    def _run(self, fn: Callable[[slice], None]) -> None:
        if self.pool is None:
            fn(self.slabs[0])
        else:
            wait([self.pool.submit(fn, s) for s in self.slabs])

    def matvec(self, u_padded: np.ndarray, out: np.ndarray) -> None:
        self._run(lambda s: self.op.apply_interior(u_padded, out, s))

    def axpy(self, alpha: float, x: np.ndarray, y: np.ndarray) -> None:
        """y += alpha * x"""
        def body(s: slice) -> None:
            y[s] += np.asarray(alpha, dtype=y.dtype) * x[s]
        self._run(body)

    @staticmethod
    def dot(a: np.ndarray, b: np.ndarray) -> float:
        # per-row partials in double, summed in row order
        partials = np.einsum("ij,ij->i", a, b, dtype=np.float64)
        return float(np.sum(partials))


def _interior_system(op: StencilOperator, rhs: Field,
                     ops: _BlockOps) -> tuple[np.ndarray, np.ndarray]:
    """Eliminate Dirichlet boundary data (taken from rhs's boundary ring).

    Returns (b_eff, boundary_frame) where b_eff is the interior right-hand
    side after moving stencil couplings to boundary nodes across, and
    boundary_frame is a full array holding the boundary values, zero inside.
    """
    frame = rhs.values.copy()
    frame[1:-1, 1:-1] = 0.0
    coupling = np.empty((op.grid.nx - 2, op.grid.ny - 2), dtype=rhs.values.dtype)
    ops.matvec(frame, coupling)
    b_eff = rhs.values[1:-1, 1:-1] - coupling
    return b_eff, frame


def cg_solve(op: StencilOperator, rhs: Field, x0: Field | None = None,
             cfg: CgConfig | None = None) -> CgResult:
    """Solve A u = rhs with Dirichlet data carried on rhs's boundary ring.

    The returned field equals rhs on the boundary and the Krylov iterate on
    the interior.  Convergence means ||A u - rhs|| / ||rhs|| <= rel_tol over
    interior nodes (verified against the true residual, not the recurrence).
    """
    if cfg is None:
        cfg = CgConfig()
    if rhs.grid != op.grid or rhs.precision != op.precision:
        raise ValidationError("rhs must match the operator grid and precision")
    if x0 is not None and (x0.grid != op.grid or x0.precision != op.precision):
        raise ValidationError("x0 must match the operator grid and precision")

    ops = _BlockOps(op, cfg.workers)
    try:
        b_eff, frame = _interior_system(op, rhs, ops)
        x = (rhs.values if x0 is None else x0.values)[1:-1, 1:-1].copy()
        b_norm = np.sqrt(_BlockOps.dot(b_eff, b_eff))
        if b_norm == 0.0:
            frame[1:-1, 1:-1] = 0.0
            return CgResult(Field(op.grid, frame, op.precision), 0, 0.0, True)

        padded = np.zeros_like(rhs.values)
        q = np.empty_like(x)

        def a_times(v: np.ndarray, out: np.ndarray) -> None:
            padded[1:-1, 1:-1] = v
            ops.matvec(padded, out)

        def true_residual(vec: np.ndarray) -> np.ndarray:
            a_times(vec, q)
            return b_eff - q

        diag = op.center if cfg.jacobi else None
        iters = 0
        r = true_residual(x)
        res = np.sqrt(_BlockOps.dot(r, r)) / b_norm
        if res <= cfg.rel_tol:
            frame[1:-1, 1:-1] = x
            return CgResult(Field(op.grid, frame, op.precision), 0, float(res), True)

        use_cg = True
        best = res
        while iters < cfg.max_iters:
            if use_cg:
                x, iters, reason = _cg_rounds(a_times, b_eff, x, r, diag, cfg,
                                              b_norm, iters, ops, q)
                if reason is not None:
                    if not cfg.bicgstab_fallback:
                        raise SolverBreakdownError(
                            f"CG {reason} breakdown at iteration {iters} and "
                            "the BiCGStab fallback is disabled (the implicit "
                            "operator is nonsymmetric)", iteration=iters)
                    log.debug("CG %s at iteration %d; continuing with BiCGStab",
                              reason, iters)
                    use_cg = False
                    r = true_residual(x)
                    res = np.sqrt(_BlockOps.dot(r, r)) / b_norm
                    best = min(best, res)
                    if res <= cfg.rel_tol:
                        break
                    continue  # let BiCGStab run before judging progress
            else:
                x, iters, reason = _bicgstab(a_times, b_eff, x, cfg, b_norm,
                                             iters, ops)
                if reason is not None:
                    log.debug("BiCGStab %s at iteration %d; restarting", reason, iters)
            r = true_residual(x)
            res = np.sqrt(_BlockOps.dot(r, r)) / b_norm
            if res <= cfg.rel_tol or iters >= cfg.max_iters:
                break
            if res > _PROGRESS_FACTOR * best:
                # attainable-accuracy floor for this precision; more
                # restarts would spin without gaining digits
                log.debug("solve floored at residual %.3e after %d iterations",
                          res, iters)
                break
            best = res

        frame[1:-1, 1:-1] = x
        return CgResult(Field(op.grid, frame, op.precision), iters, float(res),
                        bool(res <= cfg.rel_tol))
    finally:
        ops.close()


def _cg_rounds(a_times, b_eff, x, r, diag, cfg, b_norm, iters, ops, q):
    """Plain CG until the recurrence residual hits tol, stalls, or breaks down.

    Returns (x, iters, reason) with reason None on a convergence claim or
    iteration-cap exit, "curvature" on an indefinite direction, and "stall"
    when the best residual stops improving.
    """
    z = r / diag if diag is not None else r
    p = z.copy()
    rho = _BlockOps.dot(r, z)
    tol_target = cfg.rel_tol * b_norm
    best = np.sqrt(_BlockOps.dot(r, r))
    since_improvement = 0
    while iters < cfg.max_iters:
        a_times(p, q)
        curvature = _BlockOps.dot(p, q)
        if curvature <= _BREAKDOWN_REL or not np.isfinite(curvature):
            return x, iters, "curvature"
        alpha = rho / curvature
        ops.axpy(alpha, p, x)
        ops.axpy(-alpha, q, r)
        iters += 1
        r_norm = np.sqrt(_BlockOps.dot(r, r))
        if r_norm <= tol_target:
            return x, iters, None
        if r_norm < _STALL_FACTOR * best:
            best = r_norm
            since_improvement = 0
        else:
            since_improvement += 1
            if since_improvement >= _STALL_WINDOW_CG:
                return x, iters, "stall"
        z = r / diag if diag is not None else r
        rho_new = _BlockOps.dot(r, z)
        beta = rho_new / rho
        rho = rho_new
        p *= np.asarray(beta, dtype=p.dtype)
        p += z
    return x, iters, None


def _bicgstab(a_times, b_eff, x, cfg, b_norm, iters, ops):
    """One BiCGStab pass; same block operations, same stopping rule.

    Returns (x, iters, reason) with reason None on a convergence claim or
    iteration-cap exit; "rho", "omega" or "stall" ask the caller to restart
    from the current iterate (a fresh shadow residual cures the degeneracy).
    """
    q = np.empty_like(x)
    a_times(x, q)
    r = b_eff - q
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(x)
    p = np.zeros_like(x)
    t = np.empty_like(x)
    tol_target = cfg.rel_tol * b_norm
    best = np.sqrt(_BlockOps.dot(r, r))
    since_improvement = 0
    while iters < cfg.max_iters:
        rho_new = _BlockOps.dot(r_hat, r)
        if abs(rho_new) <= _BREAKDOWN_REL or not np.isfinite(rho_new):
            return x, iters, "rho"
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + np.asarray(beta, dtype=x.dtype) * (p - np.asarray(omega, dtype=x.dtype) * v)
        a_times(p, q)
        v = q.copy()
        denom = _BlockOps.dot(r_hat, v)
        alpha = rho / denom if denom != 0.0 else np.inf
        if not np.isfinite(alpha):
            return x, iters, "rho"
        s = r - np.asarray(alpha, dtype=x.dtype) * v
        a_times(s, t)
        tt = _BlockOps.dot(t, t)
        if tt <= 0.0 or not np.isfinite(tt):
            return x, iters, "omega"
        omega = _BlockOps.dot(t, s) / tt
        ops.axpy(alpha, p, x)
        ops.axpy(omega, s, x)
        r = s - np.asarray(omega, dtype=x.dtype) * t
        iters += 1
        r_norm = np.sqrt(_BlockOps.dot(r, r))
        if r_norm <= tol_target:
            return x, iters, None
        if r_norm < _STALL_FACTOR * best:
            best = r_norm
            since_improvement = 0
        else:
            since_improvement += 1
            if since_improvement >= _STALL_WINDOW_BICG:
                return x, iters, "stall"
        if omega == 0.0:
            return x, iters, "omega"
    return x, iters, None


def implicit_euler_step(u: Field, t_from: float, t_to: float, p: ModelParams,
                        cfg: CgConfig | None = None,
                        op: StencilOperator | None = None,
                        stats: list | None = None) -> Field:
    """One backward-Euler step from diffusion time t_from to t_to.

    Dirichlet boundary values come from the closed form at the new level; the
    whole step (operator, solve, boundary data) runs in u's precision.
    """
    if not t_to > t_from:
        raise ValidationError("t_to must exceed t_from")
    if cfg is None:
        cfg = CgConfig()
    dtau = t_to - t_from
    if op is None:
        op = StencilOperator(u.grid, p, dtau, u.precision)
    elif abs(op.dtau - dtau) > 1e-14 * max(1.0, abs(dtau)) or op.precision != u.precision:
        raise ValidationError("cached operator does not match the requested step")

    boundary = analytic_boundary_masked(u.grid, t_to, p, u.precision)
    rhs_values = u.values.copy()
    rhs_values[0, :] = boundary[0, :]
    rhs_values[-1, :] = boundary[-1, :]
    rhs_values[:, 0] = boundary[:, 0]
    rhs_values[:, -1] = boundary[:, -1]
    rhs = Field(u.grid, rhs_values, u.precision)

    result = cg_solve(op, rhs, x0=u, cfg=cfg)
    if stats is not None:
        stats.append({"t_from": t_from, "t_to": t_to, "precision": u.precision,
                      "iters": result.iters, "residual": result.final_residual,
                      "converged": result.converged})
    if not result.converged:
        # shortfalls within two orders of tol are the single-precision
        # attainable floor, not a solver failure
        emit = log.warning if result.final_residual > 100.0 * cfg.rel_tol else log.debug
        emit("implicit step [%g, %g] stopped at residual %.3e (target %.1e)",
             t_from, t_to, result.final_residual, cfg.rel_tol)
    return result.field
