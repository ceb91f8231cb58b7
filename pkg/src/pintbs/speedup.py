"""Analytic speedup models for Parareal and space-time parallelism.

With per-slice fine cost c_f, per-slice coarse cost c_c, P time slices and K
iterations, the parallel-in-time speedup is bounded by

    S  <=  1 / [ (1 + K/P) (c_c/c_f) + K/P ]  <=  min(c_f/c_c, P/K)

and multiplying by P_space spatial workers gives the space-time bound.  The
two right-hand caps are reported separately: the cost-ratio cap is the
P -> infinity limit and is the figure usually quoted per coarse propagator.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True, slots=True)
class CostInputs:
    """Per-slice costs (seconds) and the parallel configuration."""

    c_fine: float
    c_coarse: float
    p_time: int
    k: int
    p_space: int = 1

    def __post_init__(self) -> None:
        if not (self.c_fine > 0 and self.c_coarse > 0):
            raise ValidationError("per-slice costs must be positive")
        if self.p_time < 1 or self.k < 1 or self.p_space < 1:
            raise ValidationError("p_time, k, and p_space must be at least 1")


@dataclass(frozen=True, slots=True)
class SpeedupBound:
    speedup: float          # the full bound at (P, K)
    cost_ratio_cap: float   # c_f / c_c
    iteration_cap: float    # P / K
    cap: float              # min of the two caps


def parareal_bound(ci: CostInputs) -> SpeedupBound:
    """Parallel-in-time speedup bound for one Parareal configuration."""
    ratio = ci.c_coarse / ci.c_fine
    k_over_p = ci.k / ci.p_time
    speedup = 1.0 / ((1.0 + k_over_p) * ratio + k_over_p)
    cost_cap = ci.c_fine / ci.c_coarse
    iter_cap = ci.p_time / ci.k
    return SpeedupBound(speedup, cost_cap, iter_cap, min(cost_cap, iter_cap))


def spacetime_bound(ci: CostInputs) -> SpeedupBound:
    """Combined bound when each slice also uses p_space spatial workers."""
    base = parareal_bound(ci)
    return SpeedupBound(ci.p_space * base.speedup,
                        ci.p_space * base.cost_ratio_cap,
                        ci.p_space * base.iteration_cap,
                        ci.p_space * base.cap)


def compare_measured(ci: CostInputs, serial_seconds: float,
                     parareal_seconds: float) -> dict:
    """Measured speedup against the analytic bound for the same costs.

    Returns a row suitable for the runtime CSV; ``within_bound`` uses a 5%
    timing-noise allowance.
    """
    if serial_seconds <= 0 or parareal_seconds <= 0:
        raise ValidationError("wall-clock times must be positive")
    bound = parareal_bound(ci)
    measured = serial_seconds / parareal_seconds
    return {
        "p_time": ci.p_time,
        "p_space": ci.p_space,
        "k": ci.k,
        "c_fine": ci.c_fine,
        "c_coarse": ci.c_coarse,
        "measured_speedup": measured,
        "bound_speedup": bound.speedup,
        "bound_cap": bound.cap,
        "within_bound": bool(measured <= bound.speedup * 1.05),
    }
