"""Closed-form price of the two-asset cash-or-nothing option.

The price in diffusion time tau (time since expiry) is

    u(x, y, tau) = cash * exp(-r tau) * B(d_x, d_y; rho)

where B is the bivariate standard normal CDF and d_x, d_y are the usual
log-moneyness arguments.  B is evaluated by reducing the double integral to a
single integral over the correlation (the derivative of B with respect to rho
is the bivariate density), substituting rho = sin(theta), and applying
composite Gauss-Legendre quadrature.  The substitution keeps the integrand
bounded and smooth all the way to |rho| -> 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Final

import numpy as np
from scipy.special import ndtr

from .core import DTYPES, Field, Grid2D, ModelParams, Precision
from .errors import ValidationError

TWO_PI: Final[float] = 2.0 * np.pi

# |rho| is clamped here; closer to 1 the CDF is indistinguishable from the
# degenerate comonotone limit at double precision.
RHO_CLAMP: Final[float] = 1.0 - 1e-12

# Beyond |d| = 40 the univariate CDF differs from 0/1 by far less than 1e-300.
D_CLIP: Final[float] = 40.0

# Above this |rho| the theta integrand develops a boundary layer at the upper
# endpoint; the tail is subdivided geometrically toward it.
_RHO_SMOOTH: Final[float] = 0.95


def std_normal_cdf(x: np.ndarray | float) -> np.ndarray | float:
    """Standard normal CDF (vectorized, absolute error below 1e-15)."""
    return ndtr(x)


@dataclass(frozen=True)
class BvnQuadrature:
    """Gauss-Legendre rule configuration for the bivariate normal CDF.

    node_count : nodes per panel (>= 6)
    abs_tol    : target absolute error (<= 1e-10); drives the panel width
    """

    node_count: int = 24
    abs_tol: float = 1e-12
    _nodes: np.ndarray = field(init=False, repr=False, compare=False)
    _weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.node_count < 6:
            raise ValidationError("quadrature needs at least 6 nodes per panel")
        if not 0.0 < self.abs_tol <= 1e-10:
            raise ValidationError("abs_tol must be in (0, 1e-10]")
        nodes, weights = np.polynomial.legendre.leggauss(self.node_count)
        object.__setattr__(self, "_nodes", nodes)
        object.__setattr__(self, "_weights", weights)

    @property
    def panel_width(self) -> float:
        # Gauss-Legendre error falls factorially in the node count; this
        # conservative width keeps smooth-region panels far below abs_tol.
        return min(0.5, self.node_count / 48.0)


_DEFAULT_QUAD = BvnQuadrature()


def _panel_edges(theta_end: float, quad: BvnQuadrature) -> np.ndarray:
    """Panel boundaries of [0, theta_end] (theta_end may be negative)."""
    a_smooth = float(np.arcsin(_RHO_SMOOTH))
    sign = 1.0 if theta_end >= 0 else -1.0
    t = abs(theta_end)
    smooth_part = min(t, a_smooth)
    n_panels = max(1, int(np.ceil(smooth_part / quad.panel_width)))
    edges = list(np.linspace(0.0, smooth_part, n_panels + 1))
    if t > a_smooth:
        # geometric refinement toward the endpoint resolves the layer
        gap = t - a_smooth
        while gap > 1e-13:
            gap *= 0.5
            edges.append(t - gap)
        edges.append(t)
    return sign * np.asarray(edges)


def bivariate_normal_cdf(dx: np.ndarray | float, dy: np.ndarray | float,
                         rho: float, quad: BvnQuadrature | None = None) -> np.ndarray | float:
    """P(X <= dx, Y <= dy) for standard bivariate normal (X, Y) with corr rho.

    Vectorized over dx/dy; rho is scalar and clamped to |rho| <= 1 - 1e-12.
    """
    if quad is None:
        quad = _DEFAULT_QUAD
    if not np.isfinite(rho):
        raise ValidationError("rho must be finite")
    rho = float(np.clip(rho, -RHO_CLAMP, RHO_CLAMP))

    dx_a = np.clip(np.asarray(dx, dtype=np.float64), -D_CLIP, D_CLIP)
    dy_a = np.clip(np.asarray(dy, dtype=np.float64), -D_CLIP, D_CLIP)
    if not (np.all(np.isfinite(dx_a)) and np.all(np.isfinite(dy_a))):
        raise ValidationError("CDF arguments must not be NaN")
    dx_a, dy_a = np.broadcast_arrays(dx_a, dy_a)

    total = ndtr(dx_a) * ndtr(dy_a)
    if rho != 0.0:
        correction = np.zeros_like(total)
        cross = 2.0 * dx_a * dy_a
        sq = dx_a * dx_a + dy_a * dy_a
        edges = _panel_edges(float(np.arcsin(rho)), quad)
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            mid = 0.5 * (hi + lo)
            for node, weight in zip(quad._nodes, quad._weights):
                theta = mid + half * node
                sin_t = np.sin(theta)
                cos2_t = max(1.0 - sin_t * sin_t, 1e-30)
                correction += (weight * half) * np.exp(-(sq - cross * sin_t) / (2.0 * cos2_t))
        total = total + correction / TWO_PI

    result = np.clip(total, 0.0, 1.0)
    return float(result) if np.isscalar(dx) and np.isscalar(dy) else result


def terminal_payoff(x: np.ndarray | float, y: np.ndarray | float,
                    p: ModelParams) -> np.ndarray | float:
    """Cash-or-nothing payoff: cash when x >= s1 and y >= s2 (inclusive)."""
    inside = np.logical_and(np.asarray(x) >= p.s1, np.asarray(y) >= p.s2)
    out = np.where(inside, p.cash, 0.0)
    return float(out) if np.isscalar(x) and np.isscalar(y) else out


def closed_form_price(x: np.ndarray | float, y: np.ndarray | float, tau: float,
                      p: ModelParams, quad: BvnQuadrature | None = None) -> np.ndarray | float:
    """Exact price at diffusion time tau (tau = 0 returns the payoff).

    Points with x <= 0 or y <= 0 price to zero for tau > 0 (an asset at zero
    stays there, so the digital barrier can never be met).
    """
    if tau < 0:
        raise ValidationError("tau must be non-negative")
    if tau == 0.0:
        return terminal_payoff(x, y, p)

    x_a = np.asarray(x, dtype=np.float64)
    y_a = np.asarray(y, dtype=np.float64)
    x_a, y_a = np.broadcast_arrays(x_a, y_a)
    pos = np.logical_and(x_a > 0.0, y_a > 0.0)

    sqrt_tau = np.sqrt(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_x = (np.log(x_a / p.s1) + (p.r - 0.5 * p.sigma1**2) * tau) / (p.sigma1 * sqrt_tau)
        d_y = (np.log(y_a / p.s2) + (p.r - 0.5 * p.sigma2**2) * tau) / (p.sigma2 * sqrt_tau)
    d_x = np.where(pos, d_x, -D_CLIP)
    d_y = np.where(pos, d_y, -D_CLIP)

    price = p.cash * np.exp(-p.r * tau) * bivariate_normal_cdf(d_x, d_y, p.rho, quad)
    price = np.where(pos, price, 0.0)
    return float(price) if np.isscalar(x) and np.isscalar(y) else price


def analytic_field(grid: Grid2D, tau: float, p: ModelParams,
                   quad: BvnQuadrature | None = None,
                   precision: Precision = "double") -> Field:
    """Closed-form price evaluated on every grid node."""
    xx = grid.x_nodes()[:, None]
    yy = grid.y_nodes()[None, :]
    values = closed_form_price(xx, yy, tau, p, quad)
    return Field(grid, np.asarray(values, dtype=DTYPES[precision]), precision)


def analytic_boundary_masked(grid: Grid2D, tau: float, p: ModelParams,
                             precision: Precision = "double",
                             quad: BvnQuadrature | None = None) -> np.ndarray:
    """Full-shape array holding closed-form values on boundary nodes, zero inside.

    Used to fold Dirichlet data into right-hand sides without evaluating the
    (comparatively expensive) closed form on interior nodes.
    """
    x = grid.x_nodes()
    y = grid.y_nodes()
    out = np.zeros((grid.nx, grid.ny), dtype=DTYPES[precision])
    out[0, :] = closed_form_price(x[0], y, tau, p, quad)
    out[-1, :] = closed_form_price(x[-1], y, tau, p, quad)
    out[:, 0] = closed_form_price(x, y[0], tau, p, quad)
    out[:, -1] = closed_form_price(x, y[-1], tau, p, quad)
    return out
