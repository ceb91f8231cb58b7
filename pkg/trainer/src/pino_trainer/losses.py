"""Physics-informed objective for the two-asset pricing operator.

Three mean-square terms are combined without weights: the backward-time PDE
residual at scattered interior points, a value-matching term against the
closed form, and an expiry consistency term that pins the zero-step image of
the payoff to the payoff itself.  The value term pools two kinds of
constraint into one mean square: edge points on the spatial boundary, and
the full stepped surfaces of the sampled snapshots, so the field as a whole
is anchored and the residual term only has to shape its physics.

The stepped surface is treated as a function of continuous coordinates
through a cubic interpolant of the output mesh; spatial derivatives in the
residual come from automatic differentiation with respect to the query
locations, and the time derivative from a forward-mode pass along the step
channel.  Nothing in the residual depends on mesh stencils, so its floor is
set by how well the mesh resolves the surface, not by node spacing noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .interp import interp2d
from .model import GridSpec, PinoNet, encode_batch
from .pricing import MarketParams

__all__ = ["Batch", "LossParts", "advance_with_rate", "pde_residual", "total_loss"]


@dataclass(frozen=True, slots=True)
class Batch:
    """One optimisation step worth of tensors.

    Row layout: rows [0, b) carry snapshot samples; row b is the payoff
    surface with dt = 0, read only by the expiry term.
    """

    u0: torch.Tensor          # (b + 1, n, n)
    dt: torch.Tensor          # (b + 1,)
    out_target: torch.Tensor  # (b, n, n) closed-form surfaces at tau0 + dt
    res_x: torch.Tensor       # (b, k_f) interior locations
    res_y: torch.Tensor
    bnd_x: torch.Tensor       # (b, k_b) locations on the spatial edge
    bnd_y: torch.Tensor
    bnd_target: torch.Tensor  # (b, k_b)
    exp_ix: torch.Tensor      # (E,) node indices for the expiry term
    exp_iy: torch.Tensor
    exp_target: torch.Tensor  # (E,)


@dataclass(frozen=True, slots=True)
class LossParts:
    """Scalar loss components; ``total`` is their unweighted sum."""

    mse_f: torch.Tensor
    mse_b: torch.Tensor
    mse_exp: torch.Tensor
    total: torch.Tensor


def advance_with_rate(model: PinoNet, u0: torch.Tensor, dt: torch.Tensor,
                      grid: GridSpec, p: MarketParams) -> tuple[torch.Tensor, torch.Tensor]:
    """Stepped price surfaces plus their derivative in the step size.

    A single forward-mode pass along the dt channel yields d(output)/d(dt)
    for every node, which is the time derivative of the surface at
    tau0 + dt.  Both returns are decoded to price units.
    """

    def stepped(dt_in: torch.Tensor) -> torch.Tensor:
        return model(encode_batch(u0, dt_in, grid, p))

    out, out_dot = torch.func.jvp(stepped, (dt,), (torch.ones_like(dt),))
    return out * p.cash, out_dot * p.cash


def pde_residual(v: torch.Tensor, v_dot: torch.Tensor, xq: torch.Tensor,
                 yq: torch.Tensor, grid: GridSpec, p: MarketParams) -> torch.Tensor:
    """Backward-time operator defect at scattered points.

    v and v_dot are (B, n, n) price surfaces and their time rate; xq, yq are
    (B, K) interior locations.  Returns the (B, K) pointwise defect of

        u_tau = 1/2 s1^2 x^2 u_xx + rho s1 s2 x y u_xy + 1/2 s2^2 y^2 u_yy
                + r x u_x + r y u_y - r u

    with spatial derivatives taken by automatic differentiation through the
    interpolated surface.  The graph stays differentiable with respect to v
    and v_dot, so the result can feed a training objective.
    """
    with torch.enable_grad():
        x = xq.detach().to(v.dtype).requires_grad_(True)
        y = yq.detach().to(v.dtype).requires_grad_(True)
        val = interp2d(v, x, y, grid)
        u_x, u_y = torch.autograd.grad(val.sum(), (x, y), create_graph=True)
        u_xx, u_xy = torch.autograd.grad(u_x.sum(), (x, y), create_graph=True)
        u_yy = torch.autograd.grad(u_y.sum(), y, create_graph=True)[0]
    u_tau = interp2d(v_dot, x.detach(), y.detach(), grid)
    gen = (0.5 * p.sigma1 ** 2 * x.detach() ** 2 * u_xx
           + p.rho * p.sigma1 * p.sigma2 * x.detach() * y.detach() * u_xy
           + 0.5 * p.sigma2 ** 2 * y.detach() ** 2 * u_yy
           + p.r * x.detach() * u_x + p.r * y.detach() * u_y - p.r * val)
    return u_tau - gen


def total_loss(model: PinoNet, batch: Batch, grid: GridSpec,
               p: MarketParams) -> LossParts:
    """Evaluate the mini-batch objective in one differentiable graph."""
    v, v_dot = advance_with_rate(model, batch.u0, batch.dt, grid, p)
    b = batch.res_x.shape[0]

    defect = pde_residual(v[:b], v_dot[:b], batch.res_x, batch.res_y, grid, p)
    mse_f = defect.square().mean()

    # Edge points and whole-surface snapshots share one value-matching pool.
    ring_sq = (interp2d(v[:b], batch.bnd_x, batch.bnd_y, grid)
               - batch.bnd_target).square()
    field_sq = (v[:b] - batch.out_target).square()
    mse_b = ((ring_sq.sum() + field_sq.sum())
             / (ring_sq.numel() + field_sq.numel()))

    pay = v[b, batch.exp_ix, batch.exp_iy]
    mse_exp = (pay - batch.exp_target).square().mean()

    total = mse_f + mse_b + mse_exp
    return LossParts(mse_f=mse_f, mse_b=mse_b, mse_exp=mse_exp, total=total)
