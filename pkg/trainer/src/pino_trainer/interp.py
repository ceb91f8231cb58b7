"""Differentiable Lagrange interpolation of mesh surfaces.

Turns a batch of node-value grids into functions evaluable at continuous
coordinates, with gradients flowing both into the grid values and into the
query locations.  That second path is what lets a mesh-based network be
differentiated in space at scattered collocation points.

Each axis uses a six-node Lagrange stencil (quintic precision), so second
derivatives of the interpolant converge at fourth order in the node spacing
for smooth surfaces.  Near the domain edge the stencil shifts inward rather
than clamping: the in-cell offset then leaves [0, 1), but a Lagrange basis
interpolates exactly at any offset, so no accuracy is lost at the rim.
"""

from __future__ import annotations

import torch

from .model import GridSpec

__all__ = ["STENCIL", "interp2d"]

STENCIL = 6
_OFFSETS = tuple(range(-(STENCIL // 2 - 1), STENCIL // 2 + 1))  # (-2 .. 3)


def _basis(t: torch.Tensor) -> torch.Tensor:
    """Lagrange weights over the stencil offsets at parameter t, stacked last."""
    ws = []
    for k, ok in enumerate(_OFFSETS):
        num = torch.ones_like(t)
        den = 1.0
        for j, oj in enumerate(_OFFSETS):
            if j != k:
                num = num * (t - float(oj))
                den *= float(ok - oj)
        ws.append(num / den)
    return torch.stack(ws, dim=-1)


def _taps(q: torch.Tensor, spacing: float, n: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Stencil indices (..., STENCIL) and in-cell parameters for queries q."""
    lo = float(-_OFFSETS[0])
    hi = float(n - 1 - _OFFSETS[-1])
    s = q / spacing
    base = torch.clamp(s.detach().floor(), lo, hi)
    # The parameter keeps the autograd path; base is integer data.
    t = s - base
    offs = torch.tensor(_OFFSETS, device=q.device, dtype=base.dtype)
    idx = (base.unsqueeze(-1) + offs).long()
    return idx, t


def interp2d(u: torch.Tensor, xq: torch.Tensor, yq: torch.Tensor,
             grid: GridSpec) -> torch.Tensor:
    """Evaluate grid surfaces u (B, n, n) at per-row query points (B, K).

    Returns (B, K) values.  Row b of the queries addresses surface b, so a
    batch of independent samples interpolates in one call.
    """
    if grid.n < STENCIL:
        raise ValueError(f"mesh needs at least {STENCIL} nodes per axis")
    if u.ndim != 3 or u.shape[-2] != grid.n or u.shape[-1] != grid.n:
        raise ValueError(f"expected (B, {grid.n}, {grid.n}) surfaces, got {tuple(u.shape)}")
    if xq.shape != yq.shape or xq.ndim != 2 or xq.shape[0] != u.shape[0]:
        raise ValueError("query arrays must be (B, K) and match the batch")
    ix, tx = _taps(xq, grid.dx, grid.n)
    iy, ty = _taps(yq, grid.dy, grid.n)
    wx = _basis(tx.to(u.dtype))
    wy = _basis(ty.to(u.dtype))
    rows = torch.arange(u.shape[0], device=u.device)[:, None, None, None]
    patch = u[rows, ix[:, :, :, None], iy[:, :, None, :]]
    return torch.einsum("bka,bkc,bkac->bk", wx, wy, patch)
