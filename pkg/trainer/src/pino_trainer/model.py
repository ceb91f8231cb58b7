"""Fourier-operator network whose forward pass matches the inference package.

Conventions mirrored from the deployed weight consumer, so exported tensors
drop straight into its file format:

- input channels [u / cash, x / x_max, y / y_max, dt / maturity], float32;
- spectral truncation keeps ky in [0, modes) of the half spectrum and kx in
  (-modes, modes), with the negative-kx rows reusing the weight tensor at
  |kx|, so one complex (width, width, modes, modes) tensor per layer;
- each block is spectral + pointwise bypass, summed, then channel
  normalization and ReLU, with no ReLU after the last block;
- normalization at inference applies stored running statistics with eps 1e-5.

Training-mode normalization uses plain batch statistics and keeps the running
buffers out of the graph; the loop refreshes them explicitly, which keeps the
forward a pure function and safe under forward-mode differentiation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError
from .pricing import MarketParams

log = logging.getLogger(__name__)

IN_CHANNELS = 4
NORM_EPS = 1e-5
NORM_MOMENTUM = 0.1


@dataclass(frozen=True, slots=True)
class GridSpec:
    """Uniform tensor grid on [0, x_max] x [0, y_max] with n nodes per axis."""

    n: int
    x_max: float = 300.0
    y_max: float = 300.0

    def __post_init__(self) -> None:
        if self.n < 3:
            raise ConfigError("grid needs at least 3 nodes per axis")
        if self.x_max <= 0 or self.y_max <= 0:
            raise ConfigError("grid extents must be positive")

    @property
    def nodes_x(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.n)

    @property
    def nodes_y(self) -> np.ndarray:
        return np.linspace(0.0, self.y_max, self.n)

    @property
    def dx(self) -> float:
        return self.x_max / (self.n - 1)

    @property
    def dy(self) -> float:
        return self.y_max / (self.n - 1)


def encode_batch(u: torch.Tensor, dt: torch.Tensor, grid: GridSpec,
                 p: MarketParams) -> torch.Tensor:
    """Stack a (B, n, n) state batch and per-sample dt into (B, 4, n, n).

    Built from pure ops only (no in-place writes), so tangents attached to
    ``u`` or ``dt`` survive forward-mode differentiation.
    """
    if u.ndim != 3 or u.shape[1] != grid.n or u.shape[2] != grid.n:
        raise ConfigError("state batch shape does not match the grid")
    if dt.ndim != 1 or dt.shape[0] != u.shape[0]:
        raise ConfigError("dt must hold one value per batch sample")
    b, n = u.shape[0], grid.n
    # Channels follow the state dtype so double-precision oracle checks can
    # reuse the same encoding the float32 training path does.
    xs = torch.as_tensor(grid.nodes_x / grid.x_max, dtype=u.dtype)
    ys = torch.as_tensor(grid.nodes_y / grid.y_max, dtype=u.dtype)
    return torch.stack([
        u / p.cash,
        xs[None, :, None].expand(b, n, n),
        ys[None, None, :].expand(b, n, n),
        (dt.to(u.dtype) / p.maturity)[:, None, None].expand(b, n, n),
    ], dim=1)


class SpectralConv2d(torch.nn.Module):
    """Truncated Fourier convolution with shared +/-kx weights."""

    def __init__(self, width: int, modes: int) -> None:
        super().__init__()
        if width < 1 or modes < 1:
            raise ConfigError("width and modes must be positive")
        self.width = width
        self.modes = modes
        scale = 1.0 / (width * width)
        self.weight_re = torch.nn.Parameter(scale * torch.rand(width, width, modes, modes))
        self.weight_im = torch.nn.Parameter(scale * torch.rand(width, width, modes, modes))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        nx, ny = z.shape[-2], z.shape[-1]
        m = self.modes
        if m > min(nx, ny) // 2:
            raise ConfigError(f"modes={m} too large for a {nx}x{ny} grid")
        zf = torch.fft.rfft2(z)
        w = torch.complex(self.weight_re, self.weight_im)
        out = torch.zeros(z.shape[0], self.width, nx, ny // 2 + 1,
                          dtype=torch.complex64, device=z.device)
        out[:, :, :m, :m] = torch.einsum("bikl,iokl->bokl", zf[:, :, :m, :m], w)
        # rows nx-m+1 .. nx-1 are kx = -(m-1) .. -1; reuse weights at |kx|
        out[:, :, nx - m + 1:, :m] = torch.einsum(
            "bikl,iokl->bokl", zf[:, :, nx - m + 1:, :m], w[:, :, 1:m].flip(2))
        return torch.fft.irfft2(out, s=(nx, ny))


class ChannelNorm(torch.nn.Module):
    """Batch normalization with explicitly managed running statistics.

    forward() is a pure function: batch statistics in train mode, the stored
    running statistics in eval mode.  update_running() folds a batch into the
    buffers with the usual exponential moving average and must be called
    outside any autodiff transform.
    """

    def __init__(self, width: int) -> None:
        super().__init__()
        self.weight = torch.nn.Parameter(torch.ones(width))
        self.bias = torch.nn.Parameter(torch.zeros(width))
        self.register_buffer("running_mean", torch.zeros(width))
        self.register_buffer("running_var", torch.ones(width))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.training:
            mean = x.mean(dim=(0, 2, 3))
            var = x.var(dim=(0, 2, 3), unbiased=False)
        else:
            mean = self.running_mean
            var = self.running_var
        xn = (x - mean[:, None, None]) / torch.sqrt(var[:, None, None] + NORM_EPS)
        return xn * self.weight[:, None, None] + self.bias[:, None, None]

    @torch.no_grad()
    def update_running(self, x: torch.Tensor) -> None:
        mean = x.mean(dim=(0, 2, 3))
        var = x.var(dim=(0, 2, 3), unbiased=True)
        self.running_mean.mul_(1.0 - NORM_MOMENTUM).add_(NORM_MOMENTUM * mean)
        self.running_var.mul_(1.0 - NORM_MOMENTUM).add_(NORM_MOMENTUM * var)


class PinoNet(torch.nn.Module):
    """Lift -> spectral blocks -> projection; emits the normalized state."""

    def __init__(self, width: int, modes: int, layers: int) -> None:
        super().__init__()
        if layers < 1:
            raise ConfigError("at least one spectral layer is required")
        self.width = width
        self.modes = modes
        self.lift = torch.nn.Conv2d(IN_CHANNELS, width, kernel_size=1)
        self.spectral = torch.nn.ModuleList(SpectralConv2d(width, modes) for _ in range(layers))
        self.bypass = torch.nn.ModuleList(
            torch.nn.Conv2d(width, width, kernel_size=1) for _ in range(layers))
        self.norms = torch.nn.ModuleList(ChannelNorm(width) for _ in range(layers))
        self.proj = torch.nn.Conv2d(width, 1, kernel_size=1)
        n_params = sum(p.numel() for p in self.parameters())
        log.debug("network built: width=%d modes=%d layers=%d params=%d",
                  width, modes, layers, n_params)

    def forward(self, enc: torch.Tensor) -> torch.Tensor:
        if enc.ndim != 4 or enc.shape[1] != IN_CHANNELS:
            raise ConfigError(f"input must be (batch, {IN_CHANNELS}, nx, ny)")
        z = self.lift(enc)
        last = len(self.spectral) - 1
        for k, (spec, byp, norm) in enumerate(zip(self.spectral, self.bypass, self.norms)):
            h = norm(spec(z) + byp(z))
            z = torch.relu(h) if k != last else h
        return self.proj(z)[:, 0]

    @torch.no_grad()
    def refresh_running_stats(self, enc: torch.Tensor) -> None:
        """Replay a batch through the blocks, folding activations into the EMAs."""
        was_training = self.training
        self.train(True)
        z = self.lift(enc)
        last = len(self.spectral) - 1
        for k, (spec, byp, norm) in enumerate(zip(self.spectral, self.bypass, self.norms)):
            pre = spec(z) + byp(z)
            norm.update_running(pre)
            h = norm(pre)
            z = torch.relu(h) if k != last else h
        self.train(was_training)
