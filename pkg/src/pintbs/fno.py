"""Fourier neural operator inference for the learned coarse propagator.

Pure numpy forward pass in single precision.  The architecture is a lifting
layer (pointwise affine, in_channels -> width), `layers` spectral blocks
(truncated Fourier convolution plus a pointwise bypass, summed, then frozen
batch-norm and ReLU; no ReLU after the last block), and a pointwise
projection back to one channel.

Spectral truncation keeps ky in [0, modes) of the half spectrum and kx in
(-modes, modes); the negative-kx rows reuse the same weight tensor at |kx|
(the conjugate-symmetric partner implied by a real-input transform), so one
complex weight tensor of shape (width, width, modes, modes) fully determines
the convolution.  Layout, byte order, and tensor order of the weight file are
documented in docs/weight_format.md; the trainer mirrors them exactly.

Because only (2*modes-1) x modes Fourier coefficients survive truncation,
the transforms are evaluated as dense contractions against precomputed DFT
basis matrices instead of full-grid FFTs: truncate first, then every stage is
one large real GEMM and the per-layer cost stays well below an implicit
solve.  The result is identical (to single-precision rounding) to the
rfft2 -> truncate -> zero-pad -> irfft2 formulation, which the test suite
keeps as an independent reference.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Final

import numpy as np

from .core import Field, Grid2D, ModelParams
from .errors import MissingArtifactError, ValidationError, WeightFormatError

WEIGHT_MAGIC: Final[bytes] = b"FNO1"
FIXTURE_MAGIC: Final[bytes] = b"FNOF"
FORMAT_VERSION: Final[int] = 1
BN_EPS: Final[float] = 1e-5
IN_CHANNELS: Final[int] = 4


@dataclass(frozen=True, slots=True)
class FnoLayer:
    """One spectral block: Fourier weights, pointwise bypass, batch-norm stats.

    The stacked weight views and folded batch-norm affine are derived in
    __post_init__ so the forward pass runs straight GEMMs.
    """

    spectral: np.ndarray   # complex64 (width, width, modes, modes), axes (in, out, kx, ky)
    bypass_w: np.ndarray   # float32 (width, width), axes (in, out)
    bypass_b: np.ndarray   # float32 (width,)
    bn_scale: np.ndarray   # float32 (width,)
    bn_shift: np.ndarray   # float32 (width,)
    bn_mean: np.ndarray    # float32 (width,)
    bn_var: np.ndarray     # float32 (width,)
    # derived: spectral stacked over the (2*modes-1)*modes retained modes,
    # rows 0..m-1 at kx, rows m..2m-2 at |kx| = m-1..1; real/imag split
    stacked_r: np.ndarray = field(init=False, repr=False, compare=False)
    stacked_i: np.ndarray = field(init=False, repr=False, compare=False)
    bn_a: np.ndarray = field(init=False, repr=False, compare=False)
    bn_b: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        stacked_r, stacked_i = _stack_spectral(self.spectral)
        object.__setattr__(self, "stacked_r", stacked_r)
        object.__setattr__(self, "stacked_i", stacked_i)
        a = self.bn_scale / np.sqrt(self.bn_var + np.float32(BN_EPS))
        object.__setattr__(self, "bn_a", a.astype(np.float32))
        object.__setattr__(self, "bn_b",
                           (self.bn_shift - self.bn_mean * a).astype(np.float32))


@dataclass(frozen=True, slots=True)
class FnoModel:
    width: int
    modes: int
    layers: tuple[FnoLayer, ...]
    lift_w: np.ndarray     # float32 (in_channels, width)
    lift_b: np.ndarray     # float32 (width,)
    proj_w: np.ndarray     # float32 (width, 1)
    proj_b: np.ndarray     # float32 (1,)
    in_channels: int = IN_CHANNELS

    def __post_init__(self) -> None:
        if self.width < 1 or self.modes < 1:
            raise ValidationError("width and modes must be positive")
        if len(self.layers) < 1:
            raise ValidationError("model needs at least one spectral layer")
        shapes = {
            "lift_w": (self.in_channels, self.width),
            "lift_b": (self.width,),
            "proj_w": (self.width, 1),
            "proj_b": (1,),
        }
        for name, want in shapes.items():
            arr = getattr(self, name)
            if arr.shape != want:
                raise ValidationError(f"{name} has shape {arr.shape}, expected {want}")
        for k, layer in enumerate(self.layers):
            if layer.spectral.shape != (self.width, self.width, self.modes, self.modes):
                raise ValidationError(f"layer {k} spectral weight shape mismatch")
            if not np.all(layer.bn_var > 0):
                raise ValidationError(f"layer {k} running variance must be positive")


def encode_input(u: Field, grid: Grid2D, dt: float, p: ModelParams) -> np.ndarray:
    """Stack normalized channels [u/cash, x/x_max, y/y_max, dt/T], float32."""
    if u.grid != grid:
        raise ValidationError("field grid does not match the requested grid")
    if dt < 0:
        raise ValidationError("dt must be non-negative")
    out = np.empty((grid.nx, grid.ny, IN_CHANNELS), dtype=np.float32)
    out[:, :, 0] = u.values / p.cash
    out[:, :, 1] = (grid.x_nodes() / grid.x_max)[:, None]
    out[:, :, 2] = (grid.y_nodes() / grid.y_max)[None, :]
    out[:, :, 3] = dt / p.maturity
    return out


@dataclass(frozen=True, slots=True)
class _SpectralBasis:
    """Precomputed DFT basis columns for one (nx, ny, modes) combination."""

    fx_cos: np.ndarray    # (nx, 2m-1)
    fx_msin: np.ndarray   # (nx, 2m-1), negated sine
    ey_cos: np.ndarray    # (ny, m)
    ey_sin: np.ndarray    # (ny, m)
    syn_cos: np.ndarray   # (m, ny), carries the c_k/(nx*ny) inverse weights
    syn_sin: np.ndarray   # (m, ny)


_BASIS_CACHE: dict[tuple[int, int, int], _SpectralBasis] = {}


def _get_basis(nx: int, ny: int, modes: int) -> _SpectralBasis:
    key = (nx, ny, modes)
    basis = _BASIS_CACHE.get(key)
    if basis is None:
        kx = np.concatenate([np.arange(modes), np.arange(nx - modes + 1, nx)])
        theta = 2.0 * np.pi * np.outer(np.arange(nx), kx.astype(np.float64)) / nx
        phi = 2.0 * np.pi * np.outer(np.arange(ny), np.arange(modes, dtype=np.float64)) / ny
        # inverse weights: conjugate-symmetric partners double every ky > 0
        c = np.full(modes, 2.0)
        c[0] = 1.0
        scale = (c / (nx * ny))[:, None]
        basis = _SpectralBasis(
            fx_cos=np.cos(theta).astype(np.float32),
            fx_msin=(-np.sin(theta)).astype(np.float32),
            ey_cos=np.cos(phi).astype(np.float32),
            ey_sin=np.sin(phi).astype(np.float32),
            syn_cos=(scale * np.cos(phi.T)).astype(np.float32),
            syn_sin=(scale * np.sin(phi.T)).astype(np.float32),
        )
        _BASIS_CACHE[key] = basis  # benign if two threads race; builds agree
    return basis


def _stack_spectral(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stack (in, out, kx, ky) weights over retained modes, real/imag split."""
    m = weights.shape[2]
    pos = weights.transpose(2, 3, 0, 1)
    neg = weights[:, :, m - 1:0:-1, :].transpose(2, 3, 0, 1)
    stacked = np.concatenate([pos, neg], axis=0).reshape(-1, *pos.shape[2:])
    return (np.ascontiguousarray(stacked.real, dtype=np.float32),
            np.ascontiguousarray(stacked.imag, dtype=np.float32))


def _spectral_core(z: np.ndarray, stacked_r: np.ndarray, stacked_i: np.ndarray,
                   basis: _SpectralBasis) -> np.ndarray:
    """Truncated Fourier convolution on a channels-first (w, ny, nx) stack.

    Every stage is a single real GEMM; small intermediates are transposed,
    the full-grid arrays never are.
    """
    w, ny, nx = z.shape
    k_rows, m = basis.fx_cos.shape[1], basis.ey_cos.shape[1]
    z2 = z.reshape(w * ny, nx)
    zr = z2 @ basis.fx_cos                                  # (w*ny, 2m-1)
    zi = z2 @ basis.fx_msin
    zr = np.ascontiguousarray(zr.reshape(w, ny, k_rows).transpose(0, 2, 1))
    zi = np.ascontiguousarray(zi.reshape(w, ny, k_rows).transpose(0, 2, 1))
    zr = zr.reshape(w * k_rows, ny)
    zi = zi.reshape(w * k_rows, ny)
    fr = zr @ basis.ey_cos + zi @ basis.ey_sin              # (w*(2m-1), m)
    fi = zi @ basis.ey_cos - zr @ basis.ey_sin
    fr = np.ascontiguousarray(fr.reshape(w, k_rows, m).transpose(1, 2, 0)).reshape(-1, 1, w)
    fi = np.ascontiguousarray(fi.reshape(w, k_rows, m).transpose(1, 2, 0)).reshape(-1, 1, w)
    o_r = (fr @ stacked_r - fi @ stacked_i).reshape(k_rows, m, w)
    o_i = (fr @ stacked_i + fi @ stacked_r).reshape(k_rows, m, w)
    o_r = np.ascontiguousarray(o_r.transpose(0, 2, 1)).reshape(k_rows * w, m)
    o_i = np.ascontiguousarray(o_i.transpose(0, 2, 1)).reshape(k_rows * w, m)
    sr = o_r @ basis.syn_cos - o_i @ basis.syn_sin          # ((2m-1)*w, ny)
    si = o_r @ basis.syn_sin + o_i @ basis.syn_cos
    sr = np.ascontiguousarray(sr.reshape(k_rows, w, ny).transpose(1, 2, 0)).reshape(w * ny, k_rows)
    si = np.ascontiguousarray(si.reshape(k_rows, w, ny).transpose(1, 2, 0)).reshape(w * ny, k_rows)
    out = sr @ basis.fx_cos.T
    out += si @ basis.fx_msin.T
    return out.reshape(w, ny, nx)


def spectral_conv(z: np.ndarray, weights: np.ndarray, modes: int) -> np.ndarray:
    """Truncated Fourier convolution of a (nx, ny, width) single-precision stack.

    Equivalent to rfft2 -> keep the (2*modes-1) x modes low-frequency block ->
    complex channel mixing -> zero-pad -> irfft2, evaluated by dense partial
    transforms.
    """
    nx, ny, width = z.shape
    if modes < 1:
        raise ValidationError("modes must be positive")
    if modes > min(nx, ny) // 2:
        raise ValidationError(f"modes={modes} too large for a {nx}x{ny} grid")
    weights = np.asarray(weights)
    if weights.shape != (width, width, modes, modes):
        raise ValidationError(
            f"weights must be ({width}, {width}, {modes}, {modes}), got {weights.shape}")
    stacked_r, stacked_i = _stack_spectral(weights)
    zz = np.ascontiguousarray(z.transpose(2, 1, 0), dtype=np.float32)
    out = _spectral_core(zz, stacked_r, stacked_i, _get_basis(nx, ny, modes))
    return np.ascontiguousarray(out.transpose(2, 1, 0), dtype=np.float32)


def fno_forward(model: FnoModel, inp: np.ndarray) -> np.ndarray:
    """Forward pass: (nx, ny, in_channels) float32 -> (nx, ny) float32."""
    if inp.ndim != 3 or inp.shape[2] != model.in_channels:
        raise ValidationError(f"input must be (nx, ny, {model.in_channels})")
    nx, ny, _ = inp.shape
    if model.modes > min(nx, ny) // 2:
        raise ValidationError(f"modes={model.modes} too large for a {nx}x{ny} grid")
    basis = _get_basis(nx, ny, model.modes)
    x = np.ascontiguousarray(inp.transpose(2, 1, 0), dtype=np.float32)
    z = model.lift_w.T @ x.reshape(model.in_channels, -1)
    z += model.lift_b[:, None]
    last = len(model.layers) - 1
    for k, layer in enumerate(model.layers):
        s = _spectral_core(np.ascontiguousarray(z.reshape(model.width, ny, nx)),
                           layer.stacked_r, layer.stacked_i, basis)
        h = s.reshape(model.width, -1)
        h += layer.bypass_w.T @ z
        h += layer.bypass_b[:, None]
        h *= layer.bn_a[:, None]
        h += layer.bn_b[:, None]
        if k != last:
            np.maximum(h, 0.0, out=h)
        z = h
    out = model.proj_w.T @ z
    out += model.proj_b[:, None]
    return np.ascontiguousarray(out.reshape(ny, nx).T, dtype=np.float32)


def fno_coarse_advance(model: FnoModel, u: Field, t_from: float, t_to: float,
                       p: ModelParams) -> Field:
    """Advance a field one slice with the learned operator (single precision)."""
    if not t_to > t_from:
        raise ValidationError("t_to must exceed t_from")
    enc = encode_input(u, u.grid, t_to - t_from, p)
    out = fno_forward(model, enc) * np.float32(p.cash)
    return Field(u.grid, out, "single")


# ---------------------------------------------------------------------------
# binary formats (shared with the trainer; see docs/weight_format.md)

def _write_array(fh: BinaryIO, arr: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_array(fh: BinaryIO, shape: tuple[int, ...], what: str) -> np.ndarray:
    count = int(np.prod(shape))
    raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise WeightFormatError(f"truncated file while reading {what}")
    arr = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if not np.all(np.isfinite(arr)):
        raise WeightFormatError(f"non-finite values in {what}")
    return arr


def save_weights(model: FnoModel, path: str) -> None:
    """Write the FNO1 container (little-endian, single precision payload)."""
    with open(path, "wb") as fh:
        fh.write(WEIGHT_MAGIC)
        fh.write(struct.pack("<5I", FORMAT_VERSION, model.width, model.modes,
                             len(model.layers), model.in_channels))
        _write_array(fh, model.lift_w)
        _write_array(fh, model.lift_b)
        for layer in model.layers:
            _write_array(fh, layer.spectral.real)
            _write_array(fh, layer.spectral.imag)
            _write_array(fh, layer.bypass_w)
            _write_array(fh, layer.bypass_b)
            _write_array(fh, layer.bn_scale)
            _write_array(fh, layer.bn_shift)
            _write_array(fh, layer.bn_mean)
            _write_array(fh, layer.bn_var)
        _write_array(fh, model.proj_w)
        _write_array(fh, model.proj_b)


def load_weights(path: str) -> FnoModel:
    """Read and validate an FNO1 weight file."""
    try:
        fh = open(path, "rb")
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"weight file not found: {path}") from exc
    with fh:
        if fh.read(4) != WEIGHT_MAGIC:
            raise WeightFormatError(f"{path} is not an FNO1 weight file")
        version, width, modes, n_layers, in_channels = struct.unpack("<5I", fh.read(20))
        if version != FORMAT_VERSION:
            raise WeightFormatError(f"unsupported weight format version {version}")
        if width < 1 or modes < 1 or n_layers < 1:
            raise WeightFormatError("degenerate header in weight file")
        lift_w = _read_array(fh, (in_channels, width), "lift_w")
        lift_b = _read_array(fh, (width,), "lift_b")
        layers = []
        for k in range(n_layers):
            sr = _read_array(fh, (width, width, modes, modes), f"layer {k} spectral real")
            si = _read_array(fh, (width, width, modes, modes), f"layer {k} spectral imag")
            bw = _read_array(fh, (width, width), f"layer {k} bypass weight")
            bb = _read_array(fh, (width,), f"layer {k} bypass bias")
            g = _read_array(fh, (width,), f"layer {k} bn scale")
            s = _read_array(fh, (width,), f"layer {k} bn shift")
            m = _read_array(fh, (width,), f"layer {k} bn mean")
            v = _read_array(fh, (width,), f"layer {k} bn var")
            if not np.all(v > 0):
                raise WeightFormatError(f"layer {k} running variance must be positive")
            layers.append(FnoLayer((sr + 1j * si).astype(np.complex64),
                                   bw, bb, g, s, m, v))
        proj_w = _read_array(fh, (width, 1), "proj_w")
        proj_b = _read_array(fh, (1,), "proj_b")
        if fh.read(1) != b"":
            raise WeightFormatError(f"{path} has trailing bytes beyond the declared tensors")
    return FnoModel(width=width, modes=modes, layers=tuple(layers),
                    lift_w=lift_w, lift_b=lift_b, proj_w=proj_w, proj_b=proj_b,
                    in_channels=in_channels)


def save_fixtures(pairs: list[tuple[np.ndarray, np.ndarray]], path: str) -> None:
    """Write FNOF parity fixtures: (encoded input, expected output) pairs."""
    if not pairs:
        raise ValidationError("fixture file needs at least one pair")
    nx, ny, ch = pairs[0][0].shape
    with open(path, "wb") as fh:
        fh.write(FIXTURE_MAGIC)
        fh.write(struct.pack("<5I", FORMAT_VERSION, len(pairs), nx, ny, ch))
        for inp, out in pairs:
            if inp.shape != (nx, ny, ch) or out.shape != (nx, ny):
                raise ValidationError("inconsistent fixture shapes")
            _write_array(fh, inp)
            _write_array(fh, out)


def load_fixtures(path: str) -> list[tuple[np.ndarray, np.ndarray]]:
    """Read an FNOF fixture file written by this package or the trainer."""
    try:
        fh = open(path, "rb")
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"fixture file not found: {path}") from exc
    with fh:
        if fh.read(4) != FIXTURE_MAGIC:
            raise WeightFormatError(f"{path} is not an FNOF fixture file")
        version, n_pairs, nx, ny, ch = struct.unpack("<5I", fh.read(20))
        if version != FORMAT_VERSION:
            raise WeightFormatError(f"unsupported fixture format version {version}")
        pairs = []
        for k in range(n_pairs):
            inp = _read_array(fh, (nx, ny, ch), f"fixture {k} input")
            out = _read_array(fh, (nx, ny), f"fixture {k} output")
            pairs.append((inp, out))
        if fh.read(1) != b"":
            raise WeightFormatError(f"{path} has trailing bytes beyond the declared pairs")
    return pairs
