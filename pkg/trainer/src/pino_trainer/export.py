"""Binary export of trained weights and reference inference pairs.

Two little-endian containers, both verified after writing by re-parsing the
file with an independent reader and comparing bit for bit against the source
tensors:

* weights: magic ``FNO1``, header ``<5I`` (version, width, modes, layers,
  input channels), then raw float32 arrays in a fixed order (lift, per layer
  spectral real/imag, bypass, normalisation scale/shift/mean/var, projection).
* fixtures: magic ``FNOF``, header ``<5I`` (version, pairs, nx, ny,
  channels), then per pair one encoded input block (nx, ny, channels) and the
  matching normalised output surface (nx, ny).
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, ExportError
from .model import IN_CHANNELS, GridSpec, PinoNet, encode_batch
from .pricing import MarketParams, price_grid

__all__ = ["export_weights", "export_fixtures", "load_weights"]

log = logging.getLogger(__name__)

_WEIGHT_MAGIC = b"FNO1"
_FIXTURE_MAGIC = b"FNOF"
_VERSION = 1
_HEADER = struct.Struct("<5I")


def _f32(t: torch.Tensor) -> np.ndarray:
    return np.ascontiguousarray(t.detach().cpu().numpy().astype("<f4"))


def _weight_arrays(model: PinoNet) -> list[np.ndarray]:
    """Flatten the network into the serialised array order.

    1x1 convolutions store kernels as (out, in, 1, 1); the container wants
    (in, out) matrices, hence the transposes.
    """
    arrs = [_f32(model.lift.weight[:, :, 0, 0].T), _f32(model.lift.bias)]
    for spec, byp, norm in zip(model.spectral, model.bypass, model.norms):
        arrs.append(_f32(spec.weight_re))
        arrs.append(_f32(spec.weight_im))
        arrs.append(_f32(byp.weight[:, :, 0, 0].T))
        arrs.append(_f32(byp.bias))
        arrs.append(_f32(norm.weight))
        arrs.append(_f32(norm.bias))
        arrs.append(_f32(norm.running_mean))
        arrs.append(_f32(norm.running_var))
    arrs.append(_f32(model.proj.weight[:, :, 0, 0].T))
    arrs.append(_f32(model.proj.bias))
    return arrs


def _weight_shapes(width: int, modes: int, layers: int,
                   in_ch: int) -> list[tuple[int, ...]]:
    shapes: list[tuple[int, ...]] = [(in_ch, width), (width,)]
    per_layer = [(width, width, modes, modes), (width, width, modes, modes),
                 (width, width), (width,), (width,), (width,), (width,), (width,)]
    for _ in range(layers):
        shapes.extend(per_layer)
    shapes.extend([(width, 1), (1,)])
    return shapes


def _parse_weights(blob: bytes) -> tuple[tuple[int, int, int, int], list[np.ndarray]]:
    """Independent reader used to check what export_weights wrote."""
    if blob[:4] != _WEIGHT_MAGIC:
        raise ExportError("weight file magic mismatch")
    version, width, modes, layers, in_ch = _HEADER.unpack_from(blob, 4)
    if version != _VERSION:
        raise ExportError(f"unsupported weight version {version}")
    off = 4 + _HEADER.size
    arrs = []
    for shape in _weight_shapes(width, modes, layers, in_ch):
        count = int(np.prod(shape))
        if off + 4 * count > len(blob):
            raise ExportError("weight file truncated")
        arrs.append(np.frombuffer(blob, dtype="<f4", count=count,
                                  offset=off).reshape(shape))
        off += 4 * count
    if off != len(blob):
        raise ExportError("trailing bytes in weight file")
    return (width, modes, layers, in_ch), arrs


def export_weights(model: PinoNet, path: str | Path) -> Path:
    """Serialise the network, then re-read the file and verify every array."""
    path = Path(path)
    arrs = _weight_arrays(model)
    layers = len(model.spectral)
    header = _WEIGHT_MAGIC + _HEADER.pack(_VERSION, model.width, model.modes,
                                          layers, IN_CHANNELS)
    path.write_bytes(header + b"".join(a.tobytes() for a in arrs))

    dims, back = _parse_weights(path.read_bytes())
    if dims != (model.width, model.modes, layers, IN_CHANNELS):
        raise ExportError(f"weight header mismatch in {path}")
    for i, (a, b) in enumerate(zip(arrs, back)):
        if a.shape != b.shape or a.tobytes() != b.tobytes():
            raise ExportError(f"weight array {i} readback mismatch in {path}")
    log.info("wrote weights %s (%d arrays, %d bytes)", path, len(arrs),
             path.stat().st_size)
    return path


def load_weights(path: str | Path) -> PinoNet:
    """Rebuild a network from a serialised weight file.

    Inverse of export_weights up to float32 storage; used to resume from
    checkpoints and to score exported artifacts without the training state.
    """
    (width, modes, layers, in_ch), arrs = _parse_weights(Path(path).read_bytes())
    if in_ch != IN_CHANNELS:
        raise ExportError(f"weight file encodes {in_ch} input channels, expected {IN_CHANNELS}")
    model = PinoNet(width, modes, layers)
    it = iter(arrs)

    def put(t: torch.Tensor, a: np.ndarray) -> None:
        # frombuffer views are read-only; copy before handing to torch.
        with torch.no_grad():
            t.copy_(torch.as_tensor(np.array(a, copy=True), dtype=t.dtype))

    put(model.lift.weight[:, :, 0, 0], next(it).T)
    put(model.lift.bias, next(it))
    for spec, byp, norm in zip(model.spectral, model.bypass, model.norms):
        put(spec.weight_re, next(it))
        put(spec.weight_im, next(it))
        put(byp.weight[:, :, 0, 0], next(it).T)
        put(byp.bias, next(it))
        put(norm.weight, next(it))
        put(norm.bias, next(it))
        put(norm.running_mean, next(it))
        put(norm.running_var, next(it))
    put(model.proj.weight[:, :, 0, 0], next(it).T)
    put(model.proj.bias, next(it))
    model.eval()
    return model


def _parse_fixtures(blob: bytes) -> tuple[tuple[int, int, int, int],
                                          list[np.ndarray], list[np.ndarray]]:
    """Independent reader used to check what export_fixtures wrote."""
    if blob[:4] != _FIXTURE_MAGIC:
        raise ExportError("fixture file magic mismatch")
    version, n_pairs, nx, ny, ch = _HEADER.unpack_from(blob, 4)
    if version != _VERSION:
        raise ExportError(f"unsupported fixture version {version}")
    off = 4 + _HEADER.size
    inp_count = nx * ny * ch
    out_count = nx * ny
    inputs, outputs = [], []
    for _ in range(n_pairs):
        if off + 4 * (inp_count + out_count) > len(blob):
            raise ExportError("fixture file truncated")
        inputs.append(np.frombuffer(blob, dtype="<f4", count=inp_count,
                                    offset=off).reshape(nx, ny, ch))
        off += 4 * inp_count
        outputs.append(np.frombuffer(blob, dtype="<f4", count=out_count,
                                     offset=off).reshape(nx, ny))
        off += 4 * out_count
    if off != len(blob):
        raise ExportError("trailing bytes in fixture file")
    return (n_pairs, nx, ny, ch), inputs, outputs


def export_fixtures(model: PinoNet, grid: GridSpec, p: MarketParams,
                    path: str | Path, n_pairs: int = 48, seed: int = 2024,
                    dt_lo: float = 0.02, dt_hi: float = 0.12) -> Path:
    """Write reference input/output pairs from eval-mode inference.

    Inputs are stored as encoded four-channel blocks and outputs as the
    normalised network response, so a consumer can replay the pairs without
    the closed form or the encoder.  After writing, the file is re-read and
    every stored output is recomputed from the stored input; any bit
    difference raises.
    """
    if n_pairs < 1:
        raise ConfigError("need at least one fixture pair")
    if not 0.0 < dt_lo < dt_hi < p.maturity:
        raise ConfigError("fixture step range must satisfy 0 < dt_lo < dt_hi < maturity")
    rng = np.random.default_rng(seed)
    dts = rng.uniform(dt_lo, dt_hi, size=n_pairs)
    tau0 = rng.uniform(0.0, p.maturity - dts)

    model.eval()
    inputs: list[np.ndarray] = []
    outputs: list[np.ndarray] = []
    with torch.no_grad():
        for t0, d in zip(tau0, dts):
            u0 = price_grid(grid.nodes_x, grid.nodes_y, float(t0), p)
            enc = encode_batch(torch.as_tensor(u0, dtype=torch.float32)[None],
                               torch.tensor([float(d)], dtype=torch.float32),
                               grid, p)
            out = model(enc)
            inputs.append(np.ascontiguousarray(
                np.transpose(enc[0].numpy(), (1, 2, 0)).astype("<f4")))
            outputs.append(np.ascontiguousarray(out[0].numpy().astype("<f4")))

    n = grid.n
    header = _FIXTURE_MAGIC + _HEADER.pack(_VERSION, n_pairs, n, n, IN_CHANNELS)
    body = b"".join(i.tobytes() + o.tobytes() for i, o in zip(inputs, outputs))
    path = Path(path)
    path.write_bytes(header + body)

    dims, back_in, back_out = _parse_fixtures(path.read_bytes())
    if dims != (n_pairs, n, n, IN_CHANNELS):
        raise ExportError(f"fixture header mismatch in {path}")
    with torch.no_grad():
        for i, (bi, bo) in enumerate(zip(back_in, back_out)):
            enc = torch.as_tensor(np.transpose(bi, (2, 0, 1)).copy())[None]
            replay = model(enc)[0].numpy().astype("<f4")
            if bi.tobytes() != inputs[i].tobytes() or replay.tobytes() != bo.tobytes():
                raise ExportError(f"fixture pair {i} replay mismatch in {path}")
    log.info("wrote fixtures %s (%d pairs at %dx%d)", path, n_pairs, n, n)
    return path
