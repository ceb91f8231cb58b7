"""Grids, fields, model parameters, norms, and field serialization.

Everything downstream (stencils, propagators, the Parareal loop) works in
terms of the types defined here.  A ``Field`` is a full nx-by-ny nodal array
tagged with an explicit precision; norms are always accumulated in double
so that error diagnostics are comparable across precisions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Final, Literal

import numpy as np

from .errors import ValidationError

Precision = Literal["single", "double"]

DTYPES: Final[dict[str, np.dtype]] = {
    "single": np.dtype("<f4"),
    "double": np.dtype("<f8"),
}

_PRECISION_BYTE: Final[dict[str, bytes]] = {"single": b"s", "double": b"d"}
_BYTE_PRECISION: Final[dict[bytes, str]] = {v: k for k, v in _PRECISION_BYTE.items()}


@dataclass(frozen=True, slots=True)
class Grid2D:
    """Uniform tensor grid on [0, x_max] x [0, y_max].

    Node i runs along the first asset axis, node j along the second;
    spacing is dx = x_max / (nx - 1).  Boundary nodes are i in {0, nx-1}
    or j in {0, ny-1}; everything else is interior.
    """

    nx: int
    ny: int
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if self.nx < 3 or self.ny < 3:
            raise ValidationError(f"grid needs at least 3 nodes per axis, got {self.nx}x{self.ny}")
        if not (self.x_max > 0 and self.y_max > 0):
            raise ValidationError("grid extents must be positive")

    @property
    def dx(self) -> float:
        return self.x_max / (self.nx - 1)

    @property
    def dy(self) -> float:
        return self.y_max / (self.ny - 1)

    def x_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.nx)

    def y_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.y_max, self.ny)

    @classmethod
    def benchmark(cls) -> "Grid2D":
        """301x301 grid on [0, 300]^2 (unit spacing)."""
        return cls(nx=301, ny=301, x_max=300.0, y_max=300.0)


@dataclass(frozen=True, slots=True)
class ModelParams:
    """Two-asset lognormal model with a cash-or-nothing payoff.

    sigma1, sigma2 : volatilities of the two assets
    rho            : instantaneous correlation
    r              : risk-free rate
    s1, s2         : payoff thresholds (strike levels)
    cash           : payoff amount when both assets finish above threshold
    maturity       : time to expiry T
    """

    sigma1: float
    sigma2: float
    rho: float
    r: float
    s1: float
    s2: float
    cash: float = 1.0
    maturity: float = 1.0

    def __post_init__(self) -> None:
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValidationError("volatilities must be non-negative")
        if not -1.0 < self.rho < 1.0:
            raise ValidationError(f"correlation must lie in (-1, 1), got {self.rho}")
        if self.r < 0:
            raise ValidationError("interest rate must be non-negative")
        if not (self.s1 > 0 and self.s2 > 0):
            raise ValidationError("payoff thresholds must be positive")
        if not self.cash > 0:
            raise ValidationError("cash amount must be positive")
        if not self.maturity > 0:
            raise ValidationError("maturity must be positive")

    @classmethod
    def benchmark(cls) -> "ModelParams":
        """Reference parameter set used throughout the test problems."""
        return cls(sigma1=0.3, sigma2=0.3, rho=0.5, r=1.0, s1=100.0, s2=100.0,
                   cash=1.0, maturity=1.0)


@dataclass(frozen=True, slots=True)
class Field:
    """Nodal values on a Grid2D with an explicit precision tag."""

    grid: Grid2D
    values: np.ndarray
    precision: Precision

    def __post_init__(self) -> None:
        if self.precision not in DTYPES:
            raise ValidationError(f"unknown precision {self.precision!r}")
        if self.values.shape != (self.grid.nx, self.grid.ny):
            raise ValidationError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.ny})")
        if self.values.dtype != DTYPES[self.precision]:
            raise ValidationError(
                f"dtype {self.values.dtype} inconsistent with precision {self.precision!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("field contains non-finite values")

    @classmethod
    def from_array(cls, grid: Grid2D, values: np.ndarray,
                   precision: Precision = "double") -> "Field":
        return cls(grid, np.ascontiguousarray(values, dtype=DTYPES[precision]), precision)

    @classmethod
    def zeros(cls, grid: Grid2D, precision: Precision = "double") -> "Field":
        return cls(grid, np.zeros((grid.nx, grid.ny), dtype=DTYPES[precision]), precision)


def cast_precision(field: Field, precision: Precision) -> Field:
    """Return the field converted to the requested precision (no-op if equal)."""
    if precision == field.precision:
        return field
    return Field.from_array(field.grid, field.values, precision)


def l2_norm(field: Field) -> float:
    """Discrete L2 norm over interior nodes: sqrt(sum u^2 * dx * dy).

    Accumulated in double regardless of the field's storage precision so
    that errors of single- and double-precision fields are comparable.
    """
    v = field.values[1:-1, 1:-1].astype(np.float64, copy=False).ravel()
    return float(np.sqrt(np.dot(v, v) * field.grid.dx * field.grid.dy))


def relative_error(field: Field, reference: Field) -> float:
    """|| field - reference || / || reference || on the shared grid."""
    if field.grid != reference.grid:
        raise ValidationError("fields live on different grids")
    ref_norm = l2_norm(reference)
    if ref_norm == 0.0:
        raise ValidationError("reference field has zero interior norm")
    diff = field.values.astype(np.float64) - reference.values.astype(np.float64)
    v = diff[1:-1, 1:-1].ravel()
    return float(np.sqrt(np.dot(v, v) * field.grid.dx * field.grid.dy) / ref_norm)


def write_field_binary(field: Field, path: str) -> None:
    """Write a field as little-endian binary: nx, ny (int64), precision byte, values."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qq", field.grid.nx, field.grid.ny))
        fh.write(_PRECISION_BYTE[field.precision])
        fh.write(np.ascontiguousarray(field.values, dtype=DTYPES[field.precision]).tobytes())


def read_field_binary(path: str, grid: Grid2D) -> Field:
    """Read a field written by write_field_binary; shape must match the grid."""
    with open(path, "rb") as fh:
        nx, ny = struct.unpack("<qq", fh.read(16))
        tag = fh.read(1)
        if tag not in _BYTE_PRECISION:
            raise ValidationError(f"unknown precision byte {tag!r}")
        precision = _BYTE_PRECISION[tag]
        if (nx, ny) != (grid.nx, grid.ny):
            raise ValidationError(f"file is {nx}x{ny}, grid is {grid.nx}x{grid.ny}")
        data = np.frombuffer(fh.read(), dtype=DTYPES[precision]).reshape(nx, ny)
    return Field(grid, data.copy(), precision)  # type: ignore[arg-type]


def write_field_csv(field: Field, path: str) -> None:
    """Write (i, j, x, y, u) rows, one per node, in row-major order."""
    x = field.grid.x_nodes()
    y = field.grid.y_nodes()
    with open(path, "w") as fh:
        fh.write("i,j,x,y,u\n")
        for i in range(field.grid.nx):
            xi = x[i]
            row = field.values[i]
            for j in range(field.grid.ny):
                fh.write(f"{i},{j},{xi:.17g},{y[j]:.17g},{row[j]:.17g}\n")
