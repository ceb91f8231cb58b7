import numpy as np
import pytest

from pintbs.core import (Field, Grid2D, ModelParams, cast_precision, l2_norm,
                         read_field_binary, relative_error, write_field_binary,
                         write_field_csv)
from pintbs.errors import ValidationError


# ---------------------------------------------------------------------------
# types and validation

def test_grid_spacing_and_nodes():
    g = Grid2D(nx=301, ny=301, x_max=300.0, y_max=300.0)
    assert g.dx == 1.0 and g.dy == 1.0
    # node coordinates must be exactly i * dx
    assert np.array_equal(g.x_nodes(), np.arange(301, dtype=np.float64))
    assert g.x_nodes()[0] == 0.0 and g.x_nodes()[-1] == 300.0


def test_grid_benchmark_constructor():
    g = Grid2D.benchmark()
    assert (g.nx, g.ny, g.x_max, g.y_max) == (301, 301, 300.0, 300.0)


@pytest.mark.parametrize("kwargs", [
    dict(nx=2, ny=21, x_max=300.0, y_max=300.0),
    dict(nx=21, ny=1, x_max=300.0, y_max=300.0),
    dict(nx=21, ny=21, x_max=0.0, y_max=300.0),
    dict(nx=21, ny=21, x_max=300.0, y_max=-1.0),
])
def test_grid_rejects_degenerate(kwargs):
    with pytest.raises(ValidationError):
        Grid2D(**kwargs)


def test_field_validation(small_grid):
    with pytest.raises(ValidationError):
        Field(small_grid, np.zeros((5, 5)), "double")
    with pytest.raises(ValidationError):
        Field(small_grid, np.zeros((21, 21), dtype=np.float32), "double")
    bad = np.zeros((21, 21))
    bad[3, 3] = np.nan
    with pytest.raises(ValidationError):
        Field(small_grid, bad, "double")
    with pytest.raises(ValidationError):
        Field(small_grid, np.zeros((21, 21)), "half")


def test_model_params_validation():
    base = dict(sigma1=0.3, sigma2=0.3, rho=0.5, r=1.0, s1=100.0, s2=100.0)
    ModelParams(**base)
    ModelParams(**{**base, "sigma1": 0.0})          # zero volatility is legal
    for bad in [{"sigma1": -0.1}, {"rho": 1.0}, {"rho": -1.5}, {"r": -1.0},
                {"s1": 0.0}, {"cash": 0.0}, {"maturity": 0.0}]:
        with pytest.raises(ValidationError):
            ModelParams(**{**base, **bad})


def test_model_params_benchmark():
    p = ModelParams.benchmark()
    assert (p.sigma1, p.sigma2, p.rho, p.r) == (0.3, 0.3, 0.5, 1.0)
    assert (p.s1, p.s2, p.cash, p.maturity) == (100.0, 100.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# norms

def test_l2_norm_zero_field(small_grid):
    assert l2_norm(Field.zeros(small_grid)) == 0.0


def test_l2_norm_constant_field_interior_only():
    g = Grid2D.benchmark()
    f = Field.from_array(g, np.ones((g.nx, g.ny)))
    # 299 x 299 interior nodes of a unit field at unit spacing
    assert l2_norm(f) == pytest.approx(299.0, rel=1e-14)


def test_l2_norm_matches_direct_summation(small_grid, field_factory):
    f = field_factory(small_grid)
    direct = np.sqrt(np.sum(f.values[1:-1, 1:-1] ** 2)
                     * small_grid.dx * small_grid.dy)
    assert l2_norm(f) == pytest.approx(direct, rel=1e-12)


def test_l2_norm_homogeneity(small_grid, field_factory):
    f = field_factory(small_grid)
    for alpha in (-3.7, 0.0, 0.25, 1e6):
        scaled = Field.from_array(small_grid, alpha * f.values)
        assert l2_norm(scaled) == pytest.approx(abs(alpha) * l2_norm(f), rel=1e-13)


def test_l2_norm_triangle_inequality(small_grid, field_factory):
    for _ in range(5):
        a = field_factory(small_grid)
        b = field_factory(small_grid)
        s = Field.from_array(small_grid, a.values + b.values)
        assert l2_norm(s) <= l2_norm(a) + l2_norm(b) + 1e-12


def test_relative_error_basics(small_grid, field_factory):
    ref = field_factory(small_grid)
    assert relative_error(ref, ref) == 0.0
    doubled = Field.from_array(small_grid, 2.0 * ref.values)
    assert relative_error(doubled, ref) == pytest.approx(1.0, rel=1e-13)


def test_relative_error_single_node_bump(small_grid, field_factory):
    ref = field_factory(small_grid)
    eps = 1e-3
    bumped = ref.values.copy()
    bumped[7, 9] += eps
    err = relative_error(Field.from_array(small_grid, bumped), ref)
    node_weight = np.sqrt(small_grid.dx * small_grid.dy)
    assert err == pytest.approx(eps * node_weight / l2_norm(ref), rel=1e-12)


def test_relative_error_scale_invariance(small_grid, field_factory):
    f = field_factory(small_grid)
    ref = field_factory(small_grid)
    base = relative_error(f, ref)
    scaled = relative_error(Field.from_array(small_grid, 7.5 * f.values),
                            Field.from_array(small_grid, 7.5 * ref.values))
    assert scaled == pytest.approx(base, rel=1e-12)


def test_relative_error_guards(small_grid, field_factory):
    f = field_factory(small_grid)
    other = Grid2D(nx=23, ny=21, x_max=300.0, y_max=300.0)
    with pytest.raises(ValidationError):
        relative_error(f, Field.zeros(other))
    with pytest.raises(ValidationError):
        relative_error(f, Field.zeros(small_grid))


# ---------------------------------------------------------------------------
# precision casts

def test_cast_precision_round_trip_bound(small_grid, field_factory):
    f = field_factory(small_grid)
    back = cast_precision(cast_precision(f, "single"), "double")
    rel = np.abs(back.values - f.values) / np.abs(f.values)
    assert np.max(rel) <= 6e-8


def test_cast_precision_exact_values_unchanged(small_grid):
    vals = np.arange(21 * 21, dtype=np.float64).reshape(21, 21)  # all exact in f32
    f = Field.from_array(small_grid, vals)
    back = cast_precision(cast_precision(f, "single"), "double")
    assert np.array_equal(back.values, vals)


def test_cast_precision_below_single_ulp(small_grid):
    vals = np.full((21, 21), 1.0 + 2.0 ** -30)
    single = cast_precision(Field.from_array(small_grid, vals), "single")
    assert np.all(single.values == np.float32(1.0))


def test_cast_precision_noop_returns_same_field(small_grid, field_factory):
    f = field_factory(small_grid)
    assert cast_precision(f, "double") is f


# ---------------------------------------------------------------------------
# serialization

@pytest.mark.parametrize("precision", ["single", "double"])
def test_field_binary_round_trip(tmp_path, small_grid, field_factory, precision):
    f = field_factory(small_grid, precision)
    path = tmp_path / "field.bin"
    write_field_binary(f, str(path))
    back = read_field_binary(str(path), small_grid)
    assert back.precision == precision
    assert np.array_equal(back.values, f.values)


def test_field_binary_grid_mismatch(tmp_path, small_grid, field_factory):
    f = field_factory(small_grid)
    path = tmp_path / "field.bin"
    write_field_binary(f, str(path))
    other = Grid2D(nx=23, ny=21, x_max=300.0, y_max=300.0)
    with pytest.raises(ValidationError):
        read_field_binary(str(path), other)


def test_field_csv_layout(tmp_path, small_grid, field_factory):
    f = field_factory(small_grid)
    path = tmp_path / "field.csv"
    write_field_csv(f, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "i,j,x,y,u"
    assert len(lines) == 1 + small_grid.nx * small_grid.ny
    i, j, x, y, u = lines[1 + 3 * small_grid.ny + 5].split(",")
    assert (int(i), int(j)) == (3, 5)
    assert float(x) == small_grid.x_nodes()[3]
    assert float(u) == pytest.approx(f.values[3, 5], rel=1e-16)
