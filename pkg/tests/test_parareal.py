"""Parareal iteration tests: partition, exactness, convergence, studies."""

import numpy as np
import pytest

from pintbs.analytic import analytic_field
from pintbs.core import Grid2D, ModelParams
from pintbs.errors import ValidationError
from pintbs.parareal import (
    TimePartition,
    convergence_study,
    exactness_defect,
    parameter_sweep,
    parareal_run,
    serial_fine_reference,
)
from pintbs.propagators import PropagatorSpec, advance


@pytest.fixture(scope="module")
def partition() -> TimePartition:
    return TimePartition(t_end=0.5, p_time=5)


@pytest.fixture(scope="module")
def setup(partition):
    """Shared 21x21 initial state and serial fine reference."""
    p = ModelParams.benchmark()
    grid = Grid2D(nx=21, ny=21, x_max=300.0, y_max=300.0)
    u0 = analytic_field(grid, 0.0, p)
    fine = PropagatorSpec.fine()
    reference = serial_fine_reference(u0, partition, fine, p)
    return p, grid, u0, fine, reference


def test_partition_boundaries():
    part = TimePartition(t_end=1.0, p_time=10)
    b = part.boundaries()
    assert b.shape == (11,)
    assert b[0] == 0.0
    assert b[-1] == 1.0
    np.testing.assert_allclose(np.diff(b), part.slice_length, rtol=1e-15)
    offset = TimePartition(t_end=0.9, p_time=3, t0=0.3)
    np.testing.assert_allclose(offset.boundaries(), [0.3, 0.5, 0.7, 0.9], atol=1e-15)
    assert offset.slice_length == pytest.approx(0.2)


def test_partition_validation():
    with pytest.raises(ValidationError):
        TimePartition(t_end=1.0, p_time=0)
    with pytest.raises(ValidationError):
        TimePartition(t_end=0.0, p_time=4)
    with pytest.raises(ValidationError):
        TimePartition(t_end=0.2, p_time=4, t0=0.5)


def test_serial_reference_structure(partition, setup):
    p, grid, u0, fine, reference = setup
    assert len(reference) == partition.p_time + 1
    np.testing.assert_array_equal(reference[0].values, u0.values)
    bounds = partition.boundaries()
    step1 = advance(fine, reference[0], bounds[0], bounds[1], p)
    np.testing.assert_array_equal(reference[1].values, step1.values)


def test_run_validation(partition, setup):
    p, grid, u0, fine, reference = setup
    coarse = PropagatorSpec.coarse_numeric()
    with pytest.raises(ValidationError):
        parareal_run(u0, partition, fine, coarse, -1, p)
    with pytest.raises(ValidationError):
        parareal_run(u0, partition, fine, coarse, 1, p, reference=reference[:-1])
    with pytest.raises(ValidationError):
        parareal_run(u0, partition, fine, coarse, 1, p, reference=reference, tol=0.0)


def test_slice_exactness(partition, setup):
    # after k iterations the first k slices reproduce the serial fine
    # trajectory; grouped corrections make this exact in floating point
    p, grid, u0, fine, reference = setup
    _, states = parareal_run(u0, partition, fine, PropagatorSpec.coarse_numeric(),
                             partition.p_time, p, reference=reference,
                             record_trajectories=True)
    for k in range(1, partition.p_time + 1):
        assert exactness_defect(states, reference, k) <= 1e-10


def test_full_horizon_exact_at_k_equals_p(partition, setup):
    p, grid, u0, fine, reference = setup
    res, _ = parareal_run(u0, partition, fine, PropagatorSpec.coarse_numeric(),
                          partition.p_time, p, reference=reference)
    assert res.error_history[-1] <= 1e-13


def test_degenerate_coarse_equals_fine(partition, setup):
    # with G == F the coarse sweep is already the fine trajectory
    p, grid, u0, fine, reference = setup
    res, _ = parareal_run(u0, partition, fine, fine, 2, p, reference=reference)
    assert all(err <= 1e-13 for err in res.error_history)


def test_error_history_contracts(partition, setup):
    p, grid, u0, fine, reference = setup
    res, _ = parareal_run(u0, partition, fine, PropagatorSpec.coarse_numeric(),
                          partition.p_time, p, reference=reference)
    errs = res.error_history
    assert len(errs) == partition.p_time + 1
    assert errs[0] > 1e-3  # coarse init is visibly wrong
    for a, b in zip(errs[:-1], errs[1:]):
        assert b < a
    assert len(res.iteration_seconds) == partition.p_time + 1
    assert all(t > 0 for t in res.iteration_seconds)
    assert len(res.slice_errors) == partition.p_time + 1
    assert all(len(row) == partition.p_time for row in res.slice_errors)


def test_converged_at_reports_first_crossing(partition, setup):
    p, grid, u0, fine, reference = setup
    tol = 1e-4
    res, _ = parareal_run(u0, partition, fine, PropagatorSpec.coarse_numeric(),
                          partition.p_time, p, reference=reference, tol=tol)
    k = res.converged_at
    assert k is not None
    assert res.error_history[k] <= tol
    assert all(err > tol for err in res.error_history[:k])
    no_tol, _ = parareal_run(u0, partition, fine, PropagatorSpec.coarse_numeric(),
                             1, p, reference=reference)
    assert no_tol.converged_at is None


def test_serial_and_concurrent_agree(partition, setup):
    p, grid, u0, fine, reference = setup
    coarse = PropagatorSpec.coarse_numeric()
    a, _ = parareal_run(u0, partition, fine, coarse, 2, p, reference=reference,
                        concurrent=True)
    b, _ = parareal_run(u0, partition, fine, coarse, 2, p, reference=reference,
                        concurrent=False)
    assert a.error_history == b.error_history
    for fa, fb in zip(a.fields, b.fields):
        np.testing.assert_array_equal(fa.values, fb.values)


def test_trajectory_recording_switch(partition, setup):
    p, grid, u0, fine, reference = setup
    coarse = PropagatorSpec.coarse_numeric()
    res, states = parareal_run(u0, partition, fine, coarse, 2, p)
    assert res.error_history == []  # no reference, no history
    assert len(states) == 1
    assert states[0].iteration == 2
    _, full = parareal_run(u0, partition, fine, coarse, 2, p,
                           record_trajectories=True)
    assert [s.iteration for s in full] == [0, 1, 2]
    assert all(len(s.fields) == partition.p_time + 1 for s in full)


def test_convergence_study_schema(partition, setup):
    p, grid, u0, fine, reference = setup
    specs = {
        "numeric_single": PropagatorSpec.coarse_numeric(),
        "numeric_double": PropagatorSpec.coarse_numeric(precision="double"),
    }
    rows = convergence_study(u0, partition, fine, specs, 2, p)
    assert len(rows) == 2 * 3
    assert {row["coarse_kind"] for row in rows} == set(specs)
    for row in rows:
        assert row["p_time"] == partition.p_time
        assert row["k"] in (0, 1, 2)
        assert np.isfinite(row["rel_error"])
    for label in specs:
        sub = {row["k"]: row["rel_error"] for row in rows if row["coarse_kind"] == label}
        assert sub[2] < sub[0]


def test_parameter_sweep_schema():
    p = ModelParams.benchmark()
    grid = Grid2D(nx=11, ny=11, x_max=300.0, y_max=300.0)
    part = TimePartition(t_end=0.4, p_time=2)
    rows = parameter_sweep(p, "r", (0.5, 2.0), grid, part,
                           PropagatorSpec.fine(), PropagatorSpec.coarse_numeric(), 1)
    assert len(rows) == 2 * 2
    assert {row["value"] for row in rows} == {0.5, 2.0}
    for value in (0.5, 2.0):
        sub = {row["k"]: row["rel_error"] for row in rows if row["value"] == value}
        assert sub[1] < sub[0]


def test_parameter_sweep_axis_validation():
    p = ModelParams.benchmark()
    grid = Grid2D(nx=11, ny=11, x_max=300.0, y_max=300.0)
    part = TimePartition(t_end=0.4, p_time=2)
    with pytest.raises(ValidationError):
        parameter_sweep(p, "rho", (0.1,), grid, part,
                        PropagatorSpec.fine(), PropagatorSpec.coarse_numeric(), 1)
