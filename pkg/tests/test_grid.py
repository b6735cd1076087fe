import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from elastotat.grid import (
    BallRegion, Grid, GridError, VectorField, boundary_set, dirichlet_masks, extend_by_zero,
    field_from_bytes, field_to_bytes, make_grid, read_field, read_scalar, restrict, restrict_closure,
    samples_from_bytes, write_field, write_scalar,
)


def test_grid_geometry():
    g = make_grid(2, 1.25, 129)
    assert g.spacing == pytest.approx(2.5 / 128)
    assert g.shape == (129, 129)
    assert g.axis[0] == -1.25 and g.axis[-1] == 1.25
    assert g.points().shape == (129 * 129, 2)
    assert np.sum(g.trapezoid_weights) == pytest.approx(2.5**2)


@pytest.mark.parametrize("args", [(1, 1.0, 10), (2, 0.0, 10), (2, 1.0, 4), (4, 1.0, 10)])
def test_grid_rejects_bad_specs(args):
    with pytest.raises(GridError):
        Grid(*args)


def test_ball_must_fit():
    g = make_grid(2, 1.0, 33)
    with pytest.raises(GridError):
        BallRegion(1.0).check_inside(g)
    BallRegion(0.8).check_inside(g)


def test_masks_partition():
    g = make_grid(2, 1.25, 65)
    inner, ring = dirichlet_masks(g, BallRegion(1.0))
    assert not np.any(inner & ring)
    assert np.all(np.sqrt(g.radius_sq[inner]) < 1.0)
    assert np.all(np.sqrt(g.radius_sq[ring]) >= 1.0)
    # every ring node touches a cell that has an interior corner
    assert np.all(np.sqrt(g.radius_sq[ring]) < 1.0 + math.sqrt(2) * g.spacing)


@pytest.mark.parametrize("dim,n,measure", [(2, 129, 2 * math.pi), (3, 41, 4 * math.pi)])
def test_boundary_weights_sum_to_sphere_measure(dim, n, measure):
    b = boundary_set(make_grid(dim, 1.25, n), BallRegion(1.0))
    assert b.measure == pytest.approx(measure, rel=1e-12)
    assert np.all(b.weights > 0)
    assert np.allclose(np.linalg.norm(b.points, axis=1), 1.0)
    assert np.allclose(b.normals, b.points)


def test_boundary_set_deterministic():
    g = make_grid(2, 1.25, 65)
    a, b = boundary_set(g, BallRegion(1.0)), boundary_set(g, BallRegion(1.0))
    assert a.same_as(b)
    assert np.array_equal(a.indices, np.sort(a.indices))


def test_vector_field_algebra():
    g = make_grid(2, 1.0, 17)
    rng = np.random.default_rng(0)
    f = VectorField(g, rng.standard_normal((2, *g.shape)))
    h = VectorField(g, rng.standard_normal((2, *g.shape)))
    assert np.allclose((f + h - h).data, f.data)
    assert np.allclose((f * 2.0).data, 2 * f.data)
    assert np.allclose((-f).data, -f.data)
    assert f.dot(h) == pytest.approx(h.dot(f))
    assert f.dot(f) > 0
    with pytest.raises(ValueError):
        f.data[0, 0, 0] = 1.0  # read-only


def test_vector_field_validation():
    g = make_grid(2, 1.0, 17)
    with pytest.raises(GridError):
        VectorField(g, np.zeros((3, *g.shape)))
    bad = g.zeros()
    bad[0, 3, 3] = np.nan
    with pytest.raises(GridError):
        VectorField(g, bad)
    other = make_grid(2, 1.0, 19)
    with pytest.raises(GridError):
        VectorField(g, g.zeros()) + VectorField(other, other.zeros())


def test_restrictions():
    g = make_grid(2, 1.25, 33)
    ball = BallRegion(1.0)
    f = VectorField(g, np.ones((2, *g.shape)))
    inner, ring = dirichlet_masks(g, ball)
    r = restrict(f, ball)
    assert np.all(r.data[:, ~ball.mask(g)] == 0) and np.all(r.data[:, ball.mask(g)] == 1)
    c = restrict_closure(f, ball)
    assert np.all(c.data[:, inner | ring] == 1) and np.all(c.data[:, ~(inner | ring)] == 0)
    assert np.array_equal(extend_by_zero(f, ball).data, c.data)


@given(arrays(np.float64, (2, 9, 9), elements=st.floats(-1e300, 1e300, allow_nan=False)))
def test_field_bytes_round_trip(data):
    g = make_grid(2, 0.75, 9)
    f = VectorField(g, data)
    buf = field_to_bytes(f)
    assert buf[:8] == b"ETATFLD\0"
    back = field_from_bytes(buf)
    assert back.grid == g
    assert np.array_equal(back.data, f.data)
    assert field_to_bytes(back) == buf


def test_field_file_layout(tmp_path):
    g = make_grid(3, 1.0, 8)
    data = np.arange(3 * 8**3, dtype=float).reshape(3, 8, 8, 8)
    write_field(VectorField(g, data), tmp_path / "f.fld")
    raw = (tmp_path / "f.fld").read_bytes()
    body = np.frombuffer(raw[-8 * data.size:], "<f8")
    assert np.array_equal(body, data.ravel())
    assert np.array_equal(read_field(tmp_path / "f.fld").data, data)


def test_scalar_files(tmp_path):
    g = make_grid(2, 1.0, 9)
    v = np.linspace(0, 1, 81).reshape(9, 9)
    write_scalar(g, v, tmp_path / "s.fld")
    g2, v2 = read_scalar(tmp_path / "s.fld")
    assert g2 == g and np.array_equal(v, v2)
    write_field(VectorField(g, g.zeros()), tmp_path / "v.fld")
    with pytest.raises(GridError):
        read_scalar(tmp_path / "v.fld")


@pytest.mark.parametrize("mutate", [
    lambda b: b[:10],
    lambda b: b"XXXXXXXX" + b[8:],
    lambda b: b + b"\0" * 8,
])
def test_corrupt_field_files(mutate):
    g = make_grid(2, 1.0, 9)
    buf = field_to_bytes(VectorField(g, g.zeros()))
    with pytest.raises(GridError):
        samples_from_bytes(mutate(buf))
