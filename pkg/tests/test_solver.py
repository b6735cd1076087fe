import numpy as np
import pytest

from elastotat.grid import BallRegion, GridError, VectorField, boundary_set, make_grid
from elastotat.medium import build_medium
from elastotat.phantoms import gaussian_source
from elastotat.solver import (
    CFLError, SolverConfig, SolverError, check_cfl, dirichlet_solve, forward_solve,
    pad_for_free_space, read_trace, time_step, trace_from_bytes, trace_to_bytes, write_trace,
)


@pytest.fixture(scope="module")
def setup():
    g = make_grid(2, 1.25, 49)
    m = build_medium(g, 1.0, 1.0)
    ball = BallRegion(1.0)
    return g, m, ball, gaussian_source(g, 1.0)


def test_time_step_divides_T():
    g = make_grid(2, 1.0, 33)
    dt, n = time_step(g, 2.0, 1.0, 0.5)
    assert n * dt == pytest.approx(1.0) and dt <= 0.5 * g.spacing / 2.0
    dt0, n0 = time_step(g, 2.0, 0.0, 0.5)
    assert n0 == 0 and dt0 == pytest.approx(0.5 * g.spacing / 2.0)
    with pytest.raises(SolverError):
        time_step(g, 2.0, -1.0, 0.5)
    with pytest.raises(ValueError):
        SolverConfig(cfl=1.5)


def test_cfl_guard(setup):
    _, m, _, _ = setup
    limit = check_cfl(m, 1e-4)
    with pytest.raises(CFLError):
        check_cfl(m, 1.01 * limit)


def test_padding_keeps_spacing():
    g = make_grid(2, 1.25, 65)
    p = pad_for_free_space(g, BallRegion(1.0), 2.0, 1.5)
    assert p.spacing == pytest.approx(g.spacing)
    assert p.half_width >= 1.0 + 1.5 + 4 * g.spacing - 1e-12
    assert (p.n_per_axis - g.n_per_axis) % 2 == 0


def test_support_checked(setup):
    g, m, ball, _ = setup
    X, _ = g.coords
    f = VectorField(g, np.stack([np.exp(-(X - 1.1) ** 2), np.zeros(g.shape)]))
    with pytest.raises(SolverError, match="not supported"):
        forward_solve(m, ball, f, 0.5)
    other = make_grid(2, 1.25, 33)
    with pytest.raises(GridError):
        forward_solve(m, ball, VectorField(other, other.zeros()), 0.5)


def test_zero_time_and_zero_data(setup):
    g, m, ball, f = setup
    res = forward_solve(m, ball, f, 0.0)
    assert res.trace.n_steps == 0
    assert np.array_equal(res.trace.samples[0], res.trace.boundary.gather(f.data))
    zero = forward_solve(m, ball, VectorField.zeros(g), 0.5)
    assert not np.any(zero.trace.samples)


def test_forward_is_linear_and_deterministic(setup):
    _, m, ball, f = setup
    a = forward_solve(m, ball, f, 0.8).trace.samples
    b = forward_solve(m, ball, f * 2.0, 0.8).trace.samples
    assert np.allclose(b, 2 * a, rtol=0, atol=1e-14 * np.abs(a).max())
    assert np.array_equal(a, forward_solve(m, ball, f, 0.8).trace.samples)


def test_snapshots_and_crop(setup):
    g, m, ball, f = setup
    res = forward_solve(m, ball, f, 0.5, SolverConfig(snapshot_stride=5))
    times = [t for t, _ in res.snapshots]
    assert times[0] == 0.0 and len(times) == res.trace.n_steps // 5 + 1
    first = res.crop(res.snapshots[0][1], g)
    assert np.array_equal(first.data, f.data)


def test_dirichlet_energy_conserved_with_zero_boundary(setup):
    g, m, ball, f = setup
    b = boundary_set(g, ball)
    dt, n = time_step(g, m.c_plus, 1.0, 0.5)
    res = dirichlet_solve(m, ball, f, np.zeros((n + 1, len(b), 2)), dt, track_energy=True)
    e = res.energies
    assert np.max(np.abs(e - e[0])) <= 1e-12 * e[0]
    with pytest.raises(SolverError):
        dirichlet_solve(m, ball, f, np.zeros((n + 1, len(b) + 1, 2)), dt)
    with pytest.raises(ValueError):
        dirichlet_solve(m, ball, f, np.zeros((n + 1, len(b), 2)), dt, direction="sideways")


def test_dirichlet_time_reversible(setup):
    g, m, ball, f = setup
    b = boundary_set(g, ball)
    dt, n = time_step(g, m.c_plus, 0.6, 0.5)
    zeros = np.zeros((n + 1, len(b), 2))
    fwd = dirichlet_solve(m, ball, f, zeros, dt)
    back = dirichlet_solve(m, ball, fwd.final, zeros, dt, direction="backward", u_second=fwd.penultimate)
    assert np.max(np.abs(back.final.data - f.data)) <= 1e-10 * f.max_abs()


def test_trace_round_trip(setup, tmp_path):
    _, m, ball, f = setup
    trace = forward_solve(m, ball, f, 0.3).trace
    buf = trace_to_bytes(trace)
    back = trace_from_bytes(buf)
    assert back.boundary.same_as(trace.boundary)
    assert np.array_equal(back.samples, trace.samples) and back.dt == trace.dt
    assert trace_to_bytes(back) == buf
    write_trace(trace, tmp_path / "t.trc")
    assert np.array_equal(read_trace(tmp_path / "t.trc").samples, trace.samples)
    for bad in (buf[:20], b"NOTATRC\0" + buf[8:], buf + b"\0"):
        with pytest.raises(SolverError):
            trace_from_bytes(bad)


def test_trace_norm_constant_in_time(setup):
    _, m, ball, f = setup
    trace = forward_solve(m, ball, f, 0.3).trace
    ones = trace.like(np.ones_like(trace.samples))
    # |1|^2 = T * dim * |S|
    assert ones.norm() ** 2 == pytest.approx(trace.T * 2 * trace.boundary.measure)


def test_padding_examples():
    g = make_grid(2, 1.25, 129)
    h = g.spacing
    p = pad_for_free_space(g, BallRegion(1.0), 4.0, np.sqrt(3))
    assert p.half_width >= 1 + 2 * np.sqrt(3) + 4 * h - 1e-12
    p0 = pad_for_free_space(g, BallRegion(1.0), 0.0, np.sqrt(3))
    assert p0.half_width >= 1 + 4 * h - 1e-12 and p0 == g


def test_wider_padding_does_not_change_the_trace():
    T = 1.0
    g = make_grid(2, 1.25, 65)
    ball = BallRegion(1.0)
    m = build_medium(g, 1.0, 1.0)
    base = forward_solve(m, ball, gaussian_source(g, 1.0), T)
    # 50% more padding than the automatic choice, same spacing and node positions
    k = int(np.ceil(0.5 * (base.padded_grid.half_width) / g.spacing)) + base.offset
    wide = make_grid(2, g.half_width + k * g.spacing, g.n_per_axis + 2 * k)
    mw = build_medium(wide, 1.0, 1.0)
    big = forward_solve(mw, ball, gaussian_source(wide, 1.0), T)
    assert np.allclose(big.trace.boundary.points, base.trace.boundary.points, atol=1e-12)
    scale = np.abs(base.trace.samples).max()
    assert np.max(np.abs(big.trace.samples - base.trace.samples)) <= 1e-10 * scale


def test_p_wave_arrival():
    from elastotat.phantoms import gaussian_sigma

    g = make_grid(2, 1.25, 129)
    m = build_medium(g, 1.0, 1.0)
    f = gaussian_source(g, 1.0)
    trace = forward_solve(m, BallRegion(1.0), f, 0.6).trace
    r0 = 2.0 * gaussian_sigma(0.5)  # 1/e^2 radius of the bump
    early = trace.times < (1.0 - 3 * r0) / np.sqrt(3)
    assert early.sum() > 10
    assert np.abs(trace.samples[early]).max() < 1e-6 * f.max_abs()
    assert np.abs(trace.samples).max() > 1e-3 * f.max_abs()


def test_dirichlet_zero_stays_zero(setup):
    g, m, ball, _ = setup
    b = boundary_set(g, ball)
    res = dirichlet_solve(m, ball, VectorField.zeros(g), np.zeros((11, len(b), 2)), 0.01, keep=(0, 5, 10))
    assert not np.any(res.final.data) and sorted(res.levels) == [0, 5, 10]
