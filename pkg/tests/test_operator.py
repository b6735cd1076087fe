import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

import oracles
from elastotat.grid import BallRegion, GridError, VectorField, make_grid
from elastotat.medium import build_medium
from elastotat.operator import apply_P, energy, hd_inner, hd_norm, l2_inner, nodal_gradient


def _random_medium(dim, n, seed=0):
    rng = np.random.default_rng(seed)
    g = make_grid(dim, 1.25, n)
    return build_medium(g, 1 + rng.random(g.shape), 1 + rng.random(g.shape)), rng


@pytest.mark.parametrize("dim,n", [(2, 17), (3, 9)])
def test_compiled_stiffness_matches_reference_and_oracle(dim, n):
    m, rng = _random_medium(dim, n)
    u = rng.standard_normal((dim, *m.grid.shape))
    K = oracles.stiffness_matrix(m.grid.shape, m.grid.spacing, m.lam, m.mu)
    ref = (K @ u.ravel()).reshape(u.shape)
    scale = np.max(np.abs(ref))
    assert np.max(np.abs(m.stiffness(u) - ref)) <= 1e-13 * scale
    assert np.max(np.abs(m.form.apply(u) - ref)) <= 1e-13 * scale


@given(st.integers(0, 2**32 - 1))
def test_discrete_lemma_random_pairs(seed):
    m, _ = _random_medium(2, 33, 5)
    rng = np.random.default_rng(seed)
    f = oracles.random_compact_field(m.grid, rng)
    g = oracles.random_compact_field(m.grid, rng)
    w = m.grid.trapezoid_weights
    F, G = VectorField(m.grid, f), VectorField(m.grid, g)
    scale = hd_norm(m, F) * hd_norm(m, G)
    lhs = np.sum(np.sum(m.apply_P_array(f) * g, axis=0) * w)
    rhs = np.sum(np.sum(f * m.apply_P_array(g), axis=0) * w)
    assert abs(lhs - hd_inner(m, F, G)) <= 1e-12 * scale
    assert abs(lhs - rhs) <= 1e-12 * scale


def test_form_bitwise_symmetric_and_positive():
    m, rng = _random_medium(2, 33, 1)
    f = VectorField(m.grid, rng.standard_normal((2, *m.grid.shape)))
    g = VectorField(m.grid, rng.standard_normal((2, *m.grid.shape)))
    assert hd_inner(m, f, g) == hd_inner(m, g, f)
    assert hd_inner(m, f, f) > 0
    assert hd_inner(m, VectorField.zeros(m.grid), f) == 0.0


def test_constants_and_affine_fields_in_kernel():
    g = make_grid(2, 1.25, 33)
    m = build_medium(g, 2.0, 0.7)
    const = VectorField(g, np.stack([np.full(g.shape, 3.0), np.full(g.shape, -1.0)]))
    assert hd_inner(m, const, const) == 0.0
    B = np.array([[0.3, -1.2], [0.8, 0.5]])
    aff = oracles.lame_operator_affine(B, g.coords)
    Pu = apply_P(m, VectorField(g, aff)).data
    assert np.max(np.abs(Pu)) <= 1e-10 * np.max(np.abs(aff)) / g.spacing**2


def _analytic_P(X, Y, lam, mu):
    # u = (sin x cos y, 0); P u = -mu lap u - (lam + mu) grad div u
    return np.stack([(2 * mu + lam + mu) * np.sin(X) * np.cos(Y), (lam + mu) * np.cos(X) * np.sin(Y)])


def test_second_order_consistency():
    lam, mu = 1.5, 0.8
    errs = []
    for n in (33, 65, 129):
        g = make_grid(2, 1.0, n)
        m = build_medium(g, lam, mu)
        X, Y = g.coords
        u = np.stack([np.sin(X) * np.cos(Y), np.zeros(g.shape)])
        Pu = m.apply_P_array(u)
        inside = (np.abs(X) < 0.5) & (np.abs(Y) < 0.5)
        errs.append(np.max(np.abs(Pu - _analytic_P(X, Y, lam, mu))[:, inside]))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9), orders


@pytest.mark.parametrize("comp,speed2", [(0, 3.0), (1, 1.0)])
def test_plane_wave_eigenrelation(comp, speed2):
    g = make_grid(2, 1.25, 129)
    m = build_medium(g, 1.0, 1.0)
    k = 2 * np.pi
    X = g.coords[0]
    u = g.zeros()
    u[comp] = np.sin(k * X)
    Pu = m.apply_P_array(u)
    h = g.spacing
    symbol = speed2 * 4 * np.sin(k * h / 2) ** 2 / h**2
    core = (slice(1, -1), slice(1, -1))
    assert np.max(np.abs(Pu[comp][core] - symbol * u[comp][core])) <= 1e-9 * symbol
    assert np.max(np.abs(Pu[1 - comp][core])) <= 1e-9 * symbol
    assert symbol == pytest.approx(speed2 * k**2, rel=2e-3)


def test_hd_inner_against_analytic_integral():
    """Second-order convergence to the exact strain energy of a smooth field."""

    def w(s):
        return np.where(np.abs(s) < 1, np.cos(np.pi * s / 2) ** 4, 0.0)

    def dw(s):
        return np.where(np.abs(s) < 1, -2 * np.pi * np.cos(np.pi * s / 2) ** 3 * np.sin(np.pi * s / 2), 0.0)

    def a(x):
        return np.sin(np.pi * x) * w(x)

    def da(x):
        return np.pi * np.cos(np.pi * x) * w(x) + np.sin(np.pi * x) * dw(x)

    def integral(fn):
        return quad(fn, -1, 1, limit=200, epsabs=1e-13)[0]

    # f = (a(x) w(y), 0), lam = mu = 1: (lam + 2 mu) a'^2 w^2 + mu a^2 w'^2
    exact = 3 * integral(lambda x: da(x) ** 2) * integral(lambda y: w(y) ** 2) \
        + integral(lambda x: a(x) ** 2) * integral(lambda y: dw(y) ** 2)
    errs = []
    for n in (65, 129, 257):
        g = make_grid(2, 1.25, n)
        m = build_medium(g, 1.0, 1.0)
        d = g.zeros()
        d[0] = a(g.coords[0]) * w(g.coords[1])
        f = VectorField(g, d)
        errs.append(abs(hd_inner(m, f, f) - exact) / exact)
    assert errs[1] < 2e-3
    assert math.log2(errs[0] / errs[1]) > 1.9 and math.log2(errs[1] / errs[2]) > 1.9


def test_energy_regions_and_scaling():
    g = make_grid(2, 1.25, 65)
    m = build_medium(g, 1.0, 1.0)
    ball = BallRegion(1.0)
    X, Y = g.coords
    f = VectorField(g, np.stack([np.exp(-(X**2 + Y**2) / 0.01), np.zeros(g.shape)]))
    v = VectorField(g, np.stack([np.zeros(g.shape), np.exp(-(X**2 + Y**2) / 0.01)]))
    e_ball = energy(m, f, v, ball)
    e_all = energy(m, f, v)
    assert e_ball.total == pytest.approx(e_all.total, rel=1e-12)
    assert e_ball.total == e_ball.elastic + e_ball.kinetic
    e2 = energy(m, f * 2.0, v * 2.0, ball)
    assert e2.total == pytest.approx(4 * e_ball.total, rel=1e-14)
    z = energy(m, VectorField.zeros(g), VectorField.zeros(g), ball)
    assert (z.elastic, z.kinetic, z.total) == (0.0, 0.0, 0.0)
    assert l2_inner(v, v, ball) == pytest.approx(e_ball.kinetic)


def test_nodal_gradient_exact_on_quadratics():
    g = make_grid(2, 1.0, 17)
    X, Y = g.coords
    grad = nodal_gradient(X**2 + 3 * X * Y, g)
    assert np.allclose(grad[0], 2 * X + 3 * Y, atol=1e-12)
    assert np.allclose(grad[1], 3 * X, atol=1e-12)


def test_grid_mismatch_rejected():
    m = build_medium(make_grid(2, 1.0, 17), 1.0, 1.0)
    other = make_grid(2, 1.0, 19)
    f = VectorField(other, other.zeros())
    with pytest.raises(GridError):
        hd_inner(m, f, f)
    with pytest.raises(GridError):
        apply_P(m, f)
