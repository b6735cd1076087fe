import json
import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla

import oracles
from elastotat.grid import make_grid
from elastotat.medium import MediumError, build_medium, check_conditions
from elastotat.phantoms import annulus_speed, gaussian_source, phantom_library


def test_derived_speeds_constant():
    g = make_grid(2, 1.0, 17)
    m = build_medium(g, 1.0, 1.0)
    assert np.allclose(m.c1, math.sqrt(3)) and np.allclose(m.c2, 1.0)
    assert m.c_plus == pytest.approx(math.sqrt(3)) and m.c_minus == 1.0
    m = build_medium(g, 10.0, 1.0)
    assert m.c_plus == pytest.approx(math.sqrt(12)) and m.c_minus == 1.0
    assert np.allclose(m.a1, 1 / 12) and np.allclose(m.a2, 1.0)


def test_positivity_enforced_with_location():
    g = make_grid(2, 1.0, 17)
    mu = np.ones(g.shape)
    mu[3, 5] = 0.0
    with pytest.raises(MediumError, match=r"mu .* at x"):
        build_medium(g, 1.0, mu)
    with pytest.raises(MediumError):
        build_medium(g, np.full(g.shape, np.nan), 1.0)
    with pytest.raises(MediumError):
        build_medium(g, 1e-9, 1.0, alpha0=1e-8)


def test_medium_fields_are_immutable():
    m = build_medium(make_grid(2, 1.0, 17), 1.0, 1.0)
    with pytest.raises(ValueError):
        m.lam[0, 0] = 2.0


def test_spectral_radius_against_sparse_eigensolver():
    rng = np.random.default_rng(2)
    g = make_grid(2, 1.0, 17)
    lam, mu = 1 + rng.random(g.shape), 1 + rng.random(g.shape)
    m = build_medium(g, lam, mu)
    K = oracles.stiffness_matrix(g.shape, g.spacing, lam, mu)
    interior = np.zeros(g.shape, bool)
    interior[1:-1, 1:-1] = True
    keep = np.flatnonzero(np.concatenate([interior.ravel()] * 2))
    Kii = K[keep][:, keep] / g.cell_volume
    top = spla.eigsh(Kii, k=1, which="LA")[0][0]
    assert 0.9 * top <= m.spectral_radius <= top * (1 + 1e-9)


def test_checker_constant_medium_example():
    m = build_medium(make_grid(2, 1.25, 65), 1.0, 1.0)
    rep = check_conditions(m, 1.0, 10.0, 0.1, theta=0.9)
    assert rep.speed_ratio_ok and rep.gradient_condition_ok and rep.condition2_ok
    assert rep.noncharacteristic_ok and rep.T_ok and rep.overall
    assert rep.T_min == pytest.approx(2.2 / (2.7 - math.sqrt(3)))
    short = check_conditions(m, 1.0, 1.0, 0.1, theta=0.9)
    assert not short.T_ok and not short.overall
    assert short.witnesses["T"]["T_min"] == pytest.approx(rep.T_min)


def test_checker_speed_ratio_failure():
    m = build_medium(make_grid(2, 1.25, 65), 10.0, 1.0)
    rep = check_conditions(m, 1.0, 10.0, 0.1)
    assert not rep.speed_ratio_ok and not rep.overall
    assert rep.theta_window is None
    assert "speed_ratio" in rep.witnesses


@pytest.mark.parametrize("theta,expect", [(0.95, True), (0.999, True), (1.01, False)])
def test_gradient_condition_is_theta_below_speed_for_constant_media(theta, expect):
    m = build_medium(make_grid(2, 1.25, 65), 1.0, 1.0)
    rep = check_conditions(m, 1.0, 20.0, 0.1, theta=theta)
    assert rep.gradient_condition_ok is expect
    if not expect:
        assert rep.witnesses["gradient_condition"]["field"] == "a2"
        assert not rep.condition2_ok and not rep.noncharacteristic_ok


def test_T_monotonicity_constant_medium():
    m = build_medium(make_grid(2, 1.25, 65), 1.0, 1.0)
    flags = [check_conditions(m, 1.0, T, 0.1, theta=0.9).T_ok for T in np.linspace(0.5, 6, 23)]
    first = flags.index(True)
    assert all(flags[first:])


def test_auto_theta_search_and_report_json():
    m = build_medium(make_grid(2, 1.25, 65), 1.0, 1.0)
    rep = check_conditions(m, 1.0, 10.0, 0.05)
    assert rep.theta_auto and len(rep.theta_scan) == 64
    lo, hi = rep.theta_window
    assert lo < rep.theta_used < hi
    assert rep.overall
    text = rep.to_json()
    assert json.loads(text)["overall"] is True
    assert text == check_conditions(m, 1.0, 10.0, 0.05).to_json()


def test_variable_medium_gradient_witness():
    g = make_grid(2, 1.25, 65)
    lam, mu = phantom_library("smooth_gradient", g, 1.0, slope=3.0)
    rep = check_conditions(build_medium(g, lam, mu), 1.0, 10.0, 0.05, theta=0.6)
    assert not rep.gradient_condition_ok
    w = rep.witnesses["gradient_condition"]
    assert w["margin"] < 0 and len(w["x"]) == 2


def test_phantoms():
    g = make_grid(2, 1.25, 129)
    lam, mu = phantom_library("constant", g, 1.0)
    assert np.all(lam == 1) and np.all(mu == 1)
    f = gaussian_source(g, 1.0)
    outside = np.sqrt(g.radius_sq) > 0.5
    assert np.max(np.abs(f.data[:, outside])) < 1e-14 * f.max_abs()
    assert np.all(f.data[1] == 0)
    assert np.allclose(annulus_speed(g), np.sqrt(g.radius_sq))
    lam, mu = phantom_library("radial_bump", g, 1.0)
    assert lam.max() == pytest.approx(1.2, rel=1e-3) and lam[0, 0] == 1.0
    with pytest.raises(KeyError):
        phantom_library("nope", g)
