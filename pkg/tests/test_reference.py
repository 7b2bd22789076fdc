import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, special

from dinf import reference as ref
from dinf.errors import ConfigError, NumericDomainError

args = st.floats(1e-3, 200.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(args)
def test_bessel_against_scipy(x):
    assert ref.bessel_j0(x) == pytest.approx(special.j0(x), abs=1e-13)
    assert ref.bessel_y0(x) == pytest.approx(special.y0(x), abs=1e-13, rel=1e-13)
    # order one switches from series to asymptotics at x = 12 (~4e-11 there)
    assert ref.bessel_j1(x) == pytest.approx(special.j1(x), abs=1e-10)
    assert ref.bessel_y1(x) == pytest.approx(special.y1(x), abs=1e-10, rel=1e-12)


def test_bessel_limits():
    assert ref.bessel_j0(0.0) == 1.0
    assert ref.bessel_y0(1e-8) < -10
    with pytest.raises(NumericDomainError):
        ref.bessel_y0(0.0)
    with pytest.raises(NumericDomainError):
        ref.bessel_y1(np.array([1.0, -1.0]))


def test_bessel_j0_first_zero():
    z = optimize.brentq(ref.bessel_j0, 2.0, 3.0, xtol=1e-14)
    assert abs(z - 2.4048255577) < 1e-7


def test_hankel_is_j_plus_iy():
    h = ref.hankel1_0(np.array([0.5, 3.0]))
    np.testing.assert_allclose(h, special.hankel1(0, [0.5, 3.0]), atol=1e-13)


def test_heat_values():
    assert ref.heat_analytic(0.5, 0.0) == pytest.approx(1.0)
    assert ref.heat_analytic(1.0, 2.3) == pytest.approx(0.0, abs=1e-15)
    assert ref.heat_analytic(0.5, 0.1) == pytest.approx(math.exp(-math.pi**2 / 10), rel=1e-15)
    assert ref.heat_analytic(0.5, 0.1) == pytest.approx(0.37273, abs=5e-5)
    with pytest.raises(ConfigError):
        ref.heat_analytic(0.0, 0.0, alpha=0.0)


def test_advection_peak_moves():
    assert ref.advection_analytic(-1.5, 0.0, 0.25) == 1.0
    xs = np.linspace(-2, 2, 4001)
    u = ref.advection_analytic(xs, 4.0, 0.25)
    assert xs[np.argmax(u)] == pytest.approx(-0.5, abs=1e-3)
    u2 = ref.advection_analytic(np.array([[0.5, 0.5]]), 4.0, [0.25, 0.25], mu=[-0.5, -0.5])
    assert u2[0] == pytest.approx(1.0)


def test_circle_sdf():
    assert ref.circle_sdf([0.0, 0.0]) == -0.5
    assert ref.circle_sdf([0.3, 0.4]) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ConfigError):
        ref.circle_sdf([0, 0], radius=0)


@pytest.mark.parametrize("d", [2, 3])
def test_sample_sphere(d):
    p, n = ref.sample_sphere(200, d, radius=0.5)
    np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0)
    np.testing.assert_allclose(ref.circle_sdf(p, np.zeros(d)), 0.0, atol=1e-15)
    np.testing.assert_allclose(ref.sdf_normals(p, np.zeros(d)), n, atol=1e-14)


def test_green_domain():
    with pytest.raises(NumericDomainError):
        ref.helmholtz_green(np.array([[0.01, 0.0]]), 20.0)
    with pytest.raises(ConfigError):
        ref.helmholtz_green(np.array([[0.5, 0.0]]), -1.0)
    re, im = ref.helmholtz_green(np.array([[0.3, 0.4]]), 20.0)
    h = 0.25j * special.hankel1(0, 10.0)
    assert re[0] == pytest.approx(h.real, abs=1e-13)
    assert im[0] == pytest.approx(h.imag, abs=1e-13)


def test_green_jet_matches_fd():
    from dinf.diffcore import jet_seed

    x0 = np.array([[0.31, -0.22]])
    re, im = ref.helmholtz_green_jet(jet_seed(x0), 20.0)
    h = 1e-5

    def f(x):
        return np.array(ref.helmholtz_green(x, 20.0))[:, 0]

    for k in range(2):
        e = np.zeros_like(x0)
        e[0, k] = h
        fd = (f(x0 + e) - f(x0 - e)) / (2 * h)
        np.testing.assert_allclose([re.grad[k, 0], im.grad[k, 0]], fd, rtol=1e-6)
    lap_fd = sum(
        (f(x0 + e) - 2 * f(x0) + f(x0 - e)) / h**2
        for e in (np.array([[h, 0.0]]), np.array([[0.0, h]]))
    )
    np.testing.assert_allclose([re.laplacian()[0], im.laplacian()[0]], lap_fd, rtol=1e-3)
    # free-space operator: Laplacian + k^2 u = 0 away from the origin
    np.testing.assert_allclose(re.laplacian()[0] + 400 * re.value[0], 0.0, atol=1e-9)
    assert math.isfinite(float(im.value[0]))
