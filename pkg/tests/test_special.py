"""Bessel/Hankel evaluators against analytic identities and scipy as an independent oracle."""

import numpy as np
import pytest
from scipy import special as sp
from scipy.optimize import brentq

from cfmfdtd import special


def test_values_at_origin():
    # [TRIVIAL] series at the origin
    assert special.bessel_j(0, 0.0) == 1.0
    assert special.bessel_j(1, 0.0) == 0.0
    assert special.bessel_j(5, 0.0) == 0.0


@pytest.mark.parametrize("x", [0.5, 3.77, 12.1])
def test_wronskian_spec_points(x):
    # [DERIVED] J_{n+1} Y_n - J_n Y_{n+1} = 2/(pi x)
    j = special.bessel_j_all(31, np.array([x]))[:, 0]
    y = special.bessel_y_all(31, np.array([x]))[:, 0]
    for n in range(31):
        w = j[n + 1] * y[n] - j[n] * y[n + 1]
        assert abs(w - 2 / (np.pi * x)) <= 1e-12 * max(1.0, 2 / (np.pi * x))


def test_first_zero_of_j0():
    # [DERIVED] bisection on our own series; independent value 2.404825557695773
    z = brentq(lambda x: float(special.bessel_j(0, x)), 2.0, 3.0, xtol=1e-14)
    assert abs(z - 2.404825558) <= 1e-8
    assert abs(special.bessel_j(0, 2.4048255577)) <= 1e-9


@pytest.mark.parametrize("n", [0, 1, 2, 7, 20, 35])
def test_against_scipy(n):
    x = np.linspace(0.05, 60.0, 997)
    np.testing.assert_allclose(special.bessel_j(n, x), sp.jv(n, x), rtol=1e-10, atol=1e-13)
    ref = sp.yv(n, x)
    np.testing.assert_allclose(special.bessel_y(n, x), ref, rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(special.bessel_jp(n, x), sp.jvp(n, x), rtol=1e-9, atol=1e-13)
    np.testing.assert_allclose(special.bessel_yp(n, x), sp.yvp(n, x), rtol=1e-9, atol=1e-12)


def test_negative_orders_and_hankel():
    x = np.array([0.7, 4.2, 19.0])
    for n in (1, 2, 3):
        np.testing.assert_allclose(special.bessel_j(-n, x), (-1) ** n * special.bessel_j(n, x))
    np.testing.assert_allclose(special.hankel2(3, x), sp.hankel2(3, x), rtol=1e-10)
    np.testing.assert_allclose(special.hankel2p(3, x), sp.h2vp(3, x), rtol=1e-9)


def test_cylinder_tables_consistent():
    x = np.array([0.3, 2.0, 9.5])
    j, jp, y, yp = special.cylinder_tables(6, x)
    for n in range(7):
        np.testing.assert_allclose(j[n], special.bessel_j(n, x))
        np.testing.assert_allclose(jp[n], special.bessel_jp(n, x), atol=1e-15)
        np.testing.assert_allclose(yp[n], special.bessel_yp(n, x), rtol=1e-12)


def test_domain_errors():
    with pytest.raises(ValueError):
        special.bessel_y(0, 0.0)
    with pytest.raises(ValueError):
        special.hankel2(1, -1.0)
    with pytest.raises(ValueError):
        special.bessel_j(0, -0.5)
