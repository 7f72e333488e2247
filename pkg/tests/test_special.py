import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hermlab.special import (KummerParams, SpecialFunctionError, gamma,
                             kummer, kummer_f, kummer_scaled,
                             kummer_series_exact, pochhammer)


def test_gamma_against_stdlib():
    xs = np.concatenate([np.linspace(0.05, 12.0, 240),
                         np.linspace(-4.95, -0.05, 99)])
    for x in xs:
        if abs(x - round(x)) < 1e-6:
            continue
        assert gamma(float(x)) == pytest.approx(math.gamma(float(x)), rel=1e-12)


def test_gamma_pole():
    with pytest.raises(SpecialFunctionError):
        gamma(-2.0)


def test_pochhammer():
    assert pochhammer(3.0, 0) == 1.0
    assert pochhammer(2.5, 3) == 2.5 * 3.5 * 4.5


def test_kummer_trivial_values():
    assert kummer_f(0.3, 1.7, 0.0) == 1.0
    for z in (-3.0, 0.7, 4.0, 25.0):
        assert kummer_f(1.0, 1.0, z) == pytest.approx(math.exp(z), rel=1e-13)


def test_kummer_b_pole_rejected():
    with pytest.raises(SpecialFunctionError):
        KummerParams(0.5, -1.0, 2.0)


def test_kummer_transformation_example():
    lhs = kummer_f(0.7, 1.9, -5.0)
    rhs = math.exp(-5.0) * kummer_f(1.2, 1.9, 5.0)
    assert abs(lhs - rhs) / abs(rhs) < 1e-12


@pytest.mark.parametrize("a,b,z", [
    (3.0, 1.3, -20.0), (2.5, 1.3, 20.0), (-1.5, 2.5, 7.0), (0.7, 1.9, -5.0),
    (0.25, 6.0, 12.0), (-2.75, 1.3, -14.0),
])
def test_kummer_vs_exact_rational_series(a, b, z):
    ex = kummer_series_exact(Fraction(a).limit_denominator(10 ** 9),
                             Fraction(b).limit_denominator(10 ** 9),
                             Fraction(z).limit_denominator(10 ** 9), 300)
    assert kummer_f(a, b, z) == pytest.approx(float(ex), rel=5e-13)


def test_kummer_asymptotic_vs_exact_series():
    for z in (50, 200):
        ex = kummer_series_exact(Fraction(7, 10), Fraction(19, 10), z, 700)
        assert kummer_f(0.7, 1.9, float(z)) == pytest.approx(float(ex), rel=1e-12)


def test_kummer_terminating_polynomial():
    # a nonpositive integer: exact polynomial, any z
    val = kummer_f(-2.0, 1.5, 100.0)
    want = 1.0 + (-2.0) / 1.5 * 100.0 + ((-2) * (-1)) / (1.5 * 2.5) * 100.0 ** 2 / 2.0
    assert val == pytest.approx(want, rel=1e-13)


def test_kummer_overflow_scaled_form():
    out = kummer_scaled(KummerParams(1.0, 1.0, 800.0))
    assert out.value is None
    assert out.log_magnitude == pytest.approx(800.0, rel=1e-12)
    with pytest.raises(SpecialFunctionError):
        kummer(KummerParams(1.0, 1.0, 800.0))


def test_kummer_limit_ratio_convergence():
    a, b = 0.7, 1.9
    devs = []
    for z in (50.0, 100.0, 200.0):
        lead = gamma(b) / gamma(a) * math.exp(z) * z ** (a - b)
        devs.append(abs(kummer_f(a, b, z) / lead - 1.0))
    assert devs[0] > devs[1] > devs[2]
    assert devs[2] < 0.6 * devs[0]       # ~O(1/z) shrinkage


@settings(max_examples=40, deadline=None)
@given(st.integers(-28, 28).map(lambda k: k / 2.0 or 0.5),
       st.sampled_from([1.3, 2.0, 3.0, 6.0]),
       st.integers(-38, 38).map(lambda k: k / 2.0))
def test_kummer_ode_property(a, b, z):
    if z == 0.0:
        return
    F = kummer_f(a, b, z)
    Fp = (a / b) * kummer_f(a + 1, b + 1, z)
    Fpp = (a * (a + 1) / (b * (b + 1))) * kummer_f(a + 2, b + 2, z)
    resid = z * Fpp + (b - z) * Fp - a * F
    scale = max(abs(F), abs(z * Fpp), abs((b - z) * Fp), 1e-30)
    assert abs(resid) / scale < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(-11, 11).map(lambda k: k / 4.0 + 0.125),
       st.sampled_from([1.3, 2.0, 3.0]),
       st.integers(-80, 80).map(lambda k: k / 4.0))
def test_kummer_transformation_property(a, b, z):
    if z == 0.0:
        return
    F = kummer_f(a, b, z)
    other = math.exp(z) * kummer_f(b - a, b, -z)
    assert abs(F - other) / max(abs(F), 1e-30) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(-11, 11).map(lambda k: k / 4.0 + 0.125),
       st.sampled_from([1.3, 3.0]),
       st.integers(-40, 40).map(lambda k: k / 2.0))
def test_kummer_derivative_identity_vs_fd(a, b, z):
    if z == 0.0:
        return
    F = kummer_f(a, b, z)
    hz = 1e-6 * max(1.0, abs(z))
    Ffd = (kummer_f(a, b, z + hz) - kummer_f(a, b, z - hz)) / (2 * hz)
    lhs = a * kummer_f(a + 1, b, z)
    rhs = a * F + z * Ffd
    scale = max(abs(lhs), abs(a * F), abs(z * Ffd), 1.0)
    assert abs(lhs - rhs) / scale < 1e-8
