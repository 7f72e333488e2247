"""Confluent hypergeometric (Kummer) function and the gamma kernel.

Evaluation policy:
  * terminating series whenever a is a nonpositive integer (polynomial case);
  * z < 0: first Kummer transformation F(a,b,z) = e^z F(b-a,b,-z), always --
    the raw alternating series loses ~|z|/ln 10 digits to cancellation;
  * 0 <= z <= 30: power series with the relative-term truncation rule;
  * z > 30: optimally truncated asymptotic expansion
    F ~ Gamma(b)/Gamma(a) e^z z^{a-b} sum_k (b-a)_k (1-a)_k / (k! z^k).
Overflow of e^z is reported through a scaled log-representation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SERIES_MAX_TERMS = 500
SERIES_RELTOL = 1e-16
ASYMPTOTIC_SWITCH = 30.0

# Lanczos g=7, n=9 coefficients (double-precision standard set)
_LANCZOS_G = 7.0
_LANCZOS_C = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


class SpecialFunctionError(ValueError):
    pass


def gamma(x: float) -> float:
    """Lanczos approximation; |rel. error| < 1e-12 on the used range."""
    if x == math.floor(x) and x <= 0:
        raise SpecialFunctionError(f"gamma pole at {x}")
    if x < 0.5:
        # reflection
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x = x - 1.0
    a = _LANCZOS_C[0]
    t = x + _LANCZOS_G + 0.5
    for i in range(1, len(_LANCZOS_C)):
        a += _LANCZOS_C[i] / (x + i)
    return math.sqrt(2 * math.pi) * t ** (x + 0.5) * math.exp(-t) * a


def pochhammer(a: float, i: int) -> float:
    """(a)_i = a (a+1) ... (a+i-1), (a)_0 = 1."""
    out = 1.0
    for k in range(i):
        out *= a + k
    return out


@dataclass(frozen=True)
class KummerParams:
    a: float
    b: float
    z: float
    series_reltol: float = SERIES_RELTOL
    asymptotic_switch: float = ASYMPTOTIC_SWITCH

    def __post_init__(self):
        if self.b == math.floor(self.b) and self.b <= 0:
            raise SpecialFunctionError("b must not be a nonpositive integer")


def _series(a: float, b: float, z: float, reltol: float) -> float:
    """Power series sum_i (a)_i z^i / ((b)_i i!) with the truncation rule:
    stop when |term| < reltol * |partial sum| or after SERIES_MAX_TERMS."""
    term = 1.0
    total = 1.0
    for i in range(1, SERIES_MAX_TERMS + 1):
        term *= (a + i - 1) / (b + i - 1) * z / i
        total += term
        if abs(term) < reltol * abs(total):
            break
    return total


def _is_nonpositive_int(a: float) -> bool:
    return a == math.floor(a) and a <= 0


def _asymptotic(a: float, b: float, z: float):
    """Large-z expansion, truncated at the smallest term; returns
    (log_magnitude, sign, value_or_None). value is None on e^z overflow."""
    # correction series sum_k (b-a)_k (1-a)_k / (k! z^k)
    s = 1.0
    term = 1.0
    for k in range(1, 40):
        new = term * (b - a + k - 1) * (1 - a + k - 1) / (k * z)
        if abs(new) > abs(term):
            break           # optimal truncation reached
        term = new
        s += term
        if abs(term) < 1e-17 * abs(s):
            break
    pref = gamma(b) / gamma(a)
    sign = math.copysign(1.0, pref * s)
    logmag = math.log(abs(pref)) + z + (a - b) * math.log(z) + math.log(abs(s))
    value = None
    if logmag < 700.0:
        value = sign * math.exp(logmag)
    return logmag, sign, value


@dataclass
class KummerValue:
    value: float | None      # None when only the log form is representable
    log_magnitude: float
    sign: float

    def __float__(self):
        if self.value is None:
            raise OverflowError("kummer value overflows; use the log form")
        return self.value


def kummer(params: KummerParams) -> float:
    """F(a,b,z); raises OverflowError semantics via kummer_scaled for huge z."""
    out = kummer_scaled(params)
    if out.value is None:
        raise SpecialFunctionError("kummer overflow: use kummer_scaled")
    return out.value


def kummer_scaled(params: KummerParams) -> KummerValue:
    a, b, z = params.a, params.b, params.z
    if z == 0.0 or a == 0.0:
        return KummerValue(1.0, 0.0, 1.0)
    if _is_nonpositive_int(a):
        v = _series(a, b, z, params.series_reltol)   # terminates exactly
        return _pack(v)
    if z < 0.0:
        # first Kummer transformation; -z > 0 is cancellation-free
        inner = kummer_scaled(KummerParams(b - a, b, -z, params.series_reltol,
                                           params.asymptotic_switch))
        logmag = z + inner.log_magnitude
        value = inner.sign * math.exp(logmag) if logmag < 700.0 else None
        return KummerValue(value, logmag, inner.sign)
    if z <= params.asymptotic_switch:
        return _pack(_series(a, b, z, params.series_reltol))
    logmag, sign, value = _asymptotic(a, b, z)
    return KummerValue(value, logmag, sign)


def _pack(v: float) -> KummerValue:
    if v == 0.0:
        return KummerValue(0.0, -math.inf, 0.0)
    return KummerValue(v, math.log(abs(v)), math.copysign(1.0, v))


def kummer_f(a: float, b: float, z: float) -> float:
    """Convenience scalar evaluator."""
    return kummer(KummerParams(a, b, z))


def kummer_dz(a: float, b: float, z: float) -> float:
    """dF/dz = (a/b) F(a+1, b+1, z)."""
    return (a / b) * kummer_f(a + 1, b + 1, z)


def kummer_series_exact(a_frac, b_frac, z_frac, terms: int = 200):
    """Truncated series in exact rational arithmetic (independent oracle).

    Arguments are `fractions.Fraction`s (or ints); the result is a Fraction.
    Truncation error after `terms` terms is below z^terms/terms! and is
    negligible for |z| <= 30, terms >= 150.
    """
    from fractions import Fraction

    a = Fraction(a_frac)
    b = Fraction(b_frac)
    z = Fraction(z_frac)
    term = Fraction(1)
    total = Fraction(1)
    for i in range(1, terms + 1):
        term *= (a + i - 1) * z
        term /= (b + i - 1) * i
        total += term
    return total
