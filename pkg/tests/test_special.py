from fractions import Fraction

import gmpy2
import mpmath
import pytest
from gmpy2 import mpfr, mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from lyapgauss.errors import DomainError
from lyapgauss.special import (
    PrecisionContext,
    bernoulli,
    digamma,
    euler_gamma,
    log,
    log_gamma,
    to_exact,
    working_precision,
)

CTX = PrecisionContext(digits=60, target_digits=40, max_digits=200)

positive = st.fractions(min_value=Fraction(1, 1000), max_value=Fraction(500), max_denominator=1000).filter(
    lambda x: x > 0
)


def _mp(x):
    return mpmath.mpf(x.numerator) / x.denominator


def _close(a, b, digits):
    with mpmath.workdps(digits + 20):
        return abs(mpmath.mpf(str(a)) - b) <= mpmath.mpf(10) ** (-digits) * max(1, abs(b))


@settings(max_examples=60, deadline=None)
@given(positive)
def test_digamma_matches_mpmath(x):
    with mpmath.workdps(80):
        ref = mpmath.digamma(_mp(x))
    assert _close(digamma(x, CTX), ref, 55)


@settings(max_examples=60, deadline=None)
@given(positive)
def test_log_gamma_matches_mpmath(x):
    with mpmath.workdps(80):
        ref = mpmath.loggamma(_mp(x))
    assert _close(log_gamma(x, CTX), ref, 55)


@settings(max_examples=40, deadline=None)
@given(positive)
def test_digamma_recurrence(x):
    a = digamma(x + 1, CTX)
    b = digamma(x, CTX)
    with working_precision(CTX.digits):
        assert abs(a - b - 1 / mpfr(mpq(x))) < mpfr(10) ** -55


@settings(max_examples=30, deadline=None)
@given(positive)
def test_digamma_is_derivative_of_log_gamma(x):
    h = mpq(1, 10**12)
    q = mpq(x)
    up = log_gamma(q + h, CTX)
    down = log_gamma(q - h, CTX) if q > h else None
    with working_precision(CTX.digits):
        if down is None:
            return
        slope = (up - down) / (2 * mpfr(h))
        # central difference error ~ h^2 psi''' ; generous for small x
        assert abs(slope - digamma(q, CTX)) < mpfr(10) ** -12 * (1 + 1 / mpfr(q) ** 4)


def test_known_values():
    with mpmath.workdps(250):
        gamma = +mpmath.euler
        half = mpmath.digamma(mpmath.mpf(1) / 2)
    ctx = PrecisionContext(digits=200, target_digits=100, max_digits=400)
    assert _close(euler_gamma(ctx), gamma, 195)
    assert _close(digamma("1/2", ctx), half, 195)
    assert _close(log_gamma(1, ctx), mpmath.mpf(0), 195)
    assert _close(log_gamma(2, ctx), mpmath.mpf(0), 195)


def test_precision_doubling_agrees():
    lo = digamma("7/3", PrecisionContext(digits=50, target_digits=30, max_digits=100))
    hi = digamma("7/3", PrecisionContext(digits=100, target_digits=30, max_digits=200))
    with working_precision(100):
        assert abs(lo - hi) < mpfr(10) ** -48
    assert hi.precision > lo.precision


def test_bernoulli_numbers():
    assert bernoulli(0) == 1
    assert bernoulli(1) == mpq(-1, 2)
    assert bernoulli(2) == mpq(1, 6)
    assert bernoulli(12) == mpq(-691, 2730)
    assert all(bernoulli(n) == 0 for n in range(3, 30, 2))


def test_domain_errors():
    for bad in (0, -1, "-1/2"):
        with pytest.raises(DomainError):
            digamma(bad)
        with pytest.raises(DomainError):
            log_gamma(bad)
    with pytest.raises(DomainError):
        log(0)
    with pytest.raises(DomainError):
        to_exact(float("nan"))
    with pytest.raises(DomainError):
        to_exact("abc")


def test_context_validation():
    with pytest.raises(DomainError):
        PrecisionContext(digits=20, target_digits=30)
    with pytest.raises(DomainError):
        PrecisionContext(target_digits=10)
    with pytest.raises(DomainError):
        PrecisionContext(digits=100, target_digits=30, max_digits=50)
    assert PrecisionContext().with_digits(500).digits == 500


def test_to_exact_parses_decimals_exactly():
    assert to_exact("0.1") == mpq(1, 10)
    assert to_exact("1/4") == mpq(1, 4)
    assert to_exact(0.25) == mpq(1, 4)
    assert to_exact(0.1) != mpq(1, 10)  # binary value of the float
    assert to_exact(mpfr("0.5")) == mpq(1, 2)


def test_results_carry_requested_precision():
    ctx = PrecisionContext(digits=100, target_digits=50, max_digits=200)
    v = digamma(3, ctx)
    assert v.precision >= 330
    assert isinstance(v, type(gmpy2.mpfr(0)))
