"""Arbitrary-precision scalar special functions.

All exact formulas in the package go through a :class:`PrecisionContext`
rather than machine doubles.  Values are :class:`gmpy2.mpfr` numbers carrying
``ctx.digits`` decimal digits of working precision.

``digamma`` and ``log_gamma`` shift the argument upward with the recurrence
until the Stirling/de Moivre asymptotic series converges below the working
epsilon, then sum that series with exact Bernoulli coefficients.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from functools import lru_cache

import gmpy2
from gmpy2 import mpfr, mpq, mpz

from .errors import DomainError

LOG2_10 = math.log2(10)
GUARD_DIGITS = 10


@dataclass(frozen=True)
class PrecisionContext:
    """Working precision policy.

    digits
        decimal digits carried by intermediate arithmetic.
    target_digits
        digits the caller wants to be correct.
    max_digits
        cap for automatic escalation on cancellation-prone sums.
    """

    digits: int = 40
    target_digits: int = 30
    max_digits: int = 10000

    def __post_init__(self):
        for name in ("digits", "target_digits", "max_digits"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise DomainError(f"{name} must be a positive integer, got {value!r}")
        if self.target_digits < 15:
            raise DomainError("target_digits must be at least 15")
        if self.digits < self.target_digits:
            raise DomainError("digits must be >= target_digits")
        if self.max_digits < self.digits:
            raise DomainError("max_digits must be >= digits")

    @property
    def tolerance(self):
        """Absolute/relative agreement threshold 10**-target_digits."""
        return mpfr(10) ** (-self.target_digits)

    def with_digits(self, digits):
        return PrecisionContext(
            digits=digits,
            target_digits=self.target_digits,
            max_digits=max(self.max_digits, digits),
        )


DEFAULT_CONTEXT = PrecisionContext()


def digits_to_bits(digits):
    return int(math.ceil(digits * LOG2_10)) + 4


@contextmanager
def working_precision(digits):
    """Set the gmpy2 context precision to ``digits`` decimal digits."""
    with gmpy2.context(gmpy2.get_context(), precision=digits_to_bits(digits)):
        yield


def to_exact(x):
    """Convert a real input to an exact rational (:class:`gmpy2.mpq`).

    Strings are parsed as decimal or ``p/q`` literals, so ``"0.1"`` is 1/10
    while the float ``0.1`` keeps its binary value.
    """
    if isinstance(x, bool):
        raise TypeError("bool is not a real number here")
    if isinstance(x, (int, type(mpz(0)))):
        return mpq(x)
    if isinstance(x, type(mpq(0))):
        return x
    if isinstance(x, (Fraction, float)):
        if isinstance(x, float) and not math.isfinite(x):
            raise DomainError(f"non-finite value {x!r}")
        return mpq(x)
    if isinstance(x, type(mpfr(0))):
        if not gmpy2.is_finite(x):
            raise DomainError(f"non-finite value {x!r}")
        return mpq(*x.as_integer_ratio())
    if isinstance(x, Decimal):
        return mpq(Fraction(x))
    if isinstance(x, str):
        try:
            return mpq(Fraction(x.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise DomainError(f"cannot parse real number {x!r}") from exc
    try:
        return mpq(Fraction(x))
    except (TypeError, ValueError) as exc:
        raise TypeError(f"unsupported numeric type {type(x).__name__}") from exc


def rounded(value, digits):
    """Round an mpfr to ``digits`` decimal digits of precision."""
    return mpfr(value, digits_to_bits(digits))


# Bernoulli numbers B_0, B_1, ... as exact rationals, grown on demand.
_BERNOULLI = [mpq(1), mpq(-1, 2)]


def bernoulli(n):
    """Exact Bernoulli number B_n (B_1 = -1/2 convention)."""
    while len(_BERNOULLI) <= n:
        m = len(_BERNOULLI)
        if m % 2 == 1:
            _BERNOULLI.append(mpq(0))
            continue
        # sum_{k=0}^{m} C(m+1, k) B_k = 0
        acc = mpq(0)
        for k in range(m):
            b = _BERNOULLI[k]
            if b:
                acc += gmpy2.comb(m + 1, k) * b
        _BERNOULLI.append(-acc / (m + 1))
    return _BERNOULLI[n]


def _shift_threshold(work_digits):
    # Asymptotic terms decay like (2n)!/(2 pi z)^(2n); z ~ work_digits keeps
    # the number of Bernoulli terms near work_digits/5.
    return work_digits + 10


def _check_positive(x):
    q = to_exact(x)
    if q <= 0:
        raise DomainError(f"argument must be positive, got {x!r}")
    return q


def digamma(x, ctx=DEFAULT_CONTEXT):
    """Psi(x) = d/dx log Gamma(x) for x > 0."""
    q = _check_positive(x)
    work = ctx.digits + GUARD_DIGITS
    with working_precision(work):
        eps = mpfr(2) ** (-digits_to_bits(work))
        threshold = _shift_threshold(work)
        shift = max(0, int(math.ceil(threshold - float(q))))
        acc = mpfr(0)
        for i in range(shift):
            acc -= 1 / mpfr(q + i)
        z = mpfr(q + shift)
        acc += gmpy2.log(z) - 1 / (2 * z)
        inv_z2 = 1 / (z * z)
        power = inv_z2
        n = 1
        while True:
            term = bernoulli(2 * n) * power / (2 * n)
            acc -= term
            if abs(term) < eps:
                break
            power *= inv_z2
            n += 1
    return rounded(acc, ctx.digits)


def log_gamma(x, ctx=DEFAULT_CONTEXT):
    """log Gamma(x) for x > 0."""
    q = _check_positive(x)
    work = ctx.digits + GUARD_DIGITS
    with working_precision(work):
        eps = mpfr(2) ** (-digits_to_bits(work))
        threshold = _shift_threshold(work)
        shift = max(0, int(math.ceil(threshold - float(q))))
        prod = mpfr(1)
        for i in range(shift):
            prod *= q + i
        z = mpfr(q + shift)
        acc = (z - mpfr(0.5)) * gmpy2.log(z) - z + gmpy2.log(2 * gmpy2.const_pi()) / 2
        inv_z = 1 / z
        inv_z2 = inv_z * inv_z
        power = inv_z
        n = 1
        while True:
            term = bernoulli(2 * n) * power / (2 * n * (2 * n - 1))
            acc += term
            if abs(term) < eps:
                break
            power *= inv_z2
            n += 1
        acc -= gmpy2.log(prod)
    return rounded(acc, ctx.digits)


@lru_cache(maxsize=64)
def _euler_gamma_digits(digits):
    psi1 = digamma(1, PrecisionContext(digits=digits, target_digits=15, max_digits=digits))
    with working_precision(digits):
        return -psi1


def euler_gamma(ctx=DEFAULT_CONTEXT):
    """Euler's constant, obtained as -Psi(1)."""
    return _euler_gamma_digits(ctx.digits)


def log(x, ctx=DEFAULT_CONTEXT):
    """Natural log of a positive real at the context precision."""
    q = _check_positive(x)
    with working_precision(ctx.digits + GUARD_DIGITS):
        value = gmpy2.log(mpfr(q))
    return rounded(value, ctx.digits)
