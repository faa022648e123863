"""Closed-form Lyapunov exponents for products of Gaussian random matrices.

The factors are ``A = Sigma^{1/2} G`` with ``G`` a d x d Ginibre matrix.
Covariance enters only through ``y``, the eigenvalues of ``Sigma^{-1}``.
Complex entries are standard complex normals with ``E|g|^2 = 1``, real
entries standard normals.  Under that convention the isotropic complex
exponents are ``mu_k = Psi(d - k + 1) / 2``.

Inputs are converted to exact rationals, so the partition-of-unity weights
of the maximal/minimal exponent formulas are computed exactly and only the
logarithms carry rounding.  Determinant quotients for the general index k
and for L(q) go through pivoted elimination in arbitrary precision.  Both
paths escalate precision until two successive evaluations agree to
``ctx.target_digits``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr, mpq, mpz

from .errors import DegenerateSpectrumError, DomainError
from .linalg import escalate, lu_factor
from .special import (
    DEFAULT_CONTEXT,
    GUARD_DIGITS,
    digamma,
    euler_gamma,
    log_gamma,
    rounded,
    to_exact,
    working_precision,
)

DEFAULT_SEPARATION = 1e-8
_DEFAULT_DIGITS = DEFAULT_CONTEXT.digits


def separation_tolerance(ctx=DEFAULT_CONTEXT):
    """Relative gap below which two eigenvalues count as coincident.

    1e-8 at the default 40 working digits, tightening proportionally as
    ``ctx.digits`` grows.
    """
    return mpq(1, 10 ** max(1, round(8 * ctx.digits / _DEFAULT_DIGITS)))


@dataclass(frozen=True)
class CovarianceSpectrum:
    """Eigenvalues ``y`` of Sigma^{-1}, stored as exact rationals."""

    y: tuple

    def __post_init__(self):
        values = tuple(to_exact(v) for v in self.y)
        if not values:
            raise DomainError("covariance spectrum needs at least one eigenvalue")
        for v in values:
            if v <= 0:
                raise DomainError(f"eigenvalues of Sigma^-1 must be positive, got {float(v)!r}")
        object.__setattr__(self, "y", values)

    @classmethod
    def from_sigma_eigs(cls, eigs):
        """Build from eigenvalues of Sigma itself (inverted exactly)."""
        return cls(tuple(1 / to_exact(e) for e in eigs))

    @property
    def d(self):
        return len(self.y)

    @property
    def sigma_eigs(self):
        return tuple(1 / v for v in self.y)

    def floats(self):
        return [float(v) for v in self.y]

    def scaled(self, c):
        c = to_exact(c)
        return CovarianceSpectrum(tuple(c * v for v in self.y))

    @property
    def all_equal(self):
        return all(v == self.y[0] for v in self.y)

    def closest_pair(self):
        """Indices (i, j) and relative gap of the closest pair, or None for d=1."""
        if self.d < 2:
            return None
        order = sorted(range(self.d), key=lambda i: self.y[i])
        best = None
        for a, b in zip(order, order[1:]):
            gap = (self.y[b] - self.y[a]) / self.y[b]
            if best is None or gap < best[1]:
                best = ((a, b), gap)
        return best

    def pairwise_distinct(self, ctx=DEFAULT_CONTEXT):
        pair = self.closest_pair()
        return pair is None or pair[1] > separation_tolerance(ctx)


def as_spectrum(y):
    return y if isinstance(y, CovarianceSpectrum) else CovarianceSpectrum(tuple(y))


@dataclass(frozen=True)
class LyapunovSpectrum:
    mu: tuple
    provenance: str
    digits: int | None = None

    @property
    def d(self):
        return len(self.mu)

    def total(self, digits=None):
        digits = digits or self.digits or _DEFAULT_DIGITS
        with working_precision(digits + GUARD_DIGITS):
            acc = mpfr(0)
            for m in self.mu:
                acc += m
        return rounded(acc, digits)

    def is_ordered(self):
        return all(a >= b for a, b in zip(self.mu, self.mu[1:]))


@dataclass(frozen=True)
class GlqPoint:
    q: object
    L: object


@dataclass(frozen=True)
class DiffusionParams:
    d: int
    sigma1: float = 1.0
    sigma2: float = 0.0

    def __post_init__(self):
        _check_dim(self.d)
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise DomainError("sigma1 and sigma2 must be nonnegative")


def _check_dim(d):
    if not isinstance(d, (int, np.integer)) or isinstance(d, bool) or d < 1:
        raise DomainError(f"dimension must be an integer >= 1, got {d!r}")


def _check_index(k, d):
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= d:
        raise DomainError(f"index k must satisfy 1 <= k <= {d}, got {k!r}")


def _require_distinct(spec, ctx):
    pair = spec.closest_pair()
    if pair is not None and pair[1] <= separation_tolerance(ctx):
        (i, j), gap = pair
        raise DegenerateSpectrumError(
            f"eigenvalues y[{i}]={float(spec.y[i])!r} and y[{j}]={float(spec.y[j])!r} "
            f"have relative separation {float(gap):.3e} <= {float(separation_tolerance(ctx)):.0e}",
            pair=(i, j),
        )


def _half(x, digits):
    with working_precision(digits):
        return rounded(x / 2, digits)


# ---------------------------------------------------------------------------
# isotropic and sum-rule formulas


def isotropic_complex_spectrum(d, ctx=DEFAULT_CONTEXT):
    """mu_k = Psi(d - k + 1)/2, k = 1..d, for Sigma = I."""
    _check_dim(d)
    mu = tuple(_half(digamma(d - k + 1, ctx), ctx.digits) for k in range(1, d + 1))
    return LyapunovSpectrum(mu, "complex-isotropic", ctx.digits)


def isotropic_real_spectrum(d, ctx=DEFAULT_CONTEXT):
    """Newman's exponents (log 2 + Psi((d - i + 1)/2))/2 for real Ginibre factors."""
    _check_dim(d)
    with working_precision(ctx.digits + GUARD_DIGITS):
        log2 = gmpy2.log(mpfr(2))
        mu = tuple(
            rounded((log2 + digamma(mpq(d - i + 1, 2), ctx)) / 2, ctx.digits)
            for i in range(1, d + 1)
        )
    return LyapunovSpectrum(mu, "real-isotropic", ctx.digits)


def partial_sum_isotropic(d, k, ctx=DEFAULT_CONTEXT):
    """mu_1 + ... + mu_k = (1/2) sum_{j<k} Psi(d - j) for Sigma = I (complex)."""
    _check_dim(d)
    _check_index(k, d)
    with working_precision(ctx.digits + GUARD_DIGITS):
        acc = mpfr(0)
        for j in range(k):
            acc += digamma(d - j, ctx)
        return rounded(acc / 2, ctx.digits)


def sum_rule_complex(y, ctx=DEFAULT_CONTEXT):
    """(1/2) sum_m (-log y_m + Psi(m)); no distinctness needed."""
    spec = as_spectrum(y)
    with working_precision(ctx.digits + GUARD_DIGITS):
        acc = mpfr(0)
        for m, v in enumerate(spec.y, start=1):
            acc += digamma(m, ctx) - gmpy2.log(mpfr(v))
        return rounded(acc / 2, ctx.digits)


def sum_rule_real(y, ctx=DEFAULT_CONTEXT):
    """(1/2)(log det Sigma + d log 2 + sum_{j<d} Psi((j+1)/2)) for real factors."""
    spec = as_spectrum(y)
    d = spec.d
    with working_precision(ctx.digits + GUARD_DIGITS):
        acc = d * gmpy2.log(mpfr(2))
        for v in spec.y:
            acc -= gmpy2.log(mpfr(v))
        for j in range(d):
            acc += digamma(mpq(j + 1, 2), ctx)
        return rounded(acc / 2, ctx.digits)


def real_mu1_d2(y, ctx=DEFAULT_CONTEXT):
    """Maximal exponent for 2 x 2 real factors: -gamma/2 + log(Tr Sigma/2 + sqrt(det Sigma))/2."""
    spec = as_spectrum(y)
    if spec.d != 2:
        raise DomainError(f"real_mu1_d2 needs d = 2, got d = {spec.d}")
    y1, y2 = spec.y
    trace = 1 / y1 + 1 / y2
    det = 1 / (y1 * y2)
    gamma = euler_gamma(ctx)
    with working_precision(ctx.digits + GUARD_DIGITS):
        value = (gmpy2.log(mpfr(trace) / 2 + gmpy2.sqrt(mpfr(det))) - gamma) / 2
        return rounded(value, ctx.digits)


# ---------------------------------------------------------------------------
# exact partition-of-unity weights for the edge exponents


def integer_nodes(spec):
    """Scale y to coprime-free integers n_j = Q*y_j sharing one denominator Q."""
    q = mpz(1)
    for v in spec.y:
        q = gmpy2.lcm(q, v.denominator)
    return [mpz(v * q) for v in spec.y]


def _difference_products(nodes):
    # D_j = prod_{l != j} (n_l - n_j), exactly
    out = []
    for j, nj in enumerate(nodes):
        out.append(math.prod([nl - nj for l, nl in enumerate(nodes) if l != j]))
    return out


def max_weights(y):
    """Exact w_j = 1/prod_{l!=j}(1 - y_j/y_l); they sum to one."""
    spec = as_spectrum(y)
    nodes = integer_nodes(spec)
    total = math.prod(nodes)
    diffs = _difference_products(nodes)
    return [mpq(total // n, dj) for n, dj in zip(nodes, diffs)]


def min_weights(y):
    """Exact v_j = 1/prod_{l!=j}(1 - y_l/y_j); they sum to one."""
    spec = as_spectrum(y)
    nodes = integer_nodes(spec)
    d = len(nodes)
    diffs = _difference_products(nodes)
    sign = -1 if (d - 1) % 2 else 1
    return [mpq(sign * n ** (d - 1), dj) for n, dj in zip(nodes, diffs)]


def partition_of_unity_residual(y, which="max"):
    """sum_j w_j - 1 computed exactly (an mpq, zero in exact arithmetic)."""
    weights = max_weights(y) if which == "max" else min_weights(y)
    return sum(weights, mpq(0)) - 1


def _log10_abs(q):
    if q == 0:
        return -math.inf
    num, den = abs(q.numerator), q.denominator
    return (num.bit_length() - den.bit_length()) * math.log10(2)


def _weighted_log_sum(weights, spec, ctx):
    """sum_j w_j log y_j under precision escalation; returns (value, digits)."""
    mags = [
        _log10_abs(w) + math.log10(max(abs(math.log(float(v))), 1e-300))
        for w, v in zip(weights, spec.y)
        if w
    ]
    loss = max(0, math.ceil(max(mags, default=0)))
    start = ctx.target_digits + GUARD_DIGITS + loss

    def evaluate(digits):
        with working_precision(digits):
            acc = mpfr(0)
            for w, v in zip(weights, spec.y):
                if w and v != 1:
                    acc += mpfr(w) * gmpy2.log(mpfr(v))
            return acc

    return escalate(evaluate, ctx, start_digits=start)


def _mu_max_with_digits(spec, ctx):
    if spec.d == 1:
        with working_precision(ctx.digits + GUARD_DIGITS):
            value = -(gmpy2.log(mpfr(spec.y[0])) + euler_gamma(ctx)) / 2
            return rounded(value, ctx.digits), ctx.digits
    _require_distinct(spec, ctx)
    s, digits = _weighted_log_sum(max_weights(spec), spec, ctx)
    gamma = euler_gamma(ctx)
    with working_precision(ctx.digits + GUARD_DIGITS):
        return rounded(-(s + gamma) / 2, ctx.digits), digits


def mu_max_closed(y, ctx=DEFAULT_CONTEXT):
    """-(1/2) sum_j log y_j / prod_{l!=j}(1 - y_j/y_l) - gamma/2."""
    return _mu_max_with_digits(as_spectrum(y), ctx)[0]


def mu_min_closed(y, ctx=DEFAULT_CONTEXT):
    """-(1/2) sum_j log y_j / prod_{l!=j}(1 - y_l/y_j) + Psi(d)/2."""
    spec = as_spectrum(y)
    if spec.d == 1:
        return mu_max_closed(spec, ctx)
    _require_distinct(spec, ctx)
    s, _ = _weighted_log_sum(min_weights(spec), spec, ctx)
    psi = digamma(spec.d, ctx)
    with working_precision(ctx.digits + GUARD_DIGITS):
        return rounded((psi - s) / 2, ctx.digits)


# ---------------------------------------------------------------------------
# determinant quotients by pivoted elimination


def _cancellation_estimate(spec):
    """Rough decimal digits lost in the Vandermonde quotients (float64 estimate)."""
    y = np.array(spec.floats())
    if y.size < 2:
        return 0
    logy = np.log(y)
    diff = np.abs(y[:, None] - y[None, :])
    np.fill_diagonal(diff, 1.0)
    logw = (logy.sum() - logy) - np.log(diff).sum(axis=1)
    est = logw / math.log(10)
    scale = (y.size - 1) * abs(np.log10(y)).max()
    return max(0, math.ceil(est.max() + scale))


def _vandermonde_quotients(spec, ks, first_row_fn, digits):
    """For each k in ``ks``: det(V with row k replaced)/det(V) by one LU of V.

    V[i][j] = y_j**i.  The replacement row for index k is ``first_row_fn(k,
    nodes, logs)``.  Uses det(M_k)/det(V) = r_k . (V^{-1} e_k).
    """
    d = spec.d
    with working_precision(digits):
        nodes = [mpfr(v) for v in spec.y]
        logs = [gmpy2.log(x) for x in nodes]
        powers = [[mpfr(1)] * d]
        for _ in range(1, d):
            powers.append([a * b for a, b in zip(powers[-1], nodes)])
        lu = lu_factor(powers)
        out = []
        for k in ks:
            unit = [mpfr(0)] * d
            unit[k - 1] = mpfr(1)
            column = lu.solve(unit)
            row = first_row_fn(k, nodes, logs, powers)
            acc = mpfr(0)
            for a, b in zip(row, column):
                acc += a * b
            out.append(acc)
        return out


def _log_row(k, nodes, logs, powers):
    return [lg * p for lg, p in zip(logs, powers[k - 1])]


def _complex_exponents(spec, ks, ctx):
    if spec.all_equal:
        iso = isotropic_complex_spectrum(spec.d, ctx).mu
        with working_precision(ctx.digits + GUARD_DIGITS):
            shift = gmpy2.log(mpfr(spec.y[0])) / 2
            return [rounded(iso[k - 1] - shift, ctx.digits) for k in ks], ctx.digits
    _require_distinct(spec, ctx)
    start = ctx.target_digits + GUARD_DIGITS + _cancellation_estimate(spec)
    ratios, digits = escalate(
        lambda p: _vandermonde_quotients(spec, ks, _log_row, p), ctx, start_digits=start
    )
    out = []
    for k, r in zip(ks, ratios):
        psi = digamma(k, ctx)
        with working_precision(ctx.digits + GUARD_DIGITS):
            out.append(rounded((psi - r) / 2, ctx.digits))
    return out, digits


def complex_exponent(k, y, ctx=DEFAULT_CONTEXT):
    """k-th exponent for complex factors with general covariance.

    mu_k = -(1/2) det[V with row k -> (log y_j) y_j^(k-1)] / prod_{i<j}(y_j - y_i)
    + Psi(k)/2.  All-equal y falls back to the isotropic values shifted by
    -(1/2) log y; partially coincident y raises DegenerateSpectrumError.
    """
    spec = as_spectrum(y)
    _check_index(k, spec.d)
    return _complex_exponents(spec, [k], ctx)[0][0]


def complex_spectrum(y, ctx=DEFAULT_CONTEXT):
    spec = as_spectrum(y)
    ks = list(range(1, spec.d + 1))
    mu, digits = _complex_exponents(spec, ks, ctx)
    provenance = "complex-isotropic-shifted" if spec.all_equal else "complex-general-det"
    return LyapunovSpectrum(tuple(mu), provenance, digits)


# ---------------------------------------------------------------------------
# generalized maximum exponent L(q)


def glq_isotropic(q, d, ctx=DEFAULT_CONTEXT):
    """L(q) = log Gamma(q/2 + d) - log Gamma(d)."""
    _check_dim(d)
    qq = to_exact(q)
    if qq < 0 or qq / 2 + d <= 0:
        raise DomainError(f"q must be >= 0, got {q!r}")
    if qq == 0:
        return GlqPoint(q, rounded(mpfr(0), ctx.digits))
    a = log_gamma(qq / 2 + d, ctx)
    b = log_gamma(d, ctx)
    with working_precision(ctx.digits + GUARD_DIGITS):
        return GlqPoint(q, rounded(a - b, ctx.digits))


def glq_general(q, y, ctx=DEFAULT_CONTEXT):
    """L(q) = log(Gamma(1 + q/2) det M(q) / det M(0)).

    M(q) has first row y_j^(-q/2) and rows y_j^(i-1), i = 2..d; M(0) is the
    plain Vandermonde matrix, which fixes the overall sign.
    """
    spec = as_spectrum(y)
    qq = to_exact(q)
    if qq < 0:
        raise DomainError(f"q must be >= 0, got {q!r}")
    if qq == 0:
        return GlqPoint(q, rounded(mpfr(0), ctx.digits))
    if spec.all_equal:
        iso = glq_isotropic(qq, spec.d, ctx).L
        with working_precision(ctx.digits + GUARD_DIGITS):
            shift = qq / 2 * gmpy2.log(mpfr(spec.y[0]))
            return GlqPoint(q, rounded(iso - shift, ctx.digits))
    _require_distinct(spec, ctx)

    def moment_row(k, nodes, logs, powers):
        return [gmpy2.exp(-(qq / 2) * lg) for lg in logs]

    start = ctx.target_digits + GUARD_DIGITS + _cancellation_estimate(spec)
    (ratio,), digits = escalate(
        lambda p: _vandermonde_quotients(spec, [1], moment_row, p), ctx, start_digits=start
    )
    if ratio <= 0:
        raise ArithmeticError(f"moment ratio evaluated non-positive ({ratio})")
    lg = log_gamma(1 + qq / 2, ctx)
    with working_precision(ctx.digits + GUARD_DIGITS):
        return GlqPoint(q, rounded(lg + gmpy2.log(ratio), ctx.digits))


# ---------------------------------------------------------------------------
# diffusing matrices


def diffusive_spectrum(p):
    """mu_k = sigma1^2 (d - 2k + 1); independent of sigma2."""
    s1 = to_exact(p.sigma1)
    mu = tuple(float(s1 * s1 * (p.d - 2 * k + 1)) for k in range(1, p.d + 1))
    return LyapunovSpectrum(mu, "diffusive")


def diffusive_partial_sum(p, k):
    """mu_1 + ... + mu_k = sigma1^2 k (d - k)."""
    _check_index(k, p.d)
    s1 = to_exact(p.sigma1)
    return float(s1 * s1 * k * (p.d - k))


# ---------------------------------------------------------------------------
# large-d profiles


@dataclass(frozen=True)
class LinearProfile:
    """Y(x) = a + b x on (0, 1]; eigenvalues y_m = d Y(m/d)."""

    a: object
    b: object
    label: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "a", to_exact(self.a))
        object.__setattr__(self, "b", to_exact(self.b))

    def nodes(self, d):
        _check_dim(d)
        if self.b < 0:
            raise DomainError("profile must be increasing (b > 0)")
        ys = [self.a * d + self.b * m for m in range(1, d + 1)]
        if any(v <= 0 for v in ys):
            raise DomainError("profile produces non-positive eigenvalues")
        return CovarianceSpectrum(tuple(ys))

    def __str__(self):
        return self.label or f"linear:{self.a},{self.b}"


def parse_profile(text):
    """Parse ``linear:a,b``."""
    kind, _, args = text.partition(":")
    if kind.strip() != "linear":
        raise DomainError(f"unsupported profile {text!r}; expected linear:a,b")
    parts = [p for p in args.split(",") if p.strip()]
    if len(parts) != 2:
        raise DomainError(f"linear profile needs two coefficients, got {text!r}")
    return LinearProfile(parts[0].strip(), parts[1].strip(), label=text.strip())


def profile_point(d, profile, ctx=DEFAULT_CONTEXT):
    """(mu_1, digits used) for y_m = d Y(m/d)."""
    spec = profile.nodes(d)
    return _mu_max_with_digits(spec, ctx)


def profile_spectrum(d, profile, ctx=DEFAULT_CONTEXT):
    """Maximal exponent for the eigenvalue profile y_m = d Y(m/d)."""
    return profile_point(d, profile, ctx)[0]
