"""Internal-consistency suite behind ``lyapgauss verify``.

Every check compares two independent routes to the same number and
returns a :class:`Check` carrying the discrepancy and its tolerance.
Exact formulas are looked up through the ``exact`` module at call time so
that a patched formula is seen by the suite.
"""

from __future__ import annotations

import math

import gmpy2
import numpy as np
from gmpy2 import mpfr

from . import exact, mc
from .report import Check
from .special import DEFAULT_CONTEXT, GUARD_DIGITS, euler_gamma, log, to_exact, working_precision

MC_NSIGMA = 4.0
Y_PAPER = ("1", "1/4")


def _absdiff(a, b, digits):
    with working_precision(digits + GUARD_DIGITS):
        return abs(mpfr(a) - mpfr(b))


def random_spectra(n, d_max, seed, d_min=2, isotropic_every=0):
    """n random spectra with d in [d_min, d_max] and y log-uniform in [1e-2, 1e2].

    With ``isotropic_every = j > 0`` every j-th spectrum is a multiple of the
    identity, so the isotropic route is covered too.
    """
    gen = np.random.default_rng([seed, 0x5EC7])
    out = []
    for i in range(n):
        d = int(gen.integers(d_min, d_max + 1))
        if isotropic_every and i % isotropic_every == isotropic_every - 1:
            c = to_exact(float(10 ** gen.uniform(-2, 2)))
            out.append(exact.CovarianceSpectrum((c,) * d))
            continue
        ys = 10 ** gen.uniform(-2, 2, size=d)
        out.append(exact.CovarianceSpectrum(tuple(to_exact(float(v)) for v in ys)))
    return out


def richardson_slope(f1, f2, h1, h2):
    """Slope at 0 of f with f(0) = 0, from f1 = f(h1) and f2 = f(h2).

    The difference quotients D(h) = f(h)/h = slope + c h + O(h^2) at the two
    step sizes are combined to cancel the linear term.
    """
    d1 = f1 / h1
    d2 = f2 / h2
    return (h1 * d2 - h2 * d1) / (h1 - h2)


def glq_slope(y, h1="1e-4", h2="1e-6", ctx=DEFAULT_CONTEXT):
    """Richardson-extrapolated slope of L(q) at q = 0 (equals mu_1)."""
    spec = exact.as_spectrum(y)
    a, b = to_exact(h1), to_exact(h2)
    la = exact.glq_general(a, spec, ctx).L
    lb = exact.glq_general(b, spec, ctx).L
    with working_precision(ctx.digits + GUARD_DIGITS):
        return richardson_slope(la, lb, mpfr(a), mpfr(b))


# ---------------------------------------------------------------------------
# exact-only checks


def check_paper_values(ctx=DEFAULT_CONTEXT):
    mu = exact.complex_spectrum(Y_PAPER, ctx).mu
    g = euler_gamma(ctx)
    with working_precision(ctx.digits + GUARD_DIGITS):
        log2 = gmpy2.log(mpfr(2))
        ref = (4 * log2 / 3 - g / 2, -log2 / 3 + (1 - g) / 2)
        err = max(abs(a - b) for a, b in zip(mu, ref))
    return Check("d2_closed_form", err, 1e-25, err < 1e-25, "y=(1,1/4) against (4/3)log2-g/2, -(1/3)log2+(1-g)/2")


def check_sum_rule(spectra, ctx=DEFAULT_CONTEXT):
    worst = mpfr(0)
    for spec in spectra:
        total = exact.complex_spectrum(spec, ctx).total(ctx.digits)
        worst = max(worst, _absdiff(total, exact.sum_rule_complex(spec, ctx), ctx.digits))
    return Check("sum_rule_closure", worst, 1e-10, worst < 1e-10, f"{len(spectra)} spectra")


def check_edges(spectra, ctx=DEFAULT_CONTEXT):
    worst = mpfr(0)
    for spec in spectra:
        if spec.all_equal:
            continue
        mu = exact.complex_spectrum(spec, ctx).mu
        worst = max(
            worst,
            _absdiff(mu[0], exact.mu_max_closed(spec, ctx), ctx.digits),
            _absdiff(mu[-1], exact.mu_min_closed(spec, ctx), ctx.digits),
        )
    return Check("edge_equivalence", worst, 1e-10, worst < 1e-10, "mu_1 and mu_d against the edge sums")


def check_partition(spectra):
    worst = mpfr(0)
    for spec in spectra:
        if spec.all_equal:
            continue
        for which in ("max", "min"):
            worst = max(worst, abs(mpfr(exact.partition_of_unity_residual(spec, which))))
    return Check("partition_of_unity", worst, 1e-12, worst < 1e-12, "")


def check_scaling(spectra, ctx=DEFAULT_CONTEXT, c="7/3"):
    """y -> c y shifts every exponent by -(1/2) log c."""
    shift = log(c, ctx)
    worst = mpfr(0)
    for spec in spectra:
        a = exact.complex_spectrum(spec, ctx).mu
        b = exact.complex_spectrum(spec.scaled(to_exact(c)), ctx).mu
        with working_precision(ctx.digits + GUARD_DIGITS):
            worst = max([worst] + [abs(u - v - shift / 2) for u, v in zip(a, b)])
    return Check("scaling_covariance", worst, 1e-20, worst < 1e-20, f"c={c}")


def check_glq(ctx=DEFAULT_CONTEXT):
    out = []
    spec = exact.as_spectrum(Y_PAPER)
    trace = sum(spec.sigma_eigs)
    err = _absdiff(exact.glq_general(2, spec, ctx).L, log(trace, ctx), ctx.digits)
    out.append(Check("glq_trace", err, 1e-12, err < 1e-12, "L(2) = log Tr Sigma"))
    slope = glq_slope(spec, ctx=ctx)
    err = _absdiff(slope, exact.complex_exponent(1, spec, ctx), ctx.digits)
    out.append(Check("glq_slope", err, 1e-6, err < 1e-6, "Richardson slope at q=0 against mu_1"))
    iso = exact.glq_isotropic(2, 4, ctx).L
    err = _absdiff(iso, log(4, ctx), ctx.digits)
    out.append(Check("glq_isotropic", err, 1e-25, err < 1e-25, "L(2) = log d at Sigma = I, d=4"))
    return out


def check_real(ctx=DEFAULT_CONTEXT):
    out = []
    newman = exact.isotropic_real_spectrum(2, ctx)
    err = _absdiff(exact.real_mu1_d2(("1", "1"), ctx), newman.mu[0], ctx.digits)
    out.append(Check("real_d2_isotropic", err, 1e-25, err < 1e-25, "2x2 real formula at Sigma = I"))
    worst = mpfr(0)
    for d in range(1, 8):
        total = exact.isotropic_real_spectrum(d, ctx).total(ctx.digits)
        worst = max(worst, _absdiff(total, exact.sum_rule_real(("1",) * d, ctx), ctx.digits))
    out.append(Check("real_sum_rule_isotropic", worst, 1e-25, worst < 1e-25, "d = 1..7"))
    return out


def check_diffusive_exact(d_max=50):
    worst = 0.0
    for d in range(1, d_max + 1):
        p = exact.DiffusionParams(d, sigma1=1.5, sigma2=2.0)
        worst = max(worst, abs(sum(exact.diffusive_spectrum(p).mu)))
    return Check("diffusive_trace_free", worst, 1e-9, worst < 1e-9, f"d <= {d_max}")


# ---------------------------------------------------------------------------
# Monte Carlo checks


def _mc_check(name, est, ref, floor=0.0, nsigma=MC_NSIGMA):
    tol = max(nsigma * est.stderr, floor)
    diff = abs(est.mean - float(ref))
    return Check(name, diff, tol, diff <= tol, f"mean={est.mean:.6f} stderr={est.stderr:.2e} exact={float(ref):.6f}")


def mc_checks(seed, quick, workers=None, ctx=DEFAULT_CONTEXT):
    rng = mc.RngStream(seed)
    n_single = 200_000 if quick else 1_000_000
    n_chain = 100_000 if quick else 500_000
    out = []

    est = mc.single_step_estimate(1, ("1",), "complex", n_single, rng.child(1), workers=workers)
    out.append(_mc_check("convention_d1", est, -euler_gamma(ctx) / 2))

    mu = exact.complex_spectrum(Y_PAPER, ctx).mu
    total = exact.sum_rule_complex(Y_PAPER, ctx)
    single = mc.single_step_estimate(2, Y_PAPER, "complex", n_single, rng.child(2), workers=workers)
    out.append(_mc_check("single_step_k2", single, total))
    chain1 = mc.product_estimate(mc.ChainConfig(n_chain, k=1), Y_PAPER, rng.child(3))
    out.append(_mc_check("product_k1", chain1, mu[0]))
    chain2 = mc.product_estimate(mc.ChainConfig(n_chain, k=2, renorm_every=4), Y_PAPER, rng.child(4))
    out.append(_mc_check("product_k2", chain2, total))
    diff = abs(single.mean - chain2.mean)
    tol = MC_NSIGMA * math.hypot(single.stderr, chain2.stderr)
    out.append(Check("estimator_agreement", diff, tol, diff <= tol, "single-step vs product, k=2"))

    y3 = ("1", "2", "5")
    real = mc.product_estimate(mc.ChainConfig(n_chain, k=3, renorm_every=4, field="real"), y3, rng.child(5))
    out.append(_mc_check("real_product_sum_rule", real, exact.sum_rule_real(y3, ctx)))

    m, t = (1000, 200) if quick else (1000, 1000)
    p0 = exact.DiffusionParams(2, 1.0, 0.0)
    p3 = exact.DiffusionParams(2, 1.0, 3.0)
    ref = exact.diffusive_partial_sum(p0, 1)
    e0 = mc.diffusive_estimate(p0, 1, m=m, t_units=t, rng=rng.child(6))
    e3 = mc.diffusive_estimate(p3, 1, m=m, t_units=t, rng=rng.child(7))
    out.append(_mc_check("diffusive_sigma2_0", e0, ref, floor=0.05))
    out.append(_mc_check("diffusive_sigma2_3", e3, ref, floor=0.05))
    diff = abs(e0.mean - e3.mean)
    tol = MC_NSIGMA * math.hypot(e0.stderr, e3.stderr)
    out.append(Check("diffusive_sigma2_independence", diff, tol, diff <= tol, "sigma2 = 0 vs 3"))
    return out


def run_suite(seed=0, quick=False, workers=None, ctx=DEFAULT_CONTEXT):
    n, d_max = (20, 6) if quick else (100, 10)
    spectra = random_spectra(n, d_max, seed, isotropic_every=5)
    checks = [check_paper_values(ctx), check_sum_rule(spectra, ctx), check_edges(spectra, ctx),
              check_partition(spectra), check_scaling(spectra[: n // 4], ctx)]
    checks += check_glq(ctx)
    checks += check_real(ctx)
    checks.append(check_diffusive_exact())
    checks += mc_checks(seed, quick, workers, ctx)
    return checks
