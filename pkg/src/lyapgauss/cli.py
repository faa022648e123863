"""Command-line front end.

Exit codes: 0 success, 1 a reported check failed, 2 degenerate covariance,
3 Monte Carlo chain failure, 4 precision cap exhausted, 64 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
from fractions import Fraction

from gmpy2 import mpfr

from . import checks, exact, mc
from .errors import ChainFailure, DegenerateSpectrumError, DomainError, PrecisionExhaustedError
from .report import Check, RunReport
from .special import GUARD_DIGITS, PrecisionContext, log, working_precision

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_DEGENERATE = 2
EXIT_CHAIN = 3
EXIT_PRECISION = 4
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return items


def _int_list(text):
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _q_values(text):
    """``2`` or ``start:stop:step`` (stop included), parsed exactly."""
    try:
        parts = [Fraction(p) for p in text.split(":")]
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad q value {text!r}") from exc
    if len(parts) == 1:
        return parts
    if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
        raise argparse.ArgumentTypeError("q range must be start:stop:step with step > 0")
    start, stop, step = parts
    n = int((stop - start) / step)
    return [start + i * step for i in range(n + 1)]


def _ctx(args):
    return PrecisionContext(digits=args.digits, target_digits=args.target_digits,
                            max_digits=args.max_digits)


def _spectrum(args):
    if getattr(args, "y", None):
        return exact.CovarianceSpectrum(tuple(args.y))
    if getattr(args, "sigma_eigs", None):
        return exact.CovarianceSpectrum.from_sigma_eigs(args.sigma_eigs)
    if getattr(args, "d", None):
        if args.d < 1:
            raise UsageError("--d must be >= 1")
        return exact.CovarianceSpectrum(("1",) * args.d)
    raise UsageError("one of --d, --y, --sigma-eigs is required")


def _spectrum_inputs(spec):
    return {"y": list(spec.y), "sigma_eigs": list(spec.sigma_eigs)}


def _precision_inputs(ctx):
    return {"digits": ctx.digits, "target_digits": ctx.target_digits, "max_digits": ctx.max_digits}


def _residual(a, b, ctx):
    with working_precision(ctx.digits + GUARD_DIGITS):
        return abs(mpfr(a) - mpfr(b))


def _residual_tol(ctx):
    return mpfr(10) ** (-(ctx.target_digits - 2))


# ---------------------------------------------------------------------------
# commands


def cmd_exact(args):
    ctx = _ctx(args)
    if args.profile:
        if args.dim is None:
            raise UsageError("--profile needs --dim")
        if args.field != "complex":
            raise UsageError("--profile is only available for --field complex")
        profile = exact.parse_profile(args.profile)
        mu1, used = exact.profile_point(args.dim, profile, ctx)
        spec = profile.nodes(args.dim)
        rep = RunReport("exact", {"field": args.field, "profile": str(profile), "d": args.dim,
                                  "precision": _precision_inputs(ctx)})
        rep.outputs = {"mu1": mu1, "digits_used": used,
                       "sum_rule": exact.sum_rule_complex(spec, ctx)}
        with working_precision(ctx.digits):
            bound = rep.outputs["sum_rule"] / args.dim
        rep.checks.append(Check("mu1_above_mean", mu1 - bound, 0, mu1 >= bound,
                                "maximal exponent >= average exponent"))
        rep.header = ["quantity", "k", "value"]
        rep.rows = [("mu", 1, mu1), ("sum_rule", "", rep.outputs["sum_rule"])]
        return rep

    spec = _spectrum(args)
    inputs = {"field": args.field, "d": spec.d, "precision": _precision_inputs(ctx)}
    inputs.update(_spectrum_inputs(spec))
    rep = RunReport("exact", inputs)
    tol = _residual_tol(ctx)

    if args.field == "complex":
        lyap = exact.complex_spectrum(spec, ctx)
        total = lyap.total(ctx.digits)
        rule = exact.sum_rule_complex(spec, ctx)
        rep.outputs = {"mu": list(lyap.mu), "sum": total, "sum_rule": rule,
                       "provenance": lyap.provenance, "digits_used": lyap.digits}
        res = _residual(total, rule, ctx)
        rep.checks.append(Check("sum_rule_residual", res, tol, res < tol, ""))
        rep.checks.append(Check("ordered", 0, 0, lyap.is_ordered(), "mu_1 >= ... >= mu_d"))
        rep.header = ["quantity", "k", "value"]
        rep.rows = [("mu", k, v) for k, v in enumerate(lyap.mu, start=1)]
        rep.rows += [("sum", "", total), ("sum_rule", "", rule)]
        return rep

    rule = exact.sum_rule_real(spec, ctx)
    rep.outputs = {"sum_rule": rule}
    rep.header = ["quantity", "k", "value"]
    if spec.all_equal:
        lyap = exact.isotropic_real_spectrum(spec.d, ctx)
        with working_precision(ctx.digits + GUARD_DIGITS):
            shift = log(spec.y[0], ctx) / 2
            mu = [v - shift for v in lyap.mu]
            total = sum(mu, mpfr(0))
        rep.outputs.update({"mu": mu, "mu1": mu[0], "sum": total, "provenance": "real-isotropic"})
        res = _residual(total, rule, ctx)
        rep.checks.append(Check("sum_rule_residual", res, tol, res < tol, ""))
        rep.rows = [("mu", k, v) for k, v in enumerate(mu, start=1)]
        rep.rows.append(("sum", "", total))
    elif spec.d == 2:
        mu1 = exact.real_mu1_d2(spec, ctx)
        with working_precision(ctx.digits):
            mu2 = rule - mu1
        rep.outputs.update({"mu1": mu1, "mu": [mu1, mu2], "provenance": "real-2x2"})
        rep.checks.append(Check("ordered", 0, 0, mu1 >= mu2, "mu_1 >= mu_2"))
        rep.rows = [("mu", 1, mu1), ("mu", 2, mu2)]
    else:
        rep.outputs["provenance"] = "real-sum-rule-only"
    rep.rows.append(("sum_rule", "", rule))
    return rep


def cmd_glq(args):
    ctx = _ctx(args)
    spec = _spectrum(args)
    inputs = {"d": spec.d, "q": [str(q) for q in args.q], "precision": _precision_inputs(ctx)}
    inputs.update(_spectrum_inputs(spec))
    rep = RunReport("glq", inputs)
    points = [exact.glq_general(q, spec, ctx) for q in args.q]
    mu1 = exact.complex_exponent(1, spec, ctx)
    slope = checks.glq_slope(spec, ctx=ctx)
    res = _residual(slope, mu1, ctx)
    rep.outputs = {"points": [{"q": str(p.q), "L": p.L} for p in points],
                   "mu1": mu1, "slope_at_zero": slope}
    rep.checks.append(Check("slope_at_zero", res, 1e-6, res < 1e-6,
                            "Richardson difference quotient of L at q=0 against mu_1"))
    rep.header = ["q", "L"]
    rep.rows = [(float(p.q), p.L) for p in points]
    return rep


def _exact_partial_sum(field, spec, k, ctx):
    """mu_1 + ... + mu_k when a closed form is available, else None."""
    d = spec.d
    if field == "complex":
        if k == d:
            return exact.sum_rule_complex(spec, ctx)
        if spec.all_equal:
            with working_precision(ctx.digits + GUARD_DIGITS):
                return exact.partial_sum_isotropic(d, k, ctx) - k * log(spec.y[0], ctx) / 2
        try:
            mu = exact.complex_spectrum(spec, ctx).mu
        except DegenerateSpectrumError:
            return None
        with working_precision(ctx.digits + GUARD_DIGITS):
            return sum(mu[:k], mpfr(0))
    if k == d:
        return exact.sum_rule_real(spec, ctx)
    if d == 2:
        return exact.real_mu1_d2(spec, ctx)
    if spec.all_equal:
        mu = exact.isotropic_real_spectrum(d, ctx).mu
        with working_precision(ctx.digits + GUARD_DIGITS):
            return sum(mu[:k], mpfr(0)) - k * log(spec.y[0], ctx) / 2
    return None


def cmd_mc(args):
    ctx = _ctx(args)
    spec = _spectrum(args)
    if not 1 <= args.k <= spec.d:
        raise UsageError(f"--k must be between 1 and {spec.d}")
    rng = mc.RngStream(args.seed)
    inputs = {"field": args.field, "d": spec.d, "k": args.k, "estimator": args.estimator,
              "seed": args.seed, "precision": _precision_inputs(ctx)}
    inputs.update(_spectrum_inputs(spec))
    if args.estimator == "single":
        inputs["samples"] = args.samples
        est = mc.single_step_estimate(args.k, spec, args.field, args.samples, rng, workers=args.workers)
    else:
        inputs["steps"] = args.steps
        inputs["renorm_every"] = args.renorm_every
        cfg = mc.ChainConfig(args.steps, k=args.k, renorm_every=args.renorm_every, field=args.field)
        est = mc.product_estimate(cfg, spec, rng)
    rep = RunReport("mc", inputs)
    ref = _exact_partial_sum(args.field, spec, args.k, ctx)
    rep.outputs = {"estimate": {"mean": est.mean, "stderr": est.stderr, "samples": est.samples,
                                "estimator": est.estimator, "seed": est.seed},
                   "exact": ref}
    z = None
    if ref is not None:
        z = est.zscore(ref)
        rep.outputs["zscore"] = z
        rep.checks.append(Check("zscore", abs(z), args.nsigma, abs(z) <= args.nsigma,
                                "|mean - exact| / stderr"))
    rep.header = ["estimator", "k", "mean", "stderr", "samples", "exact", "z"]
    rep.rows = [(est.estimator, args.k, est.mean, est.stderr, est.samples, ref, z)]
    return rep


def cmd_diffusive(args):
    p = exact.DiffusionParams(args.d, args.sigma1, args.sigma2)
    if not 1 <= args.k <= p.d:
        raise UsageError(f"--k must be between 1 and {p.d}")
    lyap = exact.diffusive_spectrum(p)
    partial = exact.diffusive_partial_sum(p, args.k)
    rep = RunReport("diffusive", {"d": p.d, "sigma1": p.sigma1, "sigma2": p.sigma2, "k": args.k,
                                  "simulate": args.simulate, "seed": args.seed})
    rep.outputs = {"mu": list(lyap.mu), "partial_sum": partial}
    trace = abs(math.fsum(lyap.mu))
    rep.checks.append(Check("trace_free", trace, 1e-9, trace < 1e-9, "sum of exponents"))
    rep.header = ["quantity", "k", "value"]
    rep.rows = [("mu", k, v) for k, v in enumerate(lyap.mu, start=1)]
    rep.rows.append(("partial_sum", args.k, partial))
    if args.simulate:
        rep.inputs.update({"substeps": args.substeps, "time": args.time,
                           "renorm_every": args.renorm_every})
        rng = mc.RngStream(args.seed)
        est = mc.diffusive_estimate(p, args.k, m=args.substeps, t_units=args.time,
                                    rng=rng.child(0), renorm_every=args.renorm_every)
        tol = max(args.nsigma * est.stderr, args.abs_floor)
        diff = abs(est.mean - partial)
        rep.outputs["estimate"] = {"mean": est.mean, "stderr": est.stderr, "samples": est.samples}
        rep.outputs["zscore"] = est.zscore(partial)
        rep.checks.append(Check("simulation", diff, tol, diff <= tol, "|mean - exact|"))
        rep.rows.append(("estimate", args.k, est.mean))
        rep.rows.append(("stderr", args.k, est.stderr))
        if p.sigma2 != 0:
            p0 = exact.DiffusionParams(p.d, p.sigma1, 0.0)
            base = mc.diffusive_estimate(p0, args.k, m=args.substeps, t_units=args.time,
                                         rng=rng.child(1), renorm_every=args.renorm_every)
            diff = abs(est.mean - base.mean)
            # the floor only matters when both runs are exact up to roundoff (sigma1 = 0)
            tol = max(args.nsigma * math.hypot(est.stderr, base.stderr), 1e-9)
            rep.outputs["sigma2_zero_estimate"] = {"mean": base.mean, "stderr": base.stderr,
                                                   "samples": base.samples}
            rep.checks.append(Check("sigma2_independence", diff, tol, diff <= tol,
                                    "estimate against the sigma2 = 0 run"))
            rep.rows.append(("estimate_sigma2_0", args.k, base.mean))
    return rep


def cmd_sweep(args):
    ctx = _ctx(args)
    profile = exact.parse_profile(args.profile)
    ds = sorted(set(args.d_list))
    rep = RunReport("sweep", {"profile": str(profile), "d_list": ds,
                              "precision": _precision_inputs(ctx)})
    points = []
    for d in ds:
        mu1, used = exact.profile_point(d, profile, ctx)
        points.append((d, mu1, used))
    rep.outputs = {"points": [{"d": d, "mu1": v, "digits_used": u} for d, v, u in points]}
    rep.header = ["d", "mu1", "digits_used"]
    rep.rows = points
    if len(points) >= 2:
        with working_precision(ctx.digits):
            steps = [b[1] - a[1] for a, b in zip(points, points[1:])]
            (d1, m1, _), (d2, m2, _) = points[-2], points[-1]
            # two-point extrapolation assuming mu(d) = mu_inf + c/d
            extrapolated = (d2 * m2 - d1 * m1) / (d2 - d1)
        monotone = all(s >= 0 for s in steps) or all(s <= 0 for s in steps)
        rep.outputs["increments"] = steps
        rep.outputs["extrapolated_1_over_d"] = extrapolated
        rep.checks.append(Check("monotone", 0, 0, monotone, "mu_1 monotone in d"))
        if len(steps) >= 2:
            shrinking = all(abs(b) < abs(a) for a, b in zip(steps, steps[1:]))
            rep.checks.append(Check("decreasing_spacing", 0, 0, shrinking,
                                    "successive increments shrink"))
    return rep


def cmd_verify(args):
    ctx = _ctx(args)
    rep = RunReport("verify", {"seed": args.seed, "quick": args.quick,
                               "precision": _precision_inputs(ctx)})
    rep.checks = checks.run_suite(args.seed, quick=args.quick, workers=args.workers, ctx=ctx)
    rep.outputs = {"n_checks": len(rep.checks), "failed": rep.failed()}
    rep.header = ["check", "value", "tolerance", "passed"]
    rep.rows = [(c.name, c.value, c.tolerance, c.passed) for c in rep.checks]
    print(rep.check_table(), file=sys.stderr)
    return rep


# ---------------------------------------------------------------------------
# parser


def _common(p, precision=True):
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", help="write the report here instead of stdout")
    if precision:
        p.add_argument("--digits", type=int, default=40, help="working decimal digits")
        p.add_argument("--target-digits", type=int, default=30)
        p.add_argument("--max-digits", type=int, default=10000, help="escalation cap")


def _covariance(p, profile=False):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--d", type=int, help="isotropic case Sigma = I of this dimension")
    g.add_argument("--y", type=_csv_list, help="eigenvalues of Sigma^-1, comma separated")
    g.add_argument("--sigma-eigs", type=_csv_list, help="eigenvalues of Sigma, comma separated")
    if profile:
        g.add_argument("--profile", help="eigenvalue profile linear:a,b (needs --dim)")


def build_parser():
    parser = Parser(prog="lyapgauss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("exact", help="exact exponents")
    p.add_argument("--field", choices=("complex", "real"), default="complex")
    _covariance(p, profile=True)
    p.add_argument("--dim", type=int, help="dimension for --profile")
    _common(p)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("glq", help="generalized maximum exponent L(q)")
    _covariance(p)
    p.add_argument("--q", type=_q_values, required=True, help="value or start:stop:step")
    _common(p)
    p.set_defaults(func=cmd_glq)

    p = sub.add_parser("mc", help="Monte Carlo estimate of mu_1 + ... + mu_k")
    p.add_argument("--field", choices=("complex", "real"), default="complex")
    _covariance(p)
    p.add_argument("--estimator", choices=("single", "product"), default="product")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--samples", type=int, default=100_000, help="draws for --estimator single")
    p.add_argument("--steps", type=int, default=100_000, help="chain length for --estimator product")
    p.add_argument("--renorm-every", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None, help="threads (results do not depend on it)")
    p.add_argument("--nsigma", type=float, default=3.0)
    _common(p)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("diffusive", help="diffusing-matrix exponents")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--sigma1", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=0.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--simulate", action="store_true")
    p.add_argument("--substeps", type=int, default=1000, help="factors per unit time")
    p.add_argument("--time", type=int, default=1000, help="units of time simulated")
    p.add_argument("--renorm-every", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nsigma", type=float, default=3.0)
    p.add_argument("--abs-floor", type=float, default=0.05)
    _common(p, precision=False)
    p.set_defaults(func=cmd_diffusive)

    p = sub.add_parser("sweep", help="maximal exponent along an eigenvalue profile")
    p.add_argument("--profile", required=True, help="linear:a,b")
    p.add_argument("--d-list", type=_int_list, required=True)
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the internal consistency suite")
    p.add_argument("--quick", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    _common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def _emit(rep, args):
    text = rep.render(args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        rep = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateSpectrumError as exc:
        print(f"degenerate covariance: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ChainFailure as exc:
        print(f"chain failure: {exc}", file=sys.stderr)
        return EXIT_CHAIN
    except PrecisionExhaustedError as exc:
        print(f"precision exhausted (max_digits={exc.max_digits}): {exc}", file=sys.stderr)
        return EXIT_PRECISION
    except DomainError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(rep, args)
    if not rep.passed:
        print("failed checks: " + ", ".join(rep.failed()), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
