import math
from functools import reduce

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from lyapgauss import exact, mc
from lyapgauss.errors import ChainFailure, DomainError

EG = 0.57721566490153286061
Y2 = ("1", "1/4")


def near(est, ref, nsigma=4.0, floor=0.0):
    return abs(est.mean - float(ref)) <= max(nsigma * est.stderr, floor)


# ---------------------------------------------------------------------------
# samplers


def test_complex_ginibre_moments():
    g = mc.sample_complex_ginibre(3, 2, np.random.default_rng(1), size=100_000)
    assert g.shape == (100_000, 3, 2)
    assert np.mean(np.abs(g) ** 2) == pytest.approx(1.0, abs=0.01)
    assert abs(np.mean(g**2)) < 0.01
    assert np.var(g.real) == pytest.approx(0.5, abs=0.01)


def test_real_ginibre_moments():
    g = mc.sample_real_ginibre(2, 2, np.random.default_rng(2), size=100_000)
    assert np.mean(g**2) == pytest.approx(1.0, abs=0.01)
    assert g.dtype == np.float64


def test_gue_moments():
    sigma = 1.7
    h = mc.sample_gue(3, sigma, np.random.default_rng(3), size=100_000)
    assert np.allclose(h, np.conj(np.swapaxes(h, -1, -2)))
    assert np.var(h[:, 0, 0].real) == pytest.approx(sigma**2 / 2, rel=0.02)
    assert np.mean(np.abs(h[:, 0, 1]) ** 2) == pytest.approx(sigma**2 / 2, rel=0.02)
    # density ~ exp(-Tr H^2 / sigma^2)  =>  E Tr H^2 = d^2 sigma^2 / 2
    tr2 = np.einsum("nij,nji->n", h, h).real
    assert tr2.mean() == pytest.approx(9 * sigma**2 / 2, rel=0.02)


def test_gue_rejects_negative_sigma():
    with pytest.raises(DomainError):
        mc.sample_gue(2, -1.0, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# single-step estimator


def test_d1_convention():
    est = mc.single_step_estimate(1, ("1",), "complex", 400_000, mc.RngStream(11))
    assert near(est, -EG / 2)


def test_d1_real():
    est = mc.single_step_estimate(1, ("1",), "real", 400_000, mc.RngStream(12))
    assert near(est, -(EG + math.log(2)) / 2)
    assert near(est, exact.sum_rule_real(("1",)))


def test_single_step_partial_sums_general_d():
    y = ("1", "2", "5")
    mu = [float(v) for v in exact.complex_spectrum(y).mu]
    for k in (1, 2, 3):
        est = mc.single_step_estimate(k, y, "complex", 300_000, mc.RngStream(20 + k))
        assert near(est, sum(mu[:k]))


def test_single_step_worker_invariance():
    a = mc.single_step_estimate(2, Y2, "complex", 55_000, mc.RngStream(5), workers=1)
    b = mc.single_step_estimate(2, Y2, "complex", 55_000, mc.RngStream(5), workers=3)
    assert a == b


def test_seed_determinism_and_stream_separation():
    a = mc.single_step_estimate(1, Y2, "complex", 20_000, mc.RngStream(9))
    b = mc.single_step_estimate(1, Y2, "complex", 20_000, mc.RngStream(9))
    c = mc.single_step_estimate(1, Y2, "complex", 20_000, mc.RngStream(9, stream_id=1))
    assert a == b
    assert a.mean != c.mean


def test_stderr_scales_like_inverse_sqrt_n():
    small = mc.single_step_estimate(1, Y2, "complex", 50_000, mc.RngStream(30))
    large = mc.single_step_estimate(1, Y2, "complex", 800_000, mc.RngStream(31))
    assert small.stderr / large.stderr == pytest.approx(4.0, rel=0.1)


def test_unitary_invariance():
    rng = np.random.default_rng(4)
    z = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    u, _ = np.linalg.qr(z)
    y = ("1", "2", "5")
    cov = u @ np.diag([1.0, 0.5, 0.2]) @ np.conj(u).T
    ref = exact.sum_rule_complex(y)
    est = mc.single_step_estimate(3, y, "complex", 300_000, mc.RngStream(40), covariance=cov)
    assert near(est, ref)
    est1 = mc.single_step_estimate(1, y, "complex", 300_000, mc.RngStream(41), covariance=cov)
    assert near(est1, exact.complex_exponent(1, y))


def test_single_step_variance_predicts_chain_error():
    var = mc.single_step_variance(Y2, 200_000, mc.RngStream(7))
    chain = mc.product_estimate(mc.ChainConfig(100_000), Y2, mc.RngStream(8))
    assert chain.stderr == pytest.approx(math.sqrt(var / 100_000), rel=0.25)


# ---------------------------------------------------------------------------
# product chains


def test_product_k1_matches_exact():
    est = mc.product_estimate(mc.ChainConfig(200_000, k=1), Y2, mc.RngStream(50))
    assert near(est, exact.complex_exponent(1, Y2))


def test_product_full_frame_general_d():
    y = ("1", "2", "5")
    mu = [float(v) for v in exact.complex_spectrum(y).mu]
    est = mc.product_estimate(mc.ChainConfig(60_000, k=2, renorm_every=3), y, mc.RngStream(51))
    assert near(est, mu[0] + mu[1])


def test_product_real_d2():
    est = mc.product_estimate(mc.ChainConfig(200_000, k=1, field="real"), Y2, mc.RngStream(52))
    assert near(est, exact.real_mu1_d2(Y2))


def test_estimators_agree():
    single = mc.single_step_estimate(2, Y2, "complex", 300_000, mc.RngStream(60))
    chain = mc.product_estimate(mc.ChainConfig(60_000, k=2, renorm_every=2), Y2, mc.RngStream(61))
    assert abs(single.mean - chain.mean) <= 4 * math.hypot(single.stderr, chain.stderr)


def test_renorm_interval_does_not_bias():
    a = mc.product_estimate(mc.ChainConfig(100_000, k=1, renorm_every=1), Y2, mc.RngStream(70))
    b = mc.product_estimate(mc.ChainConfig(100_000, k=1, renorm_every=25), Y2, mc.RngStream(70))
    assert abs(a.mean - b.mean) <= 4 * math.hypot(a.stderr, b.stderr)


def test_product_determinism():
    cfg = mc.ChainConfig(5_000, k=2)
    assert mc.product_estimate(cfg, Y2, mc.RngStream(3)) == mc.product_estimate(cfg, Y2, mc.RngStream(3))


def test_chain_failure_on_overflow():
    with pytest.raises(ChainFailure):
        mc.product_estimate(mc.ChainConfig(2_000, k=1, renorm_every=10), ("1e-300", "1e-300"), mc.RngStream(0))
    with pytest.raises(ChainFailure):
        mc.product_estimate(mc.ChainConfig(2_000, k=2, renorm_every=10), ("1e-300", "1e-300"), mc.RngStream(0))


def test_chain_config_validation():
    for cfg in (mc.ChainConfig(0), mc.ChainConfig(10, k=3), mc.ChainConfig(10, renorm_every=0),
                mc.ChainConfig(10, field="quaternion")):
        with pytest.raises(DomainError):
            cfg.validate(2)


def test_moment_merge_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(1000)
    parts = [mc._Moments.of(c) for c in np.array_split(x, 7)]
    total = reduce(lambda a, b: a.merge(b), parts)
    assert total.mean == pytest.approx(x.mean(), abs=1e-12)
    assert total.variance == pytest.approx(x.var(ddof=1), rel=1e-12)


# ---------------------------------------------------------------------------
# diffusing matrices


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.floats(0.0, 3.0), st.integers(0, 2**32 - 1))
def test_expm_taylor_matches_scipy(d, scale, seed):
    rng = np.random.default_rng(seed)
    x = scale * (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / d
    got = mc.expm_taylor(x[None])[0]
    ref = scipy.linalg.expm(x)
    assert np.allclose(got, ref, rtol=1e-12, atol=1e-13)


def test_ordered_product_preserves_order():
    rng = np.random.default_rng(1)
    stack = rng.standard_normal((7, 3, 3))
    ref = reduce(lambda acc, a: a @ acc, stack[1:], stack[0])
    assert np.allclose(mc._ordered_product(stack), ref)


def test_diffusion_with_zero_sigma1_is_unitary():
    p = exact.DiffusionParams(2, sigma1=0.0, sigma2=1.0)
    est = mc.diffusive_estimate(p, 1, m=200, t_units=20, rng=mc.RngStream(0))
    assert abs(est.mean) < 1e-10


def test_diffusive_estimate_d2():
    p = exact.DiffusionParams(2, sigma1=1.0, sigma2=0.0)
    est = mc.diffusive_estimate(p, 1, m=500, t_units=300, rng=mc.RngStream(1))
    assert near(est, exact.diffusive_partial_sum(p, 1), floor=0.05)


def test_diffusive_estimate_d3_k2():
    p = exact.DiffusionParams(3, sigma1=0.7, sigma2=0.5)
    est = mc.diffusive_estimate(p, 2, m=200, t_units=200, rng=mc.RngStream(2), renorm_every=50)
    assert near(est, exact.diffusive_partial_sum(p, 2), floor=0.05)
