"""Monte Carlo estimators for Lyapunov exponents of Gaussian matrix products.

Three estimators, all returning :class:`McEstimate`:

* ``single_step_estimate``: mean of (1/2) log det(G_k^H Sigma G_k) over
  independent d x k Gaussian matrices;
* ``product_estimate``: a frame propagated through the product
  A_m ... A_1, re-orthonormalized by QR, with the log of the R diagonal
  accumulated;
* ``diffusive_estimate``: the same frame scheme for factors built as
  products of exp((H1 + i H2)/sqrt(m)).

Randomness comes from counter-based Philox streams keyed by
``(seed, stream_id, batch)``.  Work is cut into fixed batches that do not
depend on the number of threads, and batch moments are merged in batch
order, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ChainFailure, DomainError
from .exact import DiffusionParams, as_spectrum

THREADS_ENV = "LYAPGAUSS_THREADS"
CHAIN_BATCH = 1000
SAMPLE_BATCH = 10_000


def default_workers():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")

    def generator(self, *path):
        """Fresh Philox generator for this stream, optionally a sub-batch."""
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *path))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, stream_id):
        return RngStream(self.seed, stream_id)


def _gen(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    samples: int
    estimator: str
    seed: int | None = None

    def zscore(self, exact):
        diff = self.mean - float(exact)
        if self.stderr == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.stderr

    def within(self, exact, nsigma=3.0, floor=0.0):
        return abs(self.mean - float(exact)) <= max(nsigma * self.stderr, floor)


@dataclass(frozen=True)
class ChainConfig:
    m: int
    k: int = 1
    renorm_every: int = 1
    field: str = "complex"

    def validate(self, d):
        if self.m < 1:
            raise DomainError("m must be >= 1")
        if not 1 <= self.k <= d:
            raise DomainError(f"k must satisfy 1 <= k <= {d}")
        if self.renorm_every < 1:
            raise DomainError("renorm_every must be >= 1")
        _check_field(self.field)


def _check_field(field):
    if field not in ("complex", "real"):
        raise DomainError(f"field must be 'complex' or 'real', got {field!r}")


class _Moments:
    """Count/mean/M2 accumulator with an associative merge."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self, n=0, mean=0.0, m2=0.0):
        self.n, self.mean, self.m2 = n, mean, m2

    @classmethod
    def of(cls, values):
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        return cls(values.size, mean, float(((values - mean) ** 2).sum()))

    def merge(self, other):
        if other.n == 0:
            return self
        if self.n == 0:
            return _Moments(other.n, other.mean, other.m2)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return _Moments(n, mean, m2)

    @property
    def variance(self):
        return self.m2 / (self.n - 1) if self.n > 1 else math.nan


def _map_ordered(fn, items, workers):
    workers = workers or default_workers()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# samplers


def sample_complex_ginibre(d, k, rng, size=None):
    """d x k matrix of standard complex normals (density ~ exp(-|z|^2))."""
    g = _gen(rng)
    shape = (d, k) if size is None else (size, d, k)
    z = g.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * math.sqrt(0.5)


def sample_real_ginibre(d, k, rng, size=None):
    """d x k matrix of standard real normals."""
    g = _gen(rng)
    shape = (d, k) if size is None else (size, d, k)
    return g.standard_normal(shape)


def sample_gue(d, sigma, rng, size=None):
    """Hermitian matrix with density proportional to exp(-Tr H^2 / sigma^2).

    Diagonal entries N(0, sigma^2/2); off-diagonal real and imaginary parts
    N(0, sigma^2/4).
    """
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    g = _gen(rng)
    shape = (d, d) if size is None else (size, d, d)
    z = g.standard_normal(shape + (2,))
    upper = np.triu((z[..., 0] + 1j * z[..., 1]) * (sigma / 2), 1)
    diag = np.diagonal(z[..., 0], axis1=-2, axis2=-1) * (sigma / math.sqrt(2))
    h = upper + np.conj(np.swapaxes(upper, -1, -2))
    idx = np.arange(d)
    h[..., idx, idx] = diag
    return h


def _ginibre(field, d, k, gen, size):
    if field == "complex":
        return sample_complex_ginibre(d, k, gen, size)
    return sample_real_ginibre(d, k, gen, size)


def _scale(spec):
    return 1.0 / np.sqrt(np.array(spec.floats()))


# ---------------------------------------------------------------------------
# single-step average


def _half_logdet_gram(x):
    gram = np.conj(np.swapaxes(x, -1, -2)) @ x
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise ChainFailure("Gram matrix not positive definite") from exc
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    return np.log(diag).sum(axis=-1)


def single_step_estimate(k, y, field="complex", n_samples=100_000, rng=RngStream(0), *,
                         workers=None, covariance=None, batch_size=SAMPLE_BATCH):
    """Average of (1/2) log det(G_k^H Sigma G_k), estimating mu_1 + ... + mu_k.

    Sigma is diag(1/y) unless a full Hermitian ``covariance`` matrix is given
    (used to check unitary invariance).
    """
    spec = as_spectrum(y)
    d = spec.d
    _check_field(field)
    if not 1 <= k <= d:
        raise DomainError(f"k must satisfy 1 <= k <= {d}")
    if n_samples < 2:
        raise DomainError("need at least two samples")
    if not isinstance(rng, RngStream):
        raise TypeError("single_step_estimate needs an RngStream for batch substreams")
    if covariance is not None:
        cov = np.asarray(covariance)
        left = np.conj(np.linalg.cholesky(cov)).T
    else:
        left = None
    scale = _scale(spec)
    sizes = [batch_size] * (n_samples // batch_size)
    if n_samples % batch_size:
        sizes.append(n_samples % batch_size)

    def run(batch):
        b, size = batch
        gen = rng.generator(b)
        g = _ginibre(field, d, k, gen, size)
        x = left @ g if left is not None else scale[:, None] * g
        vals = _half_logdet_gram(x)
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise ChainFailure(f"non-finite log-determinant in batch {b}, sample {bad}")
        return _Moments.of(vals)

    total = _Moments()
    for mom in _map_ordered(run, list(enumerate(sizes)), workers):
        total = total.merge(mom)
    return McEstimate(
        mean=total.mean,
        stderr=math.sqrt(total.variance / total.n),
        samples=total.n,
        estimator=f"single-step/{field}/k={k}",
        seed=rng.seed,
    )


def single_step_variance(y, n_samples=100_000, rng=RngStream(0), *, workers=None):
    """Sample variance of (1/2) log(g^H Sigma g) for one complex column g.

    The product chain's standard error after m steps is sqrt(variance/m).
    """
    spec = as_spectrum(y)
    if not isinstance(rng, RngStream):
        raise TypeError("single_step_variance needs an RngStream")
    scale = _scale(spec)
    sizes = [SAMPLE_BATCH] * (n_samples // SAMPLE_BATCH)
    if n_samples % SAMPLE_BATCH:
        sizes.append(n_samples % SAMPLE_BATCH)

    def run(batch):
        b, size = batch
        g = sample_complex_ginibre(spec.d, 1, rng.generator(b), size)
        return _Moments.of(_half_logdet_gram(scale[:, None] * g))

    total = _Moments()
    for mom in _map_ordered(run, list(enumerate(sizes)), workers):
        total = total.merge(mom)
    return total.variance


# ---------------------------------------------------------------------------
# product chains


def _batch_steps(m, renorm_every, target=CHAIN_BATCH):
    steps = min(target, max(1, m // 20))
    steps = max(steps, renorm_every)
    return int(math.ceil(steps / renorm_every) * renorm_every)


def _renormalize(z, k, where):
    if k == 1:
        norm = float(np.linalg.norm(z))
        if not (norm > 0 and math.isfinite(norm)):
            raise ChainFailure(
                f"frame collapsed or overflowed at step {where}; use a smaller renorm_every"
            )
        return z / norm, math.log(norm)
    q, r = np.linalg.qr(z)
    diag = np.abs(np.diagonal(r))
    if not (np.all(diag > 0) and np.all(np.isfinite(diag))):
        raise ChainFailure(
            f"frame lost rank or overflowed at step {where}; use a smaller renorm_every"
        )
    return q, float(np.log(diag).sum())


def product_estimate(cfg, y, rng=RngStream(0)):
    """Frame/QR estimate of mu_1 + ... + mu_k from one chain of m factors.

    The d x k frame starts as the first k columns of the identity; each
    factor is A = diag(1/sqrt(y)) G.  The estimate is the accumulated
    log-volume divided by m, with a batched-means standard error.
    """
    spec = as_spectrum(y)
    d = spec.d
    cfg.validate(d)
    if cfg.m < 2:
        raise DomainError("need m >= 2 steps for an error estimate")
    if not isinstance(rng, RngStream):
        raise TypeError("product_estimate needs an RngStream")
    k = cfg.k
    scale = _scale(spec)
    dtype = complex if cfg.field == "complex" else float
    frame = np.eye(d, k, dtype=dtype)
    if k == 1:
        frame = frame[:, 0]
    batch = _batch_steps(cfg.m, cfg.renorm_every)
    batch_means = []
    total = 0.0
    step = 0
    b = 0
    while step < cfg.m:
        n = min(batch, cfg.m - step)
        gs = _ginibre(cfg.field, d, d, rng.generator(b), n) * scale[None, :, None]
        acc = 0.0
        since = 0
        # overflow shows up as a non-finite norm, which _renormalize reports
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            for t in range(n):
                frame = gs[t] @ frame
                since += 1
                if since == cfg.renorm_every or t == n - 1:
                    frame, inc = _renormalize(frame, k, step + t + 1)
                    acc += inc
                    since = 0
        total += acc
        if n == batch:
            batch_means.append(acc / n)
        step += n
        b += 1
    mom = _Moments.of(batch_means)
    stderr = math.sqrt(mom.variance / mom.n) if mom.n > 1 else math.nan
    return McEstimate(
        mean=total / cfg.m,
        stderr=stderr,
        samples=cfg.m,
        estimator=f"product/{cfg.field}/k={k}/renorm={cfg.renorm_every}",
        seed=rng.seed,
    )


# ---------------------------------------------------------------------------
# diffusing matrices


def expm_taylor(x, tol=1e-14, max_terms=60):
    """exp(x) for a stack of small matrices by a truncated Taylor series.

    The number of terms is chosen so the remainder bound
    nu^(N+1)/(N+1)! / (1 - nu/(N+2)), nu = max Frobenius norm, stays below
    tol * exp(-nu), a lower bound on the norm of the result.
    """
    x = np.asarray(x)
    nu = float(np.max(np.linalg.norm(x, axis=(-2, -1)))) if x.size else 0.0
    floor = tol * math.exp(-nu)
    n_terms = None
    term = 1.0
    for n in range(1, max_terms + 1):
        term *= nu / n  # nu^n / n!
        if n + 1 > nu:
            bound = term * nu / (n + 1) / (1 - nu / (n + 2))
            if bound < floor:
                n_terms = n
                break
    if n_terms is None:
        raise DomainError(f"matrix norm {nu:.3g} too large for the Taylor series; increase m")
    eye = np.broadcast_to(np.eye(x.shape[-1], dtype=x.dtype), x.shape)
    out = eye.copy()
    for n in range(n_terms, 0, -1):
        out = eye + (x @ out) / n
    return out


def _ordered_product(stack):
    """stack[-1] @ ... @ stack[0] by pairwise reduction."""
    while len(stack) > 1:
        paired = stack[1:len(stack) - len(stack) % 2:2] @ stack[0:len(stack) - len(stack) % 2:2]
        if len(stack) % 2:
            paired = np.concatenate([paired, stack[-1:]])
        stack = paired
    return stack[0]


def diffusion_increments(p, m, gen):
    """m increments C/sqrt(m), C = H1 + i H2, Tr-density exp(-Tr H_j^2 / (2 sigma_j^2))."""
    h1 = sample_gue(p.d, math.sqrt(2) * p.sigma1, gen, size=m)
    h2 = sample_gue(p.d, math.sqrt(2) * p.sigma2, gen, size=m)
    return (h1 + 1j * h2) / math.sqrt(m)


def diffusive_estimate(p, k, m=1000, t_units=1000, rng=RngStream(0), *, renorm_every=100):
    """Estimate mu_1 + ... + mu_k for A = lim prod exp(C_j / sqrt(m)).

    Each unit of time multiplies m factors exp(C/sqrt(m)).  The frame is
    re-orthonormalized after every ``renorm_every`` substeps; the per-unit
    log-volume growth gives the samples for the standard error.
    """
    if not isinstance(p, DiffusionParams):
        raise TypeError("p must be DiffusionParams")
    if m < 100:
        raise DomainError("m must be >= 100 substeps per unit time")
    if not 1 <= k <= p.d:
        raise DomainError(f"k must satisfy 1 <= k <= {p.d}")
    if t_units < 2:
        raise DomainError("need t_units >= 2 for an error estimate")
    if renorm_every < 1:
        raise DomainError("renorm_every must be >= 1")
    frame = np.eye(p.d, k, dtype=complex)
    per_unit = np.empty(t_units)
    for unit in range(t_units):
        gen = rng.generator(unit)
        factors = expm_taylor(diffusion_increments(p, m, gen))
        acc = 0.0
        for start in range(0, m, renorm_every):
            block = _ordered_product(factors[start:start + renorm_every])
            frame, inc = _renormalize(block @ frame, k, unit * m + start)
            acc += inc
        per_unit[unit] = acc
    mom = _Moments.of(per_unit)
    return McEstimate(
        mean=mom.mean,
        stderr=math.sqrt(mom.variance / mom.n),
        samples=t_units,
        estimator=f"diffusive/k={k}/m={m}",
        seed=rng.seed,
    )


__all__ = [
    "RngStream",
    "McEstimate",
    "ChainConfig",
    "sample_complex_ginibre",
    "sample_real_ginibre",
    "sample_gue",
    "single_step_estimate",
    "single_step_variance",
    "product_estimate",
    "expm_taylor",
    "diffusive_estimate",
]
