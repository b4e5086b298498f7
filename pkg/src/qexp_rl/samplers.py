"""Exact random-variate generation for every policy family.

Generalized Box-Mueller transform (GBMM)
----------------------------------------
z = sqrt(-2 ln_q(u1)) cos(2 pi u2) with q = gbmm_index_inverse(q_target)
produces a q_target-Gaussian variate, but in a convention where the raw
output has squared scale (3 - q_target)/2 rather than 1 under the density
exp_q(-z^2/(2 sigma^2))/Z used throughout this package. The raw draw is
therefore multiplied by sqrt(2/(3 - q_target)); the distribution-fit suite
checks the standardized output against the analytic density. At
q_target = 1 the factor is 1 and the transform is the ordinary Box-Mueller.

Stochastic representation (light tails, q < 1)
----------------------------------------------
exp_q(-|w|^2/2) is spherically symmetric with support radius
R = sqrt(2/(1-q)); writing w = rho u with u uniform on the sphere, the
squared relative radius rho^2/R^2 follows Beta(N/2, (2-q)/(1-q)). Drawing
y from that Beta and returning mu + R sqrt(y) L u is an exact sampler with
every draw strictly inside the support ellipsoid.
"""

from dataclasses import dataclass, field
import zlib

import numpy as np

from .deformed import ln_q, gbmm_index_inverse
from .distributions import BetaParams, LocScaleParams, QGaussianParams, StudentTParams


@dataclass
class Rng:
    """Seedable generator wrapper; one owner per stream.

    from_triple derives non-colliding streams per (run, seed, purpose) so
    actor sampling, evaluation rollouts, and oracle draws never share state.
    """

    gen: np.random.Generator
    _gbmm_spare: dict = field(default_factory=dict)

    @classmethod
    def from_seed(cls, seed: int) -> "Rng":
        return cls(gen=np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed))))

    @classmethod
    def from_triple(cls, run_id: int, seed: int, purpose: str) -> "Rng":
        key = zlib.crc32(purpose.encode("utf8"))
        seq = np.random.SeedSequence(entropy=seed, spawn_key=(run_id, key))
        return cls(gen=np.random.Generator(np.random.PCG64(seq)))

    def uniform_open(self, size=None):
        """Uniform on (0, 1]; keeps ln_q finite at the left edge."""
        return 1.0 - self.gen.random(size)


def sample_uniform_sphere(n: int, rng: Rng):
    """Rotationally invariant unit vector (normalized Gaussian draw)."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    v = rng.gen.standard_normal(n)
    norm = np.linalg.norm(v)
    while norm == 0.0:  # probability zero, but keep the contract total
        v = rng.gen.standard_normal(n)
        norm = np.linalg.norm(v)
    return v / norm


def _gbmm_raw_pairs(q_gen: float, n: int, rng: Rng):
    u1 = rng.uniform_open(n)
    u2 = rng.gen.random(n)
    r = np.sqrt(np.maximum(-2.0 * ln_q(u1, q_gen), 0.0))
    ang = 2.0 * np.pi * u2
    return r * np.cos(ang), r * np.sin(ang)


def _gbmm_std_factor(q_target: float) -> float:
    return float(np.sqrt(2.0 / (3.0 - q_target)))


def sample_gbmm_standard(q_target: float, rng: Rng) -> float:
    """One standard (sigma = 1) q_target-Gaussian variate; the sine mate of
    each generated pair is cached on the Rng and returned by the next call."""
    if q_target >= 3.0:
        raise ValueError("GBMM requires q_target < 3")
    spare = rng._gbmm_spare.pop(q_target, None)
    if spare is not None:
        return spare
    q_gen = gbmm_index_inverse(q_target)
    z1, z2 = _gbmm_raw_pairs(q_gen, 1, rng)
    c = _gbmm_std_factor(q_target)
    rng._gbmm_spare[q_target] = float(z2[0]) * c
    return float(z1[0]) * c


def gbmm_standard_array(q_target: float, n: int, rng: Rng):
    """n standard q_target-Gaussian variates (cosine branch only)."""
    if q_target >= 3.0:
        raise ValueError("GBMM requires q_target < 3")
    q_gen = gbmm_index_inverse(q_target)
    z, _ = _gbmm_raw_pairs(q_gen, n, rng)
    return z * _gbmm_std_factor(q_target)


def sample_q_gaussian(params: QGaussianParams, rng: Rng):
    """Draw one q-Gaussian action vector.

    Light tails (q < 1) go through the stochastic representation, which is
    exactly supported for every dimension; heavy tails use mu + L z with z
    componentwise from the GBMM. sample_q_gaussian_gbmm keeps the GBMM
    route available for q < 1 as the 1-D cross-check sampler.
    """
    if params.q < 1.0:
        return sample_stochastic_rep(params, rng)
    return sample_q_gaussian_gbmm(params, rng)


def sample_q_gaussian_gbmm(params: QGaussianParams, rng: Rng):
    """mu + L z with z drawn componentwise through the GBMM."""
    z = gbmm_standard_array(params.q, params.loc_scale.dim, rng)
    return params.loc_scale.mu + params.loc_scale.scale_chol @ z


def sample_stochastic_rep(params: QGaussianParams, rng: Rng):
    """Exact light-tailed (q < 1) draw via the radial Beta decomposition."""
    q = params.q
    if q >= 1.0:
        raise ValueError("stochastic representation requires q < 1")
    n = params.loc_scale.dim
    y = rng.gen.beta(0.5 * n, (2.0 - q) / (1.0 - q))
    rho = np.sqrt(2.0 / (1.0 - q)) * np.sqrt(y)
    u = sample_uniform_sphere(n, rng)
    return params.loc_scale.mu + rho * (params.loc_scale.scale_chol @ u)


def sample_gaussian(params: LocScaleParams, rng: Rng):
    z = rng.gen.standard_normal(params.dim)
    return params.mu + params.scale_chol @ z


def sample_student_t(params: StudentTParams, rng: Rng):
    """mu + L g / sqrt(w/nu), g standard normal, w ~ chi^2_nu."""
    ls = params.loc_scale
    g = rng.gen.standard_normal(ls.dim)
    w = rng.gen.chisquare(params.nu)
    return ls.mu + (ls.scale_chol @ g) / np.sqrt(w / params.nu)


def sample_beta(params: BetaParams, rng: Rng):
    x = rng.gen.beta(params.alpha, params.beta)
    return params.action_low + x * (params.action_high - params.action_low)


def sample_squashed_gaussian(params: LocScaleParams, rng: Rng):
    """tanh of a Gaussian draw; lies strictly inside (-1, 1)^N."""
    return np.tanh(sample_gaussian(params, rng))


# ---------------------------------------------------------------------------
# batched diagonal-scale variants (one numpy call per batch; the per-draw
# functions above stay the reference implementations)


def uniform_sphere_batch(count: int, n: int, rng: Rng):
    v = rng.gen.standard_normal((count, n))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return v / norms


def gbmm_standard_batch(q_target: float, shape, rng: Rng):
    if q_target >= 3.0:
        raise ValueError("GBMM requires q_target < 3")
    q_gen = gbmm_index_inverse(q_target)
    u1 = rng.uniform_open(shape)
    u2 = rng.gen.random(shape)
    r = np.sqrt(np.maximum(-2.0 * ln_q(u1, q_gen), 0.0))
    return r * np.cos(2.0 * np.pi * u2) * _gbmm_std_factor(q_target)


def gaussian_diag_batch(mu, sigma, rng: Rng):
    return mu + sigma * rng.gen.standard_normal(mu.shape)


def student_t_diag_batch(mu, sigma, nu, rng: Rng):
    """One chi-square draw per row, shared across that row's components."""
    g = rng.gen.standard_normal(mu.shape)
    w = rng.gen.chisquare(nu)
    return mu + sigma * g / np.sqrt(w / nu)[:, None]


def stochastic_rep_diag_batch(mu, sigma, q, rng: Rng):
    if q >= 1.0:
        raise ValueError("stochastic representation requires q < 1")
    count, n = mu.shape
    y = rng.gen.beta(0.5 * n, (2.0 - q) / (1.0 - q), size=count)
    rho = np.sqrt(2.0 / (1.0 - q) * y)
    u = uniform_sphere_batch(count, n, rng)
    return mu + sigma * (rho[:, None] * u)


def q_gaussian_diag_batch(mu, sigma, q, rng: Rng):
    """Stochastic representation for light tails, GBMM for heavy."""
    if q < 1.0:
        return stochastic_rep_diag_batch(mu, sigma, q, rng)
    return mu + sigma * gbmm_standard_batch(q, mu.shape, rng)


def beta_diag_batch(alpha, beta, low, high, rng: Rng):
    return low + rng.gen.beta(alpha, beta) * (high - low)
