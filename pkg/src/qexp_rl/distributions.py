"""Exact densities, log-probabilities, and analytic parameter gradients for
the policy families: Gaussian, squashed Gaussian, Student's t, q-Gaussian
(light and heavy), Beta, and the discrete sparsemax transform.

Conventions
-----------
* Scale matrices are carried as the lower-triangular Cholesky factor L with
  Sigma = L @ L.T, so positive-definiteness survives unconstrained updates.
* log_prob_* functions broadcast over a leading batch axis of the action
  argument; gradients are per-point.
* Gradients w.r.t. Sigma use the symmetric-matrix convention
  df = tr(G dSigma); chain to the Cholesky factor with
  chain_sigma_grad_to_chol.
* The light-tailed q-Gaussian returns -inf log-probability outside its
  support ellipsoid (a - mu)^T Sigma^-1 (a - mu) < 2/(1-q); that sentinel is
  what the policy-head replacement logic keys on.

q-Gaussian normalization
------------------------
With delta2 = (a-mu)^T Sigma^-1 (a-mu), the density exp_q(-delta2/2)/Z_q
integrates to one with

    Z_q = |Sigma|^(1/2) (2 pi/(1-q))^(N/2) Gamma(k+1) / Gamma(k+1+N/2),
          k = 1/(1-q)                                     (q < 1)
    Z_q = |Sigma|^(1/2) (2 pi/(q-1))^(N/2) Gamma(b-N/2) / Gamma(b),
          b = 1/(q-1)                                     (q > 1)

both obtained by the polar-coordinates Beta integral and verified against
adaptive quadrature. The heavy branch is integrable only for q < 1 + 2/N
(q < 3 in one dimension).

Student's t <-> heavy q-Gaussian correspondence (one dimension): matching
exponents gives q = 1 + 2/(nu + 1), and matching the inner quadratic gives
the scale conversion sigma_t^2 = sigma_q^2 (nu + 1)/nu; the two densities
then agree pointwise (the test suite checks this to 1e-8).
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .deformed import exp_q, log_gamma, digamma

LOG_2PI = float(np.log(2.0 * np.pi))
SQUASH_EPS = 1e-6


# ---------------------------------------------------------------------------
# parameter bundles


@dataclass(frozen=True)
class LocScaleParams:
    """Location vector and lower-triangular Cholesky factor of the scale."""

    mu: np.ndarray
    scale_chol: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        chol = np.asarray(self.scale_chol, dtype=float)
        if chol.ndim == 1:
            chol = np.diag(chol)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "scale_chol", chol)
        n = mu.size
        if chol.shape != (n, n):
            raise ValueError("scale_chol must be (N, N) matching mu")
        if np.any(np.triu(chol, 1) != 0.0):
            raise ValueError("scale_chol must be lower triangular")
        if np.any(np.diag(chol) <= 0.0):
            raise ValueError("scale_chol needs a strictly positive diagonal")

    @property
    def dim(self):
        return self.mu.size

    @property
    def sigma(self):
        return self.scale_chol @ self.scale_chol.T

    def log_det_sigma(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.scale_chol))))

    def whiten(self, a):
        """L^-1 (a - mu) for a of shape (N,) or (B, N)."""
        a = np.asarray(a, dtype=float)
        diff = np.atleast_2d(a) - self.mu
        z = solve_triangular(self.scale_chol, diff.T, lower=True).T
        return z if a.ndim > 1 else z[0]

    def mahalanobis_sq(self, a):
        z = self.whiten(a)
        return np.sum(np.atleast_2d(z) ** 2, axis=1) if np.ndim(a) > 1 else float(np.sum(z**2))

    def precision_times(self, diff):
        """Sigma^-1 diff for a single vector."""
        z = solve_triangular(self.scale_chol, diff, lower=True)
        return solve_triangular(self.scale_chol.T, z, lower=False)

    def precision(self):
        eye = np.eye(self.dim)
        z = solve_triangular(self.scale_chol, eye, lower=True)
        return solve_triangular(self.scale_chol.T, z, lower=False)


@dataclass(frozen=True)
class StudentTParams:
    loc_scale: LocScaleParams
    nu: float

    def __post_init__(self):
        if self.nu <= 0.0:
            raise ValueError("degrees of freedom must be positive")

    @property
    def entropic_index(self):
        return 1.0 + 2.0 / (self.nu + 1.0)


@dataclass(frozen=True)
class QGaussianParams:
    loc_scale: LocScaleParams
    q: float

    def __post_init__(self):
        if self.q >= 3.0:
            raise ValueError("q-Gaussian density is non-integrable for q >= 3")
        if abs(self.q - 1.0) < 1e-9:
            raise ValueError("use the Gaussian family at q = 1")


@dataclass(frozen=True)
class BetaParams:
    """Componentwise-independent Beta over the box (action_low, action_high)."""

    alpha: np.ndarray
    beta: np.ndarray
    action_low: np.ndarray
    action_high: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "beta", "action_low", "action_high"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if not (self.alpha.shape == self.beta.shape == self.action_low.shape == self.action_high.shape):
            raise ValueError("Beta parameter vectors must share one shape")
        if np.any(self.alpha <= 1.0) or np.any(self.beta <= 1.0):
            raise ValueError("alpha and beta must exceed 1 (bell shape, not bowl)")
        if np.any(self.action_low >= self.action_high):
            raise ValueError("action_low must be strictly below action_high")

    @property
    def dim(self):
        return self.alpha.size


@dataclass(frozen=True)
class SparsemaxInput:
    values: np.ndarray
    temperature: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.atleast_1d(np.asarray(self.values, dtype=float)))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sparsemax scores must be finite")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")


# ---------------------------------------------------------------------------
# Gaussian


def log_prob_gaussian(params: LocScaleParams, a):
    d2 = params.mahalanobis_sq(a)
    return -0.5 * (params.dim * LOG_2PI + params.log_det_sigma() + d2)


def grad_log_prob_gaussian(params: LocScaleParams, a):
    """(grad_mu, grad_Sigma) of the Gaussian log-density.

    grad_mu = +Sigma^-1 (a - mu): the sign follows from differentiating the
    quadratic form and is pinned by the finite-difference suite.
    """
    a = np.asarray(a, dtype=float)
    pd = params.precision_times(a - params.mu)
    prec = params.precision()
    grad_mu = pd
    grad_sigma = -0.5 * (prec - np.outer(pd, pd))
    return grad_mu, grad_sigma


# ---------------------------------------------------------------------------
# squashed Gaussian (tanh change of variables on the unit box)


def log_prob_squashed_gaussian(params: LocScaleParams, a, eps=SQUASH_EPS):
    """Density of a = tanh(u), u ~ N(mu, Sigma); a must lie in (-1, 1)^N."""
    a = np.asarray(a, dtype=float)
    if np.any(np.abs(a) >= 1.0):
        raise ValueError("squashed-Gaussian actions must lie strictly inside (-1, 1)")
    u = np.arctanh(a)
    jac = np.sum(np.log1p(-a**2 + eps), axis=-1)
    return log_prob_gaussian(params, u) - jac


def grad_log_prob_squashed_gaussian(params: LocScaleParams, a):
    """Same (grad_mu, grad_Sigma) as the Gaussian evaluated at u = atanh(a);
    the Jacobian term does not involve the parameters."""
    a = np.asarray(a, dtype=float)
    if np.any(np.abs(a) >= 1.0):
        raise ValueError("squashed-Gaussian actions must lie strictly inside (-1, 1)")
    return grad_log_prob_gaussian(params, np.arctanh(a))


# ---------------------------------------------------------------------------
# Student's t


def log_prob_student_t(params: StudentTParams, a):
    ls, nu = params.loc_scale, params.nu
    n = ls.dim
    d2 = ls.mahalanobis_sq(a)
    return (
        log_gamma((n + nu) / 2.0)
        - log_gamma(nu / 2.0)
        - 0.5 * n * np.log(nu * np.pi)
        - 0.5 * ls.log_det_sigma()
        - 0.5 * (n + nu) * np.log1p(d2 / nu)
    )


def grad_log_prob_student_t(params: StudentTParams, a):
    """(grad_mu, grad_Sigma, grad_nu) of the Student's t log-density.

    grad_nu carries the 1/2 factors from the Gamma terms and a 1/2 on the
    log term; both are fixed by the finite-difference oracle.
    """
    ls, nu = params.loc_scale, params.nu
    n = ls.dim
    a = np.asarray(a, dtype=float)
    diff = a - ls.mu
    pd = ls.precision_times(diff)
    d2 = float(diff @ pd)
    prec = ls.precision()

    denom = 1.0 + d2 / nu
    grad_mu = (n + nu) / nu * pd / denom
    grad_sigma = -0.5 * (prec - (n + nu) * np.outer(pd, pd) / (nu + d2))
    grad_nu = (
        0.5 * digamma((n + nu) / 2.0)
        - 0.5 * digamma(nu / 2.0)
        - 0.5 * n / nu
        - 0.5 * np.log(denom)
        + 0.5 * (n + nu) * d2 / (nu * (nu + d2))
    )
    return grad_mu, grad_sigma, float(grad_nu)


# ---------------------------------------------------------------------------
# q-Gaussian


def _check_q_integrable(q, n):
    if q >= 3.0:
        raise ValueError("q-Gaussian density is non-integrable for q >= 3")
    if q > 1.0 and q >= 1.0 + 2.0 / n:
        raise ValueError(f"heavy q-Gaussian in {n} dimensions needs q < 1 + 2/N = {1.0 + 2.0 / n}")


def log_partition_q_gaussian(log_det_sigma, q, n):
    """log Z_q of exp_q(-delta2/2)/Z_q; see the module docstring derivation."""
    _check_q_integrable(q, n)
    if q < 1.0:
        k = 1.0 / (1.0 - q)
        return (
            0.5 * log_det_sigma
            + 0.5 * n * np.log(2.0 * np.pi / (1.0 - q))
            + log_gamma(k + 1.0)
            - log_gamma(k + 1.0 + 0.5 * n)
        )
    b = 1.0 / (q - 1.0)
    return (
        0.5 * log_det_sigma
        + 0.5 * n * np.log(2.0 * np.pi / (q - 1.0))
        + log_gamma(b - 0.5 * n)
        - log_gamma(b)
    )


def partition_q_gaussian(sigma, q, n_dim):
    """Normalizing constant of the q-Gaussian with Sigma = sigma^2 I."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if abs(q - 1.0) < 1e-9:
        return float(np.exp(0.5 * n_dim * LOG_2PI) * sigma**n_dim)
    return float(np.exp(log_partition_q_gaussian(2.0 * n_dim * np.log(sigma), q, n_dim)))


def support_contains(params: QGaussianParams, a):
    """True iff a is inside the support; all of space for heavy tails."""
    if params.q >= 1.0:
        return True
    return params.loc_scale.mahalanobis_sq(a) < 2.0 / (1.0 - params.q)


def log_prob_q_gaussian(params: QGaussianParams, a):
    """Log-density; -inf outside the light-tailed support ellipsoid."""
    ls, q = params.loc_scale, params.q
    _check_q_integrable(q, ls.dim)
    d2 = ls.mahalanobis_sq(a)
    log_z = log_partition_q_gaussian(ls.log_det_sigma(), q, ls.dim)
    inner = 1.0 - (1.0 - q) * 0.5 * np.asarray(d2)
    with np.errstate(divide="ignore", invalid="ignore"):
        core = np.where(inner > 0.0, np.log(np.maximum(inner, 1e-300)) / (1.0 - q), -np.inf)
    out = core - log_z
    return out if out.ndim else float(out)


def grad_log_prob_q_gaussian(params: QGaussianParams, a):
    """(grad_mu, grad_Sigma): the Gaussian gradients scaled by
    1/exp_q(-delta2/2)^(1-q). Undefined on/outside the light support edge."""
    ls, q = params.loc_scale, params.q
    _check_q_integrable(q, ls.dim)
    a = np.asarray(a, dtype=float)
    diff = a - ls.mu
    pd = ls.precision_times(diff)
    d2 = float(diff @ pd)
    scale = 1.0 - (1.0 - q) * 0.5 * d2  # = exp_q(-d2/2)^(1-q)
    if scale <= 0.0:
        raise ValueError("q-Gaussian gradient undefined on or outside the support boundary")
    prec = ls.precision()
    grad_mu = pd / scale
    grad_sigma = -0.5 * (prec - np.outer(pd, pd) / scale)
    return grad_mu, grad_sigma


# ---------------------------------------------------------------------------
# Beta on a box


def _beta_unit_coords(params: BetaParams, a):
    a = np.asarray(a, dtype=float)
    if np.any(a <= params.action_low) or np.any(a >= params.action_high):
        raise ValueError("Beta actions must lie strictly inside the action bounds")
    return (a - params.action_low) / (params.action_high - params.action_low)


def log_prob_beta(params: BetaParams, a):
    x = _beta_unit_coords(params, a)
    log_b = log_gamma(params.alpha) + log_gamma(params.beta) - log_gamma(params.alpha + params.beta)
    core = (params.alpha - 1.0) * np.log(x) + (params.beta - 1.0) * np.log1p(-x)
    jac = np.log(params.action_high - params.action_low)
    out = np.sum(core - log_b - jac, axis=-1)
    return out if out.ndim else float(out)


def grad_log_prob_beta(params: BetaParams, a):
    """(grad_alpha, grad_beta), componentwise."""
    x = _beta_unit_coords(params, a)
    psi_ab = digamma(params.alpha + params.beta)
    grad_alpha = np.log(x) - digamma(params.alpha) + psi_ab
    grad_beta = np.log1p(-x) - digamma(params.beta) + psi_ab
    return grad_alpha, grad_beta


# ---------------------------------------------------------------------------
# sparsemax


def sparsemax(inp: SparsemaxInput):
    """Euclidean projection of values/temperature onto the probability simplex.

    Sort-based threshold rule; the brute-force active-set oracle in the test
    suite pins the semantics.
    """
    z = inp.values / inp.temperature
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, z.size + 1)
    valid = u - css / ks > 0.0
    k = int(ks[valid][-1])
    tau = css[k - 1] / k
    return np.maximum(z - tau, 0.0)


def sparsemax_support(inp: SparsemaxInput):
    """Indices receiving strictly positive probability."""
    return np.nonzero(sparsemax(inp) > 0.0)[0]


# ---------------------------------------------------------------------------
# Cholesky chain rule


def chain_sigma_grad_to_chol(grad_sigma, scale_chol):
    """Map a symmetric gradient w.r.t. Sigma = L L^T to the gradient w.r.t. L:
    dF/dL = 2 (G L) restricted to the lower triangle."""
    return np.tril(2.0 * grad_sigma @ scale_chol)
