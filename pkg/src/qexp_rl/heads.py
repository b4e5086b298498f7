"""Policy heads: map raw MLP outputs to valid distribution parameters,
expose batched sample / log_prob / gradient surfaces to the agents, and
handle out-of-support actions for the bounded-support q-Gaussian.

All heads use diagonal scale (the trained policies never need full
covariance; the general-Sigma code in `distributions` remains the oracle
path). Everything here is vectorized over the batch row axis, with one
parameter set per row.

Parametrization, by family:
  * loc-scale families: mu = center + bound * tanh(raw_mu) and
    sigma = exp(clip(raw_log_std, log_std_min, log_std_max)); the squashed
    Gaussian's mu lives in pre-tanh space and uses the config's
    pre_tanh_mu_bound instead of the action bound.
  * Student's t adds nu = nu_base + softplus(raw_nu), so with nu_base = 1
    a zero-initialized head starts at nu = 1 + ln 2 (just above a Cauchy).
  * Beta uses alpha, beta = 1 + softplus(raw) per dimension, rescaled to
    the action box with the constant log-Jacobian.

The unbounded-density families (gaussian, student_t, q_gaussian) treat the
env's action clipping as an execution detail: log-probabilities are always
evaluated at the pre-clip action. The genuinely bounded families (beta,
squashed_gaussian) nudge evaluated actions a hair inside their support so
offline data recorded at the clip boundary stays finite.
"""

from dataclasses import dataclass

import numpy as np

from .deformed import digamma, log_gamma
from .samplers import (
    Rng,
    beta_diag_batch,
    gaussian_diag_batch,
    q_gaussian_diag_batch,
    stochastic_rep_diag_batch,
    student_t_diag_batch,
)

LOG_2PI = float(np.log(2.0 * np.pi))
FAMILIES = ("gaussian", "squashed_gaussian", "beta", "student_t", "q_gaussian")
_BOUNDARY_NUDGE = 1e-9


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class PolicyHeadConfig:
    family: str
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    q: float = 0.0
    nu_base: float = 1.0
    replacement_batch: int = 32
    log_std_min: float = -10.0
    log_std_max: float = 2.0
    squash_eps: float = 1e-6
    pre_tanh_mu_bound: float = 2.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        object.__setattr__(self, "action_low", np.broadcast_to(
            np.asarray(self.action_low, dtype=float), (self.action_dim,)).copy())
        object.__setattr__(self, "action_high", np.broadcast_to(
            np.asarray(self.action_high, dtype=float), (self.action_dim,)).copy())
        if np.any(self.action_low >= self.action_high):
            raise ValueError("action_low must be strictly below action_high")
        if self.family == "q_gaussian":
            if self.q >= 3.0 or abs(self.q - 1.0) < 1e-9:
                raise ValueError("q_gaussian head needs q < 3 and q != 1")
        if self.nu_base < 1.0:
            raise ValueError("nu_base must be >= 1")
        if self.replacement_batch < 1:
            raise ValueError("replacement_batch must be >= 1")
        if self.log_std_min >= self.log_std_max:
            raise ValueError("log_std bounds out of order")

    @property
    def center(self):
        return 0.5 * (self.action_low + self.action_high)

    @property
    def bound(self):
        return 0.5 * (self.action_high - self.action_low)

    @property
    def param_count(self):
        return 2 * self.action_dim + (1 if self.family == "student_t" else 0)


@dataclass
class PolicyHeadOutput:
    """Transformed per-row parameters plus everything backward needs."""

    config: PolicyHeadConfig
    raw: np.ndarray
    mu: np.ndarray = None          # loc-scale families, (B, N)
    sigma: np.ndarray = None
    tanh_mu: np.ndarray = None     # cached tanh(raw_mu)
    std_mask: np.ndarray = None    # inside the log-std clamp
    nu: np.ndarray = None          # student_t, (B,)
    alpha: np.ndarray = None       # beta family
    beta: np.ndarray = None

    @property
    def batch_size(self):
        return self.raw.shape[0]


def head_forward(config: PolicyHeadConfig, mlp_output) -> PolicyHeadOutput:
    raw = np.atleast_2d(np.asarray(mlp_output, dtype=float))
    if raw.shape[1] != config.param_count:
        raise ValueError(f"{config.family} head expects {config.param_count} outputs per row")
    n = config.action_dim
    out = PolicyHeadOutput(config=config, raw=raw)
    if config.family == "beta":
        # tiny floor keeps alpha, beta strictly above 1 when softplus underflows
        out.alpha = 1.0 + softplus(raw[:, :n]) + 1e-9
        out.beta = 1.0 + softplus(raw[:, n:2 * n]) + 1e-9
        return out
    tanh_mu = np.tanh(raw[:, :n])
    scale = config.pre_tanh_mu_bound if config.family == "squashed_gaussian" else config.bound
    center = 0.0 if config.family == "squashed_gaussian" else config.center
    out.tanh_mu = tanh_mu
    out.mu = center + scale * tanh_mu
    log_std = np.clip(raw[:, n:2 * n], config.log_std_min, config.log_std_max)
    out.std_mask = (raw[:, n:2 * n] > config.log_std_min) & (raw[:, n:2 * n] < config.log_std_max)
    out.sigma = np.exp(log_std)
    if config.family == "student_t":
        out.nu = config.nu_base + softplus(raw[:, 2 * n])
    return out


# ---------------------------------------------------------------------------
# sampling


def sample_action(config: PolicyHeadConfig, out: PolicyHeadOutput, rng: Rng):
    """One action per batch row, in env units."""
    if config.family == "gaussian":
        return gaussian_diag_batch(out.mu, out.sigma, rng)
    if config.family == "squashed_gaussian":
        u = gaussian_diag_batch(out.mu, out.sigma, rng)
        return config.center + config.bound * np.tanh(u)
    if config.family == "student_t":
        return student_t_diag_batch(out.mu, out.sigma, out.nu, rng)
    if config.family == "q_gaussian":
        return q_gaussian_diag_batch(out.mu, out.sigma, config.q, rng)
    return beta_diag_batch(out.alpha, out.beta, config.action_low, config.action_high, rng)


def mean_action(config: PolicyHeadConfig, out: PolicyHeadOutput):
    """Deterministic execution point (the TD3-style actor's pi(s))."""
    if config.family == "squashed_gaussian":
        return config.center + config.bound * np.tanh(out.mu)
    if config.family == "beta":
        return config.action_low + (config.action_high - config.action_low) * (
            out.alpha / (out.alpha + out.beta))
    return out.mu


# ---------------------------------------------------------------------------
# log-probabilities (per row)


def _unit_coords(config, a):
    x = (np.asarray(a, dtype=float) - config.center) / config.bound
    return np.clip(x, -1.0 + _BOUNDARY_NUDGE, 1.0 - _BOUNDARY_NUDGE)


def _q_log_partition_const(q, n):
    """log Z_q terms independent of sigma; see distributions for derivation."""
    if q < 1.0:
        k = 1.0 / (1.0 - q)
        return 0.5 * n * np.log(2.0 * np.pi / (1.0 - q)) + log_gamma(k + 1.0) - log_gamma(k + 1.0 + 0.5 * n)
    b = 1.0 / (q - 1.0)
    if b - 0.5 * n <= 0.0:
        raise ValueError(f"heavy q-Gaussian in {n} dimensions needs q < 1 + 2/N")
    return 0.5 * n * np.log(2.0 * np.pi / (q - 1.0)) + log_gamma(b - 0.5 * n) - log_gamma(b)


def log_prob(config: PolicyHeadConfig, out: PolicyHeadOutput, a):
    """Log-density of env-unit actions a (B, N) under each row's policy."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = config.action_dim
    if config.family == "beta":
        x = (a - config.action_low) / (config.action_high - config.action_low)
        x = np.clip(x, _BOUNDARY_NUDGE, 1.0 - _BOUNDARY_NUDGE)
        log_b = log_gamma(out.alpha) + log_gamma(out.beta) - log_gamma(out.alpha + out.beta)
        core = (out.alpha - 1.0) * np.log(x) + (out.beta - 1.0) * np.log1p(-x)
        return np.sum(core - log_b, axis=1) - np.sum(np.log(config.action_high - config.action_low))

    if config.family == "squashed_gaussian":
        x = _unit_coords(config, a)
        u = np.arctanh(x)
        z = (u - out.mu) / out.sigma
        base = -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(out.sigma), axis=1) - 0.5 * n * LOG_2PI
        jac = np.sum(np.log1p(-x * x + config.squash_eps), axis=1) + np.sum(np.log(config.bound))
        return base - jac

    z = (a - out.mu) / out.sigma
    d2 = np.sum(z * z, axis=1)
    log_sig = np.sum(np.log(out.sigma), axis=1)
    if config.family == "gaussian":
        return -0.5 * d2 - log_sig - 0.5 * n * LOG_2PI
    if config.family == "student_t":
        nu = out.nu
        return (
            log_gamma((n + nu) / 2.0) - log_gamma(nu / 2.0)
            - 0.5 * n * np.log(nu * np.pi) - log_sig
            - 0.5 * (n + nu) * np.log1p(d2 / nu)
        )
    # q-Gaussian
    q = config.q
    inner = 1.0 - (1.0 - q) * 0.5 * d2
    logz = log_sig + _q_log_partition_const(q, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        core = np.where(inner > 0.0, np.log(np.maximum(inner, 1e-300)) / (1.0 - q), -np.inf)
    return core - logz


def in_support(config: PolicyHeadConfig, out: PolicyHeadOutput, a):
    """Row mask; always true for every family except the light q-Gaussian."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if config.family != "q_gaussian" or config.q >= 1.0:
        return np.ones(a.shape[0], dtype=bool)
    z = (a - out.mu) / out.sigma
    return np.sum(z * z, axis=1) < 2.0 / (1.0 - config.q)


# ---------------------------------------------------------------------------
# gradients w.r.t. the raw MLP outputs


def grad_log_prob_raw(config: PolicyHeadConfig, out: PolicyHeadOutput, a):
    """(log_prob (B,), d log_prob / d raw (B, P)), exact chain rule."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = config.action_dim
    graw = np.zeros_like(out.raw)
    logp = log_prob(config, out, a)

    if config.family == "beta":
        x = (a - config.action_low) / (config.action_high - config.action_low)
        x = np.clip(x, _BOUNDARY_NUDGE, 1.0 - _BOUNDARY_NUDGE)
        psi_ab = digamma(out.alpha + out.beta)
        d_alpha = np.log(x) - digamma(out.alpha) + psi_ab
        d_beta = np.log1p(-x) - digamma(out.beta) + psi_ab
        graw[:, :n] = d_alpha * sigmoid(out.raw[:, :n])
        graw[:, n:2 * n] = d_beta * sigmoid(out.raw[:, n:2 * n])
        return logp, graw

    if config.family == "squashed_gaussian":
        x = _unit_coords(config, a)
        target = np.arctanh(x)
        mu_scale = config.pre_tanh_mu_bound
    else:
        target = a
        mu_scale = config.bound

    z = (target - out.mu) / out.sigma
    if config.family in ("gaussian", "squashed_gaussian"):
        d_mu = z / out.sigma
        d_sigma = (z * z - 1.0) / out.sigma
    elif config.family == "student_t":
        nu = out.nu[:, None]
        d2 = np.sum(z * z, axis=1, keepdims=True)
        d_mu = (n + nu) * z / (out.sigma * (nu + d2))
        d_sigma = -1.0 / out.sigma + (n + nu) * z * z / (out.sigma * (nu + d2))
        nu1 = out.nu
        d2f = d2[:, 0]
        d_nu = (
            0.5 * digamma((n + nu1) / 2.0) - 0.5 * digamma(nu1 / 2.0)
            - 0.5 * n / nu1 - 0.5 * np.log1p(d2f / nu1)
            + 0.5 * (n + nu1) * d2f / (nu1 * (nu1 + d2f))
        )
        graw[:, 2 * n] = d_nu * sigmoid(out.raw[:, 2 * n])
    else:  # q_gaussian
        q = config.q
        d2 = np.sum(z * z, axis=1, keepdims=True)
        scale = 1.0 - (1.0 - q) * 0.5 * d2
        if np.any(scale <= 0.0):
            raise ValueError("q-Gaussian gradient undefined on or outside the support boundary")
        d_mu = z / (out.sigma * scale)
        d_sigma = -1.0 / out.sigma + z * z / (out.sigma * scale)

    graw[:, :n] = d_mu * mu_scale * (1.0 - out.tanh_mu**2)
    graw[:, n:2 * n] = d_sigma * out.sigma * out.std_mask
    return logp, graw


def head_backward(config: PolicyHeadConfig, out: PolicyHeadOutput, param_gradients):
    """Chain family-parameter gradients back to the raw MLP outputs.

    param_gradients is (d_mu, d_sigma[, d_nu]) for loc-scale families or
    (d_alpha, d_beta) for beta, each batched like the head output.
    """
    n = config.action_dim
    graw = np.zeros_like(out.raw)
    if config.family == "beta":
        d_alpha, d_beta = param_gradients
        graw[:, :n] = d_alpha * sigmoid(out.raw[:, :n])
        graw[:, n:2 * n] = d_beta * sigmoid(out.raw[:, n:2 * n])
        return graw
    d_mu, d_sigma = param_gradients[0], param_gradients[1]
    mu_scale = config.pre_tanh_mu_bound if config.family == "squashed_gaussian" else config.bound
    graw[:, :n] = d_mu * mu_scale * (1.0 - out.tanh_mu**2)
    graw[:, n:2 * n] = d_sigma * out.sigma * out.std_mask
    if config.family == "student_t":
        graw[:, 2 * n] = param_gradients[2] * sigmoid(out.raw[:, 2 * n])
    return graw


# ---------------------------------------------------------------------------
# out-of-support replacement (light-tailed q-Gaussian only)


def replace_out_of_support(config: PolicyHeadConfig, out: PolicyHeadOutput, a, rng: Rng):
    """Substitute unsupported actions with the nearest of M on-policy draws.

    Returns (effective_actions, replaced_mask). Families with full support
    pass actions through untouched.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float)).copy()
    mask = ~in_support(config, out, a)
    if not np.any(mask):
        return a, mask
    idx = np.nonzero(mask)[0]
    m = config.replacement_batch
    mu, sigma = out.mu[idx], out.sigma[idx]
    rep = mu.repeat(m, axis=0)
    rep_sigma = sigma.repeat(m, axis=0)
    draws = stochastic_rep_diag_batch(rep, rep_sigma, config.q, rng)
    draws = draws.reshape(idx.size, m, config.action_dim)
    dist2 = np.sum((draws - a[idx][:, None, :]) ** 2, axis=2)
    pick = np.argmin(dist2, axis=1)
    a[idx] = draws[np.arange(idx.size), pick]
    return a, mask


def log_prob_with_replacement(config: PolicyHeadConfig, out: PolicyHeadOutput, a, rng: Rng):
    """(log_prob, effective_action): in-support actions pass through, the
    rest are replaced by their nearest on-policy sample (whose log-prob is
    finite by construction). Gradients taken downstream flow through the
    replaced sample's log-prob; the substituted action is treated as data."""
    eff, _ = replace_out_of_support(config, out, a, rng)
    return log_prob(config, out, eff), eff


def grad_log_prob_raw_with_replacement(config, out, a, rng: Rng):
    eff, _ = replace_out_of_support(config, out, a, rng)
    logp, graw = grad_log_prob_raw(config, out, eff)
    return logp, graw, eff
