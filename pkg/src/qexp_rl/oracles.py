"""Independent numerical ground truth: quadrature, finite differences,
brute-force simplex projection, and distribution-fit statistics.

Nothing in here may import from the density/sampler modules it is used to
validate; the only internal dependency allowed is the scalar deformed math.
All computations run in double precision.
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, stats


@dataclass
class QuadratureSpec:
    integrand: Callable[[float], float]
    lower: float
    upper: float
    tolerance: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class QuadratureResult:
    value: float
    error: float
    converged: bool


@dataclass
class FitTestResult:
    statistic: float
    threshold: float
    n_samples: int
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = self.statistic < self.threshold


def integrate_adaptive(spec: QuadratureSpec) -> QuadratureResult:
    """Adaptive quadrature of the integrand over [lower, upper].

    Infinite limits are allowed. The result is flagged not-converged instead
    of raising when the error estimate misses the requested tolerance.
    """
    with np.errstate(all="ignore"):
        value, err = integrate.quad(
            spec.integrand, spec.lower, spec.upper,
            epsabs=spec.tolerance, epsrel=spec.tolerance,
            limit=spec.max_subdivisions,
        )
    return QuadratureResult(value=value, error=err, converged=err <= max(spec.tolerance, abs(value) * spec.tolerance) * 10)


def finite_diff_gradient(f, x, step=1e-5):
    """Central-difference gradient of scalar f at vector point x."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi.flat[i] += step
        lo.flat[i] -= step
        fp, fm = f(hi), f(lo)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"function not finite at finite-difference offsets of coordinate {i}")
        grad.flat[i] = (fp - fm) / (2.0 * step)
    return grad


def finite_diff_scalar(f, x, step=1e-5):
    """Central difference d f / d x for scalar x."""
    fp, fm = f(x + step), f(x - step)
    if not (np.isfinite(fp) and np.isfinite(fm)):
        raise ValueError("function not finite at finite-difference offsets")
    return (fp - fm) / (2.0 * step)


def finite_diff_symmetric_matrix(f, mat, step=1e-6):
    """Gradient of scalar f w.r.t. a symmetric matrix argument.

    Perturbs (i, j) and (j, i) together so the argument stays symmetric,
    then reports the symmetric-calculus gradient G with df = tr(G dS):
    G_ij = (df/dh)/2 off the diagonal and df/dh on it.
    """
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[0]
    grad = np.zeros_like(mat)
    for i in range(n):
        for j in range(i + 1):
            hi = mat.copy()
            lo = mat.copy()
            hi[i, j] += step
            lo[i, j] -= step
            if i != j:
                hi[j, i] += step
                lo[j, i] -= step
            d = (f(hi) - f(lo)) / (2.0 * step)
            if i == j:
                grad[i, i] = d
            else:
                grad[i, j] = grad[j, i] = d / 2.0
    return grad


def project_simplex_bruteforce(v):
    """Euclidean projection onto the probability simplex by trying every
    possible active set (all 2^K - 1 of them, vectorized). Exact; rejected
    above length 12."""
    v = np.asarray(v, dtype=float)
    k = v.size
    if k > 12:
        raise ValueError("brute-force projection limited to vectors of length <= 12")
    ids = np.arange(1, 2**k)
    masks = (ids[:, None] >> np.arange(k)) & 1  # every nonempty active set
    sizes = masks.sum(axis=1)
    shift = (masks @ v - 1.0) / sizes
    cand = (v - shift[:, None]) * masks
    feasible = np.all(cand >= -1e-15, axis=1)
    dist = np.sum((cand - v) ** 2, axis=1)
    dist[~feasible] = np.inf
    return np.maximum(cand[np.argmin(dist)], 0.0)


def ks_test(samples, cdf, threshold_scale=1.95) -> FitTestResult:
    """One-sample Kolmogorov-Smirnov statistic against a CDF callable.

    The pass threshold is threshold_scale/sqrt(n) (1.95 ~ alpha = 0.001),
    loose on purpose so pinned-seed CI stays deterministic.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 1000:
        raise ValueError("ks_test needs at least 1000 samples")
    xs = np.sort(samples)
    F = np.asarray(cdf(xs), dtype=float)
    up = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    stat = float(max(np.max(up - F), np.max(F - lo)))
    return FitTestResult(statistic=stat, threshold=threshold_scale / np.sqrt(n), n_samples=n)


def ks_two_sample(a, b, threshold_scale=1.95) -> FitTestResult:
    """Two-sample KS with threshold threshold_scale * sqrt((n+m)/(n m))."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    n, m = a.size, b.size
    if min(n, m) < 1000:
        raise ValueError("ks_two_sample needs at least 1000 samples per side")
    allv = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, allv, side="right") / n
    cdf_b = np.searchsorted(b, allv, side="right") / m
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    thr = threshold_scale * np.sqrt((n + m) / (n * m))
    return FitTestResult(statistic=stat, threshold=thr, n_samples=min(n, m))


def chi2_test(samples, density, bins, support=(-np.inf, np.inf), alpha=0.001) -> FitTestResult:
    """Binned chi-square fit of samples against a density callable.

    Bin edges are equal-count sample quantiles clipped to the support;
    expected masses come from adaptive quadrature of the density per bin.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 1000:
        raise ValueError("chi2_test needs at least 1000 samples")
    qs = np.linspace(0.0, 1.0, bins + 1)
    edges = np.quantile(samples, qs)
    edges[0] = min(edges[0], support[0]) if np.isfinite(support[0]) else -np.inf
    edges[-1] = max(edges[-1], support[1]) if np.isfinite(support[1]) else np.inf
    # merge any duplicate interior edges from ties
    interior = np.unique(edges[1:-1])
    edges = np.concatenate([[edges[0]], interior, [edges[-1]]])
    counts, _ = np.histogram(samples, bins=np.concatenate([
        [edges[0] if np.isfinite(edges[0]) else samples.min() - 1.0],
        edges[1:-1],
        [edges[-1] if np.isfinite(edges[-1]) else samples.max() + 1.0],
    ]))
    expected = np.empty(len(edges) - 1)
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for i in range(len(edges) - 1):
            expected[i], _ = integrate.quad(density, edges[i], edges[i + 1], limit=200)
    expected *= n
    keep = expected > 5.0
    stat = float(np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep]))
    dof = int(keep.sum()) - 1
    thr = float(stats.chi2.ppf(1.0 - alpha, dof))
    return FitTestResult(statistic=stat, threshold=thr, n_samples=n)


def quadrature_cdf(pdf, breakpoints):
    """Build a vectorized CDF for a 1-D density by piecewise quadrature.

    Integrates each cell between consecutive breakpoints plus the left tail
    down to -inf, then interpolates the cumulative masses. Passing sample
    quantiles as breakpoints keeps every cell's mass (and therefore the
    interpolation error) small regardless of tail weight.
    """
    xs = np.unique(np.asarray(breakpoints, dtype=float))
    if xs.size < 2:
        raise ValueError("need at least two distinct breakpoints")
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        left_mass, _ = integrate.quad(pdf, -np.inf, xs[0], limit=200)
        masses = [integrate.quad(pdf, xs[i], xs[i + 1], limit=200)[0] for i in range(xs.size - 1)]
    cum = np.clip(left_mass + np.concatenate([[0.0], np.cumsum(masses)]), 0.0, 1.0)

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.interp(x, xs, cum, left=max(left_mass, 0.0), right=cum[-1])

    return cdf


def quantile_breakpoints(samples, count=1500, lower=None, upper=None):
    """Sample-quantile grid for quadrature_cdf, clipped to optional support
    bounds so no breakpoint falls outside the density's domain."""
    qs = np.linspace(0.0, 1.0, count)
    pts = np.quantile(np.asarray(samples, dtype=float), qs)
    if lower is not None:
        pts = np.clip(pts, lower, None)
        pts = np.concatenate([[lower], pts])
    if upper is not None:
        pts = np.clip(pts, None, upper)
        pts = np.concatenate([pts, [upper]])
    return np.unique(pts)


def importance_normalization(log_density, proposal_sampler, proposal_log_pdf, n, rng):
    """Monte Carlo estimate of the total mass of exp(log_density).

    proposal_sampler(n, rng) must return (n, d) draws covering the support;
    the estimate is mean(exp(log_density - proposal_log_pdf)).
    """
    x = proposal_sampler(n, rng)
    logf = np.asarray(log_density(x), dtype=float)
    logg = np.asarray(proposal_log_pdf(x), dtype=float)
    w = np.exp(logf - logg)
    w[~np.isfinite(logf)] = 0.0
    return float(np.mean(w))
