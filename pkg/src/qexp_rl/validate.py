"""Oracle-backed validation suites behind the `validate` CLI subcommand.

Each check returns (name, passed, detail); the CLI renders them as a CSV
table and exits nonzero if anything failed. Seeds are pinned so the table
is reproducible.
"""

import numpy as np

from . import deformed as dm
from . import distributions as dist
from . import oracles as orc
from .heads import PolicyHeadConfig, head_forward, grad_log_prob_raw, log_prob, sample_action
from .samplers import Rng, gbmm_standard_array, sample_stochastic_rep


def _check(name, passed, detail=""):
    return {"check": name, "passed": bool(passed), "detail": detail}


def suite_math():
    rows = []
    qs = [0.0, 0.5, 1.0, 1.5, 2.0]
    worst = 0.0
    for q in qs:
        for x in np.linspace(-3.0, 3.0, 25):
            v = dm.exp_q(x, q)
            if 0.0 < v < np.inf:
                worst = max(worst, abs(dm.ln_q(v, q) - x))
    rows.append(_check("exp_q/ln_q round trip", worst < 1e-10, f"max err {worst:.2e}"))
    grid = np.linspace(-0.99, 2.99, 41)
    worst = max(abs(dm.gbmm_index_map(dm.gbmm_index_inverse(t)) - t) for t in grid)
    rows.append(_check("GBMM index round trip", worst < 1e-12, f"max err {worst:.2e}"))
    worst = 0.0
    for x in np.linspace(-5.0, 5.0, 101):
        for q in (1.0 - 1e-6, 1.0 + 1e-6):
            rel = abs(dm.exp_q(x, q) - np.exp(x)) / max(1.0, np.exp(x))
            worst = max(worst, rel)
    rows.append(_check("exp_q continuity at q=1", worst < 1e-4, f"max rel err {worst:.2e}"))
    err = abs(dm.digamma(1.0) + 0.5772156649015329)
    rows.append(_check("digamma(1) = -EulerGamma", err < 1e-10, f"err {err:.2e}"))
    return rows


def suite_density(n_draws=10):
    rows = []
    rng = np.random.default_rng(2024)
    families = ["gaussian", "squashed_gaussian", "student_t", "q_gaussian_light",
                "q_gaussian_heavy", "beta"]
    for fam in families:
        worst = 0.0
        for _ in range(n_draws):
            mu = float(rng.uniform(-0.5, 0.5))
            sigma = float(rng.uniform(0.3, 1.5))
            ls = dist.LocScaleParams(np.array([mu]), np.array([[sigma]]))
            if fam == "gaussian":
                pdf = lambda x: float(np.exp(dist.log_prob_gaussian(ls, np.array([x]))))
                lo, hi = mu - 12 * sigma, mu + 12 * sigma
            elif fam == "squashed_gaussian":
                pdf = lambda x: float(np.exp(dist.log_prob_squashed_gaussian(ls, np.array([x]))))
                lo, hi = -1.0 + 1e-9, 1.0 - 1e-9
            elif fam == "student_t":
                nu = float(rng.uniform(1.0, 8.0))
                st = dist.StudentTParams(ls, nu)
                pdf = lambda x: float(np.exp(dist.log_prob_student_t(st, np.array([x]))))
                lo, hi = -np.inf, np.inf
            elif fam == "q_gaussian_light":
                q = float(rng.uniform(-1.0, 0.9))
                qp = dist.QGaussianParams(ls, q)
                r = sigma * np.sqrt(2.0 / (1.0 - q))
                pdf = lambda x: float(np.exp(dist.log_prob_q_gaussian(qp, np.array([x]))))
                lo, hi = mu - r + 1e-12, mu + r - 1e-12
            elif fam == "q_gaussian_heavy":
                q = float(rng.uniform(1.1, 2.5))
                qp = dist.QGaussianParams(ls, q)
                pdf = lambda x: float(np.exp(dist.log_prob_q_gaussian(qp, np.array([x]))))
                lo, hi = -np.inf, np.inf
            else:
                bp = dist.BetaParams(np.array([rng.uniform(1.1, 5.0)]),
                                     np.array([rng.uniform(1.1, 5.0)]),
                                     np.array([-1.0]), np.array([1.0]))
                pdf = lambda x: float(np.exp(dist.log_prob_beta(bp, np.array([x]))))
                lo, hi = -1.0 + 1e-12, 1.0 - 1e-12
            res = orc.integrate_adaptive(orc.QuadratureSpec(pdf, lo, hi, 1e-9))
            worst = max(worst, abs(res.value - 1.0))
        rows.append(_check(f"density normalizes: {fam}", worst < 1e-4, f"max |mass-1| {worst:.2e}"))
    return rows


def suite_gradient(n_trials=20):
    rows = []
    rng = np.random.default_rng(7)
    cfgs = [
        PolicyHeadConfig("gaussian", 2, -1.0, 1.0),
        PolicyHeadConfig("squashed_gaussian", 2, -1.0, 1.0),
        PolicyHeadConfig("student_t", 2, -1.0, 1.0),
        PolicyHeadConfig("q_gaussian", 2, -1.0, 1.0, q=0.0),
        PolicyHeadConfig("beta", 2, -1.0, 1.0),
    ]
    for cfg in cfgs:
        worst = 0.0
        for t in range(n_trials):
            raw = rng.normal(scale=0.7, size=cfg.param_count)
            out = head_forward(cfg, raw)
            a = sample_action(cfg, out, Rng.from_seed(1000 + t))
            _, graw = grad_log_prob_raw(cfg, out, a)

            def f(r):
                return float(log_prob(cfg, head_forward(cfg, r), a)[0])

            fd = orc.finite_diff_gradient(f, raw, step=1e-6)
            worst = max(worst, float(np.max(np.abs(graw[0] - fd) / np.maximum(1.0, np.abs(fd)))))
        name = cfg.family + (f"(q={cfg.q:g})" if cfg.family == "q_gaussian" else "")
        rows.append(_check(f"head gradient vs FD: {name}", worst < 1e-5, f"max rel err {worst:.2e}"))
    return rows


def suite_sampler(n=20_000):
    rows = []
    for q in (0.0, 0.5, 1.0, 2.0):
        rng = Rng.from_seed(31)
        z = gbmm_standard_array(q, n, rng)
        Z = dist.partition_q_gaussian(1.0, q, 1)
        pdf = lambda x: dm.exp_q(-x * x / 2.0, q) / Z
        if q < 1.0:
            R = np.sqrt(2.0 / (1.0 - q))
            bp = orc.quantile_breakpoints(z, lower=-R, upper=R)
        else:
            bp = orc.quantile_breakpoints(z)
        res = orc.ks_test(z, orc.quadrature_cdf(pdf, bp))
        rows.append(_check(f"GBMM KS fit q={q:g}", res.passed,
                           f"stat {res.statistic:.4f} thr {res.threshold:.4f}"))
    rng = Rng.from_seed(32)
    qp = dist.QGaussianParams(dist.LocScaleParams(np.zeros(1), np.eye(1)), 0.0)
    draws = np.array([sample_stochastic_rep(qp, rng)[0] for _ in range(n)])
    ok = bool(np.all(np.abs(draws) < np.sqrt(2.0)))
    rows.append(_check("stochastic-rep draws in support (q=0)", ok,
                       f"max |draw| {np.max(np.abs(draws)):.6f}"))
    return rows


def suite_sparsemax(n_vectors=300):
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(n_vectors):
        k = int(rng.integers(2, 11))
        v = rng.normal(scale=2.0, size=k)
        p = dist.sparsemax(dist.SparsemaxInput(v, 1.0))
        ref = orc.project_simplex_bruteforce(v)
        worst = max(worst, float(np.max(np.abs(p - ref))))
    return [_check("sparsemax equals brute-force projection", worst < 1e-9,
                   f"max Linf {worst:.2e}")]


SUITES = {
    "math": suite_math,
    "density": suite_density,
    "gradient": suite_gradient,
    "sampler": suite_sampler,
    "sparsemax": suite_sparsemax,
}


def run_validate(selector="all"):
    names = list(SUITES) if selector == "all" else [selector]
    rows = []
    for name in names:
        if name not in SUITES:
            raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
        rows.extend(SUITES[name]())
    return rows
