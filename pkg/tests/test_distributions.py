import numpy as np
import pytest
from hypothesis import given, strategies as st

from qexp_rl import distributions as dist
from qexp_rl import oracles as orc
from qexp_rl.deformed import exp_q

SQRT_2PI = np.sqrt(2.0 * np.pi)


def loc_scale_1d(mu=0.0, sigma=1.0):
    return dist.LocScaleParams(np.array([mu]), np.array([[sigma]]))


def random_loc_scale(rng, n):
    mu = rng.normal(size=n)
    chol = np.tril(rng.normal(size=(n, n)) * 0.3)
    np.fill_diagonal(chol, rng.uniform(0.5, 1.5, size=n))
    return dist.LocScaleParams(mu, chol)


class TestParamInvariants:
    def test_chol_must_be_lower_triangular(self):
        with pytest.raises(ValueError):
            dist.LocScaleParams(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_chol_diag_positive(self):
        with pytest.raises(ValueError):
            dist.LocScaleParams(np.zeros(1), np.array([[-1.0]]))

    def test_vector_scale_becomes_diagonal(self):
        p = dist.LocScaleParams(np.zeros(2), np.array([1.0, 2.0]))
        assert np.allclose(p.sigma, np.diag([1.0, 4.0]))

    def test_student_t_needs_positive_nu(self):
        with pytest.raises(ValueError):
            dist.StudentTParams(loc_scale_1d(), nu=0.0)

    def test_student_t_index_in_heavy_range(self):
        st_params = dist.StudentTParams(loc_scale_1d(), nu=3.0)
        assert 1.0 < st_params.entropic_index < 3.0

    def test_q_gaussian_rejects_q3_and_q1(self):
        with pytest.raises(ValueError):
            dist.QGaussianParams(loc_scale_1d(), q=3.0)
        with pytest.raises(ValueError):
            dist.QGaussianParams(loc_scale_1d(), q=1.0)

    def test_beta_requires_bell_shape(self):
        with pytest.raises(ValueError):
            dist.BetaParams([0.9], [2.0], [0.0], [1.0])
        with pytest.raises(ValueError):
            dist.BetaParams([2.0], [2.0], [1.0], [0.0])


class TestGaussian:
    def test_standard_mode_value(self):
        assert dist.log_prob_gaussian(loc_scale_1d(), np.array([0.0])) == pytest.approx(
            -0.9189385332046727, abs=1e-12)

    def test_bivariate_mode(self):
        p = dist.LocScaleParams(np.array([0.3, -0.2]), np.eye(2))
        assert dist.log_prob_gaussian(p, p.mu) == pytest.approx(-np.log(2 * np.pi), abs=1e-12)

    def test_density_matches_quadrature_normalized(self):
        p = loc_scale_1d(mu=1.0, sigma=2.0)
        res = orc.integrate_adaptive(orc.QuadratureSpec(
            lambda x: float(np.exp(dist.log_prob_gaussian(p, np.array([x])))), -np.inf, np.inf, 1e-9))
        assert res.value == pytest.approx(1.0, abs=1e-6)
        # spot value at a=3
        assert dist.log_prob_gaussian(p, np.array([3.0])) == pytest.approx(
            -0.5 * np.log(2 * np.pi * 4.0) - 0.5, abs=1e-12)

    def test_batched_matches_pointwise(self, np_rng):
        p = random_loc_scale(np_rng, 3)
        pts = np_rng.normal(size=(7, 3))
        batch = dist.log_prob_gaussian(p, pts)
        single = [dist.log_prob_gaussian(p, a) for a in pts]
        assert np.allclose(batch, single, atol=1e-13)


class TestSquashedGaussian:
    def test_origin_value(self):
        v = dist.log_prob_squashed_gaussian(loc_scale_1d(), np.array([0.0]))
        assert v == pytest.approx(-0.5 * np.log(2 * np.pi) - np.log(1.0 + 1e-6), abs=1e-12)

    def test_mass_on_unit_interval(self, np_rng):
        for _ in range(5):
            p = loc_scale_1d(mu=np_rng.normal() * 0.8, sigma=np_rng.uniform(0.4, 1.5))
            res = orc.integrate_adaptive(orc.QuadratureSpec(
                lambda x: float(np.exp(dist.log_prob_squashed_gaussian(p, np.array([x])))),
                -1.0 + 1e-9, 1.0 - 1e-9, 1e-9))
            assert res.value == pytest.approx(1.0, abs=1e-4)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            dist.log_prob_squashed_gaussian(loc_scale_1d(), np.array([1.0]))

    def test_mode_region_finite(self, np_rng):
        p = dist.LocScaleParams(np.array([0.2, -0.4]), np.eye(2))
        a = np.tanh(p.mu)
        assert np.isfinite(dist.log_prob_squashed_gaussian(p, a))


class TestStudentT:
    def test_cauchy_at_zero(self):
        p = dist.StudentTParams(loc_scale_1d(), nu=1.0)
        assert dist.log_prob_student_t(p, np.array([0.0])) == pytest.approx(
            np.log(1.0 / np.pi), abs=1e-12)

    def test_large_nu_matches_gaussian(self):
        # exact deviation of the log-density is (x^4 - 2x^2 - 1)/(4 nu) + O(nu^-2),
        # so at nu = 1000 the 1e-2 bound holds for |x| <= ~2.7; the grid stops
        # at 2.5 where the true gap is ~6.4e-3
        p = dist.StudentTParams(loc_scale_1d(), nu=1000.0)
        for x in np.linspace(-2.5, 2.5, 25):
            g = dist.log_prob_gaussian(loc_scale_1d(), np.array([x]))
            t = dist.log_prob_student_t(p, np.array([x]))
            assert abs(t - g) < 1e-2
        # density-level agreement holds with wide margin out to 3
        for x in np.linspace(-3, 3, 25):
            g = np.exp(dist.log_prob_gaussian(loc_scale_1d(), np.array([x])))
            t = np.exp(dist.log_prob_student_t(p, np.array([x])))
            assert abs(t - g) < 2e-4

    def test_bivariate_mode_closed_form(self):
        p = dist.StudentTParams(dist.LocScaleParams(np.zeros(2), np.eye(2)), nu=5.0)
        # Gamma(3.5)/Gamma(2.5) = 2.5, so the mode value is ln(2.5/(5 pi)) = -ln(2 pi)
        expected = np.log(2.5 / (5.0 * np.pi))
        assert dist.log_prob_student_t(p, np.zeros(2)) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(-1.8378770664093453, abs=1e-12)

    def test_mass(self, np_rng):
        p = dist.StudentTParams(loc_scale_1d(sigma=0.7), nu=2.5)
        res = orc.integrate_adaptive(orc.QuadratureSpec(
            lambda x: float(np.exp(dist.log_prob_student_t(p, np.array([x])))), -np.inf, np.inf, 1e-9))
        assert res.value == pytest.approx(1.0, abs=1e-6)


class TestQGaussian:
    def test_continuity_to_gaussian(self):
        xs = np.linspace(-3, 3, 31)
        for q in (0.999, 1.001):
            p = dist.QGaussianParams(loc_scale_1d(), q=q)
            for x in xs:
                g = dist.log_prob_gaussian(loc_scale_1d(), np.array([x]))
                v = dist.log_prob_q_gaussian(p, np.array([x]))
                assert abs(v - g) < 1e-2

    def test_out_of_support_is_neg_inf(self):
        p = dist.QGaussianParams(loc_scale_1d(), q=0.0)
        assert dist.log_prob_q_gaussian(p, np.array([10.0])) == -np.inf

    def test_heavy_q2_mass(self):
        p = dist.QGaussianParams(loc_scale_1d(), q=2.0)
        res = orc.integrate_adaptive(orc.QuadratureSpec(
            lambda x: float(np.exp(dist.log_prob_q_gaussian(p, np.array([x])))), -np.inf, np.inf, 1e-9))
        assert res.value == pytest.approx(1.0, abs=1e-4)

    def test_neg_inf_exactly_where_unsupported(self, np_rng):
        p = dist.QGaussianParams(loc_scale_1d(sigma=0.8), q=0.4)
        for _ in range(200):
            a = np.array([np_rng.uniform(-3, 3)])
            inside = dist.support_contains(p, a)
            lp = dist.log_prob_q_gaussian(p, a)
            assert inside == np.isfinite(lp)

    def test_heavy_multivariate_integrability_bound(self):
        p2 = dist.QGaussianParams(dist.LocScaleParams(np.zeros(2), np.eye(2)), q=2.0)
        with pytest.raises(ValueError):
            dist.log_prob_q_gaussian(p2, np.zeros(2))

    def test_non_factorization_with_diagonal_sigma(self):
        # a diagonal-Sigma joint q-Gaussian is not the product of its 1-D marginals
        q = 0.5
        joint = dist.QGaussianParams(dist.LocScaleParams(np.zeros(2), np.eye(2)), q=q)
        marg = dist.QGaussianParams(loc_scale_1d(), q=q)
        grid = np.linspace(-1.2, 1.2, 13)
        worst = 0.0
        for x in grid:
            for y in grid:
                j = np.exp(dist.log_prob_q_gaussian(joint, np.array([x, y])))
                m = np.exp(dist.log_prob_q_gaussian(marg, np.array([x]))) * np.exp(
                    dist.log_prob_q_gaussian(marg, np.array([y])))
                worst = max(worst, abs(j - m))
        assert worst > 1e-3


class TestPartition:
    def test_limit_to_gaussian_both_sides(self):
        for q in (1.0 - 1e-4, 1.0 + 1e-4):
            assert dist.partition_q_gaussian(1.0, q, 1) == pytest.approx(SQRT_2PI, abs=2e-3)

    def test_q2_value_against_quadrature(self):
        # corrected heavy-branch constant: sqrt(2 pi) Gamma(1/2)/Gamma(1) = sqrt(2) pi.
        # (hand-evaluating the printed formula gives pi, which the quadrature
        # cross-check rejects: the printed normalizer drops a factor sqrt(2).)
        z = dist.partition_q_gaussian(1.0, 2.0, 1)
        assert z == pytest.approx(np.sqrt(2.0) * np.pi, rel=1e-12)
        res = orc.integrate_adaptive(orc.QuadratureSpec(
            lambda x: exp_q(-0.5 * x * x, 2.0), -np.inf, np.inf, 1e-10))
        assert res.value == pytest.approx(z, rel=1e-9)

    def test_q0_value_against_quadrature(self):
        z = dist.partition_q_gaussian(1.0, 0.0, 1)
        r = np.sqrt(2.0)
        res = orc.integrate_adaptive(orc.QuadratureSpec(
            lambda x: exp_q(-0.5 * x * x, 0.0), -r + 1e-12, r - 1e-12, 1e-10))
        assert res.value == pytest.approx(z, abs=1e-8)
        assert z == pytest.approx(4.0 * np.sqrt(2.0) / 3.0, rel=1e-12)

    def test_scales_with_sigma_and_dimension(self):
        z1 = dist.partition_q_gaussian(1.0, 0.5, 1)
        assert dist.partition_q_gaussian(2.0, 0.5, 1) == pytest.approx(2.0 * z1, rel=1e-12)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            dist.partition_q_gaussian(1.0, 3.0, 1)
        with pytest.raises(ValueError):
            dist.partition_q_gaussian(0.0, 0.5, 1)


class TestStudentTQGaussianCorrespondence:
    """1-D heavy q-Gaussian == Student's t under q = 1 + 2/(nu+1) with the
    derived scale conversion sigma_t^2 = sigma_q^2 (nu+1)/nu."""

    @pytest.mark.parametrize("nu", [1.0, 3.0, 10.0])
    def test_pointwise_density_match(self, nu):
        q = 1.0 + 2.0 / (nu + 1.0)
        sigma_q = 0.8
        sigma_t = sigma_q * np.sqrt((nu + 1.0) / nu)
        qg = dist.QGaussianParams(loc_scale_1d(mu=0.3, sigma=sigma_q), q=q)
        tt = dist.StudentTParams(loc_scale_1d(mu=0.3, sigma=sigma_t), nu=nu)
        for x in np.linspace(-6, 6, 49):
            a = np.array([x])
            assert dist.log_prob_q_gaussian(qg, a) == pytest.approx(
                dist.log_prob_student_t(tt, a), abs=1e-8)


class TestBeta:
    def test_symmetric_value(self):
        p = dist.BetaParams([2.0], [2.0], [0.0], [1.0])
        assert dist.log_prob_beta(p, np.array([0.5])) == pytest.approx(np.log(1.5), abs=1e-12)

    def test_symmetric_gradients_at_midpoint(self):
        p = dist.BetaParams([3.0], [3.0], [-1.0], [1.0])
        ga, gb = dist.grad_log_prob_beta(p, np.array([0.0]))
        assert ga == pytest.approx(gb, abs=1e-14)

    def test_domain_error(self):
        p = dist.BetaParams([2.0], [2.0], [0.0], [1.0])
        for bad in (0.0, 1.0, -0.2, 1.3):
            with pytest.raises(ValueError):
                dist.log_prob_beta(p, np.array([bad]))

    def test_mass_with_rescaled_bounds(self):
        p = dist.BetaParams([2.5], [1.8], [-2.0], [2.0])
        res = orc.integrate_adaptive(orc.QuadratureSpec(
            lambda x: float(np.exp(dist.log_prob_beta(p, np.array([x])))),
            -2.0 + 1e-12, 2.0 - 1e-12, 1e-9))
        assert res.value == pytest.approx(1.0, abs=1e-6)


class TestSparsemax:
    def test_already_on_simplex(self):
        p = dist.sparsemax(dist.SparsemaxInput(np.array([0.5, 0.3, 0.2]), 1.0))
        assert np.allclose(p, [0.5, 0.3, 0.2], atol=1e-12)

    def test_sparse_corner(self):
        p = dist.sparsemax(dist.SparsemaxInput(np.array([1.0, 0.0, 0.0]), 1.0))
        assert np.allclose(p, [1.0, 0.0, 0.0], atol=1e-12)

    @given(st.floats(-50.0, 50.0))
    def test_constant_scores_are_uniform(self, c):
        p = dist.sparsemax(dist.SparsemaxInput(np.array([c, c, c]), 1.0))
        assert np.allclose(p, 1.0 / 3.0, atol=1e-12)

    def test_temperature_scales_scores(self):
        v = np.array([1.0, 0.5, -0.2])
        a = dist.sparsemax(dist.SparsemaxInput(v, 2.0))
        b = dist.sparsemax(dist.SparsemaxInput(v / 2.0, 1.0))
        assert np.allclose(a, b, atol=1e-14)

    def test_matches_bruteforce(self, np_rng):
        for _ in range(200):
            k = int(np_rng.integers(2, 11))
            v = np_rng.normal(scale=2.0, size=k)
            p = dist.sparsemax(dist.SparsemaxInput(v, 1.0))
            ref = orc.project_simplex_bruteforce(v)
            assert np.max(np.abs(p - ref)) < 1e-9
            assert np.all(p >= 0.0)
            assert np.sum(p) == pytest.approx(1.0, abs=1e-12)

    def test_support_set(self):
        sup = dist.sparsemax_support(dist.SparsemaxInput(np.array([2.0, 0.1, -3.0]), 1.0))
        p = dist.sparsemax(dist.SparsemaxInput(np.array([2.0, 0.1, -3.0]), 1.0))
        assert set(sup) == set(np.nonzero(p > 0)[0])

    def test_idempotent(self, np_rng):
        for _ in range(20):
            v = np_rng.dirichlet(np.ones(5))
            p = dist.sparsemax(dist.SparsemaxInput(v, 1.0))
            assert np.allclose(p, v, atol=1e-12)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            dist.SparsemaxInput(np.array([np.inf, 0.0]), 1.0)
        with pytest.raises(ValueError):
            dist.SparsemaxInput(np.array([1.0, 0.0]), 0.0)


class TestSupport:
    def test_center_always_inside(self):
        p = dist.QGaussianParams(loc_scale_1d(mu=0.7), q=0.0)
        assert dist.support_contains(p, np.array([0.7]))

    def test_boundary_at_sqrt2(self):
        p = dist.QGaussianParams(loc_scale_1d(), q=0.0)
        assert dist.support_contains(p, np.array([1.4]))
        assert not dist.support_contains(p, np.array([1.5]))

    def test_heavy_support_is_everything(self):
        p = dist.QGaussianParams(loc_scale_1d(), q=2.0)
        assert dist.support_contains(p, np.array([1e8]))


class TestNormalizationSweep:
    """Reduced version of the density acceptance sweep (full size lives in
    the acceptance suite)."""

    FAMILY_CASES = ["gaussian", "squashed", "student_t", "q_light", "q_heavy", "beta"]

    @pytest.mark.parametrize("family", FAMILY_CASES)
    def test_1d_normalization(self, family, np_rng):
        for _ in range(10):
            mu = float(np_rng.uniform(-0.5, 0.5))
            sigma = float(np_rng.uniform(0.3, 1.5))
            ls = loc_scale_1d(mu, sigma)
            if family == "gaussian":
                f = lambda x: float(np.exp(dist.log_prob_gaussian(ls, np.array([x]))))
                lo, hi = -np.inf, np.inf
            elif family == "squashed":
                f = lambda x: float(np.exp(dist.log_prob_squashed_gaussian(ls, np.array([x]))))
                lo, hi = -1 + 1e-9, 1 - 1e-9
            elif family == "student_t":
                p = dist.StudentTParams(ls, nu=float(np_rng.uniform(1.0, 10.0)))
                f = lambda x: float(np.exp(dist.log_prob_student_t(p, np.array([x]))))
                lo, hi = -np.inf, np.inf
            elif family == "q_light":
                p = dist.QGaussianParams(ls, q=float(np_rng.uniform(-1.0, 0.9)))
                r = sigma * np.sqrt(2.0 / (1.0 - p.q))
                f = lambda x: float(np.exp(dist.log_prob_q_gaussian(p, np.array([x]))))
                lo, hi = mu - r + 1e-12, mu + r - 1e-12
            elif family == "q_heavy":
                p = dist.QGaussianParams(ls, q=float(np_rng.uniform(1.1, 2.5)))
                f = lambda x: float(np.exp(dist.log_prob_q_gaussian(p, np.array([x]))))
                lo, hi = -np.inf, np.inf
            else:
                p = dist.BetaParams([float(np_rng.uniform(1.1, 5.0))],
                                    [float(np_rng.uniform(1.1, 5.0))], [-1.0], [1.0])
                f = lambda x: float(np.exp(dist.log_prob_beta(p, np.array([x]))))
                lo, hi = -1 + 1e-12, 1 - 1e-12
            res = orc.integrate_adaptive(orc.QuadratureSpec(f, lo, hi, 1e-9))
            assert res.value == pytest.approx(1.0, abs=1e-4), family
