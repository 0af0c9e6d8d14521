import numpy as np
import pytest

import panelcomplete as pc
from panelcomplete.errors import RankDeficient, SingularDesign, TooFewPeriods
from panelcomplete.solver import LowRankEstimate

from conftest import rank_k_panel


def estimate_from(m_tilde, lam=0.0):
    m_tilde = np.asarray(m_tilde, float)
    return LowRankEstimate(
        m_tilde=m_tilde,
        singular_values=np.linalg.svd(m_tilde, compute_uv=False),
        objective_trace=np.array([1.0, 0.5]),
        converged=True,
        lam=lam,
    )


class TestInitialLoadings:
    def test_rank_one_scaled_vector(self):
        u = np.array([1.0, 1.0]) / np.sqrt(2)
        v = np.array([0.6, 0.8])
        est = estimate_from(3.0 * np.outer(u, v))
        beta = pc.initial_loadings(est, 1)
        np.testing.assert_allclose(beta[:, 0], [1.0, 1.0], atol=1e-12)

    def test_rank_deficient(self):
        u = np.array([1.0, 1.0]) / np.sqrt(2)
        est = estimate_from(np.outer(u, [1.0, 2.0]))
        with pytest.raises(RankDeficient):
            pc.initial_loadings(est, 2)

    def test_orthonormality(self, rng):
        b = rng.standard_normal((20, 3))
        f = rng.standard_normal((15, 3))
        est = estimate_from(b @ f.T)
        beta = pc.initial_loadings(est, 3)
        np.testing.assert_allclose(beta.T @ beta / 20, np.eye(3), atol=1e-10)


class TestEstimateFactors:
    def test_hand_ols(self):
        panel = pc.ObservedPanel(np.array([[3.0], [6.0]]), np.ones((2, 1)))
        beta = np.array([[1.0], [2.0]])
        f = pc.estimate_factors(panel, beta)
        assert f[0, 0] == pytest.approx(3.0, abs=1e-12)

    def test_exact_linear_fit(self, rng):
        beta = rng.standard_normal((6, 2))
        coeff = np.array([1.5, -2.0])
        y = beta @ coeff
        panel = pc.ObservedPanel(y[:, None], np.ones((6, 1)))
        f = pc.estimate_factors(panel, beta)
        np.testing.assert_allclose(f[0], coeff, atol=1e-10)

    def test_single_observed_unit(self):
        # period 0 sees only unit 1 (unit 0 is observed elsewhere)
        values = np.array([[0.0, 1.0], [5.0, 1.0]])
        mask = np.array([[0.0, 1.0], [1.0, 1.0]])
        panel = pc.ObservedPanel(values, mask)
        beta = np.array([[1.0], [2.0]])
        f = pc.estimate_factors(panel, beta)
        assert f[0, 0] == pytest.approx(2.5, abs=1e-12)

    def test_singular_design(self):
        # two factors but the only observed row cannot identify both
        values = np.array([[1.0, 1.0], [2.0, 2.0]])
        mask = np.array([[1.0, 1.0], [0.0, 1.0]])
        panel = pc.ObservedPanel(values, mask)
        beta = np.array([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(SingularDesign) as exc:
            pc.estimate_factors(panel, beta)
        assert exc.value.axis == "period"
        assert exc.value.index == 0

    def test_periods_independent(self, rng):
        values = rng.standard_normal((8, 5))
        mask = np.ones((8, 5))
        beta = rng.standard_normal((8, 2))
        full = pc.estimate_factors(pc.ObservedPanel(values, mask), beta)
        # dropping period 3 must not change the others
        keep = [0, 1, 2, 4]
        sub = pc.estimate_factors(pc.ObservedPanel(values[:, keep], mask[:, keep]), beta)
        np.testing.assert_allclose(sub, full[keep], atol=1e-12)


class TestEstimateLoadings:
    def test_hand_ols_is_mean(self):
        panel = pc.ObservedPanel(np.array([[4.0, 6.0]]), np.ones((1, 2)))
        factors = np.array([[1.0], [1.0]])
        b = pc.estimate_loadings(panel, factors)
        assert b[0, 0] == pytest.approx(5.0, abs=1e-12)

    def test_exact_fit(self, rng):
        factors = rng.standard_normal((7, 2))
        coeff = np.array([0.5, 2.5])
        panel = pc.ObservedPanel((factors @ coeff)[None, :], np.ones((1, 7)))
        b = pc.estimate_loadings(panel, factors)
        np.testing.assert_allclose(b[0], coeff, atol=1e-10)

    def test_singular_design(self):
        values = np.array([[1.0, 0.0], [1.0, 1.0]])
        mask = np.array([[1.0, 0.0], [1.0, 1.0]])
        panel = pc.ObservedPanel(values, mask)
        factors = np.eye(2)
        with pytest.raises(SingularDesign) as exc:
            pc.estimate_loadings(panel, factors)
        assert exc.value.axis == "unit"
        assert exc.value.index == 0


class TestTlsFit:
    def test_exact_recovery_noiseless(self, rng):
        truth, panel = rank_k_panel(rng, 20, 20, 2)
        fit = pc.tls_fit(panel, 2)
        rel = np.linalg.norm(fit.m_hat - truth) / np.linalg.norm(truth)
        assert rel <= 1e-6

    def test_zero_panel_returns_zero_fit(self):
        panel = pc.ObservedPanel(np.zeros((5, 6)), np.ones((5, 6)))
        fit = pc.tls_fit(panel, 2)
        np.testing.assert_array_equal(fit.m_hat, np.zeros((5, 6)))

    def test_m_hat_is_product(self, rng):
        truth, panel = rank_k_panel(rng, 15, 12, 2, noise_sd=0.3, p=0.8)
        fit = pc.tls_fit(panel, 2)
        np.testing.assert_array_equal(fit.m_hat, fit.loadings @ fit.factors.T)

    def test_idempotent_on_exact_factor_data(self, rng):
        truth, panel = rank_k_panel(rng, 25, 18, 3)
        fit = pc.tls_fit(panel, 3)
        np.testing.assert_allclose(fit.m_hat, panel.values, atol=1e-6)


class TestRefitInvariances:
    def test_rotation_invariance(self, rng):
        truth, panel = rank_k_panel(rng, 12, 10, 2, noise_sd=0.2, p=0.9)
        beta = rng.standard_normal((12, 2))
        # a random orthogonal rotation of the loadings
        q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        m1 = _compose(panel, beta)
        m2 = _compose(panel, beta @ q)
        np.testing.assert_allclose(m1, m2, atol=1e-9)

    def test_scale_invariance(self, rng):
        truth, panel = rank_k_panel(rng, 12, 10, 2, noise_sd=0.2, p=0.9)
        beta = rng.standard_normal((12, 2))
        m1 = _compose(panel, beta)
        m2 = _compose(panel, 7.5 * beta)
        np.testing.assert_allclose(m1, m2, atol=1e-9)


def _compose(panel, beta):
    factors = pc.estimate_factors(panel, beta)
    loadings = pc.estimate_loadings(panel, factors)
    return loadings @ factors.T


class TestSampleSplit:
    def test_exact_recovery_noiseless(self, rng):
        truth, panel = rank_k_panel(rng, 20, 16, 2)
        fit = pc.tls_fit_sample_split(panel, 2)
        rel = np.linalg.norm(fit.m_hat - truth) / np.linalg.norm(truth)
        assert rel <= 1e-6

    def test_exact_recovery_rank_one(self, rng):
        truth, panel = rank_k_panel(rng, 10, 8, 1)
        fit = pc.tls_fit_sample_split(panel, 1)
        rel = np.linalg.norm(fit.m_hat - truth) / np.linalg.norm(truth)
        assert rel <= 1e-6

    def test_too_few_periods(self, rng):
        truth, panel = rank_k_panel(rng, 6, 3, 1)
        with pytest.raises(TooFewPeriods):
            pc.tls_fit_sample_split(panel, 1)

    def test_survives_within_half_deficient_designs(self, rng):
        # sparse small-T panel: some units have < k observations per half
        truth, panel = rank_k_panel(rng, 40, 8, 2, noise_sd=0.5, p=0.5)
        fit = pc.tls_fit_sample_split(panel, 2)
        assert np.isfinite(fit.m_hat).all()
