import numpy as np
import pytest

import panelcomplete as pc
from panelcomplete.errors import OutOfRange, SingularDesign
from panelcomplete.inference import normal_interval

from conftest import loop_group_variance, random_panel


def manual_fit(beta_init, factors, loadings):
    return pc.FactorFit(
        k=beta_init.shape[1],
        beta_init=beta_init,
        factors=factors,
        loadings=loadings,
        m_hat=loadings @ factors.T,
    )


def ones_fit(n, t):
    # K=1, all loadings and factors equal to one; beta_init is sqrt(N)-orthonormal
    return manual_fit(np.ones((n, 1)), np.ones((t, 1)), np.ones((n, 1)))


def fitted_panel(rng, n, t, k, noise_sd=0.4, p=0.75):
    beta = rng.normal(1 / np.sqrt(2), 1.0, (n, k))
    factors = rng.normal(1 / np.sqrt(2), 1.0, (t, k))
    values = beta @ factors.T + noise_sd * rng.standard_normal((n, t))
    while True:
        mask = (rng.random((n, t)) < p).astype(float)
        if mask.sum(axis=1).min() >= k and mask.sum(axis=0).min() >= k:
            break
    panel = pc.ObservedPanel(values, mask)
    # small panels: keep the penalty light so the estimate retains rank k
    return panel, pc.tls_fit(panel, k, pc.SolverOptions(lam=0.2))


class TestComputeResiduals:
    def test_perfect_fit_gives_zero_variance(self, rng):
        panel = random_panel(rng, 5, 6)
        fit = manual_fit(
            np.sqrt(5) * np.linalg.qr(rng.standard_normal((5, 2)))[0],
            rng.standard_normal((6, 2)),
            rng.standard_normal((5, 2)),
        )
        fit = pc.FactorFit(
            k=2,
            beta_init=fit.beta_init,
            factors=fit.factors,
            loadings=fit.loadings,
            m_hat=panel.values.copy(),
        )
        resid = pc.compute_residuals(panel, fit)
        np.testing.assert_array_equal(resid.sigma2_hat, np.zeros(5))

    def test_plus_minus_one(self):
        values = np.array([[1.0, -1.0], [0.0, 0.0]])
        panel = pc.ObservedPanel(values, np.ones((2, 2)))
        fit = manual_fit(
            np.sqrt(2) * np.eye(2, 1), np.zeros((2, 1)), np.zeros((2, 1))
        )
        resid = pc.compute_residuals(panel, fit)
        assert resid.sigma2_hat[0] == pytest.approx(1.0, abs=1e-15)
        assert resid.sigma2_hat[1] == 0.0

    def test_matches_scalar_loop(self, rng):
        panel, fit = fitted_panel(rng, 8, 7, 2)
        resid = pc.compute_residuals(panel, fit)
        for i in range(8):
            acc = []
            for t in range(7):
                if panel.mask[i, t] == 1:
                    acc.append((panel.values[i, t] - fit.m_hat[i, t]) ** 2)
            assert resid.sigma2_hat[i] == pytest.approx(np.mean(acc), rel=1e-12)

    def test_residuals_zero_off_mask(self, rng):
        panel, fit = fitted_panel(rng, 6, 6, 1)
        resid = pc.compute_residuals(panel, fit)
        assert (resid.residuals[panel.mask == 0] == 0).all()


class TestGroupVariance:
    def test_homogeneous_singleton(self):
        n, t = 10, 8
        sigma2 = 0.49
        panel = pc.ObservedPanel(np.ones((n, t)), np.ones((n, t)))
        fit = ones_fit(n, t)
        resid = pc.ResidualModel(
            sigma2_hat=np.full(n, sigma2), residuals=np.zeros((n, t))
        )
        v = pc.group_variance(panel, fit, resid, pc.GroupSpec.cell(3, 4))
        assert v == pytest.approx(sigma2 / n + sigma2 / t, rel=1e-12)

    def test_linear_in_sigma2(self, rng):
        panel, fit = fitted_panel(rng, 9, 8, 2)
        resid = pc.compute_residuals(panel, fit)
        group = pc.GroupSpec((1, 4), (2, 5))
        v1 = pc.group_variance(panel, fit, resid, group)
        doubled = pc.ResidualModel(
            sigma2_hat=2.0 * resid.sigma2_hat, residuals=resid.residuals
        )
        v2 = pc.group_variance(panel, fit, doubled, group)
        assert v2 == pytest.approx(2.0 * v1, rel=1e-12)

    def test_matches_index_loop_oracle(self, rng):
        panel, fit = fitted_panel(rng, 6, 5, 2)
        resid = pc.compute_residuals(panel, fit)
        group = pc.GroupSpec((0, 3), (1, 4))
        expected = loop_group_variance(
            panel.mask, fit.loadings, fit.factors, resid.sigma2_hat,
            group.units, group.periods,
        )
        got = pc.group_variance(panel, fit, resid, group)
        assert got == pytest.approx(expected, abs=1e-12, rel=1e-10)

    def test_singleton_consistency_against_oracle(self, rng):
        panel, fit = fitted_panel(rng, 7, 6, 2)
        resid = pc.compute_residuals(panel, fit)
        group = pc.GroupSpec.cell(2, 3)
        expected = loop_group_variance(
            panel.mask, fit.loadings, fit.factors, resid.sigma2_hat, (2,), (3,)
        )
        got = pc.group_variance(panel, fit, resid, group)
        assert got == pytest.approx(expected, rel=1e-10)

    def test_nonnegative_and_positive_with_noise(self, rng):
        for _ in range(5):
            panel, fit = fitted_panel(rng, 8, 8, 2)
            resid = pc.compute_residuals(panel, fit)
            v = pc.group_variance(panel, fit, resid, pc.GroupSpec.cell(0, 0))
            assert v > 0

    def test_first_term_shrinks_with_period_growth(self):
        # homogeneous design: widening the period set cannot increase the
        # per-period sandwich average
        n, t = 12, 10
        panel = pc.ObservedPanel(np.ones((n, t)), np.ones((n, t)))
        fit = ones_fit(n, t)
        resid = pc.ResidualModel(np.full(n, 1.0), np.zeros((n, t)))
        v_small = pc.group_variance(panel, fit, resid, pc.GroupSpec((0,), (0,)))
        v_big = pc.group_variance(panel, fit, resid, pc.GroupSpec((0,), tuple(range(t))))
        # second (unit) term is identical; the first must not grow
        assert v_big <= v_small + 1e-12

    def test_singular_design_reported(self):
        values = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        mask = np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 1.0]])
        panel = pc.ObservedPanel(values, mask)
        fit = manual_fit(
            np.sqrt(3) * np.eye(3, 2),
            np.ones((2, 2)),
            np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]),
        )
        resid = pc.ResidualModel(np.ones(3), np.zeros((3, 2)))
        with pytest.raises(SingularDesign):
            pc.group_variance(panel, fit, resid, pc.GroupSpec.cell(0, 0))


class TestNormalInterval:
    def test_quantile_example(self):
        res = normal_interval(2.0, 1.0, 0.95)
        assert res.ci_lower == pytest.approx(2.0 - 1.959964, abs=1e-6)
        assert res.ci_upper == pytest.approx(2.0 + 1.959964, abs=1e-6)
        assert res.t_stat == pytest.approx(2.0)
        assert res.std_error == 1.0

    def test_zero_variance_zero_width(self):
        res = normal_interval(1.5, 0.0, 0.95)
        assert res.ci_lower == res.ci_upper == 1.5
        assert res.p_value == 0.0

    def test_alternatives(self):
        two = normal_interval(1.0, 1.0, 0.9, "two-sided")
        greater = normal_interval(1.0, 1.0, 0.9, "greater")
        less = normal_interval(1.0, 1.0, 0.9, "less")
        assert two.p_value == pytest.approx(2 * greater.p_value, rel=1e-12)
        assert greater.p_value + less.p_value == pytest.approx(1.0, rel=1e-12)

    def test_validation(self):
        with pytest.raises(OutOfRange):
            normal_interval(0.0, 1.0, 1.5)
        with pytest.raises(OutOfRange):
            normal_interval(0.0, -1.0, 0.9)
        with pytest.raises(OutOfRange):
            normal_interval(0.0, 1.0, 0.9, "sideways")


class TestGroupAverageCi:
    def test_noiseless_zero_width(self, rng):
        beta = rng.normal(1 / np.sqrt(2), 1.0, (15, 2))
        factors = rng.normal(1 / np.sqrt(2), 1.0, (12, 2))
        panel = pc.ObservedPanel(beta @ factors.T, np.ones((15, 12)))
        fit = pc.tls_fit(panel, 2)
        res = pc.group_average_ci(panel, fit, pc.GroupSpec.cell(4, 5))
        assert res.ci_upper - res.ci_lower <= 1e-8
        assert res.estimate == pytest.approx(panel.values[4, 5], abs=1e-6)

    def test_estimate_is_group_mean(self, rng):
        panel, fit = fitted_panel(rng, 10, 9, 2)
        group = pc.GroupSpec((0, 1, 2), (3, 4))
        res = pc.group_average_ci(panel, fit, group)
        expected = fit.m_hat[np.ix_([0, 1, 2], [3, 4])].mean()
        assert res.estimate == pytest.approx(expected, rel=1e-12)
        assert res.ci_lower <= res.estimate <= res.ci_upper
        assert res.std_error == pytest.approx(np.sqrt(res.variance), rel=1e-12)
