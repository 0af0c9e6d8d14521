"""Residual variances, group-average variance, and normal-theory intervals.

The group-average variance is a two-term sum: a per-period sandwich in the
refit loadings (averaged over the group's periods) plus a per-unit quadratic
form in the refit factors (averaged over the group's units). Both use
per-unit residual variances estimated from observed cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import OutOfRange, ShapeMismatch, SingularDesign
from .panel import GroupSpec, ObservedPanel
from .twostep import COND_LIMIT, FactorFit

ALTERNATIVES = ("two-sided", "greater", "less")


@dataclass(frozen=True)
class ResidualModel:
    """Per-unit residual variances and the residual matrix (zero off-mask).

    A unit observed exactly once gets its variance from that single squared
    residual; with no replication there is nothing better to report.
    """

    sigma2_hat: np.ndarray
    residuals: np.ndarray


@dataclass(frozen=True)
class InferenceResult:
    estimate: float
    variance: float
    std_error: float
    t_stat: float
    ci_lower: float
    ci_upper: float
    p_value: float
    level: float
    alternative: str = "two-sided"


def compute_residuals(panel: ObservedPanel, fit: FactorFit) -> ResidualModel:
    """Observed-cell residuals y - m_hat and their per-unit mean squares."""
    if fit.m_hat.shape != panel.values.shape:
        raise ShapeMismatch(panel.values.shape, fit.m_hat.shape, "m_hat")
    resid = np.where(panel.mask == 1.0, panel.values - fit.m_hat, 0.0)
    counts = panel.mask.sum(axis=1)
    sigma2 = (resid * resid).sum(axis=1) / counts
    return ResidualModel(sigma2_hat=sigma2, residuals=resid)


def group_variance(
    panel: ObservedPanel,
    fit: FactorFit,
    resid: ResidualModel,
    group: GroupSpec,
) -> float:
    """Plug-in variance of the group average of the completed matrix.

    First term: over the group's periods t, the sandwich
    beta_bar' G_t^{-1} (sum_j w_jt s2_j b_j b_j') G_t^{-1} beta_bar with
    G_t = sum_j w_jt b_j b_j', normalized by |periods|^2. Second term: over
    the group's units i, s2_i * f_bar' (sum_s w_is f_s f_s')^{-1} f_bar,
    normalized by |units|^2.
    """
    group.validate(panel.n_units, panel.n_periods)
    beta = fit.loadings
    factors = fit.factors
    sigma2 = resid.sigma2_hat
    units = np.asarray(group.units)
    periods = np.asarray(group.periods)
    beta_bar = beta[units].mean(axis=0)
    f_bar = factors[periods].mean(axis=0)

    term1 = 0.0
    for t in periods:
        obs = panel.mask[:, t] == 1.0
        b = beta[obs]
        gram = b.T @ b
        cond = np.inf if b.shape[0] == 0 else float(np.linalg.cond(gram))
        if not cond < COND_LIMIT:
            raise SingularDesign("period", int(t), cond=cond)
        middle = (b * sigma2[obs][:, None]).T @ b
        solved = np.linalg.solve(gram, beta_bar)
        term1 += float(solved @ middle @ solved)
    term1 /= len(periods) ** 2

    term2 = 0.0
    for i in units:
        obs = panel.mask[i] == 1.0
        f = factors[obs]
        gram = f.T @ f
        cond = np.inf if f.shape[0] == 0 else float(np.linalg.cond(gram))
        if not cond < COND_LIMIT:
            raise SingularDesign("unit", int(i), cond=cond)
        term2 += float(sigma2[i] * (f_bar @ np.linalg.solve(gram, f_bar)))
    term2 /= len(units) ** 2

    return term1 + term2


def normal_interval(
    estimate: float,
    variance: float,
    level: float,
    alternative: str = "two-sided",
) -> InferenceResult:
    """Wrap a point estimate and variance into a normal-reference result.

    The interval is always the symmetric two-sided one at ``level``; the
    p-value tests H0: average = 0 against the chosen alternative.
    """
    if not 0.0 < level < 1.0:
        raise OutOfRange("confidence level must lie in (0, 1)")
    if alternative not in ALTERNATIVES:
        raise OutOfRange(f"alternative must be one of {ALTERNATIVES}")
    if variance < 0:
        raise OutOfRange("variance must be nonnegative")
    se = float(np.sqrt(variance))
    if se > 0:
        t = estimate / se
    elif estimate == 0:
        t = 0.0
    else:
        t = float(np.sign(estimate)) * np.inf
    z = float(norm.ppf(0.5 + level / 2.0))
    if alternative == "two-sided":
        p = 2.0 * float(norm.sf(abs(t)))
    elif alternative == "greater":
        p = float(norm.sf(t))
    else:
        p = float(norm.cdf(t))
    return InferenceResult(
        estimate=float(estimate),
        variance=float(variance),
        std_error=se,
        t_stat=float(t),
        ci_lower=float(estimate - z * se),
        ci_upper=float(estimate + z * se),
        p_value=min(max(p, 0.0), 1.0),
        level=level,
        alternative=alternative,
    )


def group_average_ci(
    panel: ObservedPanel,
    fit: FactorFit,
    group: GroupSpec,
    level: float = 0.95,
    alternative: str = "two-sided",
) -> InferenceResult:
    """Point estimate, CI, and p-value for the group average of m_hat."""
    group.validate(panel.n_units, panel.n_periods)
    units = np.asarray(group.units)
    periods = np.asarray(group.periods)
    estimate = float(fit.m_hat[np.ix_(units, periods)].mean())
    resid = compute_residuals(panel, fit)
    variance = group_variance(panel, fit, resid, group)
    return normal_interval(estimate, variance, level, alternative)
