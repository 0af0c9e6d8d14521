"""Potential-outcome completion: per-arm fits, ATE inference, and FDR control.

A treatment panel is two complementary completion problems: the treated-arm
panel observes outcomes where the treatment indicator is 1, the control arm
where it is 0. Each arm is completed independently and the group-average
effect inherits a summed variance from the two fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyColumn,
    EmptyRow,
    OutOfRange,
    PanelCompleteError,
    ShapeMismatch,
)
from .inference import compute_residuals, group_variance, normal_interval
from .panel import GroupSpec, ObservedPanel
from .solver import SolverOptions
from .twostep import tls_fit


@dataclass(frozen=True)
class TreatmentPanel:
    """Realized outcomes with a binary treatment indicator.

    Every unit must be treated in at least one period and untreated in at
    least one, else the corresponding arm has an empty row.
    """

    outcomes: np.ndarray
    treat: np.ndarray
    unit_ids: tuple | None = None
    time_ids: tuple | None = None

    def __post_init__(self):
        outcomes = np.asarray(self.outcomes, dtype=float)
        treat = np.asarray(self.treat, dtype=float)
        if outcomes.ndim != 2:
            raise ShapeMismatch("(N, T)", outcomes.shape, "outcomes")
        if treat.shape != outcomes.shape:
            raise ShapeMismatch(outcomes.shape, treat.shape, "treat")
        if not np.isin(treat, (0.0, 1.0)).all():
            raise OutOfRange("treatment indicator entries must be exactly 0 or 1")
        if not np.isfinite(outcomes).all():
            raise OutOfRange("outcomes must be finite")
        row_treated = treat.sum(axis=1)
        if row_treated.min() == 0:
            exc = EmptyRow(int(np.argmin(row_treated)))
            exc.args = (f"arm 1: {exc.args[0]}",)
            raise exc
        row_control = (1.0 - treat).sum(axis=1)
        if row_control.min() == 0:
            exc = EmptyRow(int(np.argmin(row_control)))
            exc.args = (f"arm 0: {exc.args[0]}",)
            raise exc
        outcomes.flags.writeable = False
        treat.flags.writeable = False
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "treat", treat)

    @property
    def n_units(self) -> int:
        return self.outcomes.shape[0]

    @property
    def n_periods(self) -> int:
        return self.outcomes.shape[1]


@dataclass(frozen=True)
class AteResult:
    estimate: float
    variance: float
    std_error: float
    t_stat: float
    ci_lower: float
    ci_upper: float
    p_value: float
    level: float
    alternative: str
    variance_by_arm: tuple


def split_arms(tp: TreatmentPanel) -> tuple[ObservedPanel, ObservedPanel]:
    """Control and treated panels whose masks partition every cell.

    Returns (arm 0, arm 1): arm 1 observes outcomes where treated, arm 0
    where untreated. Degenerate arms surface as EmptyRow/EmptyColumn tagged
    with the arm.
    """
    panels = []
    for arm, mask in ((0, 1.0 - tp.treat), (1, tp.treat)):
        try:
            panels.append(
                ObservedPanel(
                    tp.outcomes,
                    mask,
                    unit_ids=tp.unit_ids,
                    time_ids=tp.time_ids,
                )
            )
        except (EmptyRow, EmptyColumn) as exc:
            exc.args = (f"arm {arm}: {exc.args[0]}",)
            raise
    return panels[0], panels[1]


def ate_inference(
    tp: TreatmentPanel,
    group: GroupSpec,
    k: int,
    opts: SolverOptions = SolverOptions(),
    level: float = 0.95,
    alternative: str = "two-sided",
    k0: int | None = None,
    k1: int | None = None,
    opts0: SolverOptions | None = None,
    opts1: SolverOptions | None = None,
) -> AteResult:
    """Group-average treatment effect with a summed two-arm variance.

    The per-cell effect is the difference of the two completed matrices;
    its group-average variance is exactly the sum of the arms'
    group-average variances. ``k0``/``k1`` and ``opts0``/``opts1`` override
    the shared ``k``/``opts`` per arm.
    """
    group.validate(tp.n_units, tp.n_periods)
    panel0, panel1 = split_arms(tp)
    fits = []
    variances = []
    for arm, panel, k_arm, o_arm in (
        (0, panel0, k0 or k, opts0 or opts),
        (1, panel1, k1 or k, opts1 or opts),
    ):
        try:
            fit = tls_fit(panel, k_arm, o_arm)
            resid = compute_residuals(panel, fit)
            variances.append(group_variance(panel, fit, resid, group))
            fits.append(fit)
        except PanelCompleteError as exc:
            exc.args = (f"arm {arm}: {exc.args[0]}",) + exc.args[1:]
            raise
    units = np.asarray(group.units)
    periods = np.asarray(group.periods)
    gamma = fits[1].m_hat - fits[0].m_hat
    estimate = float(gamma[np.ix_(units, periods)].mean())
    base = normal_interval(estimate, variances[0] + variances[1], level, alternative)
    return AteResult(
        estimate=base.estimate,
        variance=base.variance,
        std_error=base.std_error,
        t_stat=base.t_stat,
        ci_lower=base.ci_lower,
        ci_upper=base.ci_upper,
        p_value=base.p_value,
        level=base.level,
        alternative=base.alternative,
        variance_by_arm=(variances[0], variances[1]),
    )


def bh_fdr(p_values, q: float) -> set:
    """Benjamini-Hochberg step-up rule at level q.

    Sort the m p-values ascending, find the largest k with p_(k) <= k*q/m,
    and reject every hypothesis with a p-value at or below p_(k); ties at
    the threshold are all rejected. Returns the set of rejected indices
    into the input sequence (empty when no k qualifies).
    """
    p = np.asarray(list(p_values), dtype=float)
    if p.size == 0:
        return set()
    if (p < 0).any() or (p > 1).any():
        raise OutOfRange("p-values must lie in [0, 1]")
    if not 0.0 < q < 1.0:
        raise OutOfRange("q must lie in (0, 1)")
    m = p.size
    order = np.sort(p)
    thresholds = q * np.arange(1, m + 1) / m
    passing = np.flatnonzero(order <= thresholds)
    if passing.size == 0:
        return set()
    cutoff = order[passing[-1]]
    return set(np.flatnonzero(p <= cutoff).tolist())
