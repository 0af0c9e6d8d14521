"""Observed-panel data model, observation masks, and row propensities.

The mask is the single source of truth for which cells exist: values at
unobserved cells are zeroed on construction and never consulted again, so
callers may pass any sentinel (including NaN) in those positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyColumn, EmptyRow, OutOfRange, ShapeMismatch


def _as_matrix(x, name):
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise ShapeMismatch("(N, T)", a.shape, name)
    return a


def _validate_mask(mask):
    if not np.isin(mask, (0.0, 1.0)).all():
        raise OutOfRange("mask entries must be exactly 0 or 1")


@dataclass(frozen=True)
class ObservedPanel:
    """An N x T outcome matrix together with its binary observation mask.

    Every row and every column must contain at least one observed entry;
    degenerate panels are rejected at construction so that row propensities
    are positive and per-period regressions are definable.

    Attributes
    ----------
    values : (N, T) ndarray
        Outcomes; meaningful only where ``mask == 1``.
    mask : (N, T) ndarray
        1 where the outcome is observed, 0 otherwise.
    unit_ids, time_ids : tuple of str, optional
        Labels carried through from file ingestion; purely cosmetic.
    """

    values: np.ndarray
    mask: np.ndarray
    unit_ids: tuple | None = field(default=None, compare=False)
    time_ids: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        values = _as_matrix(self.values, "values")
        mask = _as_matrix(self.mask, "mask")
        if values.shape != mask.shape:
            raise ShapeMismatch(values.shape, mask.shape, "mask")
        _validate_mask(mask)
        row_counts = mask.sum(axis=1)
        if row_counts.min() == 0:
            raise EmptyRow(int(np.argmin(row_counts)))
        col_counts = mask.sum(axis=0)
        if col_counts.min() == 0:
            raise EmptyColumn(int(np.argmin(col_counts)))
        values = np.where(mask == 1.0, values, 0.0)
        if not np.isfinite(values).all():
            raise OutOfRange("observed values must be finite")
        values.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def n_units(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class PropensityEstimate:
    """Row-wise observation propensities p_hat, each clipped to [1/T, 1]."""

    p_hat: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_hat, dtype=float)
        if p.ndim != 1:
            raise ShapeMismatch("(N,)", p.shape, "p_hat")
        if (p <= 0).any() or (p > 1).any():
            raise OutOfRange("propensities must lie in (0, 1]")
        p.flags.writeable = False
        object.__setattr__(self, "p_hat", p)

    @property
    def diag(self) -> np.ndarray:
        """The diagonal weighting matrix diag(p_hat)."""
        return np.diag(self.p_hat)


@dataclass(frozen=True)
class GroupSpec:
    """A rectangle of unit indices x period indices to average over.

    Indices are 0-based. Validation against the panel dimensions happens in
    :meth:`validate`, so a GroupSpec can be built before data is loaded.
    """

    units: tuple
    periods: tuple

    def __post_init__(self):
        units = tuple(int(i) for i in self.units)
        periods = tuple(int(t) for t in self.periods)
        for name, idx in (("units", units), ("periods", periods)):
            if len(idx) == 0:
                raise OutOfRange(f"group {name} must be nonempty")
            if len(set(idx)) != len(idx):
                raise OutOfRange(f"group {name} contains duplicates")
            if min(idx) < 0:
                raise OutOfRange(f"group {name} contains negative indices")
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "periods", periods)

    @classmethod
    def cell(cls, i: int, t: int) -> "GroupSpec":
        return cls((i,), (t,))

    @classmethod
    def row(cls, i: int, n_periods: int) -> "GroupSpec":
        return cls((i,), tuple(range(n_periods)))

    @classmethod
    def column(cls, t: int, n_units: int) -> "GroupSpec":
        return cls(tuple(range(n_units)), (t,))

    @classmethod
    def all(cls, n_units: int, n_periods: int) -> "GroupSpec":
        return cls(tuple(range(n_units)), tuple(range(n_periods)))

    @property
    def size(self) -> int:
        return len(self.units) * len(self.periods)

    def validate(self, n_units: int, n_periods: int) -> None:
        if max(self.units) >= n_units:
            raise OutOfRange(
                f"group unit index {max(self.units)} out of range for N={n_units}"
            )
        if max(self.periods) >= n_periods:
            raise OutOfRange(
                f"group period index {max(self.periods)} out of range for T={n_periods}"
            )


def estimate_propensity(panel: ObservedPanel) -> PropensityEstimate:
    """Observed fraction of each row, floored at 1/T.

    The floor never binds on a valid panel (every row has an observation)
    but keeps the inverse weights bounded if a caller bypasses validation.
    """
    counts = panel.mask.sum(axis=1)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyRow(int(empty[0]))
    p = np.maximum(counts / panel.n_periods, 1.0 / panel.n_periods)
    return PropensityEstimate(p)


def weighted_residual_norm(
    panel: ObservedPanel, prop: PropensityEstimate, A: np.ndarray
) -> float:
    """Half the inverse-propensity-weighted squared error of A on observed cells.

    Returns (1/2) * sum over observed (i,t) of (A_it - y_it)^2 / p_hat_i.
    Unobserved cells contribute nothing regardless of their content.
    """
    A = _as_matrix(A, "A")
    if A.shape != panel.values.shape:
        raise ShapeMismatch(panel.values.shape, A.shape, "A")
    if prop.p_hat.shape[0] != panel.n_units:
        raise ShapeMismatch((panel.n_units,), prop.p_hat.shape, "p_hat")
    diff = np.where(panel.mask == 1.0, A - panel.values, 0.0)
    return 0.5 * float(np.sum(diff * diff / prop.p_hat[:, None]))
