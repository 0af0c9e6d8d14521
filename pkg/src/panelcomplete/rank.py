"""Data-driven choice of the working factor dimension.

Two routes: a singular-value threshold count on the penalized estimate, and
holdout cross-validation that hides a Bernoulli subsample of observed cells,
refits each candidate dimension, and scores squared error on the hidden
cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllCandidatesFailed, PanelCompleteError, ZeroMatrix
from .panel import ObservedPanel
from .solver import LowRankEstimate, SolverOptions
from .twostep import tls_fit

DEFAULT_CANDIDATES = (2, 4, 6, 8, 10)
CV_SPLITS = 5


def cv_splits(panel: ObservedPanel, seed: int | None = None, n_splits: int = CV_SPLITS):
    """The Bernoulli train/holdout mask pairs used by :func:`rank_cv`.

    Each split hides observed cells independently with probability equal to
    the overall observation rate; train and holdout masks are disjoint and
    union to the observed set.
    """
    rng = np.random.default_rng(seed)
    q = panel.mask.sum() / panel.mask.size
    out = []
    for _ in range(n_splits):
        keep = (rng.random(panel.mask.shape) < q).astype(float)
        out.append((panel.mask * keep, panel.mask * (1.0 - keep)))
    return out


@dataclass(frozen=True)
class RankSelection:
    method: str
    chosen_k: int
    diagnostics: dict


def rank_threshold(est: LowRankEstimate, n: int, t: int) -> RankSelection:
    """Count singular values of the penalized estimate above the scaling cut.

    The cut is ((N + T) / 2)^(11/20) * psi_1^(1/4), with psi_1 the largest
    singular value (the operator norm). The count is floored at 1 so the
    result is always a usable dimension; the raw count is reported in the
    diagnostics.
    """
    s = est.singular_values
    if s.size == 0 or s[0] <= 0:
        raise ZeroMatrix("rank threshold undefined for a zero estimate")
    cut = ((n + t) / 2.0) ** 0.55 * s[0] ** 0.25
    raw = int(np.sum(s >= cut))
    return RankSelection(
        method="threshold",
        chosen_k=max(raw, 1),
        diagnostics={
            "singular_values": s.copy(),
            "threshold": float(cut),
            "raw_count": raw,
        },
    )


def rank_cv(
    panel: ObservedPanel,
    candidates=DEFAULT_CANDIDATES,
    opts: SolverOptions = SolverOptions(),
    seed: int | None = None,
) -> RankSelection:
    """Pick the candidate dimension with the best summed holdout error.

    Five independent Bernoulli splits hide observed cells with probability
    equal to the overall observation rate; each candidate is refit on the
    kept cells and scored by mean squared error on the hidden ones. Failed
    fits (or splits that leave a row or column empty) score +inf for that
    cell of the table rather than aborting; ties in the summed score break
    toward the smaller dimension.
    """
    candidates = [int(k) for k in candidates]
    if not candidates:
        raise AllCandidatesFailed(candidates)
    scores = np.full((len(candidates), CV_SPLITS), np.inf)
    usable = np.zeros(CV_SPLITS, dtype=bool)
    for split, (train_mask, test_mask) in enumerate(cv_splits(panel, seed)):
        if test_mask.sum() == 0:
            continue
        try:
            train_panel = ObservedPanel(panel.values, train_mask)
        except PanelCompleteError:
            continue  # split left a row/column empty; skipped for everyone
        usable[split] = True
        test_cells = test_mask == 1.0
        held_out = panel.values[test_cells]
        for ci, k in enumerate(candidates):
            try:
                fit = tls_fit(train_panel, k, opts)
            except PanelCompleteError:
                continue  # this candidate scores +inf on this split
            err = fit.m_hat[test_cells] - held_out
            scores[ci, split] = float(np.mean(err * err))
    if not usable.any():
        raise AllCandidatesFailed(candidates)
    sums = scores[:, usable].sum(axis=1)
    if not np.isfinite(sums).any():
        raise AllCandidatesFailed(candidates)
    best = min(range(len(candidates)), key=lambda ci: (sums[ci], candidates[ci]))
    return RankSelection(
        method="cross_validation",
        chosen_k=candidates[best],
        diagnostics={
            "candidates": list(candidates),
            "scores": scores,
            "score_sums": sums,
            "usable_splits": usable,
        },
    )
