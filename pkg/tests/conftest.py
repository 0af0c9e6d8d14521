"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the package's linear-algebra shortcuts:
scalar loops for sums, plain subgradient descent for the penalized
objective. They exist to cross-check the fast implementations and must stay
independent of them.
"""

import numpy as np
import pytest

import panelcomplete as pc


def loop_weighted_residual_norm(values, mask, p_hat, A):
    total = 0.0
    n, t = values.shape
    for i in range(n):
        for s in range(t):
            if mask[i, s] == 1:
                total += (A[i, s] - values[i, s]) ** 2 / p_hat[i]
    return 0.5 * total


def loop_group_variance(mask, loadings, factors, sigma2, units, periods):
    """Index-by-index transcription of the two-term variance display."""
    k = loadings.shape[1]
    n, t_len = mask.shape
    beta_bar = np.zeros(k)
    for a in units:
        beta_bar += loadings[a]
    beta_bar /= len(units)
    f_bar = np.zeros(k)
    for a in periods:
        f_bar += factors[a]
    f_bar /= len(periods)
    term1 = 0.0
    for t in periods:
        gram = np.zeros((k, k))
        middle = np.zeros((k, k))
        for j in range(n):
            if mask[j, t] == 1:
                gram += np.outer(loadings[j], loadings[j])
                middle += sigma2[j] * np.outer(loadings[j], loadings[j])
        inv = np.linalg.inv(gram)
        term1 += beta_bar @ inv @ middle @ inv @ beta_bar
    term1 /= len(periods) ** 2
    term2 = 0.0
    for i in units:
        gram = np.zeros((k, k))
        for s in range(t_len):
            if mask[i, s] == 1:
                gram += np.outer(factors[s], factors[s])
        term2 += sigma2[i] * (f_bar @ np.linalg.inv(gram) @ f_bar)
    term2 /= len(units) ** 2
    return term1 + term2


def penalized_objective(X, values, mask, p_hat, lam):
    quad = 0.0
    n, t = values.shape
    for i in range(n):
        for s in range(t):
            if mask[i, s] == 1:
                quad += (X[i, s] - values[i, s]) ** 2 / p_hat[i]
    return 0.5 * quad + lam * np.linalg.svd(X, compute_uv=False).sum()


def subgradient_descent_nuclear(
    values, mask, p_hat, lam, iters=60000, step0=0.5, decay=0.9998
):
    """Plain subgradient descent on the penalized objective.

    Uses U V' from the thin SVD as the nuclear-norm subgradient and a
    geometrically decaying step, tracking the best iterate. Slow but has no
    machinery in common with the proximal solver.
    """
    w = mask / p_hat[:, None]
    X = np.zeros_like(values)
    best_f = np.inf
    best_X = X.copy()
    step = step0
    for _ in range(iters):
        f = 0.5 * np.sum(w * (X - values) ** 2) + lam * np.linalg.svd(
            X, compute_uv=False
        ).sum()
        if f < best_f:
            best_f = f
            best_X = X.copy()
        U, _, Vt = np.linalg.svd(X, full_matrices=False)
        g = w * (X - values) + lam * (U @ Vt)
        X = X - step * g
        step *= decay
    return best_X, best_f


def random_panel(rng, n, t, p=0.7):
    """A valid random panel: redraws the mask until rows/columns are covered."""
    values = rng.standard_normal((n, t))
    while True:
        mask = (rng.random((n, t)) < p).astype(float)
        if mask.sum(axis=1).min() > 0 and mask.sum(axis=0).min() > 0:
            return pc.ObservedPanel(values, mask)


def rank_k_panel(rng, n, t, k, noise_sd=0.0, p=1.0):
    beta = rng.normal(1 / np.sqrt(2), 1.0, (n, k))
    factors = rng.normal(1 / np.sqrt(2), 1.0, (t, k))
    truth = beta @ factors.T
    values = truth + noise_sd * rng.standard_normal((n, t))
    if p >= 1.0:
        mask = np.ones((n, t))
    else:
        while True:
            mask = (rng.random((n, t)) < p).astype(float)
            if mask.sum(axis=1).min() > 0 and mask.sum(axis=0).min() > 0:
                break
    return truth, pc.ObservedPanel(values, mask)


@pytest.fixture
def rng():
    return np.random.default_rng(20240809)
