"""Logistic regression by IRLS, plus the failure-cause classifier built on it."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

PROB_FLOOR = 1e-6
SCORE_TOL = 1e-8
COEF_TOL = 1e-10
SEPARATION_BOUND = 30.0


@dataclass
class LogisticFit:
    coef: np.ndarray
    n_iter: int
    converged: bool


def fit_logistic(design, response, weights=None, max_iter=100):
    """Fit a binary logistic regression by iteratively reweighted least squares.

    Parameters
    ----------
    design : ndarray (n, p)
        Design matrix including any intercept column.
    response : ndarray (n,)
        Binary outcomes coded 0/1.
    weights : ndarray (n,), optional
        Prior case weights.
    max_iter : int
        Cap on IRLS iterations.

    Returns
    -------
    LogisticFit
        Stops when the max absolute score falls below 1e-8 or the relative
        coefficient change falls below 1e-10. Warns on suspected separation
        (fitted linear predictor beyond +-30).
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    base = np.ones(y.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    beta = np.zeros(X.shape[1])
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        prob = expit(X @ beta)
        score = X.T @ (base * (y - prob))
        if np.max(np.abs(score)) < SCORE_TOL:
            converged = True
            break
        irls_w = base * prob * (1.0 - prob)
        hess = (X * irls_w[:, None]).T @ X
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, score, rcond=None)[0]
        new = beta + step
        rel = np.max(np.abs(new - beta)) / max(np.max(np.abs(beta)), 1e-12)
        beta = new
        if rel < COEF_TOL:
            converged = True
            break
    if np.max(np.abs(X @ beta)) > SEPARATION_BOUND:
        warnings.warn(
            "logistic fit looks separated: |linear predictor| exceeds "
            f"{SEPARATION_BOUND:g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return LogisticFit(coef=beta, n_iter=n_iter, converged=converged)


def predict_prob(fit, design):
    """Fitted probabilities, clamped to [1e-6, 1 - 1e-6]."""
    prob = expit(np.asarray(design, dtype=float) @ fit.coef)
    return np.clip(prob, PROB_FLOOR, 1.0 - PROB_FLOOR)


@dataclass
class CauseModel:
    """Multinomial failure-cause model.

    With two causes this is a single logistic fit for P(cause = 2); with
    more it is one-vs-rest logistic fits renormalized to sum to one.
    """

    kappa: int
    fits: list

    def probabilities(self, design):
        """Per-cause probability matrix of shape (n, kappa)."""
        design = np.asarray(design, dtype=float)
        n = design.shape[0]
        if self.kappa == 1:
            return np.ones((n, 1))
        if self.kappa == 2:
            p2 = predict_prob(self.fits[0], design)
            return np.column_stack([1.0 - p2, p2])
        raw = np.column_stack([predict_prob(f, design) for f in self.fits])
        return raw / raw.sum(axis=1, keepdims=True)


def fit_cause_model(design, cause, kappa=None, max_iter=100):
    """Fit the cause classifier on uncensored rows.

    Parameters
    ----------
    design : ndarray (n, p)
    cause : ndarray (n,)
        Integer cause labels 1..kappa.
    kappa : int, optional
        Number of causes; inferred from the labels when omitted.
    """
    cause = np.asarray(cause, dtype=int)
    if kappa is None:
        kappa = int(cause.max()) if cause.size else 1
    if kappa == 1:
        return CauseModel(kappa=1, fits=[])
    if kappa == 2:
        fit = fit_logistic(design, (cause == 2).astype(float), max_iter=max_iter)
        return CauseModel(kappa=2, fits=[fit])
    fits = [
        fit_logistic(design, (cause == k).astype(float), max_iter=max_iter)
        for k in range(1, kappa + 1)
    ]
    return CauseModel(kappa=kappa, fits=fits)
