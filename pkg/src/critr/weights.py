"""Balancing weights for doubly-robust blip estimation, plus a numerical
verifier for the four-cell balancing identity the weights must satisfy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class WeightVector:
    """Per-subject nonnegative weights with a tag for how they were built."""

    values: np.ndarray
    kind: str


def _check_probs(name, p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError(f"{name} must lie strictly inside (0, 1)")
    return p


def overlap_weights(a, pA, pDelta):
    """Overlap-style balancing weights.

    Parameters
    ----------
    a : ndarray (n,)
        Binary treatment.
    pA : ndarray (n,)
        Fitted P(A=1 | x).
    pDelta : ndarray (n,)
        Fitted probability of the subject's observed censoring status,
        P(Delta = delta_i | a_i, x_i).

    Returns
    -------
    WeightVector
        w_i = |a_i - pA_i| / pDelta_i.
    """
    a = np.asarray(a, dtype=float)
    pA = _check_probs("pA", pA)
    pDelta = _check_probs("pDelta", pDelta)
    if not (a.shape == pA.shape == pDelta.shape):
        raise ValueError("a, pA, pDelta must have matching lengths")
    return WeightVector(values=np.abs(a - pA) / pDelta, kind="overlap")


def ipw_weights(a, pA, pDelta):
    """Inverse-probability weights: w_i = 1 / (P(A=a_i|x_i) * pDelta_i)."""
    a = np.asarray(a, dtype=float)
    pA = _check_probs("pA", pA)
    pDelta = _check_probs("pDelta", pDelta)
    if not (a.shape == pA.shape == pDelta.shape):
        raise ValueError("a, pA, pDelta must have matching lengths")
    p_obs_a = np.where(a == 1, pA, 1.0 - pA)
    return WeightVector(values=1.0 / (p_obs_a * pDelta), kind="ipw")


def overlap_weight_function(b, c):
    """Overlap weight as a function of (delta, a, x) given b(x)=P(A=1|x)
    and c(a, x)=P(Delta=1|a,x)."""

    def w(delta, a, x):
        p_delta = c(a, x) if delta == 1 else 1.0 - c(a, x)
        return np.abs(a - b(x)) / p_delta

    return w


def ipw_weight_function(b, c):
    """IPW weight as a function of (delta, a, x)."""

    def w(delta, a, x):
        p_a = b(x) if a == 1 else 1.0 - b(x)
        p_delta = c(a, x) if delta == 1 else 1.0 - c(a, x)
        return 1.0 / (p_a * p_delta)

    return w


def check_balancing(w, b, c, xs):
    """Numerically verify the balancing identity of a weight function.

    The four products of cell probability times weight, over the cells
    (delta, a) in {0,1} x {0,1}, must agree for every covariate value:

        [1-c(0,x)][1-b(x)] w(0,0,x) = c(0,x)[1-b(x)] w(1,0,x)
      = [1-c(1,x)] b(x)    w(0,1,x) = c(1,x) b(x)    w(1,1,x)

    Parameters
    ----------
    w : callable (delta, a, x) -> weight
    b : callable x -> P(A=1|x), values in (0,1)
    c : callable (a, x) -> P(Delta=1|a,x), values in (0,1)
    xs : ndarray
        Sample of covariate points at which to evaluate the identity.

    Returns
    -------
    float
        Max over xs of the spread among the four products; 0 (to numerical
        precision) when the weights balance.
    """
    xs = np.asarray(xs, dtype=float)
    bx = np.asarray(b(xs), dtype=float)
    c0 = np.asarray(c(0, xs), dtype=float)
    c1 = np.asarray(c(1, xs), dtype=float)
    products = np.stack(
        [
            (1.0 - c0) * (1.0 - bx) * w(0, 0, xs),
            c0 * (1.0 - bx) * w(1, 0, xs),
            (1.0 - c1) * bx * w(0, 1, xs),
            c1 * bx * w(1, 1, xs),
        ]
    )
    return float(np.max(products.max(axis=0) - products.min(axis=0)))
