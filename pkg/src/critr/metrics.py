"""Inverse-probability-of-censoring weighted regime metrics: proportion of
optimal treatment and value (mean log survival under the rule)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .regimes import benefit_oracle


@dataclass
class RegimeMetrics:
    pot: float
    value: float
    effective_n: float


def _decisions(dataset, rule):
    dec = rule(dataset) if callable(rule) else rule
    return np.asarray(dec, dtype=int)


def ipc_weights(dataset, censor_model):
    """delta_i / P(Delta=1 | a_i, x_i); censor_model is a per-subject
    probability vector or a callable of the dataset."""
    prob = censor_model(dataset) if callable(censor_model) else censor_model
    prob = np.asarray(prob, dtype=float)
    w = np.where(dataset.delta == 1, 1.0 / prob, 0.0)
    if w.sum() <= 0:
        raise ValueError("metric undefined: all IPC weights are zero")
    return w


def estimate_pot(dataset, rule, oracle_rule, censor_model):
    """IPC-weighted proportion of subjects the rule treats like the oracle.

    Censored rows get zero weight, so the oracle rule only needs valid
    causes where delta = 1. On fully uncensored data this is the plain
    sample proportion.
    """
    w = ipc_weights(dataset, censor_model)
    agree = _decisions(dataset, rule) == _decisions(dataset, oracle_rule)
    return float((w * agree).sum() / w.sum())


def estimate_value(dataset, rule, rs, censor_model):
    """IPC-weighted mean of log T_i + (d_i - a_i) * blip at the observed
    cause: the augmentation moves each observed log time to its
    counterfactual under the rule."""
    w = ipc_weights(dataset, censor_model)
    dec = _decisions(dataset, rule)
    event = dataset.delta == 1
    log_t = np.zeros(dataset.n)
    np.log(dataset.time, out=log_t, where=event)
    shift = (dec - dataset.treatment) * benefit_oracle(dataset, dataset.cause, rs)
    return float((w * (log_t + shift)).sum() / w.sum())


def regime_metrics(dataset, rule, oracle_rule, rs, censor_model):
    """POT, value, and effective weighted sample size in one pass."""
    w = ipc_weights(dataset, censor_model)
    effective_n = float(w.sum() ** 2 / (w * w).sum())
    return RegimeMetrics(
        pot=estimate_pot(dataset, rule, oracle_rule, censor_model),
        value=estimate_value(dataset, rule, rs, censor_model),
        effective_n=effective_n,
    )
