"""Blip estimation per failure cause and construction of treatment rules.

A fitted RegimeSet carries one blip coefficient vector per cause plus the
cause-probability model; the rule families (oracle, weighted, greedy,
uniform, cause-specific, composite, treatment-dependent) are all thin
functions of those pieces. Decisions are always strict: treat only when the
benefit exceeds the cost threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import Dataset, build_design
from .gee import fit_weighted_gee
from .glm import fit_cause_model, fit_logistic, predict_prob
from .weights import ipw_weights, overlap_weights


@dataclass
class NuisanceModels:
    """Fitted treatment, censoring, and cause models for one dataset."""

    treatment_prob: np.ndarray  # P(A=1 | x)
    event_prob: np.ndarray      # P(Delta=1 | a, x)
    cause_model: object
    treatment_fit: object = None
    censoring_fit: object = None

    def observed_delta_prob(self, delta):
        """Probability of each subject's observed censoring status."""
        return np.where(delta == 1, self.event_prob, 1.0 - self.event_prob)


def fit_nuisance(dataset, spec):
    """Fit the three nuisance models declared by a ModelSpec."""
    x_treat = build_design(dataset, spec.treatment_cols)
    treat_fit = fit_logistic(x_treat, dataset.treatment)

    x_cens = build_design(dataset, spec.censoring_cols)
    cens_fit = fit_logistic(x_cens, dataset.delta)

    event = dataset.delta == 1
    x_cause = build_design(dataset, spec.cause_cols)
    cause_model = fit_cause_model(x_cause[event], dataset.cause[event], kappa=dataset.kappa)

    return NuisanceModels(
        treatment_prob=predict_prob(treat_fit, x_treat),
        event_prob=predict_prob(cens_fit, x_cens),
        cause_model=cause_model,
        treatment_fit=treat_fit,
        censoring_fit=cens_fit,
    )


@dataclass
class RegimeSet:
    """Per-cause blips plus the cause model; everything a rule needs.

    blips maps cause k to (blip column names, psi vector with leading
    intercept coefficient). cost is the treatment threshold: a constant or
    the name of a dataset column.
    """

    blips: dict
    cause_model: object
    cause_cols: list
    cost: float | str = 0.0
    kind: str = "per-cause"
    fits: dict = field(default_factory=dict)
    nuisance: NuisanceModels | None = None

    @property
    def causes(self):
        return sorted(self.blips)

    def psi(self, k):
        return self.blips[k][1]

    def blip_design(self, dataset, k):
        return build_design(dataset, self.blips[k][0])

    def benefit_matrix(self, dataset):
        """Oracle benefit under each cause, shape (n, kappa)."""
        return np.column_stack(
            [self.blip_design(dataset, k) @ self.blips[k][1] for k in self.causes]
        )

    def cause_probs(self, dataset):
        x = build_design(dataset, self.cause_cols)
        return self.cause_model.probabilities(x)

    def threshold(self, dataset):
        if isinstance(self.cost, str):
            return dataset.column(self.cost)
        return np.full(dataset.n, float(self.cost))


def estimate_blips(
    dataset,
    spec,
    nuisance=None,
    weight_kind="overlap",
    corr_kind="exchangeable",
    one_step=False,
    max_alternations=25,
    tol=1e-6,
):
    """Run the full doubly-robust pipeline and return the fitted RegimeSet.

    Per cause k, a weighted GEE is fit to log observed time on uncensored
    cause-k rows: the balancing-times-censoring weights are zeroed wherever
    delta = 0 or the cause differs from k.

    Parameters
    ----------
    dataset : Dataset
    spec : ModelSpec
    nuisance : NuisanceModels, optional
        Supply pre-fit (or true) nuisance models to skip refitting.
    weight_kind : {"overlap", "ipw"}
    corr_kind : {"exchangeable", "independence"}
    one_step : bool
        Single moment update plus one GLS pass instead of full alternation.
    """
    nuis = nuisance if nuisance is not None else fit_nuisance(dataset, spec)
    p_obs = nuis.observed_delta_prob(dataset.delta)
    weight_fn = overlap_weights if weight_kind == "overlap" else ipw_weights
    base_w = weight_fn(dataset.treatment, nuis.treatment_prob, p_obs).values

    log_t = np.zeros(dataset.n)
    event = dataset.delta == 1
    np.log(dataset.time, out=log_t, where=event)

    blips, fits = {}, {}
    for k in spec.causes:
        tf_cols, blip_cols = spec.for_cause(k)
        w_k = base_w * (event & (dataset.cause == k))
        fit = fit_weighted_gee(
            build_design(dataset, tf_cols),
            build_design(dataset, blip_cols),
            dataset.treatment,
            log_t,
            w_k,
            dataset.cluster,
            corr_kind=corr_kind,
            max_alternations=max_alternations,
            tol=tol,
            one_step=one_step,
        )
        blips[k] = (list(blip_cols), fit.psi)
        fits[k] = fit

    return RegimeSet(
        blips=blips,
        cause_model=nuis.cause_model,
        cause_cols=list(spec.cause_cols),
        cost=spec.cost_threshold,
        kind=f"weighted-gee[{weight_kind},{corr_kind}]",
        fits=fits,
        nuisance=nuis,
    )


def benefit_oracle(dataset, k, rs):
    """Blip value at a known cause: k may be a single label or a per-subject
    vector. Entries with unknown cause (coded 0) fall back to the first
    cause; callers are expected to mask them out."""
    if np.isscalar(k):
        return rs.blip_design(dataset, k) @ rs.psi(k)
    mat = rs.benefit_matrix(dataset)
    idx = np.clip(np.asarray(k, dtype=int) - 1, 0, mat.shape[1] - 1)
    return np.take_along_axis(mat, idx[:, None], axis=1).ravel()


def benefit_weighted(dataset, rs):
    """Cause-probability-weighted mean of the per-cause blips."""
    return (rs.cause_probs(dataset) * rs.benefit_matrix(dataset)).sum(axis=1)


def benefit_greedy(dataset, rs):
    """Blip at the most probable cause; probability ties go to the smallest
    cause label."""
    probs = rs.cause_probs(dataset)
    mat = rs.benefit_matrix(dataset)
    modal = probs.argmax(axis=1)
    return np.take_along_axis(mat, modal[:, None], axis=1).ravel()


def decide(benefit, zeta1):
    """Treat exactly when benefit strictly exceeds the threshold."""
    return (np.asarray(benefit, dtype=float) > zeta1).astype(int)


@dataclass
class SimpleRule:
    """A decision rule: benefit function plus threshold."""

    benefit: object
    threshold: float | object = 0.0
    name: str = "rule"

    def __call__(self, dataset):
        thr = self.threshold(dataset) if callable(self.threshold) else self.threshold
        return decide(self.benefit(dataset), thr)


def weighted_rule(rs):
    return SimpleRule(lambda d: benefit_weighted(d, rs), rs.threshold, "weighted")


def greedy_rule(rs):
    return SimpleRule(lambda d: benefit_greedy(d, rs), rs.threshold, "greedy")


def oracle_rule(rs):
    """Rule using each subject's recorded cause; meaningful only where the
    cause is observed."""
    return SimpleRule(lambda d: benefit_oracle(d, d.cause, rs), rs.threshold, "oracle")


def uniform_regime(seed):
    """Coin-flip decision sampler; same seed and input give the same draws."""

    def sample(target):
        n = target if isinstance(target, (int, np.integer)) else target.n
        return np.random.default_rng(seed).integers(0, 2, size=int(n))

    return sample


def _replace(dataset, treatment=None, delta=None, cause=None):
    return Dataset(
        covariates=dataset.covariates,
        treatment=dataset.treatment if treatment is None else treatment,
        delta=dataset.delta if delta is None else delta,
        time=dataset.time,
        cause=dataset.cause if cause is None else cause,
        cluster=dataset.cluster,
    )


def _single_cause_spec(spec, source_k):
    from .data import ModelSpec

    tf, blip = spec.for_cause(source_k)
    return ModelSpec(
        treatment_cols=list(spec.treatment_cols),
        censoring_cols=list(spec.censoring_cols),
        cause_cols=list(spec.cause_cols),
        treatment_free_cols={1: tf},
        blip_cols={1: blip},
        cost_threshold=spec.cost_threshold,
        columns=dict(spec.columns),
    )


def cause_specific_regime(dataset, target_k, spec, **options):
    """Treat competing causes as censoring and fit a single-cause rule.

    Failures from causes other than target_k are recoded to delta = 0 and
    the censoring model is refit on the recoded indicator, so the pipeline
    sees them as censored observations.
    """
    recoded_delta = dataset.delta * (dataset.cause == target_k)
    recoded = _replace(
        dataset,
        delta=recoded_delta,
        cause=recoded_delta,  # single cause labeled 1 where still an event
    )
    rs = estimate_blips(recoded, _single_cause_spec(spec, target_k), **options)
    rs.kind = f"cause-specific[{target_k}]"
    return rs


def composite_regime(dataset, spec, **options):
    """Pool all failure types into one endpoint and fit a single blip.

    Column lists are taken from the smallest declared cause."""
    pooled_cause = (dataset.delta == 1).astype(int)
    pooled = _replace(dataset, cause=pooled_cause)
    rs = estimate_blips(pooled, _single_cause_spec(spec, min(spec.causes)), **options)
    rs.kind = "composite"
    return rs


def treatment_dependent_weighted_rule(dataset, spec):
    """Weighted rule allowing the cause distribution to depend on treatment.

    The cause model is refit with the treatment as a covariate; expected
    log times Q_k(x, a) come from plain unweighted per-cause regressions.
    The returned function compares the cause-probability-weighted objective
    at a = 1 versus a = 0 and treats only on strict improvement.
    """
    event = dataset.delta == 1
    cause_cols = list(spec.cause_cols) + ["treatment"]
    x_cause = build_design(dataset, cause_cols)
    cause_model = fit_cause_model(x_cause[event], dataset.cause[event], kappa=dataset.kappa)

    log_t = np.zeros(dataset.n)
    np.log(dataset.time, out=log_t, where=event)

    coefs = {}
    for k in spec.causes:
        tf_cols, blip_cols = spec.for_cause(k)
        rows = event & (dataset.cause == k)
        xb = build_design(dataset, tf_cols)
        xp = build_design(dataset, blip_cols)
        design = np.hstack([xb, dataset.treatment[:, None] * xp])[rows]
        theta = np.linalg.lstsq(design, log_t[rows], rcond=None)[0]
        coefs[k] = (theta[: xb.shape[1]], theta[xb.shape[1] :])

    causes = sorted(spec.causes)

    def rule(d):
        objective = {}
        for a_val in (0, 1):
            forced = _replace(d, treatment=np.full(d.n, a_val, dtype=int))
            probs = cause_model.probabilities(build_design(forced, cause_cols))
            total = np.zeros(d.n)
            for col, k in enumerate(causes):
                tf_cols, blip_cols = spec.for_cause(k)
                beta, psi = coefs[k]
                q = build_design(d, tf_cols) @ beta + a_val * (build_design(d, blip_cols) @ psi)
                total += probs[:, col] * q
            objective[a_val] = total
        return (objective[1] > objective[0]).astype(int)

    return rule


@dataclass
class BenefitCurve:
    """Per-subject benefits sorted ascending, ready for CSV export."""

    table: pd.DataFrame

    def to_csv(self, path):
        self.table.to_csv(path, index=False)


def benefit_curve(dataset, rs, kind="weighted", uncensored_only=True, lo=None, hi=None):
    """Tabulate one regime's benefit per subject.

    Parameters
    ----------
    dataset : Dataset
    rs : RegimeSet
    kind : {"weighted", "greedy", "oracle"}
        Oracle uses each subject's recorded cause and therefore requires
        uncensored rows.
    uncensored_only : bool
        Keep only rows with an observed event (the usual real-data mode).
    lo, hi : ndarray, optional
        Full-length CI bound vectors aligned with the dataset rows.
    """
    if kind == "weighted":
        benefit = benefit_weighted(dataset, rs)
    elif kind == "greedy":
        benefit = benefit_greedy(dataset, rs)
    elif kind == "oracle":
        benefit = benefit_oracle(dataset, dataset.cause, rs)
    else:
        raise ValueError(f"unknown benefit kind {kind!r}")

    decision = decide(benefit, rs.threshold(dataset))
    cause = np.where(dataset.delta == 1, dataset.cause.astype(float), np.nan)
    table = pd.DataFrame(
        {
            "subject_id": np.arange(dataset.n),
            "cause": cause,
            "benefit": benefit,
            "decision": decision,
        }
    )
    if lo is not None and hi is not None:
        table["lo95"] = np.asarray(lo, dtype=float)
        table["hi95"] = np.asarray(hi, dtype=float)
    if uncensored_only:
        table = table[dataset.delta == 1]
    table = table.sort_values("benefit", kind="mergesort").reset_index(drop=True)
    return BenefitCurve(table=table)
