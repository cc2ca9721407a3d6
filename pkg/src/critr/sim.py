"""Simulation harness: clustered competing-risks AFT generator, the named
study settings, misspecification scenarios, and the replication driver that
produces bias/SE and POT/value summary tables.

Subjects fall in one of r clusters drawn uniformly. Covariates, treatment,
censoring status, and cause follow logistic/Gaussian mechanisms; log
survival follows a cause-specific linear model with a shared cluster random
intercept. Test-set generation forces every subject to be uncensored and
records counterfactual log times under both treatments.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy.special import expit

from .data import Dataset, ModelSpec
from .glm import CauseModel, LogisticFit
from .metrics import estimate_pot, estimate_value
from .regimes import (
    RegimeSet,
    benefit_greedy,
    benefit_weighted,
    cause_specific_regime,
    composite_regime,
    decide,
    estimate_blips,
    treatment_dependent_weighted_rule,
    weighted_rule,
)

# reserved sub-stream for the shared test set ("test" in ASCII)
TEST_STREAM = 0x74657374


@dataclass(frozen=True)
class SimSetting:
    """One named data-generating configuration."""

    name: str
    psi1: tuple
    psi2: tuple
    n_train: int = 1000
    n_test: int = 10000
    r: int = 50
    delta0: float = 1.73
    tau2: float = 0.25
    sigma2: float = 0.25
    re_dist: str = "normal"
    treatment_re_var: float = 0.0
    cause_intercept: float = 0.5
    working_corr_override: str | None = None

    @property
    def icc(self):
        return self.tau2 / (self.tau2 + self.sigma2)


def _setting(name, psi1, psi2, **kw):
    return SimSetting(name=name, psi1=tuple(psi1), psi2=tuple(psi2), **kw)


SETTINGS = {
    "1a": _setting("1a", (0.2, -0.2), (0.2, 0.2)),
    "1b": _setting("1b", (0.2, -0.2), (0.2, 0.2), n_train=5000, r=250),
    "2": _setting("2", (3.0, -0.5), (-1.0, 0.2)),
    "3": _setting("3", (-0.5, -0.7), (0.1, 0.08)),
    "4": _setting("4", (0.6, -0.6), (-0.6, -0.6), tau2=0.5, sigma2=0.5),
    "5.1": _setting("5.1", (0.6, -0.6), (-0.6, -0.6), tau2=0.9, sigma2=0.1),
    "5.2": _setting("5.2", (0.6, -0.6), (-0.6, -0.6), tau2=0.1, sigma2=0.9),
    "6": _setting("6", (0.6, -0.6), (-0.6, -0.6), tau2=0.5, sigma2=0.5, re_dist="gamma"),
    "7": _setting("7", (0.6, -0.6), (-0.6, -0.6), tau2=0.5, sigma2=0.5, delta0=0.0),
    "8": _setting(
        "8", (0.6, -0.6), (-0.6, -0.6), tau2=0.5, sigma2=0.5, working_corr_override="independence"
    ),
    "9.1": _setting("9.1", (0.6, -0.6), (-0.6, -0.6), tau2=0.5, sigma2=0.5, treatment_re_var=0.01),
    "9.2": _setting("9.2", (0.6, -0.6), (-0.6, -0.6), tau2=0.5, sigma2=0.5, treatment_re_var=0.25),
    "9.3": _setting("9.3", (0.6, -0.6), (-0.6, -0.6), tau2=0.5, sigma2=0.5, treatment_re_var=1.0),
    "10": _setting("10", (1.0, -0.5), (-3.0, 0.2), cause_intercept=2.5),
}


@dataclass
class SimDataset:
    """Generated data plus the ground truth the generator knows."""

    data: Dataset
    setting: SimSetting
    true_cause: np.ndarray
    cause_probs: np.ndarray      # true P(K = k | x), (n, 2)
    log_t0: np.ndarray           # counterfactual log time, untreated
    log_t1: np.ndarray           # counterfactual log time, treated
    oracle_decision: np.ndarray  # 1 iff the realized cause's blip > 0


def simulate_dataset(setting, kind, seed):
    """Generate one training or test sample.

    Parameters
    ----------
    setting : SimSetting
    kind : {"train", "test"}
        Test samples are forced uncensored and use n_test rows.
    seed : int, SeedSequence, or Generator
        Test kind skips the censoring draw, so train and test streams with
        the same seed are not aligned draw-for-draw.
    """
    rng = np.random.default_rng(seed)
    n = setting.n_test if kind == "test" else setting.n_train

    cluster = rng.integers(1, setting.r + 1, size=n)
    x1 = rng.standard_normal(n)
    x2 = 2.0 * rng.standard_normal(n)

    a_lin = 0.5 + x1 + x2
    if setting.treatment_re_var > 0:
        effects = rng.normal(0.0, np.sqrt(setting.treatment_re_var), size=setting.r)
        a_lin = a_lin + effects[cluster - 1]
    a = rng.binomial(1, expit(a_lin))

    if kind == "test":
        delta = np.ones(n, dtype=int)
    else:
        delta = rng.binomial(1, expit(setting.delta0 - x1 - 0.3 * x2))

    p_cause2 = expit(setting.cause_intercept + x1)
    cause = 1 + rng.binomial(1, p_cause2)

    if setting.re_dist == "gamma":
        u_cluster = rng.gamma(shape=setting.tau2, scale=1.0, size=setting.r) - setting.tau2
    else:
        u_cluster = rng.normal(0.0, np.sqrt(setting.tau2), size=setting.r)
    u = u_cluster[cluster - 1]
    eps1 = rng.normal(0.0, np.sqrt(setting.sigma2), size=n)
    eps2 = rng.normal(0.0, np.sqrt(setting.sigma2), size=n)

    mean1 = 1.0 + 0.5 * x1 - 0.3 * x2
    mean2 = 2.0 - 0.1 * x1 + 0.2 * x2
    blip1 = setting.psi1[0] + setting.psi1[1] * x1
    blip2 = setting.psi2[0] + setting.psi2[1] * x1

    first = cause == 1
    log_t0 = np.where(first, mean1 + eps1, mean2 + eps2) + u
    blip = np.where(first, blip1, blip2)
    log_t1 = log_t0 + blip
    observed = np.where(a == 1, log_t1, log_t0)

    data = Dataset(
        covariates={"x1": x1, "x2": x2},
        treatment=a,
        delta=delta,
        time=np.exp(observed),
        cause=cause,
        cluster=cluster,
    )
    return SimDataset(
        data=data,
        setting=setting,
        true_cause=cause,
        cause_probs=np.column_stack([1.0 - p_cause2, p_cause2]),
        log_t0=log_t0,
        log_t1=log_t1,
        oracle_decision=(blip > 0).astype(int),
    )


def true_regime_set(setting):
    """RegimeSet holding the generating blips and the exact cause model."""
    cause_fit = LogisticFit(
        coef=np.array([setting.cause_intercept, 1.0]), n_iter=0, converged=True
    )
    return RegimeSet(
        blips={1: (["x1"], np.asarray(setting.psi1, dtype=float)),
               2: (["x1"], np.asarray(setting.psi2, dtype=float))},
        cause_model=CauseModel(kappa=2, fits=[cause_fit]),
        cause_cols=["x1"],
        cost=0.0,
        kind="truth",
    )


def scenario_spec(scenario):
    """Column lists for the four misspecification scenarios.

    (i) every model drops x2; (ii) only the outcome model includes x2;
    (iii) only the weighting models include x2; (iv) everything includes
    x2. The cause model and the blip always use x1 alone.
    """
    if scenario not in {"i", "ii", "iii", "iv"}:
        raise ValueError(f"unknown scenario {scenario!r}")
    weights_cols = ["x1", "x2"] if scenario in {"iii", "iv"} else ["x1"]
    outcome_cols = ["x1", "x2"] if scenario in {"ii", "iv"} else ["x1"]
    return ModelSpec(
        treatment_cols=list(weights_cols),
        censoring_cols=list(weights_cols),
        cause_cols=["x1"],
        treatment_free_cols={1: list(outcome_cols), 2: list(outcome_cols)},
        blip_cols={1: ["x1"], 2: ["x1"]},
        cost_threshold=0.0,
    )


@dataclass(frozen=True)
class StudyConfig:
    """Everything a replication study depends on; hashable so worker
    processes can cache the derived context."""

    setting: str
    scenario: str = "iv"
    reps: int = 1000
    seed: int = 0
    regimes: tuple = ("weighted", "greedy", "oracle", "uniform")
    weight_kind: str = "overlap"
    corr_kind: str | None = None
    one_step: bool = False
    threads: int = 1
    n_train: int | None = None
    n_test: int | None = None
    cause_specific_target: int = 1


@dataclass
class StudyResult:
    config: StudyConfig
    params: pd.DataFrame      # setting, scenario, param, sqrt_n_bias, sqrt_n_se
    regimes: pd.DataFrame     # setting, scenario, regime, pot, value
    replicates: pd.DataFrame  # per-replicate parameter and metric dump
    failures: int
    param_names: list
    psi_truth: np.ndarray


def resolved_setting(config):
    setting = SETTINGS[config.setting]
    overrides = {}
    if config.n_train is not None:
        overrides["n_train"] = config.n_train
    if config.n_test is not None:
        overrides["n_test"] = config.n_test
    return replace(setting, **overrides) if overrides else setting


def resolved_corr(config, setting):
    if config.corr_kind is not None:
        return config.corr_kind
    if setting.working_corr_override is not None:
        return setting.working_corr_override
    return "exchangeable"


_CONTEXT_CACHE = {}


def _study_context(config):
    """Per-process cache of the fixed study pieces (test set, truth)."""
    ctx = _CONTEXT_CACHE.get(config)
    if ctx is None:
        setting = resolved_setting(config)
        test = simulate_dataset(
            setting, "test", np.random.SeedSequence(entropy=config.seed, spawn_key=(TEST_STREAM,))
        )
        ctx = {
            "setting": setting,
            "spec": scenario_spec(config.scenario),
            "corr": resolved_corr(config, setting),
            "test": test,
            "true_rs": true_regime_set(setting),
            "ones": np.ones(test.data.n),
        }
        _CONTEXT_CACHE[config] = ctx
    return ctx


def _fit_options(config, ctx):
    return dict(weight_kind=config.weight_kind, corr_kind=ctx["corr"], one_step=config.one_step)


KNOWN_REGIMES = (
    "weighted",
    "greedy",
    "oracle",
    "uniform",
    "cause_specific",
    "composite",
    "treatment_dependent",
)


def _run_replicate(config, rep):
    """One training draw, all requested fits, all test-set evaluations.

    Returns (rep, psi vector or None, {regime: (pot, value)})."""
    unknown = [r for r in config.regimes if r not in KNOWN_REGIMES]
    if unknown:
        raise ValueError(f"unknown regimes {unknown}")
    ctx = _study_context(config)
    setting, spec, test = ctx["setting"], ctx["spec"], ctx["test"]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(rep,)))
    train = simulate_dataset(setting, "train", rng)
    options = _fit_options(config, ctx)

    try:
        rs_hat = estimate_blips(train.data, spec, **options)
        psi = np.concatenate([rs_hat.psi(k) for k in rs_hat.causes])
        decisions = {}
        for regime in config.regimes:
            if regime == "weighted":
                decisions[regime] = decide(benefit_weighted(test.data, rs_hat), 0.0)
            elif regime == "greedy":
                decisions[regime] = decide(benefit_greedy(test.data, rs_hat), 0.0)
            elif regime == "oracle":
                decisions[regime] = test.oracle_decision
            elif regime == "uniform":
                decisions[regime] = rng.integers(0, 2, size=test.data.n)
            elif regime == "cause_specific":
                rs_cs = cause_specific_regime(
                    train.data, config.cause_specific_target, spec, **options
                )
                decisions[regime] = weighted_rule(rs_cs)(test.data)
            elif regime == "composite":
                rs_comp = composite_regime(train.data, spec, **options)
                decisions[regime] = weighted_rule(rs_comp)(test.data)
            elif regime == "treatment_dependent":
                rule = treatment_dependent_weighted_rule(train.data, spec)
                decisions[regime] = rule(test.data)
    except (np.linalg.LinAlgError, ValueError):
        return rep, None, None

    metrics = {}
    for regime, dec in decisions.items():
        pot = estimate_pot(test.data, dec, test.oracle_decision, ctx["ones"])
        value = estimate_value(test.data, dec, ctx["true_rs"], ctx["ones"])
        metrics[regime] = (pot, value)
    return rep, psi, metrics


def _param_names(spec):
    names = []
    for k in spec.causes:
        _, blip_cols = spec.for_cause(k)
        names.extend([f"psi{k}_{nm}" for nm in ["const"] + list(blip_cols)])
    return names


def run_replication_study(config):
    """Monte-Carlo replication study against a shared uncensored test set.

    Replicate k draws its training data from sub-stream (seed, k); the test
    set comes from a reserved sub-stream, so it is identical across
    replicate counts and thread counts. POT compares each rule's test-set
    decisions with the generating oracle rule; value is the exact mean
    counterfactual log time implied by the decisions.
    """
    ctx = _study_context(config)
    setting, spec = ctx["setting"], ctx["spec"]
    names = _param_names(spec)
    truth = np.concatenate([setting.psi1, setting.psi2])

    results = []
    if config.threads > 1:
        from concurrent.futures import ProcessPoolExecutor
        from functools import partial

        chunk = max(1, config.reps // (4 * config.threads))
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            results = list(
                pool.map(partial(_run_replicate, config), range(1, config.reps + 1), chunksize=chunk)
            )
    else:
        for rep in range(1, config.reps + 1):
            results.append(_run_replicate(config, rep))

    rows = []
    failures = 0
    for rep, psi, metrics in results:
        if psi is None:
            failures += 1
            continue
        row = {"rep": rep}
        row.update(zip(names, psi))
        for regime, (pot, value) in metrics.items():
            row[f"{regime}_pot"] = pot
            row[f"{regime}_value"] = value
        rows.append(row)
    if not rows:
        raise RuntimeError("every replicate failed")
    replicates = pd.DataFrame(rows)

    sqrt_n = np.sqrt(setting.n_train)
    est = replicates[names].to_numpy()
    params = pd.DataFrame(
        {
            "setting": config.setting,
            "scenario": config.scenario,
            "param": names,
            "sqrt_n_bias": sqrt_n * (est.mean(axis=0) - truth),
            "sqrt_n_se": sqrt_n * est.std(axis=0, ddof=1),
        }
    )
    regime_rows = []
    for regime in config.regimes:
        regime_rows.append(
            {
                "setting": config.setting,
                "scenario": config.scenario,
                "regime": regime,
                "pot": replicates[f"{regime}_pot"].mean(),
                "value": replicates[f"{regime}_value"].mean(),
            }
        )
    return StudyResult(
        config=config,
        params=params,
        regimes=pd.DataFrame(regime_rows),
        replicates=replicates,
        failures=failures,
        param_names=names,
        psi_truth=truth,
    )
