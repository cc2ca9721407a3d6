"""Command-line front end: simulate datasets, run replication studies, fit
regimes on CSV data, evaluate rules, and bootstrap confidence intervals.

Every command requires an explicit --seed and writes CSV files only, so
identical invocations reproduce outputs byte for byte.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .bootstrap import cluster_bootstrap
from .data import load_dataset, load_model_spec, save_dataset
from .metrics import regime_metrics
from .regimes import (
    benefit_greedy,
    benefit_weighted,
    benefit_curve,
    cause_specific_regime,
    composite_regime,
    estimate_blips,
    greedy_rule,
    oracle_rule,
    treatment_dependent_weighted_rule,
    uniform_regime,
    weighted_rule,
)
from .sim import SETTINGS, StudyConfig, run_replication_study, simulate_dataset


@dataclass
class RunConfig:
    subcommand: str
    seed: int
    out: str
    data: str | None = None
    config: str | None = None
    setting: str | None = None
    scenario: str = "iv"
    kind: str = "train"
    reps: int = 1000
    threads: int = 1
    weights: str = "overlap"
    corr: str | None = None
    one_step: bool = False
    regimes: tuple = ("weighted", "greedy")
    bootstrap: int = 0
    cause_specific_target: int = 1


def _fit_kwargs(cfg):
    return dict(
        weight_kind=cfg.weights,
        corr_kind=cfg.corr or "exchangeable",
        one_step=cfg.one_step,
    )


def _param_names(spec):
    names = []
    for k in spec.causes:
        _, blip_cols = spec.for_cause(k)
        names.extend([f"psi{k}_{nm}" for nm in ["const"] + list(blip_cols)])
    return names


def _psi_vector(rs):
    return np.concatenate([rs.psi(k) for k in rs.causes])


def cmd_simulate(cfg):
    """Write one generated dataset plus its ground truth."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sd = simulate_dataset(SETTINGS[cfg.setting], cfg.kind, cfg.seed)
    save_dataset(sd.data, out / "dataset.csv")
    truth = pd.DataFrame(
        {
            "subject_id": np.arange(sd.data.n),
            "cluster": sd.data.cluster,
            "true_cause": sd.true_cause,
            "p_cause1": sd.cause_probs[:, 0],
            "p_cause2": sd.cause_probs[:, 1],
            "log_t0": sd.log_t0,
            "log_t1": sd.log_t1,
            "oracle_decision": sd.oracle_decision,
        }
    )
    truth.to_csv(out / "truth.csv", index=False)
    print(f"wrote {out / 'dataset.csv'} and {out / 'truth.csv'}")
    return 0


def cmd_study(cfg):
    """Run a replication study and write its summary tables."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    study = StudyConfig(
        setting=cfg.setting,
        scenario=cfg.scenario,
        reps=cfg.reps,
        seed=cfg.seed,
        regimes=tuple(cfg.regimes),
        weight_kind=cfg.weights,
        corr_kind=cfg.corr,
        one_step=cfg.one_step,
        threads=cfg.threads,
        cause_specific_target=cfg.cause_specific_target,
    )
    result = run_replication_study(study)
    result.params.to_csv(out / "params_summary.csv", index=False)
    result.regimes.to_csv(out / "regimes_summary.csv", index=False)
    result.replicates.to_csv(out / "replicates.csv", index=False)
    print(result.params.to_string(index=False))
    print(result.regimes.to_string(index=False))
    print(f"failures: {result.failures}/{cfg.reps}")
    if result.failures > 0.05 * cfg.reps:
        print("replicate failure cap (5%) exceeded", file=sys.stderr)
        return 1
    return 0


def _load_inputs(cfg):
    spec = load_model_spec(cfg.config)
    dataset = load_dataset(cfg.data, spec.columns)
    return dataset, spec


def _decision_makers(cfg, dataset, spec, rs):
    """Decision vectors for every requested regime on the loaded data."""
    rules = {}
    for regime in cfg.regimes:
        if regime == "weighted":
            rules[regime] = weighted_rule(rs)(dataset)
        elif regime == "greedy":
            rules[regime] = greedy_rule(rs)(dataset)
        elif regime == "oracle":
            rules[regime] = oracle_rule(rs)(dataset)
        elif regime == "uniform":
            rules[regime] = uniform_regime(cfg.seed)(dataset)
        elif regime == "cause_specific":
            rs_cs = cause_specific_regime(
                dataset, cfg.cause_specific_target, spec, **_fit_kwargs(cfg)
            )
            rules[regime] = weighted_rule(rs_cs)(dataset)
        elif regime == "composite":
            rs_comp = composite_regime(dataset, spec, **_fit_kwargs(cfg))
            rules[regime] = weighted_rule(rs_comp)(dataset)
        elif regime == "treatment_dependent":
            rules[regime] = treatment_dependent_weighted_rule(dataset, spec)(dataset)
        else:
            raise ValueError(f"unknown regime {regime!r}")
    return rules


def _metrics_frame(cfg, dataset, spec, rs):
    oracle_dec = oracle_rule(rs)(dataset)
    censor = rs.nuisance.event_prob
    rows = []
    for regime, dec in _decision_makers(cfg, dataset, spec, rs).items():
        m = regime_metrics(dataset, dec, oracle_dec, rs, censor)
        rows.append(
            {"regime": regime, "pot": m.pot, "value": m.value, "effective_n": m.effective_n}
        )
    return pd.DataFrame(rows)


def cmd_fit(cfg):
    """Estimate blips, metrics, and benefit curves; optional bootstrap CIs."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, spec = _load_inputs(cfg)
    rs = estimate_blips(dataset, spec, **_fit_kwargs(cfg))
    names = _param_names(spec)
    point = _psi_vector(rs)

    curve_kinds = [r for r in cfg.regimes if r in ("weighted", "greedy")]
    estimates = pd.DataFrame({"parameter": names, "estimate": point})
    bands = {}
    if cfg.bootstrap > 0:
        n = dataset.n

        def pipeline(sample):
            rs_b = estimate_blips(sample, spec, **_fit_kwargs(cfg))
            parts = [_psi_vector(rs_b)]
            for kind in curve_kinds:
                fn = benefit_weighted if kind == "weighted" else benefit_greedy
                parts.append(fn(dataset, rs_b))
            return np.concatenate(parts)

        result = cluster_bootstrap(dataset, pipeline, cfg.bootstrap, cfg.seed)
        lo, hi = result.ci()
        p = len(names)
        estimates["lo"] = lo[:p]
        estimates["hi"] = hi[:p]
        for j, kind in enumerate(curve_kinds):
            sl = slice(p + j * n, p + (j + 1) * n)
            bands[kind] = (lo[sl], hi[sl])

    estimates.to_csv(out / "estimates.csv", index=False)
    _metrics_frame(cfg, dataset, spec, rs).to_csv(out / "metrics.csv", index=False)
    for kind in curve_kinds:
        lo, hi = bands.get(kind, (None, None))
        curve = benefit_curve(dataset, rs, kind=kind, uncensored_only=True, lo=lo, hi=hi)
        curve.to_csv(out / f"benefit_{kind}.csv")
    print(f"wrote estimates, metrics, and {len(curve_kinds)} benefit curves to {out}")
    return 0


def cmd_evaluate(cfg):
    """Fit the pipeline and write regime metrics only."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, spec = _load_inputs(cfg)
    rs = estimate_blips(dataset, spec, **_fit_kwargs(cfg))
    frame = _metrics_frame(cfg, dataset, spec, rs)
    frame.to_csv(out / "metrics.csv", index=False)
    print(frame.to_string(index=False))
    return 0


def cmd_bootstrap(cfg):
    """Write the bootstrap CI table for blip parameters and regime metrics."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, spec = _load_inputs(cfg)
    rs = estimate_blips(dataset, spec, **_fit_kwargs(cfg))
    names = list(_param_names(spec))
    point = list(_psi_vector(rs))
    metric_frame = _metrics_frame(cfg, dataset, spec, rs)
    for _, row in metric_frame.iterrows():
        names.extend([f"{row['regime']}_pot", f"{row['regime']}_value"])
        point.extend([row["pot"], row["value"]])

    def pipeline(sample):
        rs_b = estimate_blips(sample, spec, **_fit_kwargs(cfg))
        values = list(_psi_vector(rs_b))
        frame = _metrics_frame(cfg, sample, spec, rs_b)
        for _, row in frame.iterrows():
            values.extend([row["pot"], row["value"]])
        return np.asarray(values)

    result = cluster_bootstrap(
        dataset, pipeline, cfg.bootstrap, cfg.seed, names=names
    )
    table = result.ci_table(np.asarray(point))
    table.to_csv(out / "ci_table.csv", index=False)
    print(table.to_string(index=False))
    return 0


def _add_common(p, *, setting=False, data=False, reps=False):
    p.add_argument("--seed", type=int, required=True, help="RNG seed (required)")
    p.add_argument("--out", type=str, required=True, help="output directory")
    if setting:
        p.add_argument("--setting", type=str, required=True, choices=sorted(SETTINGS))
    if data:
        p.add_argument("--data", type=str, required=True, help="input dataset CSV")
        p.add_argument("--config", type=str, required=True, help="model spec JSON")
    if reps:
        p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--weights", choices=("overlap", "ipw"), default="overlap")
    p.add_argument("--corr", choices=("exchangeable", "independence"), default=None)
    p.add_argument("--one-step", action="store_true", dest="one_step")
    p.add_argument("--regimes", type=str, default=None, help="comma-separated regime list")
    p.add_argument("--bootstrap", type=int, default=0, metavar="B")
    p.add_argument("--cause-specific-target", type=int, default=1, dest="cause_specific_target")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="critr",
        description="Individualized treatment regimes for clustered survival data "
        "with competing risks.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="generate a dataset and its truth")
    _add_common(p, setting=True)
    p.add_argument("--kind", choices=("train", "test"), default="train")

    p = sub.add_parser("study", help="replication study with summary tables")
    _add_common(p, setting=True, reps=True)
    p.add_argument("--scenario", choices=("i", "ii", "iii", "iv"), default="iv")

    p = sub.add_parser("fit", help="estimate blips, metrics, and benefit curves")
    _add_common(p, data=True)

    p = sub.add_parser("evaluate", help="regime metrics on a dataset")
    _add_common(p, data=True)

    p = sub.add_parser("bootstrap", help="cluster-bootstrap CI table")
    _add_common(p, data=True)

    return parser


def config_from_args(args):
    cfg = RunConfig(
        subcommand=args.subcommand,
        seed=args.seed,
        out=args.out,
        data=getattr(args, "data", None),
        config=getattr(args, "config", None),
        setting=getattr(args, "setting", None),
        scenario=getattr(args, "scenario", "iv"),
        kind=getattr(args, "kind", "train"),
        reps=getattr(args, "reps", 1000),
        threads=args.threads,
        weights=args.weights,
        corr=args.corr,
        one_step=args.one_step,
        bootstrap=args.bootstrap,
        cause_specific_target=args.cause_specific_target,
    )
    if args.regimes:
        cfg.regimes = tuple(r.strip() for r in args.regimes.split(",") if r.strip())
    elif args.subcommand == "study":
        cfg.regimes = ("weighted", "greedy", "oracle", "uniform")
    return cfg


COMMANDS = {
    "simulate": cmd_simulate,
    "study": cmd_study,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "bootstrap": cmd_bootstrap,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    if cfg.subcommand == "bootstrap" and cfg.bootstrap <= 0:
        print("bootstrap subcommand needs --bootstrap B > 0", file=sys.stderr)
        return 2
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except (ValueError, RuntimeError, np.linalg.LinAlgError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
