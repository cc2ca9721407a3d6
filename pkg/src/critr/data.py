"""Clustered competing-risks survival data: containers, CSV IO, design matrices."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

DEFAULT_COLUMNS = {
    "treatment": "a",
    "delta": "delta",
    "time": "time",
    "cause": "cause",
    "cluster": "cluster",
}


@dataclass(frozen=True)
class SubjectRecord:
    """One subject's row, materialized on demand from the backing arrays."""

    index: int
    covariates: dict
    treatment: int
    delta: int
    time: float
    cause: int | None
    cluster: int


class Dataset:
    """Array-backed sample of clustered survival data with competing risks.

    Parameters
    ----------
    covariates : dict of str -> array_like
        Baseline covariate columns, each of length n.
    treatment : array_like
        Binary treatment indicator per subject.
    delta : array_like
        Event indicator: 1 observed failure, 0 censored.
    time : array_like
        Observed time (failure or censoring), strictly positive where
        ``delta == 1``.
    cause : array_like
        Failure cause in 1..kappa where ``delta == 1``; entries for
        censored rows are ignored and stored as 0.
    cluster : array_like
        Cluster labels; relabeled internally to consecutive 1..r in sorted
        order of the original labels.
    """

    def __init__(self, covariates, treatment, delta, time, cause, cluster):
        self.covariate_names = list(covariates)
        self.covariates = {
            name: np.asarray(col, dtype=float) for name, col in covariates.items()
        }
        self.treatment = np.asarray(treatment, dtype=int)
        self.delta = np.asarray(delta, dtype=int)
        self.time = np.asarray(time, dtype=float)
        n = self.treatment.shape[0]

        cause = np.asarray(cause)
        if cause.dtype.kind == "f":
            cause = np.where(np.isnan(cause), 0, cause)
        cause = cause.astype(int)
        # cause is meaningful only on uncensored rows
        self.cause = np.where(self.delta == 1, cause, 0)

        labels, codes = np.unique(np.asarray(cluster), return_inverse=True)
        self.cluster = codes.astype(int) + 1
        self.cluster_labels = labels

        self._validate(n)

    def _validate(self, n):
        for name, col in self.covariates.items():
            if col.shape != (n,):
                raise ValueError(f"covariate {name!r} has length {col.shape}, expected {n}")
            if not np.all(np.isfinite(col)):
                raise ValueError(f"covariate {name!r} contains non-finite values")
        for name in ("delta", "time", "cause", "cluster"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"column {name!r} has wrong length")
        if not np.isin(self.treatment, [0, 1]).all():
            raise ValueError("treatment must be coded 0/1")
        if not np.isin(self.delta, [0, 1]).all():
            raise ValueError("delta must be coded 0/1")
        event = self.delta == 1
        if np.any(self.time[event] <= 0):
            raise ValueError("event times must be strictly positive")
        causes = self.cause[event]
        if event.any():
            if causes.min() < 1:
                raise ValueError("cause must be a positive integer on uncensored rows")
            kappa = int(causes.max())
            seen = np.unique(causes)
            if seen.size != kappa:
                missing = sorted(set(range(1, kappa + 1)) - set(seen.tolist()))
                raise ValueError(f"cause labels must cover 1..{kappa}; missing {missing}")

    @property
    def n(self):
        return self.treatment.shape[0]

    @property
    def r(self):
        return int(self.cluster.max()) if self.n else 0

    @property
    def kappa(self):
        event = self.delta == 1
        return int(self.cause[event].max()) if event.any() else 0

    def column(self, name):
        """Resolve a raw column by name: a covariate or the treatment column."""
        if name in self.covariates:
            return self.covariates[name]
        if name == "treatment":
            return self.treatment.astype(float)
        raise KeyError(f"unknown column {name!r}")

    def records(self):
        """Yield SubjectRecord views one row at a time."""
        for i in range(self.n):
            yield SubjectRecord(
                index=i,
                covariates={k: self.covariates[k][i] for k in self.covariate_names},
                treatment=int(self.treatment[i]),
                delta=int(self.delta[i]),
                time=float(self.time[i]),
                cause=int(self.cause[i]) if self.delta[i] == 1 else None,
                cluster=int(self.cluster[i]),
            )

    def take(self, indices, cluster=None):
        """Row subset in the given order; optionally override cluster labels."""
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            covariates={k: v[indices] for k, v in self.covariates.items()},
            treatment=self.treatment[indices],
            delta=self.delta[indices],
            time=self.time[indices],
            cause=self.cause[indices],
            cluster=self.cluster[indices] if cluster is None else cluster,
        )

    def to_frame(self, columns=None):
        """Assemble a DataFrame using the given role -> column-name mapping."""
        names = dict(DEFAULT_COLUMNS)
        names.update(columns or {})
        frame = pd.DataFrame({k: v for k, v in self.covariates.items()})
        frame[names["treatment"]] = self.treatment
        frame[names["delta"]] = self.delta
        frame[names["time"]] = self.time
        cause = self.cause.astype(float)
        cause[self.delta == 0] = np.nan
        frame[names["cause"]] = cause
        frame[names["cluster"]] = self.cluster
        return frame


def load_dataset(path, columns=None):
    """Read a Dataset from CSV.

    Parameters
    ----------
    path : str or Path
        CSV file with one row per subject.
    columns : dict, optional
        Maps the roles ``treatment``, ``delta``, ``time``, ``cause``,
        ``cluster`` to column names; defaults to the names themselves with
        treatment ``a``. Every other column is treated as a covariate.
    """
    names = dict(DEFAULT_COLUMNS)
    names.update(columns or {})
    frame = pd.read_csv(path)
    missing = [c for c in names.values() if c not in frame.columns]
    if missing:
        raise ValueError(f"missing required columns {missing}")
    covariate_cols = [c for c in frame.columns if c not in set(names.values())]
    return Dataset(
        covariates={c: frame[c].to_numpy() for c in covariate_cols},
        treatment=frame[names["treatment"]].to_numpy(),
        delta=frame[names["delta"]].to_numpy(),
        time=frame[names["time"]].to_numpy(),
        cause=frame[names["cause"]].to_numpy(),
        cluster=frame[names["cluster"]].to_numpy(),
    )


def save_dataset(dataset, path, columns=None):
    """Write a Dataset to CSV; censored rows get an empty cause field."""
    dataset.to_frame(columns).to_csv(path, index=False)


def build_design(dataset, cols, add_intercept=True):
    """Build a dense design matrix from column names.

    Parameters
    ----------
    dataset : Dataset
    cols : sequence of str
        Column names; ``"a:b"`` denotes the elementwise product of columns
        ``a`` and ``b``. Unknown names raise KeyError.
    add_intercept : bool
        Prepend a column of ones.

    Returns
    -------
    ndarray of shape (n, p)
    """
    parts = []
    if add_intercept:
        parts.append(np.ones(dataset.n))
    for name in cols:
        if ":" in name:
            left, right = name.split(":", 1)
            parts.append(dataset.column(left) * dataset.column(right))
        else:
            parts.append(dataset.column(name))
    return np.column_stack(parts) if parts else np.empty((dataset.n, 0))


@dataclass
class ModelSpec:
    """Declares the nuisance and outcome model columns for one analysis.

    Per-cause dicts are keyed by integer cause label. Designs built from
    these columns always get a leading intercept.
    """

    treatment_cols: list = field(default_factory=list)
    censoring_cols: list = field(default_factory=list)
    cause_cols: list = field(default_factory=list)
    treatment_free_cols: dict = field(default_factory=dict)
    blip_cols: dict = field(default_factory=dict)
    cost_threshold: float = 0.0
    columns: dict = field(default_factory=dict)

    @property
    def causes(self):
        return sorted(self.blip_cols)

    def for_cause(self, k):
        return list(self.treatment_free_cols.get(k, [])), list(self.blip_cols.get(k, []))


def load_model_spec(path):
    """Read a ModelSpec from a JSON config file.

    The file holds the column lists plus an optional ``columns`` block with
    the role -> CSV column name mapping and an optional ``cost_threshold``.
    """
    with open(path) as fh:
        raw = json.load(fh)
    return ModelSpec(
        treatment_cols=list(raw.get("treatment_cols", [])),
        censoring_cols=list(raw.get("censoring_cols", [])),
        cause_cols=list(raw.get("cause_cols", [])),
        treatment_free_cols={int(k): list(v) for k, v in raw.get("treatment_free_cols", {}).items()},
        blip_cols={int(k): list(v) for k, v in raw.get("blip_cols", {}).items()},
        cost_threshold=float(raw.get("cost_threshold", 0.0)),
        columns=dict(raw.get("columns", {})),
    )
