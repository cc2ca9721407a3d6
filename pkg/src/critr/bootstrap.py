"""Nonparametric cluster bootstrap: resample whole clusters with
replacement, rerun an arbitrary estimation pipeline, report percentile CIs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd


@dataclass
class BootstrapResult:
    """Replicate estimates (failed replicates are NaN rows) plus metadata."""

    B: int
    estimates: np.ndarray
    ci_level: float
    seed: int
    failures: int
    names: list | None = None

    def ci(self):
        """Columnwise percentile CI over successful replicates."""
        return percentile_ci(self.estimates, self.ci_level)

    def ci_table(self, point_estimates):
        """Assemble the CI table: parameter, estimate, lo, hi, B, failures."""
        lo, hi = self.ci()
        point = np.asarray(point_estimates, dtype=float)
        names = self.names or [f"param_{j}" for j in range(point.shape[0])]
        return pd.DataFrame(
            {
                "parameter": names,
                "estimate": point,
                "lo": np.atleast_1d(lo),
                "hi": np.atleast_1d(hi),
                "B": self.B,
                "failures": self.failures,
            }
        )


def replicate_seed(seed, k):
    """Deterministic per-replicate seed; replicate k is reproducible in
    isolation without drawing the first k-1 streams."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(k,))


def resample_clusters(dataset, rng):
    """Draw r cluster ids with replacement; copies get fresh labels 1..r."""
    r = dataset.r
    by_cluster = [np.flatnonzero(dataset.cluster == c) for c in range(1, r + 1)]
    picked = rng.integers(0, r, size=r)
    rows = np.concatenate([by_cluster[c] for c in picked])
    sizes = [by_cluster[c].shape[0] for c in picked]
    labels = np.repeat(np.arange(1, r + 1), sizes)
    return dataset.take(rows, cluster=labels)


def cluster_bootstrap(dataset, pipeline, B, seed, ci_level=0.95, names=None):
    """Bootstrap an estimation pipeline over cluster resamples.

    Parameters
    ----------
    dataset : Dataset
        Needs at least two clusters.
    pipeline : callable Dataset -> 1-D array_like
        The full estimation to repeat per resample.
    B : int
        Replicate count.
    seed : int
        Master seed; replicate k uses an independent derived stream.
    ci_level : float
        Nominal two-sided coverage for the percentile CI.
    names : list of str, optional
        Statistic names for the CI table.

    Returns
    -------
    BootstrapResult
        Replicates that raise a linear-algebra or degenerate-sample error
        are recorded as failures (NaN rows); more than 5% failures is an
        error.
    """
    if dataset.r < 2:
        raise ValueError("cluster bootstrap needs at least 2 clusters")
    rows = []
    failures = 0
    for k in range(B):
        rng = np.random.default_rng(replicate_seed(seed, k))
        sample = resample_clusters(dataset, rng)
        try:
            est = np.atleast_1d(np.asarray(pipeline(sample), dtype=float))
        except (np.linalg.LinAlgError, ValueError):
            failures += 1
            rows.append(None)
            continue
        rows.append(est)
    if failures > 0.05 * B:
        raise RuntimeError(f"{failures} of {B} bootstrap replicates failed (cap is 5%)")
    width = next(len(r) for r in rows if r is not None)
    estimates = np.full((B, width), np.nan)
    for k, r in enumerate(rows):
        if r is not None:
            estimates[k] = r
    return BootstrapResult(
        B=B, estimates=estimates, ci_level=ci_level, seed=seed, failures=failures, names=names
    )


def percentile_ci(samples, level=0.95):
    """Empirical quantiles at (1-level)/2 and 1-(1-level)/2 with linear
    interpolation; NaN rows (failed replicates) are ignored."""
    samples = np.asarray(samples, dtype=float)
    tail = (1.0 - level) / 2.0
    lo, hi = np.nanquantile(samples, [tail, 1.0 - tail], axis=0)
    return lo, hi
