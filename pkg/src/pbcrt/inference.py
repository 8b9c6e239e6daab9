"""Variance estimation, confidence intervals, and Wald tests.

Two variance routes: the model-based GLS variance produced by each fit,
and the leave-one-cluster-out jackknife, which refits the whole estimator
(including variance components) on every delete-one subtrial.
All t-based inference uses I - 2 degrees of freedom.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy import stats

from .estimators import EstimationError, EstimatorKind, FitOptions, FitResult, fit
from .trial import ObservedTrial, TrialValidationError

__all__ = [
    "VarianceSource",
    "IntervalEstimate",
    "model_based_variance",
    "jackknife_variance",
    "confidence_interval",
    "wald_test",
    "fit_with_inference",
]


class VarianceSource(Enum):
    MODEL_BASED = "model"
    JACKKNIFE = "jackknife"


@dataclass(frozen=True)
class IntervalEstimate:
    lower: float
    upper: float
    level: float
    df: int
    variance_source: VarianceSource


def _df(n_clusters: int) -> int:
    # Two cluster-level design parameters (intercept, treatment).
    return n_clusters - 2


def model_based_variance(trial: ObservedTrial, kind: EstimatorKind,
                         options: FitOptions = FitOptions()) -> float:
    """The (delta, delta) entry of the inverse normal equations for this fit."""
    return fit(trial, kind, options).model_based_var


def jackknife_variance(trial: ObservedTrial, kind: EstimatorKind,
                       options: FitOptions = FitOptions()) -> tuple[float, np.ndarray]:
    """Leave-one-cluster-out jackknife variance and the replicate estimates.

    Each replicate refits the estimator from scratch on the trial without
    one cluster; the variance is ((I-1)/I) * sum((d_i - dbar)^2) around
    the mean of the leave-one-out estimates.
    """
    n = trial.n_clusters
    if n < 3:
        raise EstimationError("jackknife needs at least 3 clusters")
    reps = np.empty(n)
    for i, cluster in enumerate(trial.clusters):
        try:
            sub = trial.drop_cluster(cluster.cluster_id)
        except TrialValidationError as exc:
            raise EstimationError(
                f"dropping cluster {cluster.cluster_id!r} leaves a "
                f"single-arm trial") from exc
        reps[i] = fit(sub, kind, options).delta_hat
    center = reps.mean()
    var = (n - 1) / n * float(np.sum((reps - center) ** 2))
    return var, reps


def confidence_interval(delta_hat: float, variance: float, n_clusters: int,
                        level: float = 0.95,
                        source: VarianceSource = VarianceSource.MODEL_BASED) -> IntervalEstimate:
    """t interval delta_hat +/- t_{df, 1-(1-level)/2} * sqrt(variance), df = I - 2."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    df = _df(n_clusters)
    half = stats.t.ppf(0.5 + level / 2.0, df) * np.sqrt(variance)
    return IntervalEstimate(lower=delta_hat - half, upper=delta_hat + half,
                            level=level, df=df, variance_source=source)


def wald_test(delta_hat: float, variance: float, n_clusters: int) -> float:
    """Two-sided t test p-value of delta = 0 with df = I - 2."""
    if variance < 0:
        raise ValueError("variance must be nonnegative")
    if variance == 0.0:
        return 1.0 if delta_hat == 0.0 else 0.0
    t = abs(delta_hat) / np.sqrt(variance)
    return float(2.0 * stats.t.sf(t, _df(n_clusters)))


def fit_with_inference(trial: ObservedTrial, kind: EstimatorKind,
                       options: FitOptions = FitOptions(),
                       jackknife: bool = True) -> FitResult:
    """Fit plus jackknife variance attached to the result."""
    result = fit(trial, kind, options)
    if jackknife:
        var, reps = jackknife_variance(trial, kind, options)
        result = replace(result, jackknife_var=var, jackknife_replicates=reps)
    return result
