"""The eight treatment-effect estimators for PB-CRTs.

Four model families (independence, two-way fixed effects, exchangeable
mixed, nested-exchangeable mixed), each unweighted or with inverse
cluster-period size weights.  All fits reduce to cell-level sufficient
statistics; no individual-level design matrix is ever materialized.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .blocks import inverse_cell_terms, structure_taus
from .reml import estimate_variance_components
from .trial import (
    CorrelationStructure,
    ObservedTrial,
    VarianceComponents,
    WeightingScheme,
)

__all__ = [
    "EstimatorKind",
    "EstimationError",
    "UnsupportedWeightingError",
    "FitOptions",
    "FitResult",
    "fit",
    "fit_independence",
    "fit_fixed_effects",
    "gls_point_estimate",
    "estimate_variance_components",
]


class EstimationError(RuntimeError):
    """A fit could not be computed (singular design, degenerate arms, ...)."""


class UnsupportedWeightingError(EstimationError):
    """Inverse-size weighting with correlated errors needs equal period sizes.

    The weighted estimating equation defines the weight at the cluster
    level; with unequal cell sizes inside a cluster there is no agreed
    weighted analysis for correlated errors, so we refuse rather than
    guess.
    """


class EstimatorKind(Enum):
    IEE = "iee"
    IEEW = "ieew"
    FE = "fe"
    FEW = "few"
    EME = "eme"
    EMEW = "emew"
    NEME = "neme"
    NEMEW = "nemew"

    @property
    def weighted(self) -> bool:
        return self.value.endswith("w") and self is not EstimatorKind.FE

    @property
    def structure(self) -> CorrelationStructure:
        if self in (EstimatorKind.EME, EstimatorKind.EMEW):
            return CorrelationStructure.EXCHANGEABLE
        if self in (EstimatorKind.NEME, EstimatorKind.NEMEW):
            return CorrelationStructure.NESTED_EXCHANGEABLE
        return CorrelationStructure.INDEPENDENCE

    @property
    def weighting(self) -> WeightingScheme:
        return (WeightingScheme.INVERSE_CLUSTER_PERIOD_SIZE if self.weighted
                else WeightingScheme.UNWEIGHTED)

    @property
    def mixed(self) -> bool:
        return self.structure is not CorrelationStructure.INDEPENDENCE


@dataclass(frozen=True)
class FitOptions:
    """Options for a single fit.

    vc: plug-in variance components; when None, mixed fits estimate them
    by REML on the unweighted model.
    """

    vc: VarianceComponents | None = None
    reml_max_iter: int = 500


@dataclass
class FitResult:
    kind: EstimatorKind
    delta_hat: float
    theta_hat: np.ndarray
    n_clusters: int
    model_based_var: float
    vc_hat: VarianceComponents | None = None
    converged: bool = True
    jackknife_var: float | None = None
    jackknife_replicates: np.ndarray | None = None


def fit(trial: ObservedTrial, kind: EstimatorKind,
        options: FitOptions = FitOptions()) -> FitResult:
    """Fit one estimator on a trial, returning the point estimate and model variance."""
    if kind in (EstimatorKind.IEE, EstimatorKind.IEEW):
        return fit_independence(trial, weighted=kind.weighted)
    if kind in (EstimatorKind.FE, EstimatorKind.FEW):
        return fit_fixed_effects(trial, weighted=kind.weighted)
    return _fit_mixed(trial, kind, options)


# ---------------------------------------------------------------------------
# independence fits

def _cell_table(trial: ObservedTrial):
    """One row per cluster-period cell: (sequence, period, size, sum, sumsq)."""
    rows = []
    for c in trial.clusters:
        rows.append((c.sequence, 0, c.k0, c.sum0, c.sumsq0))
        rows.append((c.sequence, 1, c.k1, c.sum1, c.sumsq1))
    seq, per, k, t, ss = map(np.asarray, zip(*rows))
    return seq.astype(float), per.astype(float), k.astype(float), t.astype(float), ss.astype(float)


def _solve_normal(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    try:
        c = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("singular normal equations") from exc
    z = np.linalg.solve(c, v if v.ndim == 2 else v[:, None])
    out = np.linalg.solve(c.T, z)
    return out if v.ndim == 2 else out[:, 0]


def _entry_inverse(m: np.ndarray, idx: int) -> float:
    e = np.zeros(m.shape[0])
    e[idx] = 1.0
    return float(_solve_normal(m, e)[idx])


def fit_independence(trial: ObservedTrial, weighted: bool) -> FitResult:
    """OLS with treatment and period effects; weighted variant on cell means."""
    seq, per, k, t, ss = _cell_table(trial)
    x = seq * per  # treatment indicator of each cell
    z = np.column_stack([np.ones_like(per), x, per])
    if weighted:
        ybar = t / k
        m = z.T @ z
        v = z.T @ ybar
        theta = _solve_normal(m, v)
        resid = ybar - z @ theta
        dof = z.shape[0] - 3
        if dof <= 0:
            raise EstimationError("too few cells for a residual variance")
        sigma2 = float(resid @ resid) / dof
        var = sigma2 * _entry_inverse(m, 1)
        return FitResult(kind=EstimatorKind.IEEW, delta_hat=float(theta[1]),
                         theta_hat=theta, n_clusters=trial.n_clusters,
                         model_based_var=var)
    m = (z * k[:, None]).T @ z
    v = z.T @ t
    theta = _solve_normal(m, v)
    fitted = z @ theta
    rss = float(np.sum(ss - 2.0 * fitted * t + k * fitted**2))
    dof = trial.n_obs - 3
    sigma2 = rss / dof
    var = sigma2 * _entry_inverse(m, 1)
    return FitResult(kind=EstimatorKind.IEE, delta_hat=float(theta[1]),
                     theta_hat=theta, n_clusters=trial.n_clusters,
                     model_based_var=var,
                     vc_hat=VarianceComponents(max(sigma2, 1e-10)))


def fit_fixed_effects(trial: ObservedTrial, weighted: bool) -> FitResult:
    """Two-way fixed effects (cluster + period dummies + treatment).

    The weighted variant runs OLS on cluster-period cell means, which is
    the difference-in-differences of the cell means.
    """
    n_c = trial.n_clusters
    if n_c < 2:
        raise EstimationError("fixed-effects fit needs at least 2 clusters")
    seq, per, k, t, ss = _cell_table(trial)
    x = seq * per
    p = n_c + 2  # intercept, treatment, period, I-1 cluster deviations
    zc = np.zeros((2 * n_c, p))
    zc[:, 0] = 1.0
    zc[:, 1] = x
    zc[:, 2] = per
    for i in range(1, n_c):  # first cluster pinned at zero for identifiability
        zc[2 * i, 2 + i] = 1.0
        zc[2 * i + 1, 2 + i] = 1.0
    if weighted:
        ybar = t / k
        m = zc.T @ zc
        v = zc.T @ ybar
        theta = _solve_normal(m, v)
        resid = ybar - zc @ theta
        dof = 2 * n_c - p
        if dof <= 0:
            raise EstimationError("saturated design: no residual degrees of freedom")
        sigma2 = float(resid @ resid) / dof
        var = sigma2 * _entry_inverse(m, 1)
        return FitResult(kind=EstimatorKind.FEW, delta_hat=float(theta[1]),
                         theta_hat=theta, n_clusters=n_c, model_based_var=var)
    m = (zc * k[:, None]).T @ zc
    v = zc.T @ t
    theta = _solve_normal(m, v)
    fitted = zc @ theta
    rss = float(np.sum(ss - 2.0 * fitted * t + k * fitted**2))
    dof = trial.n_obs - p
    if dof <= 0:
        raise EstimationError("saturated design: no residual degrees of freedom")
    sigma2 = rss / dof
    var = sigma2 * _entry_inverse(m, 1)
    return FitResult(kind=EstimatorKind.FE, delta_hat=float(theta[1]),
                     theta_hat=theta, n_clusters=n_c, model_based_var=var,
                     vc_hat=VarianceComponents(max(sigma2, 1e-10)))


# ---------------------------------------------------------------------------
# GLS fits with block covariance

def _gls_system(trial: ObservedTrial, structure: CorrelationStructure,
                vc: VarianceComponents, weighting: WeightingScheme):
    """Normal equations (M, v) and weighted quadratic Y' W^-1 Y for the 3-column design."""
    if (weighting is WeightingScheme.INVERSE_CLUSTER_PERIOD_SIZE
            and not trial.equal_period_sizes):
        raise UnsupportedWeightingError(
            "inverse cluster-period size weights with a correlated structure "
            "require equal period sizes within every cluster")
    s_arr, k0, k1, t0, t1, ssq = trial.cluster_arrays()
    tw, tb = structure_taus(structure, vc)
    a = 1.0 / vc.sigma_w2
    c00, c01, c11, _ = inverse_cell_terms(k0, k1, vc.sigma_w2, tw, tb)
    w0 = a * (k0 - k0 * k0 * c00)
    w1 = a * (k1 - k1 * k1 * c11)
    wx = -a * k0 * k1 * c01
    q0 = a * (t0 - k0 * (c00 * t0 + c01 * t1))
    q1 = a * (t1 - k1 * (c01 * t0 + c11 * t1))
    yqy = a * (ssq - (c00 * t0 * t0 + 2.0 * c01 * t0 * t1 + c11 * t1 * t1))
    if weighting is WeightingScheme.INVERSE_CLUSTER_PERIOD_SIZE:
        w = k0  # equals k1 here
        w0, w1, wx = w0 / w, w1 / w, wx / w
        q0, q1, yqy = q0 / w, q1 / w, yqy / w
    m = np.empty((3, 3))
    m[0, 0] = np.sum(w0 + w1 + 2.0 * wx)
    m[0, 1] = m[1, 0] = np.sum(s_arr * (w1 + wx))
    m[0, 2] = m[2, 0] = np.sum(w1 + wx)
    m[1, 1] = m[1, 2] = m[2, 1] = np.sum(s_arr * w1)
    m[2, 2] = np.sum(w1)
    v = np.array([np.sum(q0 + q1), np.sum(s_arr * q1), np.sum(q1)])
    return m, v, float(np.sum(yqy))


def gls_point_estimate(trial: ObservedTrial, structure: CorrelationStructure,
                       vc: VarianceComponents,
                       weighting: WeightingScheme = WeightingScheme.UNWEIGHTED) -> np.ndarray:
    """Solve the (weighted) GLS normal equations for (mu, delta, phi1)."""
    m, v, _ = _gls_system(trial, structure, vc, weighting)
    return _solve_normal(m, v)


def _fit_mixed(trial: ObservedTrial, kind: EstimatorKind,
               options: FitOptions) -> FitResult:
    converged = True
    vc = options.vc
    if vc is None:
        vc, converged = estimate_variance_components(
            trial, kind.structure, max_iter=options.reml_max_iter,
            return_converged=True)
    m, v, yqy = _gls_system(trial, kind.structure, vc, kind.weighting)
    theta = _solve_normal(m, v)
    var = _entry_inverse(m, 1)
    if kind.weighted:
        # Weighted estimating equations are defined up to the weight scale;
        # a residual dispersion factor restores the variance to the scale of
        # the data, as in survey-weighted pseudo-likelihood software.
        dof = trial.n_obs - 3
        phi = max((yqy - 2.0 * theta @ v + theta @ m @ theta) / dof, 0.0)
        var *= phi
    return FitResult(kind=kind, delta_hat=float(theta[1]), theta_hat=theta,
                     n_clusters=trial.n_clusters, model_based_var=var,
                     vc_hat=vc, converged=converged)
