"""Exact estimands and probability limits over finite cluster-size mixtures.

The target population is a discrete mixture of subpopulations, each with
a fixed cluster-period size and treatment effect.  Every estimator's
large-I limit is a size-dependent reweighting of the subpopulation
effects, so with a finite mixture the limits are exact finite sums.
Also provides the worst-case configuration formulas: the ICC that
maximizes the weight spread and the subpopulation mix that maximizes the
bias of the weighted exchangeable estimator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimators import EstimatorKind, UnsupportedWeightingError
from .trial import VarianceComponents

__all__ = [
    "PopulationMixture",
    "EstimandWeights",
    "WeightScheme",
    "true_pate",
    "true_cate",
    "plim",
    "estimand_weights",
    "eme_weight",
    "neme_weight",
    "optimal_icc",
    "optimal_sampling_prob",
    "emew_bias",
]

_P_TOL = 1e-12


@dataclass(frozen=True)
class Subpopulation:
    """One mixture component: sampling probability, cell sizes, effect."""

    prob: float
    k0: int
    k1: int
    delta: float


class PopulationMixture:
    """Finite mixture of subpopulations with fixed cluster-period sizes.

    Sizes may be a single K (equal across periods) or a (K0, K1) pair.
    """

    def __init__(self, subpops):
        parsed = []
        for p, k, d in subpops:
            if isinstance(k, (tuple, list)):
                k0, k1 = int(k[0]), int(k[1])
            else:
                k0 = k1 = int(k)
            if k0 < 1 or k1 < 1:
                raise ValueError("cluster-period sizes must be >= 1")
            if not p > 0:
                raise ValueError("subpopulation probabilities must be positive")
            parsed.append(Subpopulation(float(p), k0, k1, float(d)))
        if not parsed:
            raise ValueError("mixture needs at least one subpopulation")
        total = sum(s.prob for s in parsed)
        if abs(total - 1.0) > _P_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        self.subpops: list[Subpopulation] = parsed

    def __len__(self) -> int:
        return len(self.subpops)

    @property
    def equal_period_sizes(self) -> bool:
        return all(s.k0 == s.k1 for s in self.subpops)

    def arrays(self):
        p = np.array([s.prob for s in self.subpops])
        k0 = np.array([s.k0 for s in self.subpops], dtype=float)
        k1 = np.array([s.k1 for s in self.subpops], dtype=float)
        d = np.array([s.delta for s in self.subpops])
        return p, k0, k1, d

    @classmethod
    def two_point(cls, p1: float, k1, k2, delta1: float, delta2: float) -> "PopulationMixture":
        return cls([(p1, k1, delta1), (1.0 - p1, k2, delta2)])


class WeightScheme:
    EMEW = "emew"
    NEMEW = "nemew"


@dataclass(frozen=True)
class EstimandWeights:
    """Per-subpopulation multipliers lambda_u with E[lambda] = 1."""

    scheme: str
    lambdas: tuple[float, ...]


def true_pate(mix: PopulationMixture) -> float:
    """Participant-average effect: post-period size-weighted mean of effects."""
    p, _, k1, d = mix.arrays()
    return float(np.sum(p * k1 * d) / np.sum(p * k1))


def true_cate(mix: PopulationMixture) -> float:
    """Cluster-average effect: equal-weight mean of cluster effects."""
    p, _, _, d = mix.arrays()
    return float(np.sum(p * d))


def eme_weight(k, rho: float):
    """Unnormalized cluster weight of the exchangeable-model estimator."""
    k = np.asarray(k, dtype=float)
    return (1.0 + (k - 1.0) * rho) / (1.0 + (2.0 * k - 1.0) * rho)


def neme_weight(k, rho_wp: float, rho_bp: float):
    """Unnormalized cluster weight of the nested-exchangeable-model estimator."""
    k = np.asarray(k, dtype=float)
    num = 1.0 + (k - 1.0) * rho_wp
    return num / (num * num - (k * rho_bp) ** 2)


def _require_equal_periods(mix: PopulationMixture, kind: EstimatorKind):
    if not mix.equal_period_sizes:
        raise UnsupportedWeightingError(
            f"{kind.value} limits assume equal cluster-period sizes within a cluster")


def plim(kind: EstimatorKind, mix: PopulationMixture,
         vc: VarianceComponents | None = None) -> float:
    """Large-I limit of one estimator over the mixture.

    Mixed-model kinds need variance components and equal period sizes.
    """
    p, k0, k1, d = mix.arrays()
    if kind is EstimatorKind.IEE:
        return true_pate(mix)
    if kind in (EstimatorKind.IEEW, EstimatorKind.FEW):
        return true_cate(mix)
    if kind is EstimatorKind.FE:
        # Each cluster enters with harmonic-mean-type weight K0*K1/(K0+K1).
        h = k0 * k1 / (k0 + k1)
        return float(np.sum(p * h * d) / np.sum(p * h))
    if vc is None:
        raise ValueError(f"{kind.value} limit needs variance components")
    _require_equal_periods(mix, kind)
    if kind in (EstimatorKind.EME, EstimatorKind.EMEW):
        g = eme_weight(k0, vc.rho)
    else:
        g = neme_weight(k0, vc.rho_wp, vc.rho_bp)
    if kind in (EstimatorKind.EME, EstimatorKind.NEME):
        g = g * k0
    return float(np.sum(p * g * d) / np.sum(p * g))


def estimand_weights(scheme: str, mix: PopulationMixture,
                     vc: VarianceComponents) -> EstimandWeights:
    """Normalized multipliers by which a weighted mixed estimator tilts the cATE."""
    p, k0, _, _ = mix.arrays()
    _require_equal_periods(mix, EstimatorKind.EMEW if scheme == WeightScheme.EMEW
                           else EstimatorKind.NEMEW)
    if scheme == WeightScheme.EMEW:
        g = eme_weight(k0, vc.rho)
    elif scheme == WeightScheme.NEMEW:
        g = neme_weight(k0, vc.rho_wp, vc.rho_bp)
    else:
        raise ValueError(f"unknown weight scheme {scheme!r}")
    lam = g / np.sum(p * g)
    return EstimandWeights(scheme=scheme, lambdas=tuple(float(x) for x in lam))


def optimal_icc(k1: int, k2: int) -> float:
    """ICC at which the weight spread of the exchangeable scheme peaks."""
    if k1 < 1 or k2 < 1:
        raise ValueError("cluster sizes must be >= 1")
    return 1.0 / (1.0 + math.sqrt(2.0 * k1 * k2))


def optimal_sampling_prob(k1: int, k2: int, rho: float) -> float:
    """Mixing probability P(u=1) maximizing the weighted-exchangeable bias.

    sqrt(g2) / (sqrt(g1) + sqrt(g2)) with the unnormalized weights;
    the normalization constant cancels.
    """
    g1 = float(eme_weight(k1, rho))
    g2 = float(eme_weight(k2, rho))
    return math.sqrt(g2) / (math.sqrt(g1) + math.sqrt(g2))


def emew_bias(mix: PopulationMixture, vc: VarianceComponents) -> float:
    """Closed-form bias of the weighted exchangeable estimator for the cATE.

    Two-subpopulation mixtures only:
        P(1-P) (g1 - g2)(delta1 - delta2) / (P g1 + (1-P) g2).
    """
    if len(mix) != 2:
        raise ValueError("bias formula applies to two-subpopulation mixtures")
    _require_equal_periods(mix, EstimatorKind.EMEW)
    (s1, s2) = mix.subpops
    g1 = float(eme_weight(s1.k0, vc.rho))
    g2 = float(eme_weight(s2.k0, vc.rho))
    p = s1.prob
    return (p * (1.0 - p) * (g1 - g2) * (s1.delta - s2.delta)
            / (p * g1 + (1.0 - p) * g2))
