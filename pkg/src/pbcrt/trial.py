"""Core domain types for two-period parallel cluster trials with a baseline period.

A trial consists of I clusters observed in a baseline period (0) and a
post period (1).  Clusters randomized to sequence 1 receive treatment in
period 1 only, so the treatment indicator is fully determined by
(sequence, period).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TrialValidationError",
    "CorrelationStructure",
    "WeightingScheme",
    "VarianceComponents",
    "ClusterData",
    "ObservedTrial",
]


class TrialValidationError(ValueError):
    """Raised when trial records violate a structural invariant."""


class CorrelationStructure(Enum):
    INDEPENDENCE = "independence"
    EXCHANGEABLE = "exchangeable"
    NESTED_EXCHANGEABLE = "nested_exchangeable"


class WeightingScheme(Enum):
    """Cluster weighting used in the estimating equation.

    UNWEIGHTED gives every individual equal weight (w_i = 1).
    INVERSE_CLUSTER_PERIOD_SIZE gives every cluster equal weight
    (w_i = K_i for correlated fits; per-cell 1/K_ij via cell means for
    independence-structure fits).
    """

    UNWEIGHTED = "unweighted"
    INVERSE_CLUSTER_PERIOD_SIZE = "inverse_cluster_period_size"


_MIN_SIGMA_W2 = 1e-10


@dataclass(frozen=True)
class VarianceComponents:
    """Variance components (sigma_w2, tau_alpha2, tau_gamma2) and derived ICCs."""

    sigma_w2: float
    tau_alpha2: float = 0.0
    tau_gamma2: float = 0.0

    def __post_init__(self):
        for name in ("sigma_w2", "tau_alpha2", "tau_gamma2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.sigma_w2 < _MIN_SIGMA_W2:
            raise ValueError(f"sigma_w2 must be >= {_MIN_SIGMA_W2}, got {self.sigma_w2!r}")
        if self.tau_alpha2 < 0 or self.tau_gamma2 < 0:
            raise ValueError("variance components must be nonnegative")

    @property
    def rho(self) -> float:
        """ICC of the exchangeable (single random intercept) model."""
        return self.tau_alpha2 / (self.tau_alpha2 + self.sigma_w2)

    @property
    def rho_wp(self) -> float:
        """Within-period ICC of the nested-exchangeable model."""
        t = self.tau_alpha2 + self.tau_gamma2
        return t / (t + self.sigma_w2)

    @property
    def rho_bp(self) -> float:
        """Between-period ICC of the nested-exchangeable model."""
        return self.tau_alpha2 / (self.tau_alpha2 + self.tau_gamma2 + self.sigma_w2)

    @property
    def cac(self) -> float:
        """Cluster auto-correlation rho_bp / rho_wp; undefined when rho_wp = 0."""
        t = self.tau_alpha2 + self.tau_gamma2
        if t == 0.0:
            return float("nan")
        return self.tau_alpha2 / t

    @classmethod
    def from_iccs(cls, sigma_w2: float, rho_wp: float, cac: float = 1.0) -> "VarianceComponents":
        """Build components from (sigma_w2, within-period ICC, CAC)."""
        if not 0.0 <= rho_wp < 1.0:
            raise ValueError("rho_wp must lie in [0, 1)")
        if not 0.0 <= cac <= 1.0:
            raise ValueError("cac must lie in [0, 1]")
        total = sigma_w2 * rho_wp / (1.0 - rho_wp)
        return cls(sigma_w2=sigma_w2, tau_alpha2=cac * total, tau_gamma2=(1.0 - cac) * total)


@dataclass(frozen=True)
class ClusterData:
    """Per-cluster cell statistics; sufficient for every fit in this package.

    All models here have design rows constant within a cluster-period cell
    and block covariance constant over cell pairs, so (size, sum, sum of
    squares) per cell carries all information the estimators need.
    """

    cluster_id: str
    sequence: int
    k0: int
    k1: int
    sum0: float
    sum1: float
    sumsq0: float
    sumsq1: float

    @property
    def mean0(self) -> float:
        return self.sum0 / self.k0

    @property
    def mean1(self) -> float:
        return self.sum1 / self.k1


class ObservedTrial:
    """Long-form individual records of one PB-CRT, validated and indexed by cluster."""

    def __init__(self, cluster_ids: Sequence, periods: Sequence[int],
                 sequences: Sequence[int], outcomes: Sequence[float]):
        cid = np.asarray([str(c) for c in cluster_ids], dtype=object)
        per = np.asarray(periods, dtype=np.int64)
        seq = np.asarray(sequences, dtype=np.int64)
        y = np.asarray(outcomes, dtype=np.float64)
        if not (cid.shape == per.shape == seq.shape == y.shape):
            raise TrialValidationError("record columns differ in length")
        if cid.size == 0:
            raise TrialValidationError("trial has no records")
        if not np.isin(per, (0, 1)).all():
            raise TrialValidationError("period must be 0 or 1")
        if not np.isin(seq, (0, 1)).all():
            raise TrialValidationError("sequence must be 0 or 1")
        if not np.isfinite(y).all():
            raise TrialValidationError("outcomes must be finite")

        self.cluster_ids = cid
        self.periods = per
        self.sequences = seq
        self.outcomes = y
        self._clusters = self._index_clusters()
        self._validate()

    def _index_clusters(self) -> list[ClusterData]:
        # Deterministic order: first appearance in the record stream.
        uniq, first, inv = np.unique(self.cluster_ids.astype(str),
                                     return_index=True, return_inverse=True)
        rank = np.empty(uniq.size, dtype=np.int64)
        rank[np.argsort(first)] = np.arange(uniq.size)
        code = rank[inv]
        n = uniq.size
        ordered_ids = uniq[np.argsort(first)]
        cell = 2 * code + self.periods
        k = np.bincount(cell, minlength=2 * n)
        s = np.bincount(cell, weights=self.outcomes, minlength=2 * n)
        ss = np.bincount(cell, weights=self.outcomes**2, minlength=2 * n)
        seq_min = np.full(n, 2, dtype=np.int64)
        seq_max = np.full(n, -1, dtype=np.int64)
        np.minimum.at(seq_min, code, self.sequences)
        np.maximum.at(seq_max, code, self.sequences)
        bad = np.nonzero(seq_min != seq_max)[0]
        if bad.size:
            raise TrialValidationError(
                f"cluster {ordered_ids[bad[0]]!r} appears with more than one "
                "sequence value")
        return [ClusterData(
            cluster_id=str(ordered_ids[i]), sequence=int(seq_min[i]),
            k0=int(k[2 * i]), k1=int(k[2 * i + 1]),
            sum0=float(s[2 * i]), sum1=float(s[2 * i + 1]),
            sumsq0=float(ss[2 * i]), sumsq1=float(ss[2 * i + 1]))
            for i in range(n)]

    def _validate(self):
        for c in self._clusters:
            if c.k0 < 1 or c.k1 < 1:
                raise TrialValidationError(
                    f"cluster {c.cluster_id!r} lacks records in period "
                    f"{0 if c.k0 < 1 else 1}")
        seqs = {c.sequence for c in self._clusters}
        if seqs != {0, 1}:
            raise TrialValidationError(
                "trial needs at least one cluster in each sequence arm")

    @property
    def clusters(self) -> list[ClusterData]:
        return self._clusters

    @property
    def n_clusters(self) -> int:
        return len(self._clusters)

    @property
    def n_obs(self) -> int:
        return int(self.outcomes.size)

    @property
    def equal_period_sizes(self) -> bool:
        return all(c.k0 == c.k1 for c in self._clusters)

    def cluster_arrays(self):
        """Vectorized per-cluster stats (sequence, k0, k1, sum0, sum1, sumsq)."""
        cs = self._clusters
        return (np.array([c.sequence for c in cs], dtype=np.float64),
                np.array([c.k0 for c in cs], dtype=np.float64),
                np.array([c.k1 for c in cs], dtype=np.float64),
                np.array([c.sum0 for c in cs]),
                np.array([c.sum1 for c in cs]),
                np.array([c.sumsq0 + c.sumsq1 for c in cs]))

    def drop_cluster(self, cluster_id: str) -> "ObservedTrial":
        """Return the subtrial omitting one full cluster (for jackknife refits)."""
        keep = self.cluster_ids != str(cluster_id)
        if keep.all():
            raise KeyError(f"no cluster {cluster_id!r} in trial")
        return ObservedTrial(self.cluster_ids[keep], self.periods[keep],
                             self.sequences[keep], self.outcomes[keep])

    @classmethod
    def from_records(cls, records: Iterable[tuple]) -> "ObservedTrial":
        """Build from an iterable of (cluster_id, period, sequence, outcome)."""
        rows = list(records)
        if not rows:
            raise TrialValidationError("no records")
        cids, pers, seqs, ys = zip(*rows)
        return cls(cids, pers, seqs, ys)

    @classmethod
    def from_cell_means(cls, cells: Iterable[tuple]) -> "ObservedTrial":
        """Build from (cluster_id, sequence, k0, k1, mean0, mean1) cell summaries.

        Every individual in a cell is assigned the cell mean; useful for
        noiseless fixtures and size-table skeletons.
        """
        records = []
        for cid, seq, k0, k1, m0, m1 in cells:
            records.extend((cid, 0, seq, m0) for _ in range(k0))
            records.extend((cid, 1, seq, m1) for _ in range(k1))
        return cls.from_records(records)
