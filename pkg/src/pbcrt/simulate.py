"""Data generation and Monte Carlo studies for two-period baseline trials.

Each replicate's randomness is a pure function of (master_seed,
replicate_index), so studies are reproducible and replicates can run in
any order.  Cluster sizes are zero-truncated Poisson draws with
subpopulation-specific means, equal across the two periods.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .estimands import PopulationMixture, true_cate, true_pate
from .estimators import EstimationError, EstimatorKind, FitOptions, fit
from .inference import confidence_interval, wald_test
from .reml import estimate_variance_components
from .trial import CorrelationStructure, ObservedTrial, VarianceComponents

__all__ = [
    "SimScenario",
    "EstimatorSummary",
    "SimReport",
    "StudyError",
    "generate_trial",
    "run_study",
    "expand_truncated_poisson",
]

_ALL_KINDS = tuple(EstimatorKind)


class StudyError(RuntimeError):
    """Too many replicates failed for the summary to be trustworthy."""


@dataclass(frozen=True)
class SimScenario:
    """Configuration of one Monte Carlo study.

    The mixture's sizes are interpreted as Poisson means for the
    zero-truncated size draws; `fixed_sizes` uses them as constants
    instead.  `fixed_split` assigns subpopulations in fixed proportions
    rather than i.i.d. draws.
    """

    n_clusters: int
    mixture: PopulationMixture
    vc: VarianceComponents
    mu: float = 1.0
    phi1: float = 0.2
    reps: int = 1000
    master_seed: int = 0
    estimators: tuple[EstimatorKind, ...] = _ALL_KINDS
    ci_level: float = 0.95
    jackknife: bool = True
    fixed_sizes: bool = False
    fixed_split: bool = False

    def __post_init__(self):
        if self.n_clusters < 4 or self.n_clusters % 2:
            raise ValueError("n_clusters must be even and at least 4")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must lie in (0, 1)")
        if not self.mixture.equal_period_sizes:
            raise ValueError("size means must be equal across periods")
        if any(s.k0 < 1 for s in self.mixture.subpops):
            raise ValueError("Poisson size means must be >= 1")
        if not self.estimators:
            raise ValueError("at least one estimator is required")


def _truncated_poisson(rng: np.random.Generator, mean: float) -> int:
    k = int(rng.poisson(mean))
    while k < 1:
        k = int(rng.poisson(mean))
    return k


def _subpop_assignment(scenario: SimScenario, rng: np.random.Generator) -> np.ndarray:
    n = scenario.n_clusters
    probs = np.array([s.prob for s in scenario.mixture.subpops])
    if not scenario.fixed_split:
        return rng.choice(len(probs), size=n, p=probs)
    # Largest-remainder apportionment of exact counts per subpopulation.
    raw = probs * n
    counts = np.floor(raw).astype(int)
    order = np.argsort(raw - counts)[::-1]
    for idx in order[: n - counts.sum()]:
        counts[idx] += 1
    return np.repeat(np.arange(len(probs)), counts)


def generate_trial(scenario: SimScenario, replicate_index: int) -> ObservedTrial:
    """One simulated trial, deterministic given (master_seed, replicate_index)."""
    rng = np.random.default_rng([scenario.master_seed, replicate_index])
    n = scenario.n_clusters
    subpop = _subpop_assignment(scenario, rng)
    sizes = np.empty(n, dtype=int)
    for i, u in enumerate(subpop):
        mean = scenario.mixture.subpops[u].k0
        sizes[i] = mean if scenario.fixed_sizes else _truncated_poisson(rng, mean)
    seq = np.zeros(n, dtype=int)
    seq[rng.permutation(n)[: n // 2]] = 1

    vc = scenario.vc
    sd_a = np.sqrt(vc.tau_alpha2)
    sd_g = np.sqrt(vc.tau_gamma2)
    sd_e = np.sqrt(vc.sigma_w2)
    cids, pers, seqs, ys = [], [], [], []
    for i in range(n):
        k = int(sizes[i])
        delta = scenario.mixture.subpops[subpop[i]].delta
        alpha = sd_a * rng.standard_normal()
        g0, g1 = sd_g * rng.standard_normal(2)
        base = scenario.mu + alpha
        y0 = base + g0 + sd_e * rng.standard_normal(k)
        y1 = base + scenario.phi1 + seq[i] * delta + g1 + sd_e * rng.standard_normal(k)
        cid = f"c{i:04d}"
        cids.extend([cid] * (2 * k))
        pers.extend([0] * k + [1] * k)
        seqs.extend([int(seq[i])] * (2 * k))
        ys.extend(y0)
        ys.extend(y1)
    return ObservedTrial(cids, pers, seqs, ys)


def expand_truncated_poisson(mix: PopulationMixture, tail: float = 1e-12) -> PopulationMixture:
    """Exact discrete mixture implied by zero-truncated Poisson size draws.

    Replaces each subpopulation (p, mean, delta) by atoms (p * P(K=k), k,
    delta) over the truncated support, dropping a total tail mass below
    `tail` and renormalizing.  Lets the limit oracle evaluate Poisson-size
    scenarios exactly.
    """
    atoms = []
    for s in mix.subpops:
        mean = float(s.k0)
        kmax = int(sps.poisson.isf(tail, mean)) + 1
        ks = np.arange(1, kmax + 1)
        pk = sps.poisson.pmf(ks, mean) / -np.expm1(-mean)
        for k, q in zip(ks, pk):
            if q > 0.0:
                atoms.append((s.prob * float(q), int(k), s.delta))
    total = sum(a[0] for a in atoms)
    return PopulationMixture([(p / total, k, d) for p, k, d in atoms])


@dataclass
class EstimatorSummary:
    """Monte Carlo summary of one estimator over the completed replicates."""

    estimator: EstimatorKind
    n_ok: int
    n_failures: int
    mean_estimate: float
    mc_variance: float
    rel_bias_pate_pct: float
    rel_bias_cate_pct: float
    rmse_pate: float
    rmse_cate: float
    mean_model_variance: float
    coverage_model_pate: float
    coverage_model_cate: float
    power_model: float
    mean_jackknife_variance: float | None = None
    coverage_jackknife_pate: float | None = None
    coverage_jackknife_cate: float | None = None
    power_jackknife: float | None = None


@dataclass
class SimReport:
    scenario: SimScenario
    pate: float
    cate: float
    summaries: list[EstimatorSummary]
    estimates: dict = field(default_factory=dict)  # kind value -> per-replicate arrays

    def summary(self, kind: EstimatorKind) -> EstimatorSummary:
        for s in self.summaries:
            if s.estimator is kind:
                return s
        raise KeyError(kind)

    def write_csv(self, path) -> None:
        """One row per estimator and variance source."""
        cols = ["estimator", "variance_source", "n_ok", "n_failures",
                "mean_estimate", "mc_variance", "rel_bias_pate_pct",
                "rel_bias_cate_pct", "rmse_pate", "rmse_cate",
                "mean_variance", "coverage_pate", "coverage_cate", "power"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for s in self.summaries:
                common = [s.estimator.value, "model", s.n_ok, s.n_failures,
                          repr(s.mean_estimate), repr(s.mc_variance),
                          repr(s.rel_bias_pate_pct), repr(s.rel_bias_cate_pct),
                          repr(s.rmse_pate), repr(s.rmse_cate)]
                w.writerow(common + [repr(s.mean_model_variance),
                                     repr(s.coverage_model_pate),
                                     repr(s.coverage_model_cate),
                                     repr(s.power_model)])
                if s.mean_jackknife_variance is not None:
                    common[1] = "jackknife"
                    w.writerow(common + [repr(s.mean_jackknife_variance),
                                         repr(s.coverage_jackknife_pate),
                                         repr(s.coverage_jackknife_cate),
                                         repr(s.power_jackknife)])

    def to_json_dict(self) -> dict:
        sc = self.scenario
        return {
            "scenario": {
                "n_clusters": sc.n_clusters,
                "mixture": [[s.prob, [s.k0, s.k1], s.delta]
                            for s in sc.mixture.subpops],
                "vc": {"sigma_w2": sc.vc.sigma_w2,
                       "tau_alpha2": sc.vc.tau_alpha2,
                       "tau_gamma2": sc.vc.tau_gamma2},
                "mu": sc.mu, "phi1": sc.phi1, "reps": sc.reps,
                "master_seed": sc.master_seed,
                "estimators": [k.value for k in sc.estimators],
                "ci_level": sc.ci_level, "jackknife": sc.jackknife,
                "fixed_sizes": sc.fixed_sizes, "fixed_split": sc.fixed_split,
            },
            "pate": self.pate,
            "cate": self.cate,
            "summaries": [{**{k: (v.value if isinstance(v, EstimatorKind) else v)
                              for k, v in vars(s).items()}}
                          for s in self.summaries],
            "estimates": {k: list(v) for k, v in self.estimates.items()},
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)


def _covers(delta: float, var: float, target: float, n_clusters: int,
            level: float) -> bool:
    ci = confidence_interval(delta, var, n_clusters, level)
    return ci.lower <= target <= ci.upper


def run_study(scenario: SimScenario, options: FitOptions = FitOptions()) -> SimReport:
    """Run all replicates, fit every requested estimator, and summarize.

    A replicate that fails to fit one estimator is excluded for that
    estimator only; more than 5 percent failures for any estimator stops
    the study.
    """
    kinds = scenario.estimators
    r_tot = scenario.reps
    deltas = {k: np.full(r_tot, np.nan) for k in kinds}
    mvars = {k: np.full(r_tot, np.nan) for k in kinds}
    jvars = {k: np.full(r_tot, np.nan) for k in kinds} if scenario.jackknife else None
    failures = {k: 0 for k in kinds}

    # Variance components depend only on (trial, structure), so fits and
    # jackknife refits that share a structure reuse one REML per trial.
    mixed_structures = {k.structure for k in kinds if k.mixed}
    share_reml = options.vc is None and mixed_structures

    def fit_options_for(kind, trial, cache):
        if not (share_reml and kind.mixed):
            return options
        if kind.structure not in cache:
            cache[kind.structure] = estimate_variance_components(
                trial, kind.structure, max_iter=options.reml_max_iter)
        return FitOptions(vc=cache[kind.structure],
                          reml_max_iter=options.reml_max_iter)

    for r in range(r_tot):
        trial = generate_trial(scenario, r)
        subtrials = ([trial.drop_cluster(c.cluster_id) for c in trial.clusters]
                     if scenario.jackknife else [])
        cache: dict[CorrelationStructure, VarianceComponents] = {}
        sub_caches: list[dict] = [{} for _ in subtrials]
        for k in kinds:
            try:
                res = fit(trial, k, fit_options_for(k, trial, cache))
                deltas[k][r] = res.delta_hat
                mvars[k][r] = res.model_based_var
                if scenario.jackknife:
                    reps = np.array(
                        [fit(sub, k, fit_options_for(k, sub, sc)).delta_hat
                         for sub, sc in zip(subtrials, sub_caches)])
                    n_c = len(reps)
                    jvars[k][r] = ((n_c - 1) / n_c
                                   * float(np.sum((reps - reps.mean()) ** 2)))
            except EstimationError:
                failures[k] += 1
                deltas[k][r] = np.nan

    max_fail = max(failures.values())
    if max_fail > 0.05 * r_tot:
        worst = max(failures, key=failures.get)
        raise StudyError(
            f"{failures[worst]} of {r_tot} replicates failed for {worst.value}")

    pate = true_pate(scenario.mixture)
    cate = true_cate(scenario.mixture)
    level = scenario.ci_level
    n_c = scenario.n_clusters
    summaries = []
    estimates = {}
    for k in kinds:
        ok = np.isfinite(deltas[k])
        d = deltas[k][ok]
        mv = mvars[k][ok]
        n_ok = int(ok.sum())
        mean = float(d.mean())
        mc_var = float(d.var(ddof=1)) if n_ok > 1 else 0.0
        cov_m_p = float(np.mean([_covers(x, v, pate, n_c, level)
                                 for x, v in zip(d, mv)]))
        cov_m_c = float(np.mean([_covers(x, v, cate, n_c, level)
                                 for x, v in zip(d, mv)]))
        pow_m = float(np.mean([wald_test(x, v, n_c) < 1.0 - level
                               for x, v in zip(d, mv)]))
        s = EstimatorSummary(
            estimator=k, n_ok=n_ok, n_failures=failures[k],
            mean_estimate=mean, mc_variance=mc_var,
            rel_bias_pate_pct=100.0 * (mean - pate) / pate,
            rel_bias_cate_pct=100.0 * (mean - cate) / cate,
            rmse_pate=float(np.sqrt(np.mean((d - pate) ** 2))),
            rmse_cate=float(np.sqrt(np.mean((d - cate) ** 2))),
            mean_model_variance=float(mv.mean()),
            coverage_model_pate=cov_m_p, coverage_model_cate=cov_m_c,
            power_model=pow_m)
        if scenario.jackknife:
            jv = jvars[k][ok]
            s.mean_jackknife_variance = float(jv.mean())
            s.coverage_jackknife_pate = float(np.mean(
                [_covers(x, v, pate, n_c, level) for x, v in zip(d, jv)]))
            s.coverage_jackknife_cate = float(np.mean(
                [_covers(x, v, cate, n_c, level) for x, v in zip(d, jv)]))
            s.power_jackknife = float(np.mean(
                [wald_test(x, v, n_c) < 1.0 - level for x, v in zip(d, jv)]))
        summaries.append(s)
        estimates[k.value] = d.tolist()
    return SimReport(scenario=scenario, pate=pate, cate=cate,
                     summaries=summaries, estimates=estimates)
