"""Seeded multinomial sampling of protocol outcomes and empirical bound audits.

Every trial draws from its own Philox stream keyed by ``(seed, trial)``, so
results do not depend on how trials are spread over threads.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import NamedTuple

import numpy as np

from .fisher import (
    LinearizedDistribution,
    classical_fisher,
    derived_outcome_values,
    finite_trial_bound,
    mle_estimate,
)
from .linalg import spectral_spread
from .protocols import (
    MultiRoundSpec,
    OutcomeDistribution,
    ProtocolSpec,
    run_feedback_distribution,
    run_multiround_distribution,
)

ESTIMATORS = ("mle", "observable_mean")
LINEAR_GUARD = 0.1
AUDIT_ALPHA = 1e-3


class LinearizationWarning(UserWarning):
    pass


def thread_count() -> int:
    """Worker cap from ``QMETRO_THREADS`` (default: CPU count)."""
    env = os.environ.get("QMETRO_THREADS")
    n = os.cpu_count() or 1
    if env:
        try:
            n = max(1, int(env))
        except ValueError:
            raise ValueError(f"QMETRO_THREADS must be a positive integer, got {env!r}") from None
    return n


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-based generator for one trial of one seed."""
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial,))))


class FrequencyTable(NamedTuple):
    labels: tuple
    counts: np.ndarray
    n: int

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n


def _probabilities(dist) -> tuple[tuple, np.ndarray]:
    if isinstance(dist, OutcomeDistribution):
        p = dist.probabilities
    elif isinstance(dist, LinearizedDistribution):
        p = dist.p0
    else:
        p = np.asarray(dist, dtype=float)
    labels = getattr(dist, "labels", None) or tuple(range(len(p)))
    p = np.asarray(p, dtype=float)
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("not a probability vector")
    p = np.clip(p, 0.0, None)
    return labels, p / p.sum()


def sample_outcomes(dist, n: int, seed: int, trial: int = 0) -> FrequencyTable:
    """Multinomial counts of ``n`` shots from ``dist`` (deterministic in ``seed, trial``)."""
    if n < 1:
        raise ValueError("need at least one shot")
    labels, p = _probabilities(dist)
    counts = trial_rng(seed, trial).multinomial(n, p)
    return FrequencyTable(labels, counts, n)


def _map_trials(fn, m: int, threads: int | None = None) -> list:
    threads = min(thread_count() if threads is None else threads, m)
    if threads <= 1:
        return [fn(i) for i in range(m)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(m)))


@dataclass(frozen=True, eq=False)
class ExperimentRun:
    seed: int
    b_true: float
    n_shots: int
    estimator: str
    estimates: np.ndarray
    counts: np.ndarray
    labels: tuple
    fisher_per_shot: float
    bounds: dict = field(default_factory=dict)
    regular: bool = True

    @property
    def repeats(self) -> int:
        return len(self.estimates)

    @property
    def estimate(self) -> float:
        return float(np.mean(self.estimates)) if self.informative else math.nan

    @property
    def informative(self) -> bool:
        return self.fisher_per_shot > 0

    @property
    def empirical_sd(self) -> float:
        if self.repeats < 2 or not self.informative:
            return 0.0 if self.informative else math.nan
        return float(np.std(self.estimates, ddof=1))

    def z_scores(self) -> dict:
        """``(sd - bound) / se`` per bound, using the spread of the sample sd."""
        if self.repeats < 2 or not self.informative:
            return {}
        se = sd_standard_error(self.estimates)
        return {k: (self.empirical_sd - v) / (v * se) for k, v in self.bounds.items() if math.isfinite(v)}

    def as_dict(self) -> dict:
        def fin(x):
            return None if x is None or not math.isfinite(x) else x

        return {
            "seed": self.seed,
            "b_true": self.b_true,
            "n_shots": self.n_shots,
            "repeats": self.repeats,
            "estimator": self.estimator,
            "estimate": fin(self.estimate),
            "empirical_sd": fin(self.empirical_sd),
            "fisher_per_shot": self.fisher_per_shot,
            "bounds": {k: fin(v) for k, v in self.bounds.items()},
            "z_scores": self.z_scores(),
            "regular": self.regular,
        }


def sd_standard_error(samples: np.ndarray) -> float:
    """Relative standard error of a sample standard deviation.

    ``sqrt((kurtosis - 1) / (4 M))``, which is ``1 / sqrt(2 M)`` for
    Gaussian samples; the sample kurtosis keeps skewed or discrete
    estimator distributions (few shots) honest.
    """
    x = np.asarray(samples, dtype=float)
    m = len(x)
    c = x - x.mean()
    var = np.mean(c**2)
    if var <= 0:
        return 1.0 / math.sqrt(2 * m)
    kurt = np.mean(c**4) / var**2
    return math.sqrt(max(kurt - 1.0, 2.0) / (4 * m))


def _sensing_scale(spec) -> float:
    protos = [spec] if isinstance(spec, ProtocolSpec) else \
        list(spec.policy.values()) + ([spec.fallback] if spec.fallback is not None else [])
    return max(p.tau * spectral_spread(p.hamiltonian) for p in protos)


def _distribution(spec, b: float) -> OutcomeDistribution:
    if isinstance(spec, MultiRoundSpec):
        return run_multiround_distribution(spec, b)
    return run_feedback_distribution(spec, b)


def run_experiment(spec: ProtocolSpec | MultiRoundSpec, b_true: float = 0.0, n: int | None = None,
                   seed: int = 0, estimator: str = "mle", repeats: int = 1, strict: bool = False,
                   guard: float = LINEAR_GUARD, threads: int | None = None) -> ExperimentRun:
    """Sample ``repeats`` independent experiments of ``n`` shots and estimate ``b`` in each.

    One shot is one run of ``spec`` (all rounds of a multi-round spec). The
    estimate uses the zero-field linearization; ``estimator`` picks the
    likelihood ratio or the mean of the derived outcome values, which agree.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    if isinstance(spec, ProtocolSpec) and n is None:
        n = spec.rounds
    n = 1 if n is None else int(n)
    if n < 1 or repeats < 1:
        raise ValueError("need n >= 1 and repeats >= 1")
    scale = _sensing_scale(spec)
    if abs(b_true) * scale > guard:
        warnings.warn(f"|b tau spread| = {abs(b_true) * scale:.3g} exceeds {guard}; linearized estimates are biased",
                      LinearizationWarning, stacklevel=2)
    dist = _distribution(spec, b_true)
    lin = dist.linearized()
    report = classical_fisher(lin, n, strict=strict)
    bounds = {}
    if report.informative:
        bounds["fisher"] = finite_trial_bound(lin, n)
    if scale > 0:
        per_shot = spec.rounds if isinstance(spec, MultiRoundSpec) else 1
        bounds["quantum"] = 1.0 / (scale * math.sqrt(n * per_shot))
    values = derived_outcome_values(lin) if report.informative else None

    def trial(i):
        table = sample_outcomes(dist, n, seed, i)
        freq = table.frequencies
        if not report.informative:
            est = math.nan
        elif estimator == "mle":
            est = mle_estimate(freq, lin)
        else:
            est = float(freq @ values)
        return table.counts, est

    out = _map_trials(trial, repeats, threads)
    return ExperimentRun(
        seed=seed,
        b_true=float(b_true),
        n_shots=n,
        estimator=estimator,
        estimates=np.array([e for _, e in out]),
        counts=np.array([c for c, _ in out]),
        labels=dist.labels,
        fisher_per_shot=report.fisher_per_shot,
        bounds=bounds,
        regular=report.regular,
    )


@dataclass(frozen=True)
class Audit:
    verdict: str  # PASS | FAIL
    z_scores: dict
    threshold: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def as_dict(self) -> dict:
        return {"verdict": self.verdict, "z_scores": self.z_scores, "threshold": self.threshold, "note": self.note}


def bound_audit(run: ExperimentRun, alpha: float = AUDIT_ALPHA) -> Audit:
    """PASS when the empirical spread is not significantly below any bound.

    A bound fails when its z-score is below the one-sided ``alpha``
    quantile. Runs without information pass as non-informative; runs with a
    single repeat cannot be audited and pass with a note.
    """
    crit = -NormalDist().inv_cdf(1 - alpha)
    if not run.informative:
        return Audit("PASS", {}, crit, "non-informative: infinite bound")
    if run.repeats < 2:
        return Audit("PASS", {}, crit, "single repeat: spread not estimable")
    z = run.z_scores()
    failed = [k for k, v in z.items() if v < crit]
    if failed:
        return Audit("FAIL", z, crit, "below bound: " + ", ".join(failed))
    return Audit("PASS", z, crit)

