"""Quality score, risk-gap diagnostics, and the coefficient random search.

The score for a candidate coefficient set is computed from its solved proxy
distributions on a validation set: the squared mean L2 distance to the
one-hot labels plus the mean squared (negative) entropy. The search draws
random coefficient sets per order, always injects the all-zero (KL) baseline
as trial 0, and returns the argmin, so the winner is never worse than KL on
the validation score.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, ProbVector, SearchFailureError, clamp_probs
from .losses import PerturbationConfig
from .proxy import SolverConfig, solve_proxy_rows
from .rng import derive_rng

# Candidate batches whose proxy-convergence fraction falls below this are
# discarded: unreliable proxies corrupt the score.
MIN_CONVERGED_FRACTION = 0.99


@dataclass(frozen=True)
class QualityScore:
    total: float
    distance_term: float
    entropy_term: float

    def __post_init__(self):
        if self.distance_term < 0 or self.entropy_term < 0:
            raise InvalidInputError("score terms must be >= 0")
        if abs(self.total - (self.distance_term + self.entropy_term)) > 1e-12:
            raise InvalidInputError("total must equal the sum of its terms")


@dataclass(frozen=True)
class SearchSpec:
    max_order: int = 3
    trials_per_order: int = 100
    coefficient_range: tuple[float, float] = (-1.0, 10.0)
    tie_classes: bool = False
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.coefficient_range
        if not lo < hi:
            raise InvalidInputError("coefficient_range lower must be < upper")
        if self.max_order < 1 or self.trials_per_order < 1:
            raise InvalidInputError("max_order and trials_per_order must be >= 1")


@dataclass(frozen=True)
class RiskGapTerms:
    l2_distance_mean: float
    entropy_sq_mean: float
    tvd_mean: float

    def __post_init__(self):
        if min(self.l2_distance_mean, self.entropy_sq_mean, self.tvd_mean) < 0:
            raise InvalidInputError("risk-gap terms must be >= 0")
        if self.tvd_mean > 1.0 + 1e-12:
            raise InvalidInputError("tvd_mean must be <= 1")


def _as_rows(vectors, name: str) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        rows = np.atleast_2d(vectors)
    else:
        vectors = list(vectors)
        if not vectors:
            raise InvalidInputError(f"{name} must be nonempty")
        rows = np.stack([
            v.values if isinstance(v, ProbVector) else np.asarray(v, dtype=float)
            for v in vectors
        ])
    if rows.size == 0:
        raise InvalidInputError(f"{name} must be nonempty")
    return rows


def _check_one_hot(labels: np.ndarray):
    if not (np.all(np.isin(labels, (0.0, 1.0)))
            and np.all(labels.sum(axis=1) == 1.0)):
        raise InvalidInputError("labels must be one-hot")


def neg_entropy_sq_rows(p: np.ndarray) -> np.ndarray:
    """(p^T log p)^2 per row, with 0*log 0 = 0."""
    logs = np.log(clamp_probs(p))
    inner = np.sum(np.where(p > 0.0, p * logs, 0.0), axis=1)
    return inner ** 2


def quality_score(proxies, labels) -> QualityScore:
    """Score a proxy batch against one-hot validation labels (lower is better)."""
    p = _as_rows(proxies, "proxies")
    y = _as_rows(labels, "labels")
    if p.shape != y.shape:
        raise InvalidInputError(
            f"proxies and labels shapes differ: {p.shape} vs {y.shape}"
        )
    _check_one_hot(y)
    distance = float(np.mean(np.linalg.norm(p - y, axis=1)) ** 2)
    ent = float(np.mean(neg_entropy_sq_rows(p)))
    return QualityScore(total=distance + ent, distance_term=distance,
                        entropy_term=ent)


def risk_gap_terms(model_probs, reference) -> RiskGapTerms:
    """Measurable risk-gap terms plus the TVD diagnostic.

    ``reference`` may be one-hot labels or closed-form posterior rows.
    """
    p = _as_rows(model_probs, "model_probs")
    ref = _as_rows(reference, "reference")
    if p.shape != ref.shape:
        raise InvalidInputError(
            f"model_probs and reference shapes differ: {p.shape} vs {ref.shape}"
        )
    return RiskGapTerms(
        l2_distance_mean=float(np.mean(np.linalg.norm(p - ref, axis=1))),
        entropy_sq_mean=float(np.mean(neg_entropy_sq_rows(p))),
        tvd_mean=float(np.mean(0.5 * np.sum(np.abs(p - ref), axis=1))),
    )


def _sample_config(rng, spec: SearchSpec, num_classes: int,
                   order: int) -> PerturbationConfig:
    lo, hi = spec.coefficient_range
    if spec.tie_classes:
        return PerturbationConfig.tied(rng.uniform(lo, hi, size=order),
                                       num_classes)
    return PerturbationConfig(order=order,
                              coefficients=rng.uniform(lo, hi,
                                                       size=(num_classes, order)))


@dataclass(frozen=True)
class SearchTrial:
    """One evaluated candidate from the search trajectory."""

    order: int
    trial: int
    config: PerturbationConfig
    score: QualityScore | None
    converged_fraction: float
    discarded: bool


def run_search(teacher_val, labels, spec: SearchSpec,
               solver: SolverConfig = SolverConfig()) -> list[SearchTrial]:
    """Evaluate every candidate and return the full trajectory.

    Trial 0 of every order is the all-zero baseline; trials 1..N_k are drawn
    uniformly from the coefficient range with per-trial seeds derived from
    (seed, order, trial), so results are order-independent and reproducible.
    """
    teachers = _as_rows(teacher_val, "teacher_val")
    y = _as_rows(labels, "labels")
    if teachers.shape != y.shape:
        raise InvalidInputError("teacher_val and labels must have equal shapes")
    _check_one_hot(y)
    num_classes = teachers.shape[1]

    trials = []
    for order in range(1, spec.max_order + 1):
        for k in range(spec.trials_per_order + 1):
            if k == 0:
                cfg = PerturbationConfig.zero(num_classes, order)
            else:
                rng = derive_rng(spec.seed, "coeff-search", order, k)
                cfg = _sample_config(rng, spec, num_classes, order)
            proxies, converged = solve_proxy_rows(teachers, cfg, solver)
            frac = float(np.mean(converged))
            discarded = frac < MIN_CONVERGED_FRACTION
            score = None if discarded else quality_score(proxies, y)
            trials.append(SearchTrial(order=order, trial=k, config=cfg,
                                      score=score, converged_fraction=frac,
                                      discarded=discarded))
    return trials


def search_coefficients(teacher_val, labels, spec: SearchSpec,
                        solver: SolverConfig = SolverConfig()):
    """Random coefficient search; returns (best config, best score).

    Ties break toward the lowest order, then the lowest trial index.
    """
    trials = run_search(teacher_val, labels, spec, solver)
    best = None
    for t in trials:
        if t.discarded:
            continue
        if best is None or t.score.total < best.score.total:
            best = t
    if best is None:
        raise SearchFailureError(
            f"all {len(trials)} candidates were discarded "
            f"(convergence below {MIN_CONVERGED_FRACTION})"
        )
    return best.config, best.score
