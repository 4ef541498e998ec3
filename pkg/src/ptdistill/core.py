"""Probability/logit primitives shared by every other module.

All distributions are represented in natural-log units (nats). Probabilities
are clamped to ``PROB_FLOOR`` before any logarithm so degenerate entries never
produce -inf.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Single shared clamp applied to probabilities before any log.
PROB_FLOOR = 1e-12
# Absolute tolerance for "sums to one" simplex checks.
SIMPLEX_ATOL = 1e-9


class InvalidInputError(ValueError):
    """An argument violates a documented precondition."""


class ConfigurationError(ValueError):
    """A configuration is internally inconsistent or insufficient."""


class DegenerateTeacherError(InvalidInputError):
    """A teacher probability sits at the clamp floor where a mapping divides by it."""


class SolverDivergenceError(RuntimeError):
    """A nonlinear solve produced non-finite state."""


class SearchFailureError(RuntimeError):
    """Every candidate in a coefficient search was discarded."""


class TrainingDivergenceError(RuntimeError):
    """Training produced a non-finite loss or parameter."""


def _as_1d_float(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ProbVector:
    """A point on the C-class probability simplex (C >= 2)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_1d_float(self.values, "ProbVector.values")
        if arr.size < 2:
            raise InvalidInputError("ProbVector needs at least 2 classes")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("ProbVector entries must be finite")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise InvalidInputError("ProbVector entries must lie in [0, 1]")
        if abs(arr.sum() - 1.0) > SIMPLEX_ATOL:
            raise InvalidInputError(
                f"ProbVector entries must sum to 1 (got {arr.sum()!r})"
            )
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def num_classes(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class LogitVector:
    """A vector of finite log-odds; shift-invariant under softmax."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_1d_float(self.values, "LogitVector.values")
        if arr.size < 2:
            raise InvalidInputError("LogitVector needs at least 2 classes")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("LogitVector entries must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def num_classes(self) -> int:
        return self.values.size


def clamp_probs(p: np.ndarray) -> np.ndarray:
    """Clamp probabilities to [PROB_FLOOR, 1] ahead of a log."""
    return np.clip(p, PROB_FLOOR, 1.0)


def softmax_rows(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax with the max-subtraction trick (works on 1-d too)."""
    z = np.asarray(z, dtype=float)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def entropy_rows(p: np.ndarray) -> np.ndarray:
    """Row-wise Shannon entropy in nats with the 0*log 0 = 0 convention."""
    p = np.asarray(p, dtype=float)
    logs = np.log(clamp_probs(p))
    return -np.sum(np.where(p > 0.0, p * logs, 0.0), axis=-1)


def softmax(z: LogitVector) -> ProbVector:
    """Map logits to the simplex; stable for arbitrarily large finite entries."""
    return ProbVector(softmax_rows(z.values))


def entropy(p: ProbVector) -> float:
    """Entropy of a distribution in nats; always in [0, ln C]."""
    return float(entropy_rows(p.values))
