"""Truncated power-series machinery for log on (0, 1].

The natural log admits the expansion log(x) = -sum_{m>=1} (1-x)^m / m,
convergent for x in (0, 2). Only (0, 1] is needed here because the series
is evaluated at (clamped) probabilities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError


@dataclass(frozen=True)
class TruncatedLogSeries:
    """A truncation order plus optional per-order coefficient perturbations."""

    order: int
    perturbations: np.ndarray | None = None

    def __post_init__(self):
        if self.order < 1:
            raise InvalidInputError("order must be >= 1")
        if self.perturbations is not None:
            arr = np.asarray(self.perturbations, dtype=float)
            if arr.shape != (self.order,):
                raise InvalidInputError(
                    f"perturbations must have length {self.order}, got {arr.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError("perturbations must be finite")
            object.__setattr__(self, "perturbations", arr)


def _check_domain(x: float) -> float:
    x = float(x)
    if not np.isfinite(x) or x <= 0.0 or x > 1.0:
        raise InvalidInputError(f"x must lie in (0, 1], got {x!r}")
    return x


def maclaurin_log(x: float, order: int) -> float:
    """Order-M truncation of log(x), accumulated highest-order first.

    Returns -sum_{m=1..M} (1-x)^m / m via Horner evaluation in u = 1-x,
    which keeps rounding growth bounded for large M.
    """
    x = _check_domain(x)
    if order < 1:
        raise InvalidInputError("order must be >= 1")
    u = 1.0 - x
    acc = 0.0
    for m in range(order, 0, -1):
        acc = acc * u + 1.0 / m
    return -u * acc


def truncation_bound(x: float, order: int) -> float:
    """Upper bound on |log x - maclaurin_log(x, M)|.

    The dropped tail sum_{m>M} u^m/m is positive and dominated by the
    geometric tail u^{M+1} / ((M+1)(1-u)) with u = 1-x.
    """
    x = _check_domain(x)
    if order < 1:
        raise InvalidInputError("order must be >= 1")
    u = 1.0 - x
    return u ** (order + 1) / ((order + 1) * x)
