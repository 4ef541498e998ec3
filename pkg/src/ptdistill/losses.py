"""Distillation losses and their analytic gradients w.r.t. student logits.

Per-example functions take ``ProbVector``/``LogitVector`` values; the
``*_rows`` helpers operate on (N, C) arrays and back the training loops.
Batch risks are arithmetic means computed by callers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    InvalidInputError,
    LogitVector,
    ProbVector,
    clamp_probs,
    entropy_rows,
    softmax_rows,
)

GRAD_SUM_ATOL = 1e-9


@dataclass(frozen=True)
class PerturbationConfig:
    """Perturbation order M and per-class coefficient matrix (C x M).

    With ``tie_classes`` the matrix was broadcast from a single shared row.
    M = 0 carries an empty matrix and makes the perturbed loss collapse to KL.
    """

    order: int
    coefficients: np.ndarray
    tie_classes: bool = False

    def __post_init__(self):
        if self.order < 0:
            raise InvalidInputError("order must be >= 0")
        arr = np.asarray(self.coefficients, dtype=float)
        if arr.ndim != 2:
            raise InvalidInputError(
                f"coefficients must be a (C, M) matrix, got shape {arr.shape}"
            )
        if arr.shape[1] != self.order:
            raise InvalidInputError(
                f"coefficients have {arr.shape[1]} columns but order is {self.order}"
            )
        if arr.size and not np.all(np.isfinite(arr)):
            raise InvalidInputError("coefficients must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "coefficients", arr)

    @property
    def num_classes(self) -> int:
        return self.coefficients.shape[0]

    @classmethod
    def zero(cls, num_classes: int, order: int = 0) -> "PerturbationConfig":
        """The KL-equivalent configuration (all coefficients zero)."""
        return cls(order=order, coefficients=np.zeros((num_classes, order)))

    @classmethod
    def tied(cls, row, num_classes: int) -> "PerturbationConfig":
        """Broadcast one row of M coefficients to all classes."""
        row = np.asarray(row, dtype=float).reshape(-1)
        matrix = np.tile(row, (num_classes, 1))
        return cls(order=row.size, coefficients=matrix, tie_classes=True)


@dataclass(frozen=True)
class LossEvaluation:
    """A loss value with an optional d(loss)/d(student-logit) vector."""

    value: float
    gradient: np.ndarray | None = None

    def __post_init__(self):
        if self.gradient is not None:
            g = np.asarray(self.gradient, dtype=float)
            if abs(g.sum()) > GRAD_SUM_ATOL:
                raise InvalidInputError(
                    f"gradient must sum to 0 (softmax null direction), got {g.sum()!r}"
                )
            g = g.copy()
            g.setflags(write=False)
            object.__setattr__(self, "gradient", g)


def _check_same_classes(a: np.ndarray, b: np.ndarray):
    if a.shape[-1] != b.shape[-1]:
        raise InvalidInputError(
            f"class-count mismatch: {a.shape[-1]} vs {b.shape[-1]}"
        )


def kl_rows(teacher: np.ndarray, student: np.ndarray) -> np.ndarray:
    """Row-wise KL(teacher || student) in nats."""
    teacher = np.asarray(teacher, dtype=float)
    student = np.asarray(student, dtype=float)
    _check_same_classes(teacher, student)
    log_ratio = np.log(clamp_probs(teacher)) - np.log(clamp_probs(student))
    terms = np.where(teacher > 0.0, teacher * log_ratio, 0.0)
    return np.sum(terms, axis=-1)


def _perturbation_rows(teacher: np.ndarray, student: np.ndarray,
                       cfg: PerturbationConfig) -> np.ndarray:
    """Row-wise sum_c t_c sum_m eps_{c,m} (1 - s_c)^m."""
    if cfg.order == 0:
        return np.zeros(np.asarray(teacher).shape[:-1])
    if cfg.num_classes != teacher.shape[-1]:
        raise InvalidInputError(
            f"coefficients are for {cfg.num_classes} classes, inputs have "
            f"{teacher.shape[-1]}"
        )
    u = 1.0 - student                               # (..., C)
    # powers[..., c, m] = u_c^(m+1)
    powers = u[..., :, None] ** np.arange(1, cfg.order + 1)
    return np.sum(teacher[..., :, None] * cfg.coefficients * powers, axis=(-2, -1))


def pt_rows(teacher: np.ndarray, student: np.ndarray,
            cfg: PerturbationConfig) -> np.ndarray:
    """Row-wise perturbed distillation loss (KL plus the polynomial shift)."""
    return kl_rows(teacher, student) + _perturbation_rows(teacher, student, cfg)


def _perturbation_slope(teacher: np.ndarray, student: np.ndarray,
                        cfg: PerturbationConfig) -> np.ndarray:
    """s_c = t_c sum_m m eps_{c,m} (1 - s_c)^{m-1}, row-wise."""
    if cfg.order == 0:
        return np.zeros_like(np.asarray(teacher, dtype=float))
    u = 1.0 - student
    m = np.arange(1, cfg.order + 1)
    powers = u[..., :, None] ** (m - 1)
    return teacher * np.sum(m * cfg.coefficients * powers, axis=-1)


def pt_grad_rows(teacher: np.ndarray, student_logits: np.ndarray,
                 cfg: PerturbationConfig):
    """Row-wise PT loss values and exact gradients w.r.t. student logits.

    The KL part contributes (p^s - p^t); the perturbation part folds the
    softmax Jacobian in analytically.
    """
    teacher = np.asarray(teacher, dtype=float)
    student_logits = np.asarray(student_logits, dtype=float)
    _check_same_classes(teacher, student_logits)
    q = softmax_rows(student_logits)
    values = pt_rows(teacher, q, cfg)
    s = _perturbation_slope(teacher, q, cfg)
    qs = np.sum(q * s, axis=-1, keepdims=True)
    grads = (q - teacher) - (q * s - q * qs)
    return values, grads


def kl_loss(teacher: ProbVector, student: ProbVector) -> float:
    """KL(teacher || student); >= 0, zero iff equal up to the clamp."""
    return float(kl_rows(teacher.values, student.values))


def pt_loss(teacher: ProbVector, student: ProbVector,
            cfg: PerturbationConfig) -> float:
    """KL plus the order-M polynomial perturbation; equals KL when eps = 0."""
    if cfg.order > 0 and cfg.num_classes != teacher.num_classes:
        raise InvalidInputError("coefficient matrix does not match class count")
    return float(pt_rows(teacher.values, student.values, cfg))


def pt_loss_grad(teacher: ProbVector, student_logits: LogitVector,
                 cfg: PerturbationConfig) -> LossEvaluation:
    """PT loss at softmax(student_logits) with its analytic logit gradient."""
    values, grads = pt_grad_rows(teacher.values, student_logits.values, cfg)
    return LossEvaluation(value=float(values), gradient=grads)


def temperature_kl_loss(teacher_logits: LogitVector,
                        student_logits: LogitVector, tau: float) -> float:
    """KL between temperature-scaled softmaxes of the two logit vectors."""
    if tau <= 0:
        raise InvalidInputError(f"tau must be > 0, got {tau!r}")
    t = softmax_rows(teacher_logits.values / tau)
    s = softmax_rows(student_logits.values / tau)
    return float(kl_rows(t, s))


def smooth_rows(teacher: np.ndarray, delta: float) -> np.ndarray:
    """Mix a distribution with uniform: (1 - delta) p + delta / C."""
    teacher = np.asarray(teacher, dtype=float)
    return (1.0 - delta) * teacher + delta / teacher.shape[-1]


def smoothed_kl_loss(teacher: ProbVector, student: ProbVector,
                     delta: float) -> float:
    """KL loss with the teacher smoothed toward uniform by delta."""
    if not 0.0 <= delta < 1.0:
        raise InvalidInputError(f"delta must lie in [0, 1), got {delta!r}")
    return float(kl_rows(smooth_rows(teacher.values, delta), student.values))


def focal_rows(teacher: np.ndarray, student: np.ndarray,
               gamma: float) -> np.ndarray:
    """Row-wise focal distillation loss: -H(t) + sum_c t_c (1-s_c)^g (-log s_c)."""
    teacher = np.asarray(teacher, dtype=float)
    student = np.asarray(student, dtype=float)
    _check_same_classes(teacher, student)
    neg_log = -np.log(clamp_probs(student))
    modulated = np.sum(teacher * (1.0 - student) ** gamma * neg_log, axis=-1)
    return -entropy_rows(teacher) + modulated


def focal_kd_loss(teacher: ProbVector, student: ProbVector,
                  gamma: float) -> float:
    """Focal distillation loss; gamma = 0 recovers the KL loss."""
    if gamma < 0:
        raise InvalidInputError(f"gamma must be >= 0, got {gamma!r}")
    return float(focal_rows(teacher.values, student.values, gamma))


# ---------------------------------------------------------------------------
# Batched training losses (value per example + gradient w.r.t. student logits)
# ---------------------------------------------------------------------------

class TrainingLoss:
    """A named per-example loss with analytic logit gradients for training."""

    name = "base"

    def values_and_grads(self, targets: np.ndarray, logits: np.ndarray):
        raise NotImplementedError


class CrossEntropyLoss(TrainingLoss):
    """One-hot cross-entropy; targets are one-hot rows."""

    name = "cross_entropy"

    def values_and_grads(self, targets, logits):
        q = softmax_rows(logits)
        values = -np.sum(targets * np.log(clamp_probs(q)), axis=-1)
        return values, q - targets


class KLLoss(TrainingLoss):
    """KL(targets || softmax(logits)); targets are probability rows."""

    name = "kl"

    def values_and_grads(self, targets, logits):
        q = softmax_rows(logits)
        return kl_rows(targets, q), q - targets


class PTLoss(TrainingLoss):
    """Perturbed distillation loss with a fixed coefficient configuration."""

    name = "pt"

    def __init__(self, cfg: PerturbationConfig):
        self.cfg = cfg

    def values_and_grads(self, targets, logits):
        return pt_grad_rows(targets, logits, self.cfg)


class TemperatureKLLoss(TrainingLoss):
    """KL between temperature-scaled softmaxes; targets are teacher logits."""

    name = "temperature"

    def __init__(self, tau: float):
        if tau <= 0:
            raise InvalidInputError(f"tau must be > 0, got {tau!r}")
        self.tau = tau

    def values_and_grads(self, targets, logits):
        t = softmax_rows(np.asarray(targets, dtype=float) / self.tau)
        q = softmax_rows(np.asarray(logits, dtype=float) / self.tau)
        return kl_rows(t, q), (q - t) / self.tau


class SmoothedKLLoss(TrainingLoss):
    """KL loss against targets smoothed toward uniform by delta."""

    name = "label_smoothing"

    def __init__(self, delta: float):
        if not 0.0 <= delta < 1.0:
            raise InvalidInputError(f"delta must lie in [0, 1), got {delta!r}")
        self.delta = delta

    def values_and_grads(self, targets, logits):
        smoothed = smooth_rows(targets, self.delta)
        q = softmax_rows(logits)
        return kl_rows(smoothed, q), q - smoothed


class FocalKDLoss(TrainingLoss):
    """Focal distillation loss with exact gradients through softmax."""

    name = "focal"

    def __init__(self, gamma: float):
        if gamma < 0:
            raise InvalidInputError(f"gamma must be >= 0, got {gamma!r}")
        self.gamma = gamma

    def values_and_grads(self, targets, logits):
        t = np.asarray(targets, dtype=float)
        q = softmax_rows(logits)
        values = focal_rows(t, q, self.gamma)
        qc = clamp_probs(q)
        u = 1.0 - q
        # dL/dq_c, then chain through the softmax Jacobian.
        if self.gamma == 0.0:
            dldq = -t / qc
        else:
            uc = clamp_probs(u)
            dldq = t * (self.gamma * uc ** (self.gamma - 1.0) * np.log(qc)
                        - u ** self.gamma / qc)
        inner = np.sum(dldq * q, axis=-1, keepdims=True)
        grads = q * (dldq - inner)
        return values, grads


def make_loss(name: str, **params) -> TrainingLoss:
    """Factory for the training losses by their CLI/report names."""
    if name in ("cross_entropy", "onehot"):
        return CrossEntropyLoss()
    if name == "kl":
        return KLLoss()
    if name == "pt":
        return PTLoss(params["cfg"])
    if name in ("temperature", "temp"):
        return TemperatureKLLoss(params["tau"])
    if name in ("label_smoothing", "ls"):
        return SmoothedKLLoss(params["delta"])
    if name == "focal":
        return FocalKDLoss(params["gamma"])
    raise InvalidInputError(f"unknown loss name {name!r}")
