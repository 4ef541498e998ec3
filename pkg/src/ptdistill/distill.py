"""End-to-end pipelines: teacher training, distillation, and sweeps.

The student never sees training labels: teacher outputs are computed once
over the train-split inputs and frozen as distillation targets. For the
perturbed loss the coefficient search runs on the validation split first.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .core import InvalidInputError, softmax_rows
from .data import LabeledDataset, true_posterior_rows
from .losses import PerturbationConfig, make_loss
from .nn import MlpModel, TrainConfig
from .proxy import SolverConfig, solve_proxy_rows
from .selection import (
    RiskGapTerms,
    SearchSpec,
    risk_gap_terms,
    search_coefficients,
)

METHODS = ("kl", "pt", "temperature", "label_smoothing", "focal", "onehot")


@dataclass(frozen=True)
class DistillationReport:
    method: str
    student_test_accuracy: float
    teacher_vs_truth: RiskGapTerms | None
    teacher_vs_labels: RiskGapTerms
    chosen_config: dict
    seeds: dict
    teacher_validation_accuracy: float
    student_history: list = field(default_factory=list)

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}")
        if not 0.0 <= self.student_test_accuracy <= 1.0:
            raise InvalidInputError("accuracy must lie in [0, 1]")

    def to_dict(self) -> dict:
        def terms(t):
            return None if t is None else {
                "l2_distance_mean": t.l2_distance_mean,
                "entropy_sq_mean": t.entropy_sq_mean,
                "tvd_mean": t.tvd_mean,
            }
        return {
            "method": self.method,
            "student_test_accuracy": self.student_test_accuracy,
            "teacher_vs_truth": terms(self.teacher_vs_truth),
            "teacher_vs_labels": terms(self.teacher_vs_labels),
            "chosen_config": self.chosen_config,
            "seeds": self.seeds,
            "teacher_validation_accuracy": self.teacher_validation_accuracy,
        }


def teacher_probs(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    return softmax_rows(nn.forward_rows(model, inputs))


def train_teacher(data: LabeledDataset, arch, tc: TrainConfig):
    """One-hot cross-entropy teacher; returns (model, validation accuracy)."""
    x_train, y_train = data.split("train")
    if x_train.shape[0] == 0:
        raise InvalidInputError("empty train split")
    model = nn.init(arch, tc.seed)
    model, _ = nn.train(model, x_train, y_train, make_loss("cross_entropy"), tc)
    x_val, y_val = data.split("validation")
    val_acc = nn.accuracy(model, x_val, y_val) if x_val.shape[0] else float("nan")
    return model, val_acc


def _teacher_diagnostics(teacher: MlpModel, data: LabeledDataset):
    x_val, y_val = data.split("validation")
    probs = teacher_probs(teacher, x_val)
    vs_labels = risk_gap_terms(probs, y_val)
    vs_truth = None
    if data.spec is not None:
        vs_truth = risk_gap_terms(probs, true_posterior_rows(data.spec, x_val))
    return vs_labels, vs_truth


def _train_student(teacher: MlpModel, data: LabeledDataset, loss,
                   tc: TrainConfig, use_logits: bool = False):
    x_train, _ = data.split("train")
    if use_logits:
        targets = nn.forward_rows(teacher, x_train)
    else:
        targets = teacher_probs(teacher, x_train)
    student = nn.init(teacher.layer_dims, tc.seed)
    student, history = nn.train(student, x_train, targets, loss, tc)
    return student, history


def distill_student(teacher: MlpModel, data: LabeledDataset, method: str,
                    tc: TrainConfig, params: dict | None = None,
                    search_spec: SearchSpec | None = None,
                    solver: SolverConfig = SolverConfig()) -> DistillationReport:
    """Distill one student under the chosen loss and report diagnostics.

    ``method`` is one of kl / pt / temperature / label_smoothing / focal /
    onehot. For pt the coefficient search runs on the validation split and
    the winning configuration lands in ``chosen_config``.
    """
    params = dict(params or {})
    if method not in METHODS:
        raise InvalidInputError(f"unknown method {method!r}")

    chosen: dict = {"method": method, **params}
    if method == "onehot":
        x_train, y_train = data.split("train")
        student = nn.init(teacher.layer_dims, tc.seed)
        student, history = nn.train(student, x_train, y_train,
                                    make_loss("cross_entropy"), tc)
    elif method == "kl":
        student, history = _train_student(teacher, data, make_loss("kl"), tc)
    elif method == "pt":
        if "cfg" in params:
            cfg = params["cfg"]
        else:
            if search_spec is None:
                raise InvalidInputError(
                    "method 'pt' needs either a fixed cfg or a SearchSpec"
                )
            x_val, y_val = data.split("validation")
            cfg, score = search_coefficients(
                teacher_probs(teacher, x_val), y_val, search_spec, solver)
            chosen["search_score"] = {
                "total": score.total,
                "distance_term": score.distance_term,
                "entropy_term": score.entropy_term,
            }
        chosen["order"] = cfg.order
        chosen["coefficients"] = cfg.coefficients.tolist()
        chosen["tie_classes"] = cfg.tie_classes
        chosen.pop("cfg", None)
        student, history = _train_student(teacher, data,
                                          make_loss("pt", cfg=cfg), tc)
    elif method == "temperature":
        loss = make_loss("temperature", tau=params["tau"])
        student, history = _train_student(teacher, data, loss, tc,
                                          use_logits=True)
    elif method == "label_smoothing":
        loss = make_loss("label_smoothing", delta=params["delta"])
        student, history = _train_student(teacher, data, loss, tc)
    else:  # focal
        loss = make_loss("focal", gamma=params["gamma"])
        student, history = _train_student(teacher, data, loss, tc)

    x_test, y_test = data.split("test")
    test_acc = nn.accuracy(student, x_test, y_test)
    vs_labels, vs_truth = _teacher_diagnostics(teacher, data)
    x_val, y_val = data.split("validation")
    teacher_val_acc = nn.accuracy(teacher, x_val, y_val)
    seeds = {
        "teacher_init": teacher.seed,
        "student_init": tc.seed,
        "train": tc.seed,
        "data": data.spec.seed if data.spec else None,
    }
    if search_spec is not None:
        seeds["search"] = search_spec.seed
    return DistillationReport(
        method=method,
        student_test_accuracy=test_acc,
        teacher_vs_truth=vs_truth,
        teacher_vs_labels=vs_labels,
        chosen_config=chosen,
        seeds=seeds,
        teacher_validation_accuracy=teacher_val_acc,
        student_history=history,
    )


@dataclass(frozen=True)
class SweepPoint:
    """One proxy-teacher configuration paired with its distilled student."""

    l2_distance_to_truth: float
    tvd_to_truth: float
    student_test_accuracy: float
    converged_fraction: float


def sweep_proxy_teachers(teacher: MlpModel, data: LabeledDataset,
                         configs: list[PerturbationConfig], tc: TrainConfig,
                         solver: SolverConfig = SolverConfig()) -> list[SweepPoint]:
    """Pair each configuration's proxy-to-truth distance with student accuracy.

    Distances are measured on the validation split against the closed-form
    posterior; ordering of the input configurations is preserved.
    """
    if len(configs) < 2:
        raise InvalidInputError("need at least 2 configurations to sweep")
    if data.spec is None:
        raise InvalidInputError("sweep needs a dataset with a generating spec")
    x_val, _ = data.split("validation")
    probs_val = teacher_probs(teacher, x_val)
    truth = true_posterior_rows(data.spec, x_val)
    x_test, y_test = data.split("test")

    points = []
    for cfg in configs:
        proxies, converged = solve_proxy_rows(probs_val, cfg, solver)
        terms = risk_gap_terms(proxies, truth)
        student, _ = _train_student(teacher, data, make_loss("pt", cfg=cfg), tc)
        points.append(SweepPoint(
            l2_distance_to_truth=terms.l2_distance_mean,
            tvd_to_truth=terms.tvd_mean,
            student_test_accuracy=nn.accuracy(student, x_test, y_test),
            converged_fraction=float(np.mean(converged)),
        ))
    return points
