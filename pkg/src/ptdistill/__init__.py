"""Perturbed distillation loss, proxy-teacher solver, and coefficient search."""

from .core import (
    ConfigurationError,
    DegenerateTeacherError,
    InvalidInputError,
    LogitVector,
    PROB_FLOOR,
    ProbVector,
    SearchFailureError,
    SolverDivergenceError,
    TrainingDivergenceError,
    entropy,
    softmax,
)
from .losses import (
    LossEvaluation,
    PerturbationConfig,
    focal_kd_loss,
    kl_loss,
    make_loss,
    pt_loss,
    pt_loss_grad,
    smoothed_kl_loss,
    temperature_kl_loss,
)
from .series import TruncatedLogSeries, maclaurin_log, truncation_bound
from .equivalence import (
    EquivalenceReport,
    focal_coefficients,
    ls_coefficients,
    verify_equivalence,
)
from .proxy import (
    ProxySolution,
    SolverConfig,
    solve_proxy_batch,
    solve_proxy_example,
)
from .selection import (
    QualityScore,
    RiskGapTerms,
    SearchSpec,
    quality_score,
    risk_gap_terms,
    search_coefficients,
)
from .data import GaussianMixtureSpec, LabeledDataset, generate, true_posterior
from .nn import MlpModel, TrainConfig
from .distill import (
    DistillationReport,
    SweepPoint,
    distill_student,
    sweep_proxy_teachers,
    train_teacher,
)

__version__ = "0.1.0"
