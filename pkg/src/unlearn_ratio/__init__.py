"""Unlearning vs. retraining complexity: loss oracles, certified unlearners,
first-passage harness, closed-form regime boundaries and lemma checks."""

from .core import (
    DomainError,
    Estimator,
    ForgetSplit,
    PrivacyBudget,
    ProblemSpec,
    RunConfig,
    SensitivityMode,
    derive_kdp,
    make_problem,
)
from .harness import PhaseCell, RunRecord, measure_scratch, measure_unlearn, sweep_phase_diagram
from .losses import (
    ErmLoss,
    RademacherMixture,
    SyntheticExperimentalLoss,
    SyntheticQuadraticLoss,
    hard_instance_mixture,
)
from .optim import RuleKind, UpdateRule, run_iterative, tuned_constant_step
from .theory import RegimeLabel, RegimeParams, classify
from .unlearn import Sensitivity, UnlearnPlan, calibrate_noise, noise_and_finetune, noise_only_unlearn

__version__ = "0.1.0"
