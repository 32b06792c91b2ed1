"""Gaussian-mechanism calibration and the noise / noise-and-fine-tune unlearners."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import DomainError, ForgetSplit, PrivacyBudget, ProblemSpec, SensitivityMode
from .optim import IterState, Observer, RuleKind, UpdateRule, run_iterative

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sensitivity:
    mode: SensitivityMode
    value: float

    def __post_init__(self):
        object.__setattr__(self, "mode", SensitivityMode(self.mode))
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise DomainError(f"sensitivity must be finite and non-negative, got {self.value!r}")

    @classmethod
    def theoretical(cls, spec: ProblemSpec, split: ForgetSplit) -> "Sensitivity":
        return cls(SensitivityMode.THEORETICAL, split.rf_odds * spec.lipschitz / spec.mu)

    @classmethod
    def measured(cls, full_opt, retain_opt) -> "Sensitivity":
        diff = np.asarray(full_opt, dtype=float) - np.asarray(retain_opt, dtype=float)
        return cls(SensitivityMode.MEASURED, float(np.linalg.norm(diff)))

    @classmethod
    def for_loss(cls, mode, loss, split: ForgetSplit) -> "Sensitivity":
        if SensitivityMode(mode) is SensitivityMode.MEASURED:
            try:
                return cls.measured(loss.full_optimum(), loss.retain_optimum())
            except (AttributeError, NotImplementedError):
                log.warning("optima unavailable; falling back to theoretical sensitivity")
        return cls.theoretical(loss.spec, split)


def calibrate_noise(budget: PrivacyBudget | float, sens: Sensitivity) -> float:
    """Standard deviation ``kdp * Delta``; ``budget`` may be a raw kdp value."""
    kdp = budget.kdp if isinstance(budget, PrivacyBudget) else float(budget)
    if kdp < 0:
        raise DomainError("kdp must be non-negative")
    return kdp * sens.value


@dataclass(frozen=True)
class UnlearnPlan:
    kdp: float
    sensitivity: Sensitivity
    finetune_steps: int = 0
    rule: UpdateRule = field(default_factory=lambda: UpdateRule(RuleKind.DECAYING_AVG_FINETUNE))
    noise_sigma: float = field(init=False)

    def __post_init__(self):
        if self.finetune_steps < 0:
            raise DomainError("finetune_steps must be >= 0")
        object.__setattr__(self, "noise_sigma", calibrate_noise(self.kdp, self.sensitivity))

    @classmethod
    def from_budget(cls, budget: PrivacyBudget, sensitivity: Sensitivity, **kw) -> "UnlearnPlan":
        if budget.delta < 1e-8 or budget.delta > budget.epsilon:
            log.warning(
                "delta=%g outside [1e-8, epsilon=%g]: the lower-bound regime statement does not apply",
                budget.delta,
                budget.epsilon,
            )
        return cls(kdp=budget.kdp, sensitivity=sensitivity, **kw)


def mechanism_rng(rng: np.random.Generator) -> np.random.Generator:
    return rng.spawn(1)[0]


def noise_only_unlearn(theta_star, plan: UnlearnPlan, rng: np.random.Generator) -> np.ndarray:
    theta_star = np.asarray(theta_star, dtype=float)
    z = rng.standard_normal(theta_star.shape[0])
    return theta_star + plan.noise_sigma * z


def noise_and_finetune(
    theta_star,
    loss,
    plan: UnlearnPlan,
    rng: np.random.Generator,
    observer: Observer | None = None,
    project: bool = True,
) -> IterState:
    """Perturb ``theta_star`` once, then fine-tune on retain samples only.

    The mechanism noise comes from a child stream spawned off ``rng``, so the
    data draws of the fine-tune phase do not depend on the noise level.
    """
    theta0 = noise_only_unlearn(theta_star, plan, mechanism_rng(rng))
    return run_iterative(plan.rule, theta0, loss, plan.finetune_steps, rng, observer, project)


def trivial_regime_excess(spec: ProblemSpec, split: ForgetSplit, kdp: float) -> float:
    """Target excess above which perturbing the full optimum alone suffices."""
    odds = split.rf_odds
    return odds * (odds + math.sqrt(spec.dim) * kdp) * spec.e0


def noise_only_expected_excess(loss, sigma: float) -> float:
    """Exact ``E[L_r(theta* + sigma z)] - L_r*`` on the quadratic hard instance."""
    from .losses import SyntheticQuadraticLoss

    if not isinstance(loss, SyntheticQuadraticLoss):
        raise TypeError("closed form only available for the quadratic instance")
    gap = loss.full_optimum() - loss.retain_optimum()
    return 0.5 * loss.spec.mu * (loss.dim * sigma**2 + float(gap @ gap))
