"""Closed-form regime boundaries and time bounds for the unlearning complexity ratio.

All boundaries are stated up to the unspecified universal constants, which are
exposed through :class:`RegimeParams` (default 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .core import DomainError, ForgetSplit, ProblemSpec
from .unlearn import trivial_regime_excess


class RegimeLabel(str, Enum):
    TRIVIAL = "Trivial"
    EFFICIENT = "Efficient"
    INEFFICIENT = "Inefficient"
    UNCLASSIFIED = "Unclassified"
    LEARNING_TRIVIAL = "LearningTrivial"


@dataclass(frozen=True)
class RegimeParams:
    c_lower: float = 1.0
    gamma_eff: float = 0.5
    c_upper: float = 1.0

    def __post_init__(self):
        if not self.c_lower > 0 or not self.c_upper > 0:
            raise DomainError("universal constants must be positive")
        if not 0 < self.gamma_eff < 1:
            raise DomainError("gamma_eff must lie in (0, 1)")


trivial_boundary = trivial_regime_excess


def inefficient_boundary(spec: ProblemSpec, split: ForgetSplit, kdp: float, params: RegimeParams = RegimeParams()) -> float:
    return min(1.0, params.c_lower * split.rf_odds**2 * (1.0 + kdp**2)) * spec.e0


def efficient_threshold(spec: ProblemSpec, split: ForgetSplit, kdp: float, params: RegimeParams = RegimeParams()) -> float:
    return params.c_upper / params.gamma_eff * split.rf_odds**2 * (1.0 + spec.dim * kdp**2) * spec.e0


def classify(spec: ProblemSpec, split: ForgetSplit, e: float, kdp: float, params: RegimeParams = RegimeParams()) -> RegimeLabel:
    if not e > 0:
        raise DomainError("target excess must be positive")
    if e >= spec.e0:
        return RegimeLabel.LEARNING_TRIVIAL
    if e >= trivial_boundary(spec, split, kdp):
        return RegimeLabel.TRIVIAL
    if e < inefficient_boundary(spec, split, kdp, params):
        return RegimeLabel.INEFFICIENT
    if e >= efficient_threshold(spec, split, kdp, params):
        return RegimeLabel.EFFICIENT
    return RegimeLabel.UNCLASSIFIED


def scratch_time_upper(spec: ProblemSpec, e: float) -> float:
    """Averaged decaying-step SGD reaches ``e`` within ``2 L^2 / (mu e)`` steps."""
    if e >= spec.e0:
        return 0.0
    return 2.0 * spec.lipschitz**2 / (spec.mu * e)


def unlearn_time_upper(spec: ProblemSpec, split: ForgetSplit, kdp: float, e: float) -> float:
    """Noise-and-fine-tune with a tuned constant step: ``odds^2 (1 + d kdp^2) (e0/e)^2``."""
    if e >= spec.e0:
        return 0.0
    return split.rf_odds**2 * (1.0 + spec.dim * kdp**2) * (spec.e0 / e) ** 2


def finetune_excess_bound(spec: ProblemSpec, r1: float, kdp: float, horizon: int) -> float:
    """Excess after ``horizon`` tuned constant steps: ``L r1 sqrt(1 + d kdp^2) / sqrt(T)``."""
    return spec.lipschitz * r1 * math.sqrt(1.0 + spec.dim * kdp**2) / math.sqrt(horizon)


THEORY_COLUMNS = ("e", "kdp", "label", "trivial_boundary", "inefficient_boundary", "efficient_threshold")


def diagram_rows(spec: ProblemSpec, split: ForgetSplit, e_grid, kdp_grid, params: RegimeParams = RegimeParams()):
    """One row per ``(e, kdp)`` pair, e-major."""
    rows = []
    for e in e_grid:
        for k in kdp_grid:
            rows.append(
                {
                    "e": float(e),
                    "kdp": float(k),
                    "label": classify(spec, split, e, k, params).value,
                    "trivial_boundary": trivial_boundary(spec, split, k),
                    "inefficient_boundary": inefficient_boundary(spec, split, k, params),
                    "efficient_threshold": efficient_threshold(spec, split, k, params),
                }
            )
    return rows
