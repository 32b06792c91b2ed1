"""Iterative first-order runner with (t+1)-weighted iterate averaging."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .core import DomainError, ProblemSpec


class DivergenceError(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"iterate became non-finite at step {step}")
        self.step = step


class RuleKind(str, Enum):
    DECAYING_AVG_SCRATCH = "decaying_avg_scratch"
    DECAYING_AVG_FINETUNE = "decaying_avg_finetune"
    CONSTANT_STEP = "constant_step"
    # piecewise-constant schedule used for the real-data runs
    EPOCH_DECAY = "epoch_decay"


@dataclass(frozen=True)
class UpdateRule:
    kind: RuleKind = RuleKind.DECAYING_AVG_SCRATCH
    step_constant: float = 0.0
    decay: float = 0.6
    decay_every: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if self.step_constant < 0:
            raise DomainError("step_constant must be non-negative")

    def step_size(self, t: int, mu: float) -> float:
        """Step applied by update number ``t`` (0-based)."""
        if self.kind is RuleKind.DECAYING_AVG_SCRATCH:
            return 2.0 / (mu * (t + 2))
        if self.kind is RuleKind.DECAYING_AVG_FINETUNE:
            # 2 / (mu (k + 1)) with the fine-tune loop counter k = t + 1 starting at 1
            k = t + 1
            return 2.0 / (mu * (k + 1))
        if self.kind is RuleKind.CONSTANT_STEP:
            return self.step_constant
        return self.step_constant * self.decay ** (t // self.decay_every)

    @property
    def code(self) -> int:
        return {
            RuleKind.DECAYING_AVG_SCRATCH: 0,
            RuleKind.DECAYING_AVG_FINETUNE: 1,
            RuleKind.CONSTANT_STEP: 2,
            RuleKind.EPOCH_DECAY: 3,
        }[self.kind]


@dataclass
class IterState:
    theta: np.ndarray
    memory: np.ndarray
    weight: float
    step: int

    def averaged(self) -> np.ndarray:
        return averaged_iterate(self)


def averaged_iterate(state: IterState) -> np.ndarray:
    if state.weight <= 0:
        return state.theta.copy()
    return state.memory / state.weight


def project_ball(theta: np.ndarray, radius: float) -> np.ndarray:
    nrm = math.sqrt(float(theta @ theta))
    if nrm > radius:
        theta = theta * (radius / nrm)
    return theta


Observer = Callable[[int, np.ndarray], Optional[bool]]


def run_iterative(
    rule: UpdateRule,
    theta0,
    loss,
    steps: int,
    rng: np.random.Generator,
    observer: Observer | None = None,
    project: bool = True,
) -> IterState:
    """Run ``steps`` stochastic first-order updates from ``theta0``.

    Iterate ``theta_t`` enters the running average with weight ``t + 1``, so the
    average covers ``theta_0 .. theta_T``. The observer is called after every
    update with ``(t, averaged_iterate)``; returning ``True`` stops the run early.
    """
    if steps < 0:
        raise DomainError("steps must be >= 0")
    spec: ProblemSpec = loss.spec
    theta = np.array(theta0, dtype=float)
    if theta.shape != (spec.dim,):
        raise ValueError(f"theta0 has shape {theta.shape}, expected ({spec.dim},)")
    memory = theta.copy()
    weight = 1.0
    state = IterState(theta=theta, memory=memory, weight=weight, step=0)
    for t in range(steps):
        sample = loss.sample(rng)
        grad = loss.gradient(theta, sample)
        theta = theta - rule.step_size(t, spec.mu) * grad
        if project:
            theta = project_ball(theta, spec.radius)
        if not np.all(np.isfinite(theta)):
            raise DivergenceError(t + 1)
        memory += (t + 2) * theta
        weight += t + 2
        state.theta, state.weight, state.step = theta, weight, t + 1
        if observer is not None and observer(t + 1, memory / weight):
            break
    state.memory = memory
    return state


def tuned_constant_step(spec: ProblemSpec, r1: float, kdp: float, horizon: int) -> float:
    """Step minimising ``D^2/(2 eta T) + eta L^2/2`` for ``D^2 = (1 + d kdp^2) r1^2``."""
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    if r1 < 0 or kdp < 0:
        raise DomainError("r1 and kdp must be non-negative")
    return math.sqrt((1.0 + spec.dim * kdp**2) * r1**2 / (horizon * spec.lipschitz**2))
