"""Problem constants, privacy budget and run configuration shared by every module."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the mathematical domain of an operation."""


def derive_kdp(epsilon: float, delta: float) -> float:
    """Gaussian-mechanism strength ``sqrt(2 ln(1.25/delta)) / epsilon``."""
    if not epsilon > 0 or not math.isfinite(epsilon):
        raise DomainError(f"epsilon must be a positive finite number, got {epsilon!r}")
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta!r}")
    return math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


@dataclass(frozen=True)
class ProblemSpec:
    """Strong convexity ``mu``, Lipschitz constant ``lipschitz`` and dimension ``dim``.

    ``radius = L / (2 mu)`` is the ball the regularity assumptions hold on, and
    ``e0 = L^2 / (8 mu)`` is the excess risk of the zero model.
    """

    mu: float
    lipschitz: float
    dim: int
    radius: float = field(init=False)
    e0: float = field(init=False)

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise DomainError(f"mu must be positive, got {self.mu!r}")
        if not (self.lipschitz > 0 and math.isfinite(self.lipschitz)):
            raise DomainError(f"lipschitz must be positive, got {self.lipschitz!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError(f"dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "radius", self.lipschitz / (2.0 * self.mu))
        object.__setattr__(self, "e0", self.lipschitz**2 / (8.0 * self.mu))


def make_problem(mu: float, lipschitz: float, dim: int) -> ProblemSpec:
    return ProblemSpec(mu=mu, lipschitz=lipschitz, dim=dim)


@dataclass(frozen=True)
class ForgetSplit:
    rf: float
    rf_odds: float = field(init=False)

    def __post_init__(self):
        if not 0 <= self.rf < 1:
            raise DomainError(f"forget fraction must lie in [0, 1), got {self.rf!r}")
        object.__setattr__(self, "rf_odds", self.rf / (1.0 - self.rf))


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float
    kdp: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "kdp", derive_kdp(self.epsilon, self.delta))

    @classmethod
    def from_kdp(cls, kdp: float, delta: float = 1e-5) -> "PrivacyBudget":
        """Budget whose epsilon is chosen so that the derived constant equals ``kdp``."""
        if not kdp > 0:
            raise DomainError(f"kdp must be positive, got {kdp!r}")
        return cls(epsilon=math.sqrt(2.0 * math.log(1.25 / delta)) / kdp, delta=delta)


def as_param_vector(theta, dim: int) -> np.ndarray:
    """Validate and copy a parameter vector of length ``dim``."""
    arr = np.array(theta, dtype=float).reshape(-1)
    if arr.shape[0] != dim:
        raise ValueError(f"parameter vector has length {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter vector has non-finite entries")
    return arr


class SensitivityMode(str, Enum):
    THEORETICAL = "theoretical"
    MEASURED = "measured"


class Estimator(str, Enum):
    # mean over repetitions of each run's own first-passage step
    PER_RUN = "per_run"
    # first step at which the repetition-averaged excess drops below e
    EXPECTED = "expected"


def log_grid(lo: float, hi: float, num: int) -> tuple[float, ...]:
    return tuple(float(x) for x in np.logspace(math.log10(lo), math.log10(hi), num))


def default_horizons(num: int = 13, hi: float = 1e6) -> tuple[int, ...]:
    """Log-spaced horizons between 1 and ``hi``, deduplicated after rounding."""
    raw = np.logspace(0.0, math.log10(hi), num)
    out: list[int] = []
    for x in raw:
        t = max(1, int(round(x)))
        if not out or t > out[-1]:
            out.append(t)
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    max_steps: int = 1000
    n_reps: int = 50
    thresholds: tuple[float, ...] = field(default_factory=lambda: tuple(sorted(log_grid(1e-2, 1e2, 9), reverse=True)))
    kdp_grid: tuple[float, ...] = field(default_factory=lambda: log_grid(1e-2, 1e2, 9))
    sensitivity_mode: SensitivityMode = SensitivityMode.THEORETICAL
    horizons: tuple[int, ...] = field(default_factory=default_horizons)
    estimator: Estimator = Estimator.PER_RUN
    eval_every: int = 1

    def __post_init__(self):
        thr = tuple(float(x) for x in self.thresholds)
        if not thr:
            raise DomainError("thresholds must be non-empty")
        if any(not (x > 0 and math.isfinite(x)) for x in thr):
            raise DomainError("thresholds must be strictly positive and finite")
        if any(b >= a for a, b in zip(thr, thr[1:])):
            raise DomainError("thresholds must be strictly decreasing")
        if self.n_reps < 1:
            raise DomainError("n_reps must be >= 1")
        if self.max_steps < 1:
            raise DomainError("max_steps must be >= 1")
        if self.eval_every < 1:
            raise DomainError("eval_every must be >= 1")
        if any(k < 0 for k in self.kdp_grid):
            raise DomainError("kdp values must be non-negative")
        if any(int(h) != h or h < 1 for h in self.horizons):
            raise DomainError("horizons must be positive integers")
        object.__setattr__(self, "thresholds", thr)
        object.__setattr__(self, "kdp_grid", tuple(float(k) for k in self.kdp_grid))
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        object.__setattr__(self, "sensitivity_mode", SensitivityMode(self.sensitivity_mode))
        object.__setattr__(self, "estimator", Estimator(self.estimator))
