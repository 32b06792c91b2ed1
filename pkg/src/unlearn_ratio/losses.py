"""Stochastic first-order loss oracles over a retain/forget mixture.

Three oracles share a small duck-typed protocol used by the optimisers and the
harness: ``spec``, ``sample(rng)``, ``gradient(theta, sample)``,
``retain_excess(theta)``, ``full_optimum()``, ``retain_optimum()`` and
``accesses_per_step``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import log_softmax, softmax

from .core import DomainError, ProblemSpec, as_param_vector

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Rademacher hard instances


@dataclass(frozen=True)
class RademacherMixture:
    """Law of ``g(xi)``: ±1 with mean ``gamma_r`` on the retain part, constant
    ``g_forget`` on the forget part, mixed with forget weight ``rf``."""

    gamma_r: float
    g_forget: float
    rf: float

    def __post_init__(self):
        if abs(self.gamma_r) > 1 or abs(self.g_forget) > 1:
            raise DomainError("gamma_r and g_forget must lie in [-1, 1]")
        if not 0 <= self.rf < 1:
            raise DomainError(f"rf must lie in [0, 1), got {self.rf!r}")

    @property
    def p_plus(self) -> float:
        return (1.0 + self.gamma_r) / 2.0

    @property
    def full_mean(self) -> float:
        return (1.0 - self.rf) * self.gamma_r + self.rf * self.g_forget


def hard_instance_mixture(gamma: float, rf: float) -> RademacherMixture:
    """Mixture whose full-data optimum hides the retain mean.

    The forget part carries ``-min(1, (1 - rf) gamma / rf)`` so the full mean is
    ``((1 - rf) gamma - rf)_+`` for ``gamma >= 0``.
    """
    if rf > 0:
        g_forget = -min(1.0, (1.0 - rf) * gamma / rf)
    else:
        g_forget = -1.0
    return RademacherMixture(gamma_r=gamma, g_forget=g_forget, rf=rf)


def sample_g(mix: RademacherMixture, from_retain_only: bool, rng: np.random.Generator) -> float:
    if not from_retain_only and mix.rf > 0 and rng.random() < mix.rf:
        return mix.g_forget
    return 1.0 if rng.random() < mix.p_plus else -1.0


class _SyntheticLoss:
    kernel_kind = -1
    accesses_per_step = 1

    def __init__(self, spec: ProblemSpec, mix: RademacherMixture):
        self.spec = spec
        self.mix = mix

    @property
    def dim(self) -> int:
        return self.spec.dim

    def sample(self, rng: np.random.Generator) -> float:
        return sample_g(self.mix, True, rng)

    def gradient(self, theta: np.ndarray, g_value: float) -> np.ndarray:
        return stochastic_gradient(self, theta, g_value)

    def retain_excess(self, theta: np.ndarray) -> float:
        return exact_retain_excess(self, theta)


class SyntheticQuadraticLoss(_SyntheticLoss):
    """``(mu/2)|theta|^2 - (L/2) g(xi) theta_1``."""

    kernel_kind = 0

    def _coef(self) -> float:
        return self.spec.lipschitz / (2.0 * self.spec.mu)

    def retain_optimum(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[0] = self._coef() * self.mix.gamma_r
        return out

    def full_optimum(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[0] = self._coef() * self.mix.full_mean
        return out


class SyntheticExperimentalLoss(_SyntheticLoss):
    """Tilted quadratic on the first half of coordinates, L1-penalised second half.

    Expected loss ``(mu/2)|theta|^2 - (L/4) E[g] sum_{i<=d/2} theta_i
    + (L/4) sum_{i>d/2} |theta_i|``.
    """

    kernel_kind = 1

    def __init__(self, spec: ProblemSpec, mix: RademacherMixture):
        if spec.dim % 2:
            raise DomainError(f"experimental loss needs an even dimension, got {spec.dim}")
        super().__init__(spec, mix)

    @property
    def half(self) -> int:
        return self.dim // 2

    def _coef(self) -> float:
        return self.spec.lipschitz / (4.0 * self.spec.mu)

    def retain_optimum(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[: self.half] = self._coef() * self.mix.gamma_r
        return out

    def full_optimum(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[: self.half] = self._coef() * self.mix.full_mean
        return out


def stochastic_gradient(loss, theta, g_value: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (loss.dim,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({loss.dim},)")
    mu, lip = loss.spec.mu, loss.spec.lipschitz
    grad = mu * theta
    if isinstance(loss, SyntheticQuadraticLoss):
        grad[0] -= 0.5 * lip * g_value
    elif isinstance(loss, SyntheticExperimentalLoss):
        h = loss.half
        grad[:h] -= 0.25 * lip * g_value
        # subgradient of |x| at 0 is taken as 0
        grad[h:] += 0.25 * lip * np.sign(theta[h:])
    else:
        raise TypeError(f"unsupported loss {type(loss).__name__}")
    return grad


def exact_retain_excess(loss, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (loss.dim,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({loss.dim},)")
    mu = loss.spec.mu
    if isinstance(loss, SyntheticQuadraticLoss):
        diff = theta - loss.retain_optimum()
        return 0.5 * mu * float(diff @ diff)
    if isinstance(loss, SyntheticExperimentalLoss):
        h = loss.half
        first = theta[:h] - loss._coef() * loss.mix.gamma_r
        second = theta[h:]
        return float(
            0.5 * mu * (first @ first)
            + 0.5 * mu * (second @ second)
            + 0.25 * loss.spec.lipschitz * np.abs(second).sum()
        )
    raise TypeError(f"unsupported loss {type(loss).__name__}")


def full_optimum(loss) -> np.ndarray:
    return loss.full_optimum()


# ---------------------------------------------------------------------------
# Empirical risk minimisation on a labelled dataset


@dataclass(frozen=True)
class ErmDataset:
    features: np.ndarray
    labels: np.ndarray
    retain_indices: np.ndarray
    forget_indices: np.ndarray
    n_classes: int = 0

    def __post_init__(self):
        n = self.features.shape[0]
        if self.labels.shape != (n,):
            raise ValueError("labels must have one entry per feature row")
        both = np.concatenate([self.retain_indices, self.forget_indices])
        if both.size != n or np.unique(both).size != n:
            raise ValueError("retain and forget indices must partition the rows")
        if self.retain_indices.size == 0:
            raise DomainError("retain set is empty")
        if self.n_classes == 0:
            object.__setattr__(self, "n_classes", int(self.labels.max()) + 1 if n else 1)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def forget_count(n: int, rf: float) -> int:
    # guard against 0.29 * 100 = 28.999999999999996
    return int(math.floor(rf * n + 1e-9))


def split_dataset(features, labels, rf: float, rng: np.random.Generator) -> ErmDataset:
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n = features.shape[0]
    if n < 1:
        raise DomainError("dataset is empty")
    if not 0 <= rf < 1:
        raise DomainError(f"rf must lie in [0, 1), got {rf!r}")
    k = forget_count(n, rf)
    if k >= n:
        raise DomainError(f"forget set of size {k} leaves an empty retain set")
    perm = rng.permutation(n)
    return ErmDataset(
        features=features,
        labels=labels,
        retain_indices=np.sort(perm[k:]),
        forget_indices=np.sort(perm[:k]),
    )


def read_dataset_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        p = len(header) - 1
        if p < 1 or header[-1] != "label" or header[:-1] != [f"f{i}" for i in range(p)]:
            raise ValueError(f"{path}: header must be f0..f{{p-1}},label, got {header}")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 1:
                raise ValueError(f"{path}:{lineno}: expected {p + 1} fields, got {len(row)}")
            try:
                rows.append([float(x) for x in row[:-1]])
                labels.append(int(row[-1]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    y = np.array(labels, dtype=int)
    if y.min() < 0:
        raise ValueError(f"{path}: labels must be non-negative class ids")
    return np.array(rows, dtype=float), y


def write_dataset_csv(path, features, labels) -> None:
    features = np.asarray(features, dtype=float)
    p = features.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(p)] + ["label"])
        for row, lab in zip(features, labels):
            w.writerow([repr(float(x)) for x in row] + [int(lab)])


def make_blobs(n: int, p: int, classes: int, spread: float, seed: int):
    """Isotropic Gaussian clusters around centres drawn in a box of side 8."""
    if n < 1 or p < 1 or classes < 1:
        raise DomainError("n, p and classes must be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-4.0, 4.0, size=(classes, p))
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    features = centers[labels] + spread * rng.standard_normal((n, p))
    return features, labels


class ErmLoss:
    """Multiclass softmax cross-entropy plus ``(l2_weight/2)|theta|^2``.

    ``theta`` is the flattened ``(n_features, n_classes)`` weight matrix. Both
    optima are computed at construction by full-batch gradient descent.
    """

    kernel_kind = -1

    def __init__(
        self,
        dataset: ErmDataset,
        l2_weight: float = 1.0,
        batch_size: int = 64,
        rng: np.random.Generator | None = None,
        grad_tol: float = 1e-8,
        max_iter: int = 1_000_000,
        n_lipschitz_points: int = 256,
    ):
        if not l2_weight > 0:
            raise DomainError("l2_weight must be positive")
        self.dataset = dataset
        self.l2_weight = float(l2_weight)
        self.batch_size = int(batch_size)
        self.grad_tol = grad_tol
        self.max_iter = max_iter
        self.n_classes = dataset.n_classes
        self.dim = dataset.n_features * self.n_classes
        rng = np.random.default_rng(0) if rng is None else rng
        self._onehot = np.eye(self.n_classes)[dataset.labels]

        self.retain_opt_estimate = self._minimise(dataset.retain_indices)
        self.retain_opt_value = self.loss_on(self.retain_opt_estimate, dataset.retain_indices)
        self.full_opt_estimate = self._minimise(np.arange(dataset.n))
        self.lipschitz_estimate = self._estimate_lipschitz(rng, n_lipschitz_points)
        self.spec = ProblemSpec(mu=self.l2_weight, lipschitz=self.lipschitz_estimate, dim=self.dim)

    @property
    def accesses_per_step(self) -> int:
        return self.batch_size

    def _logits(self, theta, idx):
        W = theta.reshape(self.dataset.n_features, self.n_classes)
        return self.dataset.features[idx] @ W

    def loss_on(self, theta, idx) -> float:
        theta = np.asarray(theta, dtype=float)
        logp = log_softmax(self._logits(theta, idx), axis=1)
        ce = -(logp * self._onehot[idx]).sum(axis=1).mean()
        return float(ce + 0.5 * self.l2_weight * (theta @ theta))

    def gradient(self, theta, idx) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"theta has shape {theta.shape}, expected ({self.dim},)")
        idx = np.asarray(idx)
        resid = softmax(self._logits(theta, idx), axis=1) - self._onehot[idx]
        g = self.dataset.features[idx].T @ resid / idx.size
        return g.reshape(-1) + self.l2_weight * theta

    def per_sample_gradients(self, theta, idx) -> np.ndarray:
        idx = np.asarray(idx)
        resid = softmax(self._logits(theta, idx), axis=1) - self._onehot[idx]
        x = self.dataset.features[idx]
        g = (x[:, :, None] * resid[:, None, :]).reshape(idx.size, -1)
        return g + self.l2_weight * theta[None, :]

    def _minimise(self, idx) -> np.ndarray:
        theta = np.zeros(self.dim)
        f = self.loss_on(theta, idx)
        step = 1.0 / self.l2_weight
        for _ in range(self.max_iter):
            g = self.gradient(theta, idx)
            gn2 = float(g @ g)
            if math.sqrt(gn2) <= self.grad_tol:
                return theta
            step *= 2.0
            while True:
                cand = theta - step * g
                fc = self.loss_on(cand, idx)
                if fc <= f - 0.5 * step * gn2 or step < 1e-16:
                    break
                step *= 0.5
            theta, f = cand, fc
        raise ConvergenceError(
            f"gradient norm did not reach {self.grad_tol} within {self.max_iter} iterations"
        )

    def _estimate_lipschitz(self, rng, n_points: int) -> float:
        # L and the ball radius L/(2 mu) depend on each other: iterate to a fixed point.
        all_idx = np.arange(self.dataset.n)
        lip = 1.1 * np.linalg.norm(self.per_sample_gradients(np.zeros(self.dim), all_idx), axis=1).max()
        lip = max(lip, 1e-12)
        for _ in range(50):
            radius = lip / (2.0 * self.l2_weight)
            dirs = rng.standard_normal((n_points, self.dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            radii = radius * rng.random(n_points) ** (1.0 / self.dim)
            worst = 0.0
            for point in dirs * radii[:, None]:
                norms = np.linalg.norm(self.per_sample_gradients(point, all_idx), axis=1)
                worst = max(worst, float(norms.max()))
            new = 1.1 * worst
            if new <= lip * (1 + 1e-9):
                return lip
            lip = new
        return lip

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(self.dataset.retain_indices, size=self.batch_size, replace=True)

    def retain_optimum(self) -> np.ndarray:
        return self.retain_opt_estimate.copy()

    def full_optimum(self) -> np.ndarray:
        return self.full_opt_estimate.copy()

    def retain_excess(self, theta) -> float:
        return erm_retain_excess(self, theta)


def erm_retain_excess(loss: ErmLoss, theta) -> float:
    theta = as_param_vector(theta, loss.dim)
    val = loss.loss_on(theta, loss.dataset.retain_indices) - loss.retain_opt_value
    if val < 0:
        log.debug("clamping negative ERM excess %.3e to 0", val)
        return 0.0
    return val
