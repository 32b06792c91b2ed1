"""Brute-force numerical witnesses for the supporting lemmas.

Each check returns a :class:`LemmaReport` whose ``max_slack`` is the smallest
``bound - observed`` over all cases tried.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy
from scipy.stats import norm

from .core import DomainError, ForgetSplit, PrivacyBudget, ProblemSpec
from .losses import RademacherMixture, SyntheticExperimentalLoss, SyntheticQuadraticLoss, hard_instance_mixture
from .optim import DivergenceError, RuleKind, UpdateRule, tuned_constant_step
from .unlearn import Sensitivity, UnlearnPlan, noise_and_finetune

MAX_EXACT_T = 60


@dataclass(frozen=True)
class LemmaReport:
    lemma_id: str
    cases_checked: int
    max_slack: float
    passed: bool
    tolerance: float = 0.0
    skipped: bool = False
    detail: str = ""

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        out = f"{status} {self.lemma_id}: cases={self.cases_checked} max_slack={self.max_slack:.6g}"
        return out + (f" ({self.detail})" if self.detail else "")


def _report(lemma_id, slacks, tol=0.0, detail="") -> LemmaReport:
    slack = float(min(slacks)) if len(slacks) else math.inf
    return LemmaReport(lemma_id, len(slacks), slack, slack >= -tol, tol, detail=detail)


def _both_optima(loss):
    try:
        return loss.full_optimum(), loss.retain_optimum()
    except (AttributeError, NotImplementedError):
        return None


def _rf_of(loss) -> float:
    if hasattr(loss, "mix"):
        return loss.mix.rf
    ds = loss.dataset
    return ds.forget_indices.size / ds.n


def opt_distance_slack(loss) -> float:
    full, retain = _both_optima(loss)
    rf = _rf_of(loss)
    bound = rf / (1 - rf) * loss.spec.lipschitz / loss.spec.mu
    return bound - float(np.linalg.norm(full - retain))


def opt_gap_slack(loss) -> float:
    full, _ = _both_optima(loss)
    rf = _rf_of(loss)
    bound = (rf / (1 - rf)) ** 2 * loss.spec.lipschitz**2 / loss.spec.mu
    return bound - loss.retain_excess(full)


def random_mixture_losses(n: int, rng: np.random.Generator, spec: ProblemSpec | None = None):
    """Synthetic losses on random ``(gamma, g_forget, rf)``, alternating both variants."""
    spec = spec or ProblemSpec(1.0, 25.0, 2)
    out = []
    for i in range(n):
        mix = RademacherMixture(
            gamma_r=float(rng.uniform(-1, 1)),
            g_forget=float(rng.uniform(-1, 1)),
            rf=float(rng.uniform(0, 0.95)),
        )
        cls = SyntheticQuadraticLoss if i % 2 == 0 else SyntheticExperimentalLoss
        out.append(cls(spec, mix))
    return out


def _check_optima(lemma_id, losses, slack_fn) -> LemmaReport:
    slacks = []
    for loss in losses:
        if _both_optima(loss) is None:
            return LemmaReport(lemma_id, len(slacks), math.nan, False, skipped=True, detail="optima unavailable")
        slacks.append(slack_fn(loss))
    return _report(lemma_id, slacks)


def check_opt_distance(losses) -> LemmaReport:
    """``|theta* - theta*_r| <= rf_odds L / mu`` for each loss."""
    if not isinstance(losses, (list, tuple)):
        losses = [losses]
    return _check_optima("opt_distance", losses, opt_distance_slack)


def check_opt_loss_gap(losses) -> LemmaReport:
    """``L_r(theta*) - L_r* <= rf_odds^2 L^2 / mu`` for each loss."""
    if not isinstance(losses, (list, tuple)):
        losses = [losses]
    return _check_optima("opt_loss_gap", losses, opt_gap_slack)


def binomial_log_pmf(T: int, p: float) -> np.ndarray:
    k = np.arange(T + 1)
    logc = gammaln(T + 1) - gammaln(k + 1) - gammaln(T - k + 1)
    # xlogy treats 0 * log 0 as 0
    return logc + xlogy(k, p) + xlog1py(T - k, -p)


def exact_binomial_tv(T: int, gamma: float, gamma_p: float) -> float:
    """Total variation between Binomial(T, (1+gamma)/2) and Binomial(T, (1+gamma_p)/2)."""
    if T > MAX_EXACT_T:
        raise DomainError(f"T={T} exceeds {MAX_EXACT_T}; use binomial_tv_bound instead")
    if T < 0:
        raise DomainError("T must be >= 0")
    if abs(gamma) > 1 or abs(gamma_p) > 1:
        raise DomainError("gamma values must lie in [-1, 1]")
    if gamma == gamma_p:
        return 0.0
    p = np.exp(binomial_log_pmf(T, (1 + gamma) / 2))
    q = np.exp(binomial_log_pmf(T, (1 + gamma_p) / 2))
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def binomial_tv_bound(T: int, gamma: float, gamma_p: float) -> float:
    """``(sqrt(T)/2) |atan(g'/sqrt(1-g'^2)) - atan(g/sqrt(1-g^2))|``, finite at g = ±1."""
    a = math.atan2(gamma_p, math.sqrt(1.0 - gamma_p**2))
    b = math.atan2(gamma, math.sqrt(1.0 - gamma**2))
    return 0.5 * math.sqrt(T) * abs(a - b)


def check_binomial_tv_bound(T_max: int = 30, grid_size: int = 50, tol: float = 1e-9) -> LemmaReport:
    if T_max > MAX_EXACT_T:
        raise DomainError(f"T_max must be <= {MAX_EXACT_T}")
    grid = np.linspace(-0.999, 0.999, grid_size)
    slacks = []
    for T in range(1, T_max + 1):
        pmfs = [np.exp(binomial_log_pmf(T, (1 + g) / 2)) for g in grid]
        for i, g in enumerate(grid):
            for j, gp in enumerate(grid):
                tv = 0.5 * float(np.abs(pmfs[i] - pmfs[j]).sum())
                slacks.append(binomial_tv_bound(T, g, gp) - tv)
    return _report("binomial_tv", slacks, tol, detail=f"T<={T_max}, grid {grid_size}x{grid_size}")


def gaussian_output_tv(kdp: float) -> float:
    """Worst-case TV of the calibrated mechanism: ``2 Phi(1/(2 kdp)) - 1``."""
    return float(2.0 * norm.cdf(1.0 / (2.0 * kdp)) - 1.0)


def default_budget_grid() -> list[PrivacyBudget]:
    eps = (0.1, 0.25, 0.5, 1.0, 2.0, 5.0)
    deltas = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1)
    return [PrivacyBudget(e, d) for e in eps for d in deltas]


def check_gaussian_tv_dp(budget_grid=None) -> LemmaReport:
    budgets = default_budget_grid() if budget_grid is None else list(budget_grid)
    slacks = [math.exp(b.epsilon) - 1.0 + b.delta - gaussian_output_tv(b.kdp) for b in budgets]
    return _report("gaussian_tv_dp", slacks)


def finetune_excess_samples(spec, split, kdp, horizon, reps, rng, gamma=None):
    """Final excess of tuned constant-step noise-and-fine-tune on the quadratic instance."""
    gamma = 1.0 / (2.0 * math.sqrt(horizon)) if gamma is None else gamma
    loss = SyntheticQuadraticLoss(spec, hard_instance_mixture(gamma, split.rf))
    sens = Sensitivity.theoretical(spec, split)
    step = tuned_constant_step(spec, sens.value, kdp, horizon)
    plan = UnlearnPlan(kdp, sens, horizon, UpdateRule(RuleKind.CONSTANT_STEP, step_constant=step))
    theta_star = loss.full_optimum()
    out = np.empty(reps)
    for r in range(reps):
        state = noise_and_finetune(theta_star, loss, plan, rng)
        out[r] = loss.retain_excess(state.averaged())
    return out


def check_finetune_rate(
    spec: ProblemSpec,
    split: ForgetSplit,
    kdp: float,
    horizons,
    reps: int,
    rng: np.random.Generator,
    gamma: float | None = None,
) -> LemmaReport:
    """Mean final excess ``<= L R1 sqrt(1 + d kdp^2) / sqrt(T)`` plus 3 standard errors."""
    r1 = Sensitivity.theoretical(spec, split).value
    slacks = []
    for T in horizons:
        try:
            xs = finetune_excess_samples(spec, split, kdp, T, reps, rng, gamma)
        except DivergenceError as exc:
            return LemmaReport("finetune_rate", len(slacks), -math.inf, False, detail=f"T={T}: {exc}")
        bound = spec.lipschitz * r1 * math.sqrt(1 + spec.dim * kdp**2) / math.sqrt(T)
        se = float(xs.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
        slacks.append(bound + 3.0 * se - float(xs.mean()))
    return _report("finetune_rate", slacks)


LEMMAS = ("opt_distance", "opt_loss_gap", "binomial_tv", "gaussian_tv_dp", "finetune_rate")


def run_lemma(name: str, seed: int = 0, tmax: int = 30) -> LemmaReport:
    rng = np.random.default_rng(seed)
    if name == "opt_distance":
        return check_opt_distance(random_mixture_losses(100, rng))
    if name == "opt_loss_gap":
        return check_opt_loss_gap(random_mixture_losses(100, rng))
    if name == "binomial_tv":
        return check_binomial_tv_bound(tmax, 50)
    if name == "gaussian_tv_dp":
        return check_gaussian_tv_dp()
    if name == "finetune_rate":
        spec = ProblemSpec(1.0, 25.0, 2)
        return check_finetune_rate(spec, ForgetSplit(0.01), 1.0, [1000, 2000], 50, rng)
    raise KeyError(name)
