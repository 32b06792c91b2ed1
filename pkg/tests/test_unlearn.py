import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from unlearn_ratio.core import ForgetSplit, PrivacyBudget, SensitivityMode, make_problem
from unlearn_ratio.harness import rep_rng
from unlearn_ratio.losses import RademacherMixture, SyntheticQuadraticLoss, hard_instance_mixture
from unlearn_ratio.optim import RuleKind, UpdateRule, run_iterative
from unlearn_ratio.unlearn import (
    Sensitivity,
    UnlearnPlan,
    calibrate_noise,
    mechanism_rng,
    noise_and_finetune,
    noise_only_expected_excess,
    noise_only_unlearn,
    trivial_regime_excess,
)

SPEC = make_problem(1.0, 25.0, 2)
SPLIT = ForgetSplit(0.01)


def test_sensitivity_modes():
    th = Sensitivity.theoretical(SPEC, SPLIT)
    assert th.value == pytest.approx(0.25252525252525254, rel=1e-15)
    ms = Sensitivity.measured([3.0, 0.0], [0.0, 4.0])
    assert ms.value == 5.0 and ms.mode is SensitivityMode.MEASURED


def test_measured_falls_back(caplog):
    class NoOpt:
        spec = SPEC

        def full_optimum(self):
            raise NotImplementedError

    s = Sensitivity.for_loss("measured", NoOpt(), SPLIT)
    assert s.mode is SensitivityMode.THEORETICAL
    assert "falling back" in caplog.text


@pytest.mark.parametrize(
    "kdp, sens, sigma",
    [
        (1.0, Sensitivity(SensitivityMode.MEASURED, 0.0), 0.0),
        (2.0, Sensitivity.theoretical(SPEC, SPLIT), 0.5050505050505051),
        (1.0, Sensitivity(SensitivityMode.MEASURED, 0.1), 0.1),
    ],
)
def test_calibrate_noise_examples(kdp, sens, sigma):
    assert calibrate_noise(kdp, sens) == pytest.approx(sigma, rel=1e-14, abs=0)


def test_calibrate_from_budget():
    b = PrivacyBudget(1.0, 0.05)
    s = Sensitivity(SensitivityMode.MEASURED, 2.0)
    assert calibrate_noise(b, s) == b.kdp * 2.0
    assert UnlearnPlan.from_budget(b, s).noise_sigma == b.kdp * 2.0


def test_plan_warns_outside_delta_range(caplog):
    UnlearnPlan.from_budget(PrivacyBudget(0.01, 0.05), Sensitivity(SensitivityMode.MEASURED, 1.0))
    assert "delta" in caplog.text


def test_noise_only_zero_sigma(rng):
    plan = UnlearnPlan(0.0, Sensitivity(SensitivityMode.MEASURED, 1.0))
    np.testing.assert_array_equal(noise_only_unlearn([1.0, 2.0], plan, rng), [1.0, 2.0])


def test_noise_only_moments():
    plan = UnlearnPlan(1.5, Sensitivity(SensitivityMode.MEASURED, 0.4))
    sigma = plan.noise_sigma
    rng = np.random.default_rng(4)
    theta = np.array([0.3, -1.0])
    xs = np.array([noise_only_unlearn(theta, plan, rng) for _ in range(10**5)])
    assert np.all(np.abs(xs.mean(0) - theta) <= 5 * sigma / math.sqrt(10**5))
    np.testing.assert_allclose(xs.var(0, ddof=1), sigma**2, rtol=0.05)


def test_finetune_zero_steps_equals_noise_only():
    loss = SyntheticQuadraticLoss(SPEC, hard_instance_mixture(0.3, 0.01))
    plan = UnlearnPlan(2.0, Sensitivity.theoretical(SPEC, SPLIT), finetune_steps=0)
    st_ = noise_and_finetune(loss.full_optimum(), loss, plan, rep_rng(1, 1))
    direct = noise_only_unlearn(loss.full_optimum(), plan, mechanism_rng(rep_rng(1, 1)))
    np.testing.assert_array_equal(st_.averaged(), direct)


def test_finetune_sigma0_bit_identical_to_runner():
    loss = SyntheticQuadraticLoss(SPEC, hard_instance_mixture(0.3, 0.01))
    rule = UpdateRule(RuleKind.DECAYING_AVG_FINETUNE)
    plan = UnlearnPlan(0.0, Sensitivity.theoretical(SPEC, SPLIT), finetune_steps=300, rule=rule)
    a = noise_and_finetune(loss.full_optimum(), loss, plan, rep_rng(5, 0))
    b = run_iterative(rule, loss.full_optimum(), loss, 300, rep_rng(5, 0))
    assert np.array_equal(a.memory, b.memory) and np.array_equal(a.theta, b.theta)


def test_finetune_from_retain_optimum_stays_within_floor():
    loss = SyntheticQuadraticLoss(make_problem(1.0, 25.0, 1), RademacherMixture(0.4, 0.0, 0.0))
    T, reps = 2000, 50
    plan = UnlearnPlan(0.0, Sensitivity(SensitivityMode.MEASURED, 0.0), finetune_steps=T)
    assert np.array_equal(loss.full_optimum(), loss.retain_optimum())
    ex = [loss.retain_excess(noise_and_finetune(loss.full_optimum(), loss, plan, rep_rng(0, r)).averaged())
          for r in range(reps)]
    assert max(ex) <= 2 * 25.0**2 / (T + 2)


def test_noise_only_expected_excess_monte_carlo():
    loss = SyntheticQuadraticLoss(SPEC, hard_instance_mixture(0.4, 0.01))
    plan = UnlearnPlan(3.0, Sensitivity.theoretical(SPEC, SPLIT))
    rng = np.random.default_rng(8)
    ex = np.array([loss.retain_excess(noise_only_unlearn(loss.full_optimum(), plan, rng)) for _ in range(10**4)])
    exact = noise_only_expected_excess(loss, plan.noise_sigma)
    assert abs(ex.mean() - exact) <= 4 * ex.std(ddof=1) / 100


@pytest.mark.parametrize(
    "rf, d, kdp, e0, expected",
    [(0.0, 2, 0.0, 78.125, 0.0), (0.01, 2, 1.0, 78.125, 1.123985615904439), (0.5, 1, 0.0, 1.0, 1.0)],
)
def test_trivial_regime_excess_examples(rf, d, kdp, e0, expected):
    spec = make_problem(1.0, math.sqrt(8 * e0), d)
    assert trivial_regime_excess(spec, ForgetSplit(rf), kdp) == pytest.approx(expected, rel=1e-12, abs=1e-15)


eps_grid = [0.1, 0.25, 0.5, 1.0, 2.0, 5.0]
delta_grid = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1]


@pytest.mark.parametrize("eps", eps_grid)
@pytest.mark.parametrize("delta", delta_grid)
def test_output_tv_within_dp_bound(eps, delta):
    # two forget laws (g_forget = -1 and +1) on the quadratic instance shift theta* by rf*L/mu <= Delta
    budget = PrivacyBudget(eps, delta)
    sens = Sensitivity.theoretical(SPEC, SPLIT)
    sigma = calibrate_noise(budget, sens)
    a = SyntheticQuadraticLoss(SPEC, RademacherMixture(0.2, -1.0, SPLIT.rf)).full_optimum()
    b = SyntheticQuadraticLoss(SPEC, RademacherMixture(0.2, 1.0, SPLIT.rf)).full_optimum()
    shift = np.linalg.norm(a - b)
    assert shift <= sens.value
    tv = 2 * norm.cdf(shift / (2 * sigma)) - 1
    worst = 2 * norm.cdf(1 / (2 * budget.kdp)) - 1
    assert tv <= worst + 1e-15
    assert worst <= math.exp(eps) - 1 + delta


@given(st.floats(0, 0.9), st.integers(1, 50), st.floats(0, 100), st.floats(0, 100))
def test_trivial_excess_affine_in_kdp(rf, d, k1, k2):
    spec = make_problem(1.0, 25.0, d)
    split = ForgetSplit(rf)
    f = lambda k: trivial_regime_excess(spec, split, k)  # noqa: E731
    slope = split.rf_odds * math.sqrt(d) * spec.e0
    assert f(k2) - f(k1) == pytest.approx(slope * (k2 - k1), rel=1e-9, abs=1e-9)
