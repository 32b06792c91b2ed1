import numpy as np
import pytest

from unlearn_ratio.core import make_problem
from unlearn_ratio.harness import _generic_trajectory, _kernel_trajectory, rep_rng
from unlearn_ratio.losses import SyntheticExperimentalLoss, SyntheticQuadraticLoss, hard_instance_mixture
from unlearn_ratio.optim import RuleKind, UpdateRule

RULES = [
    UpdateRule(RuleKind.DECAYING_AVG_SCRATCH),
    UpdateRule(RuleKind.DECAYING_AVG_FINETUNE),
    UpdateRule(RuleKind.CONSTANT_STEP, 0.05),
    UpdateRule(RuleKind.EPOCH_DECAY, 0.3, 0.6, 7),
]


@pytest.mark.parametrize("cls, d", [(SyntheticQuadraticLoss, 1), (SyntheticQuadraticLoss, 3), (SyntheticExperimentalLoss, 2),
                                    (SyntheticExperimentalLoss, 6)])
@pytest.mark.parametrize("rule", RULES, ids=lambda r: r.kind.value)
@pytest.mark.parametrize("start", ["zero", "far"])
def test_kernel_matches_generic(cls, d, rule, start):
    loss = cls(make_problem(1.0, 25.0, d), hard_instance_mixture(0.2, 0.05))
    theta0 = np.zeros(d) if start == "zero" else np.full(d, 30.0)  # "far" starts outside the ball
    thr = np.array(sorted(np.logspace(-3, 2, 12), reverse=True))
    T = 400
    c_k, c_g = np.zeros(T + 1), np.zeros(T + 1)
    p_k, div_k = _kernel_trajectory(loss, theta0, rule, rep_rng(7, 2).random(T), thr, c_k)
    p_g, div_g = _generic_trajectory(loss, theta0, rule, T, rep_rng(7, 2), thr, 1, c_g)
    assert div_k is None and div_g is None
    np.testing.assert_allclose(c_k, c_g, rtol=1e-10, atol=1e-12)
    np.testing.assert_array_equal(p_k, p_g)


def test_kernel_early_exit_same_passage():
    loss = SyntheticQuadraticLoss(make_problem(1.0, 25.0, 1), hard_instance_mixture(0.5, 0.0))
    thr = np.array([10.0, 1.0, 0.1])
    u = rep_rng(1, 1).random(5000)
    full, _ = _kernel_trajectory(loss, np.zeros(1), RULES[0], u, thr, np.zeros(5001))
    quick, _ = _kernel_trajectory(loss, np.zeros(1), RULES[0], u, thr)
    np.testing.assert_array_equal(full, quick)
