import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from unlearn_ratio.core import (
    DomainError,
    ForgetSplit,
    PrivacyBudget,
    RunConfig,
    default_horizons,
    derive_kdp,
    log_grid,
    make_problem,
)

eps_st = st.floats(1e-3, 1e3)
delta_st = st.floats(1e-12, 0.999)


@pytest.mark.parametrize(
    "eps, delta, expected",
    [
        (1.0, 0.05, 2.5372724823590393),  # mpmath, 30 digits
        (math.sqrt(2 * math.log(1.25 / 0.05)), 0.05, 1.0),
        (0.5, 1e-5, 9.689610525210779),  # mpmath, 30 digits
    ],
)
def test_derive_kdp_values(eps, delta, expected):
    assert derive_kdp(eps, delta) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("eps, delta", [(0.0, 0.1), (-1.0, 0.1), (1.0, 0.0), (1.0, 1.0), (1.0, -0.2), (math.nan, 0.1)])
def test_derive_kdp_domain(eps, delta):
    with pytest.raises(DomainError):
        derive_kdp(eps, delta)


@given(eps_st, delta_st)
def test_kdp_times_eps_recovers_numerator(eps, delta):
    assert derive_kdp(eps, delta) * eps == pytest.approx(math.sqrt(2 * math.log(1.25 / delta)), rel=1e-14)


@given(eps_st, eps_st, delta_st)
def test_kdp_decreasing_in_eps(a, b, delta):
    if a == b:
        return
    lo, hi = sorted((a, b))
    assert derive_kdp(lo, delta) > derive_kdp(hi, delta)


@given(eps_st, delta_st, delta_st)
def test_kdp_decreasing_in_delta(eps, a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    assert derive_kdp(eps, lo) > derive_kdp(eps, hi)


@pytest.mark.parametrize(
    "mu, L, d, e0, radius",
    [(1, 25, 2, 78.125, 12.5), (1, 1, 1, 0.125, 0.5), (2, 4, 10, 1.0, 1.0)],
)
def test_make_problem_examples(mu, L, d, e0, radius):
    spec = make_problem(mu, L, d)
    assert spec.e0 == e0
    assert spec.radius == radius


@pytest.mark.parametrize("args", [(0, 1, 1), (1, 0, 1), (1, 1, 0), (-1, 1, 1), (1, 1, 1.5)])
def test_make_problem_rejects(args):
    with pytest.raises(DomainError):
        make_problem(*args)


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6), st.integers(1, 1000))
def test_problem_derived_fields_bit_exact(mu, L, d):
    spec = make_problem(mu, L, d)
    assert spec.radius == L / (2 * mu)
    assert spec.e0 == L**2 / (8 * mu)


@given(st.floats(0, 0.999999))
def test_rf_odds_identity(rf):
    split = ForgetSplit(rf)
    assert split.rf_odds >= 0 and math.isfinite(split.rf_odds)
    assert abs(split.rf_odds * (1 - rf) - rf) <= 1e-12


@pytest.mark.parametrize("rf", [-0.1, 1.0, 1.5])
def test_forget_split_domain(rf):
    with pytest.raises(DomainError):
        ForgetSplit(rf)


@given(st.floats(1e-3, 1e3))
def test_budget_from_kdp_roundtrip(kdp):
    assert PrivacyBudget.from_kdp(kdp).kdp == pytest.approx(kdp, rel=1e-12)


def test_run_config_thresholds_validated():
    with pytest.raises(DomainError):
        RunConfig(thresholds=(1.0, 2.0))
    with pytest.raises(DomainError):
        RunConfig(thresholds=(1.0, 1.0))
    with pytest.raises(DomainError):
        RunConfig(thresholds=(1.0, -1.0))
    with pytest.raises(DomainError):
        RunConfig(n_reps=0)
    with pytest.raises(DomainError):
        RunConfig(max_steps=0)


def test_default_grids():
    cfg = RunConfig()
    assert cfg.thresholds[0] == pytest.approx(100) and cfg.thresholds[-1] == pytest.approx(0.01)
    assert len(cfg.kdp_grid) == 9
    hs = default_horizons()
    assert hs[0] == 1 and hs[-1] == 10**6 and len(hs) == 13
    assert list(hs) == sorted(set(hs))


def test_log_grid_endpoints():
    g = log_grid(1e-2, 1e2, 5)
    assert g == pytest.approx((1e-2, 1e-1, 1, 10, 100))
