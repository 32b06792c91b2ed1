import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unlearn_ratio.core import ForgetSplit, RunConfig, SensitivityMode, make_problem
from unlearn_ratio.harness import (
    CENSORED,
    RunRecord,
    _trajectory,
    cells_from_rows,
    complexity_ratio,
    measure_scratch,
    measure_unlearn,
    read_results_csv,
    rep_rng,
    results_to_csv_text,
    sweep_phase_diagram,
    write_results_csv,
)
from unlearn_ratio.losses import RademacherMixture, SyntheticExperimentalLoss, SyntheticQuadraticLoss, hard_instance_mixture
from unlearn_ratio.optim import UpdateRule
from unlearn_ratio.theory import trivial_boundary
from unlearn_ratio.unlearn import Sensitivity, UnlearnPlan

SPEC2 = make_problem(1.0, 25.0, 2)
SPLIT = ForgetSplit(0.01)


def experimental_factory(rf=0.01, spec=SPEC2):
    return lambda T: SyntheticExperimentalLoss(spec, hard_instance_mixture(1 / (2 * math.sqrt(T)), rf))


def small_cfg(**kw):
    base = dict(n_reps=8, thresholds=(100.0, 10.0, 1.0, 0.1, 0.01), kdp_grid=(0.01, 1.0, 100.0),
                horizons=(1, 10, 100, 1000), sensitivity_mode="measured")
    base.update(kw)
    return RunConfig(**base)


def test_complexity_ratio_conventions():
    assert complexity_ratio(0.0, 0.0) == 0.0
    assert complexity_ratio(0.0, 5.0) == 0.0
    assert complexity_ratio(3.0, 0.0) == math.inf
    assert complexity_ratio(3.0, 6.0) == 0.5


def test_run_record_monotone_check():
    RunRecord("scratch", {1.0: 5, 0.1: 50, 0.01: CENSORED}, 0)
    with pytest.raises(AssertionError):
        RunRecord("scratch", {1.0: 50, 0.1: 5}, 0)


def test_scratch_above_e0_is_free():
    loss = SyntheticQuadraticLoss(SPEC2, hard_instance_mixture(0.9, 0.01))
    cfg = RunConfig(max_steps=5, n_reps=1, thresholds=(200.0, 78.125))
    rec = measure_scratch(loss, cfg, 0)
    assert rec.first_passage == {200.0: 0, 78.125: 0}


def test_no_steps_is_censored():
    loss = SyntheticQuadraticLoss(SPEC2, hard_instance_mixture(0.9, 0.0))
    passage, _ = _trajectory(loss, np.zeros(2), UpdateRule(), 0, rep_rng(0, 0), np.array([1e-3]))
    assert passage[0] == -1
    rec = measure_scratch(loss, RunConfig(max_steps=1, n_reps=1, thresholds=(1e-9,)), 0)
    assert rec.first_passage[1e-9] == CENSORED


def test_scratch_mean_passage_bound():
    loss = SyntheticQuadraticLoss(make_problem(1.0, 25.0, 1), RademacherMixture(0.8, 0.0, 0.0))
    cfg = RunConfig(max_steps=20_000, n_reps=50, thresholds=(1.0,))
    times = np.array([measure_scratch(loss, cfg, r).first_passage[1.0] for r in range(50)])
    assert np.isfinite(times).all()
    assert times.mean() <= 1250 + 3 * times.std(ddof=1) / math.sqrt(50)


def test_unlearn_from_retain_optimum_is_free():
    loss = SyntheticQuadraticLoss(SPEC2, RademacherMixture(0.4, 0.0, 0.0))
    plan = UnlearnPlan(0.0, Sensitivity.measured(loss.full_optimum(), loss.retain_optimum()))
    rec = measure_unlearn(loss, plan, RunConfig(max_steps=10, n_reps=1, thresholds=(1.0, 1e-6, 1e-12)), 0)
    assert set(rec.first_passage.values()) == {0}


def test_unlearn_time_within_bound_at_e0_over_10():
    # the bound (rf_odds^2 (1 + d kdp^2) 100 ~ 0.03) is below one step, so noising alone must do
    T = 1000
    loss = SyntheticQuadraticLoss(SPEC2, hard_instance_mixture(1 / (2 * math.sqrt(T)), 0.01))
    plan = UnlearnPlan(1.0, Sensitivity.theoretical(SPEC2, SPLIT))
    e = SPEC2.e0 / 10
    cfg = RunConfig(max_steps=T, n_reps=50, thresholds=(e,))
    times = [measure_unlearn(loss, plan, cfg, r).first_passage[e] for r in range(50)]
    assert np.mean(times) <= 0.0306091215182124


@given(st.integers(0, 2**32), st.integers(0, 100))
def test_run_record_monotone_property(seed, rep):
    loss = SyntheticExperimentalLoss(SPEC2, hard_instance_mixture(0.3, 0.01))
    cfg = RunConfig(seed=seed, max_steps=200, n_reps=1, thresholds=tuple(np.logspace(2, -3, 11)))
    rec = measure_scratch(loss, cfg, rep)  # the record validates monotonicity on construction
    vals = [rec.first_passage[e] for e in cfg.thresholds]
    assert vals == sorted(vals)


def test_sweep_single_horizon_above_e0():
    cfg = RunConfig(n_reps=1, thresholds=(100.0,), kdp_grid=(0.1, 10.0), horizons=(1,))
    res = sweep_phase_diagram(experimental_factory(), cfg, SPLIT)
    for c in res.cells:
        assert c.mean_t_scratch == 0 and c.mean_t_unlearn == 0 and c.ratio == 0


def test_sweep_no_forgetting_is_free():
    cfg = small_cfg(sensitivity_mode="measured")
    res = sweep_phase_diagram(experimental_factory(rf=0.0), cfg, ForgetSplit(0.0))
    assert all(c.ratio == 0 and c.mean_t_unlearn == 0 for c in res.cells)


def test_sweep_has_costly_cells_at_high_privacy():
    res = sweep_phase_diagram(experimental_factory(), small_cfg(), SPLIT)
    assert any(c.ratio >= 0.5 for c in res.cells if c.kdp == 100.0 and c.e <= 0.1)


def test_sweep_trivial_cells_zero():
    cfg = small_cfg(n_reps=50)
    res = sweep_phase_diagram(experimental_factory(), cfg, SPLIT)
    for c in res.cells:
        if c.e >= 1.1 * trivial_boundary(SPEC2, SPLIT, c.kdp):
            assert c.mean_t_unlearn == 0 and c.ratio == 0


def test_sweep_unlearn_monotone_in_kdp():
    cfg = small_cfg(n_reps=30, kdp_grid=(0.01, 0.1, 1.0, 10.0, 100.0))
    res = sweep_phase_diagram(experimental_factory(), cfg, SPLIT)
    for e in cfg.thresholds:
        row = sorted((c for c in res.cells if c.e == e), key=lambda c: c.kdp)
        for a, b in zip(row, row[1:]):
            pooled = math.hypot(a.se_t_unlearn, b.se_t_unlearn)
            assert b.mean_t_unlearn >= a.mean_t_unlearn - 2 * pooled


@pytest.mark.parametrize("estimator", ["per_run", "expected"])
def test_sweep_deterministic_across_threads(estimator):
    cfg = small_cfg(estimator=estimator)
    texts = [results_to_csv_text(sweep_phase_diagram(experimental_factory(), cfg, SPLIT, threads=t)) for t in (1, 3, 1)]
    assert texts[0] == texts[1] == texts[2]


def test_sweep_counts_gradient_accesses_for_batches():
    class Batched(SyntheticQuadraticLoss):
        kernel_kind = -1  # force the generic path
        accesses_per_step = 4

    fac = lambda T: Batched(SPEC2, hard_instance_mixture(0.5, 0.01))  # noqa: E731
    cfg = RunConfig(n_reps=1, thresholds=(1.0,), kdp_grid=(1.0,), horizons=(500,), eval_every=1)
    res = sweep_phase_diagram(fac, cfg, SPLIT)
    c = res.cells[0]
    assert c.mean_t_scratch % 4 == 0 and c.mean_t_scratch > 0


def test_expected_estimator_uses_averaged_curve():
    cfg = small_cfg(estimator="expected", n_reps=20)
    res = sweep_phase_diagram(experimental_factory(), cfg, SPLIT)
    assert res.cells and all(c.n_scratch == len(cfg.horizons) for c in res.cells)


def test_censored_cells_flagged():
    cfg = RunConfig(n_reps=3, thresholds=(1e-6,), kdp_grid=(1.0,), horizons=(2,))
    res = sweep_phase_diagram(experimental_factory(), cfg, SPLIT)
    c = res.cells[0]
    assert c.n_censored_scratch == 3 and not c.valid and c.censored
    assert c.mean_t_scratch == 2


def test_results_csv_roundtrip(tmp_path):
    res = sweep_phase_diagram(experimental_factory(), small_cfg(), SPLIT)
    path = tmp_path / "r.csv"
    write_results_csv(res, path)
    back = cells_from_rows(read_results_csv(path))
    assert back == res.cells
    header = path.read_text().splitlines()[0].split(",")
    assert header[:14] == ["loss_mode", "mu", "L", "d", "rf", "seed", "n_reps", "e", "kdp", "t_scratch_mean",
                           "t_unlearn_mean", "ratio", "censored_scratch", "censored_unlearn"]
