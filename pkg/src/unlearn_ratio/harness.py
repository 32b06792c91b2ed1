"""First-passage measurement of retraining and unlearning times, and the
``(e, kdp)`` phase-diagram sweep built on it.

Computing time is counted in stochastic-gradient accesses, never seconds.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .core import Estimator, ForgetSplit, RunConfig
from .optim import DivergenceError, RuleKind, UpdateRule, run_iterative, tuned_constant_step
from .unlearn import Sensitivity, UnlearnPlan, mechanism_rng

log = logging.getLogger(__name__)

CENSORED = math.inf


def rep_rng(seed: int, rep: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for repetition ``rep`` of work stream ``stream``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(rep)]))


@dataclass(frozen=True)
class RunRecord:
    kind: str
    first_passage: dict
    seed: int
    kdp: float | None = None
    diverged_at: int | None = None

    def __post_init__(self):
        times = [self.first_passage[e] for e in sorted(self.first_passage)]
        # larger e must never need more steps than smaller e
        if any(b > a for a, b in zip(times, times[1:])):
            raise AssertionError(f"first passage not monotone in e: {self.first_passage}")


@dataclass(frozen=True)
class PhaseCell:
    e: float
    kdp: float
    mean_t_scratch: float
    mean_t_unlearn: float
    ratio: float
    n_censored_scratch: int
    n_censored_unlearn: int
    n_scratch: int
    n_unlearn: int
    se_t_scratch: float = 0.0
    se_t_unlearn: float = 0.0

    @property
    def valid(self) -> bool:
        return self.n_censored_scratch < self.n_scratch

    @property
    def censored(self) -> bool:
        return self.n_censored_scratch > 0 or self.n_censored_unlearn > 0


def complexity_ratio(mean_unlearn: float, mean_scratch: float) -> float:
    if mean_unlearn == 0:
        return 0.0
    if mean_scratch == 0:
        return math.inf
    return mean_unlearn / mean_scratch


# ---------------------------------------------------------------------------
# single trajectories


def _is_synthetic(loss) -> bool:
    return getattr(loss, "kernel_kind", -1) >= 0


def _kernel_trajectory(loss, theta0, rule: UpdateRule, uniforms, thresholds, curve=None):
    spec = loss.spec
    record = curve is not None
    buf = curve if record else np.zeros(1)
    opt_c = float(loss.retain_optimum()[0])
    passage, diverged = _kernels.synthetic_run(
        loss.kernel_kind,
        np.ascontiguousarray(theta0, dtype=float),
        uniforms,
        loss.mix.p_plus,
        spec.mu,
        spec.lipschitz,
        spec.radius,
        rule.code,
        rule.step_constant,
        rule.decay,
        rule.decay_every,
        opt_c,
        np.asarray(thresholds, dtype=float),
        buf,
        record,
        True,
    )
    return passage, (None if diverged < 0 else int(diverged))


def _generic_trajectory(loss, theta0, rule, steps, rng, thresholds, eval_every=1, curve=None):
    thresholds = np.asarray(thresholds, dtype=float)
    passage = np.full(thresholds.size, -1, dtype=np.int64)
    ptr = [0]

    def check(t, avg):
        ex = loss.retain_excess(avg)
        if curve is not None:
            curve[t // eval_every] += ex
        while ptr[0] < thresholds.size and ex <= thresholds[ptr[0]]:
            passage[ptr[0]] = t
            ptr[0] += 1
        return ptr[0] == thresholds.size and curve is None

    if check(0, np.asarray(theta0, dtype=float)):
        return passage, None

    def observer(t, avg):
        if t % eval_every and t != steps:
            return False
        return check(t, avg)

    try:
        run_iterative(rule, theta0, loss, steps, rng, observer)
    except DivergenceError as exc:
        return passage, exc.step
    return passage, None


def _trajectory(loss, theta0, rule, steps, rng, thresholds, eval_every=1, curve=None):
    if _is_synthetic(loss):
        uniforms = rng.random(steps)
        return _kernel_trajectory(loss, theta0, rule, uniforms, thresholds, curve)
    return _generic_trajectory(loss, theta0, rule, steps, rng, thresholds, eval_every, curve)


def _passage_dict(passage, thresholds, e0, accesses=1):
    out = {}
    for e, p in zip(thresholds, passage):
        if e >= e0:
            # the data-independent zero model already meets any target >= e0
            out[e] = 0
        else:
            out[e] = CENSORED if p < 0 else int(p) * accesses
    return out


def default_scratch_rule(loss) -> UpdateRule:
    return UpdateRule(RuleKind.DECAYING_AVG_SCRATCH)


def measure_scratch(loss, cfg: RunConfig, rep: int, rule: UpdateRule | None = None, stream: int = 0) -> RunRecord:
    """Retrain from the zero vector and record first passage of every threshold."""
    rule = rule or default_scratch_rule(loss)
    rng = rep_rng(cfg.seed, rep, stream)
    theta0 = np.zeros(loss.spec.dim)
    mechanism_rng(rng)  # keep data draws aligned with the unlearning arm
    passage, div = _trajectory(loss, theta0, rule, cfg.max_steps, rng, cfg.thresholds, cfg.eval_every)
    fp = _passage_dict(passage, cfg.thresholds, loss.spec.e0)
    return RunRecord("scratch", fp, cfg.seed, None, div)


def measure_unlearn(loss, plan: UnlearnPlan, cfg: RunConfig, rep: int, stream: int = 0) -> RunRecord:
    """Noise the full optimum, then fine-tune; the step-0 check sees the noised model."""
    rng = rep_rng(cfg.seed, rep, stream)
    z = mechanism_rng(rng).standard_normal(loss.spec.dim)
    theta0 = loss.full_optimum() + plan.noise_sigma * z
    passage, div = _trajectory(loss, theta0, plan.rule, cfg.max_steps, rng, cfg.thresholds, cfg.eval_every)
    fp = _passage_dict(passage, cfg.thresholds, loss.spec.e0)
    return RunRecord("unlearn", fp, cfg.seed, plan.kdp, div)


# ---------------------------------------------------------------------------
# sweep


@dataclass
class SweepResult:
    cells: list
    loss_mode: str
    mu: float
    lipschitz: float
    dim: int
    rf: float
    seed: int
    n_reps: int
    n_diverged: int = 0
    e0: float = math.nan
    notes: list = field(default_factory=list)

    def cell(self, e: float, kdp: float) -> PhaseCell:
        for c in self.cells:
            if c.e == e and c.kdp == kdp:
                return c
        raise KeyError((e, kdp))


def _finetune_rule(kind: str, loss, sens: Sensitivity, kdp: float, horizon: int, erm_rule: UpdateRule | None):
    if erm_rule is not None:
        return erm_rule
    if kind == "constant":
        step = tuned_constant_step(loss.spec, sens.value, kdp, horizon)
        return UpdateRule(RuleKind.CONSTANT_STEP, step_constant=step)
    return UpdateRule(RuleKind.DECAYING_AVG_FINETUNE)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def sweep_phase_diagram(
    loss_factory: Callable[[int], object],
    cfg: RunConfig,
    split: ForgetSplit,
    *,
    loss_mode: str = "synthetic_experimental",
    finetune_rule: str = "decaying",
    erm_rule: UpdateRule | None = None,
    threads: int = 1,
) -> SweepResult:
    """Measure scratch and unlearning first passages on every horizon and aggregate.

    ``loss_factory(T)`` builds the loss used for horizon ``T``. Arm 0 is scratch,
    arm ``j >= 1`` unlearns with ``cfg.kdp_grid[j-1]``. All arms of a repetition
    share its data stream and its standard-normal mechanism draw.
    """
    thresholds = np.asarray(cfg.thresholds, dtype=float)
    kdps = list(cfg.kdp_grid)
    n_arms = 1 + len(kdps)
    horizons = list(cfg.horizons)
    losses = [loss_factory(T) for T in horizons]
    ref = losses[0]
    e0 = ref.spec.e0
    accesses = ref.accesses_per_step

    plans = []
    for T, loss in zip(horizons, losses):
        sens = Sensitivity.for_loss(cfg.sensitivity_mode, loss, split)
        row = []
        for k in kdps:
            rule = _finetune_rule(finetune_rule, loss, sens, k, T, erm_rule)
            row.append(UnlearnPlan(kdp=k, sensitivity=sens, finetune_steps=T, rule=rule))
        plans.append(row)
    scratch_rule = erm_rule or UpdateRule(RuleKind.DECAYING_AVG_SCRATCH)

    def run_rep(h: int, rep: int, curves=None):
        loss, T = losses[h], horizons[h]
        rng = rep_rng(cfg.seed, rep, h)
        z = mechanism_rng(rng).standard_normal(loss.spec.dim)
        theta_star = loss.full_optimum()
        out = np.empty((n_arms, thresholds.size), dtype=np.int64)
        div = 0
        synthetic = _is_synthetic(loss)
        uniforms = rng.random(T) if synthetic else None
        state = None if synthetic else rng.bit_generator.state
        starts = [np.zeros(loss.spec.dim)] + [theta_star + p.noise_sigma * z for p in plans[h]]
        rules = [scratch_rule] + [p.rule for p in plans[h]]
        for a in range(n_arms):
            curve = None if curves is None else curves[a]
            if synthetic:
                passage, d = _kernel_trajectory(loss, starts[a], rules[a], uniforms, thresholds, curve)
            else:
                # every arm replays the same minibatch stream
                rng.bit_generator.state = state
                passage, d = _generic_trajectory(
                    loss, starts[a], rules[a], T, rng, thresholds, cfg.eval_every, curve
                )
            if d is not None:
                div += 1
                passage = np.where(passage < 0, -1, passage)
            out[a] = passage
        return out, div

    def steps_of(h, passage):
        T = horizons[h]
        times = np.where(passage < 0, T, passage).astype(float) * accesses
        cens = passage < 0
        big = thresholds >= e0
        times[..., big] = 0.0
        cens[..., big] = False
        return times, cens

    n_div = 0
    if cfg.estimator is Estimator.PER_RUN:
        units = [(h, r) for h in range(len(horizons)) for r in range(cfg.n_reps)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda u: run_rep(*u), units))
        else:
            results = [run_rep(*u) for u in units]
        # slots keyed by (horizon, rep), reduced in that fixed order
        times = np.empty((len(units), n_arms, thresholds.size))
        cens = np.empty_like(times, dtype=bool)
        for i, ((h, _), (passage, div)) in enumerate(zip(units, results)):
            times[i], cens[i] = steps_of(h, passage)
            n_div += div
    else:
        def run_horizon(h):
            T = horizons[h]
            stride = 1 if _is_synthetic(losses[h]) else cfg.eval_every
            curves = np.zeros((n_arms, T // stride + 1))
            div = 0
            for r in range(cfg.n_reps):
                _, d = run_rep(h, r, curves)
                div += d
            mean_curve = curves / cfg.n_reps
            passage = np.full((n_arms, thresholds.size), -1, dtype=np.int64)
            for a in range(n_arms):
                for j, e in enumerate(thresholds):
                    hit = np.flatnonzero(mean_curve[a] <= e)
                    if hit.size:
                        passage[a, j] = min(int(hit[0]) * stride, T)
            return passage, div

        idx = list(range(len(horizons)))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(run_horizon, idx))
        else:
            results = [run_horizon(h) for h in idx]
        times = np.empty((len(idx), n_arms, thresholds.size))
        cens = np.empty_like(times, dtype=bool)
        for h, (passage, div) in zip(idx, results):
            times[h], cens[h] = steps_of(h, passage)
            n_div += div

    if n_div:
        log.warning("%d runs diverged and were treated as censored", n_div)

    cells = []
    n = times.shape[0]
    for j, e in enumerate(thresholds):
        ms, ss = _mean_se(times[:, 0, j])
        cs = int(cens[:, 0, j].sum())
        for a, k in enumerate(kdps, start=1):
            mu_, su = _mean_se(times[:, a, j])
            cells.append(
                PhaseCell(
                    e=float(e),
                    kdp=float(k),
                    mean_t_scratch=ms,
                    mean_t_unlearn=mu_,
                    ratio=complexity_ratio(mu_, ms),
                    n_censored_scratch=cs,
                    n_censored_unlearn=int(cens[:, a, j].sum()),
                    n_scratch=n,
                    n_unlearn=n,
                    se_t_scratch=ss,
                    se_t_unlearn=su,
                )
            )
    for c in cells:
        if not c.valid:
            log.warning("cell e=%g kdp=%g: every scratch run censored", c.e, c.kdp)
    return SweepResult(
        cells=cells,
        loss_mode=loss_mode,
        mu=ref.spec.mu,
        lipschitz=ref.spec.lipschitz,
        dim=ref.spec.dim,
        rf=split.rf,
        seed=cfg.seed,
        n_reps=cfg.n_reps,
        n_diverged=n_div,
        e0=e0,
    )


# ---------------------------------------------------------------------------
# results CSV

RESULT_COLUMNS = (
    "loss_mode",
    "mu",
    "L",
    "d",
    "rf",
    "seed",
    "n_reps",
    "e",
    "kdp",
    "t_scratch_mean",
    "t_unlearn_mean",
    "ratio",
    "censored_scratch",
    "censored_unlearn",
    "t_scratch_se",
    "t_unlearn_se",
    "n_runs",
)
REQUIRED_COLUMNS = RESULT_COLUMNS[:14]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def results_to_csv_text(res: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for c in res.cells:
        w.writerow(
            [
                res.loss_mode,
                _fmt(res.mu),
                _fmt(res.lipschitz),
                res.dim,
                _fmt(res.rf),
                res.seed,
                res.n_reps,
                _fmt(c.e),
                _fmt(c.kdp),
                _fmt(c.mean_t_scratch),
                _fmt(c.mean_t_unlearn),
                _fmt(c.ratio),
                c.n_censored_scratch,
                c.n_censored_unlearn,
                _fmt(c.se_t_scratch),
                _fmt(c.se_t_unlearn),
                c.n_scratch,
            ]
        )
    return buf.getvalue()


def write_text_atomic(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results_csv(res: SweepResult, path) -> None:
    write_text_atomic(path, results_to_csv_text(res))


class SchemaError(ValueError):
    pass


def read_results_csv(path) -> list[dict]:
    """Parse a results file into row dicts with numeric fields converted."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"missing column(s): {', '.join(missing)}")
        rows = []
        for raw in reader:
            row = dict(raw)
            for key in ("mu", "L", "rf", "e", "kdp", "t_scratch_mean", "t_unlearn_mean", "ratio",
                        "t_scratch_se", "t_unlearn_se"):
                if key in row and row[key] is not None:
                    row[key] = float(row[key])
            for key in ("d", "seed", "n_reps", "censored_scratch", "censored_unlearn", "n_runs"):
                if key in row and row[key] is not None:
                    row[key] = int(row[key])
            rows.append(row)
    if not rows:
        raise SchemaError("results file has a header but no rows")
    return rows


def cells_from_rows(rows: Sequence[dict]) -> list[PhaseCell]:
    out = []
    for r in rows:
        n = r.get("n_runs", r["n_reps"])
        out.append(
            PhaseCell(
                e=r["e"],
                kdp=r["kdp"],
                mean_t_scratch=r["t_scratch_mean"],
                mean_t_unlearn=r["t_unlearn_mean"],
                ratio=r["ratio"],
                n_censored_scratch=r["censored_scratch"],
                n_censored_unlearn=r["censored_unlearn"],
                n_scratch=n,
                n_unlearn=n,
                se_t_scratch=r.get("t_scratch_se", 0.0),
                se_t_unlearn=r.get("t_unlearn_se", 0.0),
            )
        )
    return out
