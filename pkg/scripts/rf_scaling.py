"""Unlearning time versus forget ratio at kdp = 0, over a fine grid of targets.

Writes one row per (loss, fine-tune rule, sensitivity, e) with both mean
unlearning times and their quotient.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import os
from dataclasses import dataclass, field

from unlearn_ratio.cli import run_sweep
from unlearn_ratio.config import SweepConfig
from unlearn_ratio.core import ForgetSplit, ProblemSpec, log_grid
from unlearn_ratio.theory import efficient_threshold, trivial_boundary


@dataclass
class ScalingConfig:
    rf_pair: tuple = (0.01, 0.02)
    e_grid: tuple = field(default_factory=lambda: tuple(sorted(log_grid(1e-3, 1.0, 13), reverse=True)))
    losses: tuple = ("synthetic_experimental", "synthetic_quadratic")
    rules: tuple = ("decaying", "constant")
    sensitivities: tuple = ("measured", "theoretical")
    n_reps: int = 50
    seed: int = 0
    out: str = "results/rf_scaling.csv"


def scan(cfg: ScalingConfig):
    rows = []
    lo, hi = cfg.rf_pair
    for loss, rule, sens in itertools.product(cfg.losses, cfg.rules, cfg.sensitivities):
        means = {}
        for rf in cfg.rf_pair:
            sc = SweepConfig(rf=rf, loss_mode=loss, thresholds=cfg.e_grid, kdp_grid=(0.0,), n_reps=cfg.n_reps,
                             finetune_rule=rule, sensitivity_mode=sens, seed=cfg.seed)
            res = run_sweep(sc)
            means[rf] = {c.e: (c.mean_t_unlearn, c.se_t_unlearn) for c in res.cells}
        spec = ProblemSpec(1.0, 25.0, 2)
        for e in cfg.e_grid:
            (a, sa), (b, sb) = means[lo][e], means[hi][e]
            rows.append({
                "loss": loss, "rule": rule, "sensitivity": sens, "e": e,
                f"t_unlearn_rf{lo:g}": a, f"se_rf{lo:g}": sa,
                f"t_unlearn_rf{hi:g}": b, f"se_rf{hi:g}": sb,
                "quotient": b / a if a else float("nan"),
                "efficient_both": e >= efficient_threshold(spec, ForgetSplit(hi), 0.0),
                "above_trivial_lo": e >= trivial_boundary(spec, ForgetSplit(lo), 0.0),
            })
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=ScalingConfig.n_reps)
    ap.add_argument("--out", default=ScalingConfig.out)
    a = ap.parse_args()
    cfg = ScalingConfig(n_reps=a.reps, out=a.out)
    rows = scan(cfg)
    os.makedirs(os.path.dirname(cfg.out) or ".", exist_ok=True)
    with open(cfg.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        if r["quotient"] == r["quotient"]:
            print(f"{r['loss']:<24}{r['rule']:<10}{r['sensitivity']:<12}e={r['e']:<10.4g}quotient={r['quotient']:.3g}")
    print(f"wrote {cfg.out}")
