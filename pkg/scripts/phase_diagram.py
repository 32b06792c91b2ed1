"""Run a sweep, write its CSV, the analytic regime CSV and an SVG heatmap with theory overlay.

    python3 scripts/phase_diagram.py                       # synthetic, default grid
    python3 scripts/phase_diagram.py --config scripts/configs/erm_blobs.toml --erm
"""

from __future__ import annotations

import argparse
import logging
from dataclasses import dataclass
from pathlib import Path

from unlearn_ratio.cli import main as cli_main
from unlearn_ratio.cli import run_sweep
from unlearn_ratio.config import load_config, with_overrides
from unlearn_ratio.harness import write_results_csv
from unlearn_ratio.plot import plot_results


@dataclass
class Experiment:
    config: str = "scripts/configs/default.toml"
    out_dir: str = "results"
    threads: int = 1
    erm: bool = False  # generate the blobs dataset first
    n: int = 200
    p: int = 4
    classes: int = 3
    data_seed: int = 7


def run(exp: Experiment) -> Path:
    out_dir = Path(exp.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = load_config(exp.config)
    if exp.erm:
        data = out_dir / "blobs.csv"
        cli_main(["gen-data", "--n", str(exp.n), "--p", str(exp.p), "--classes", str(exp.classes),
                  "--seed", str(exp.data_seed), "--out", str(data)])
        cfg = with_overrides(cfg, dataset=str(data))
    stem = "phase_erm" if exp.erm else "phase_synthetic"
    csv_path = out_dir / f"{stem}.csv"
    cfg = with_overrides(cfg, threads=exp.threads, out=str(csv_path))
    res = run_sweep(cfg)
    write_results_csv(res, csv_path)
    n = plot_results(csv_path, out_dir / f"{stem}.svg", overlay_theory=not exp.erm)
    cli_main(["theory", "--rf", str(cfg.rf), "--mu", str(cfg.mu), "--L", str(cfg.lipschitz), "--d", str(cfg.dim),
              "--out", str(out_dir / f"{stem}_theory.csv")])
    logging.info("%d cells, %d diverged runs -> %s", n, res.n_diverged, csv_path)
    return csv_path


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    defaults = Experiment()
    ap.add_argument("--config", default=defaults.config)
    ap.add_argument("--out-dir", default=defaults.out_dir)
    ap.add_argument("--threads", type=int, default=defaults.threads)
    ap.add_argument("--erm", action="store_true")
    a = ap.parse_args()
    run(Experiment(config=a.config, out_dir=a.out_dir, threads=a.threads, erm=a.erm))
