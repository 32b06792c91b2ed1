"""``unlearn-ratio`` command line: sweep, theory, verify, gen-data, plot.

Exit codes: 0 success, 1 a lemma check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import time

from .config import LOSS_MODES, ConfigError, SweepConfig, load_config, with_overrides
from .core import DomainError, ForgetSplit, ProblemSpec, log_grid
from .harness import SchemaError, SweepResult, sweep_phase_diagram, write_results_csv, write_text_atomic
from .losses import make_blobs, write_dataset_csv
from .theory import THEORY_COLUMNS, RegimeParams, diagram_rows
from .verify import LEMMAS, run_lemma

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("unlearn_ratio")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _env_threads() -> int:
    raw = os.environ.get("UNLEARN_THREADS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"UNLEARN_THREADS must be an integer, got {raw!r}") from None


def run_sweep(cfg: SweepConfig) -> SweepResult:
    factory = cfg.loss_factory()
    erm_rule = cfg.erm_update_rule(factory(cfg.erm_steps)) if cfg.loss_mode == "erm" else None
    return sweep_phase_diagram(
        factory,
        cfg.run_config(),
        cfg.split,
        loss_mode=cfg.loss_mode,
        finetune_rule=cfg.finetune_rule,
        erm_rule=erm_rule,
        threads=cfg.threads,
    )


def _summary(res: SweepResult, seconds: float) -> str:
    n = len(res.cells)
    cens_s = sum(c.n_censored_scratch > 0 for c in res.cells)
    cens_u = sum(c.n_censored_unlearn > 0 for c in res.cells)
    invalid = sum(not c.valid for c in res.cells)
    zero = sum(c.ratio == 0 for c in res.cells)
    lines = [
        f"{'cells':<28}{n}",
        f"{'ratio == 0':<28}{zero}",
        f"{'cells w/ censored scratch':<28}{cens_s}",
        f"{'cells w/ censored unlearn':<28}{cens_u}",
        f"{'invalid cells':<28}{invalid}",
        f"{'diverged runs':<28}{res.n_diverged}",
        f"{'wall time [s]':<28}{seconds:.2f}",
    ]
    return "\n".join(lines)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config) if args.config else SweepConfig()
    threads = args.threads
    if threads is None and os.environ.get("UNLEARN_THREADS"):
        threads = _env_threads()
    try:
        cfg = with_overrides(cfg, seed=args.seed, threads=threads, out=args.out, loss_mode=args.loss,
                             dataset=args.dataset, n_reps=args.reps)
    except (DomainError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    t0 = time.perf_counter()
    try:
        res = run_sweep(cfg)
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {cfg.dataset}: {exc.strerror}") from exc
    elapsed = time.perf_counter() - t0
    try:
        write_results_csv(res, cfg.out)
    except OSError as exc:
        raise ConfigError(f"cannot write {cfg.out}: {exc.strerror}") from exc
    print(_summary(res, elapsed))
    print(f"wrote {cfg.out}")
    if res.n_diverged:
        print(f"warning: {res.n_diverged} runs diverged; affected cells count them as censored", file=sys.stderr)
    return EXIT_OK


def cmd_theory(args) -> int:
    try:
        spec = ProblemSpec(args.mu, args.L, args.d)
        split = ForgetSplit(args.rf)
        params = RegimeParams(args.c_lower, args.gamma, args.c_upper)
        e_grid = sorted(log_grid(args.e_min, args.e_max, args.e_num), reverse=True)
        k_grid = log_grid(args.kdp_min, args.kdp_max, args.kdp_num)
    except (DomainError, ValueError) as exc:
        raise UsageError(f"theory: {exc}") from exc
    rows = diagram_rows(spec, split, e_grid, k_grid, params)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=THEORY_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (format(v, ".17g") if isinstance(v, float) else v) for k, v in r.items()})
    if args.out:
        write_text_atomic(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_verify(args) -> int:
    names = [args.lemma] if args.lemma else [n for n in LEMMAS if n != "finetune_rate" or args.all]
    if args.lemma and args.lemma not in LEMMAS:
        raise UsageError(f"verify: unknown lemma {args.lemma!r}; choose from {', '.join(LEMMAS)}")
    failed = False
    for name in names:
        rep = run_lemma(name, seed=args.seed, tmax=args.tmax)
        print(rep.line())
        failed |= not rep.passed and not rep.skipped
    return EXIT_FAIL if failed else EXIT_OK


def cmd_gen_data(args) -> int:
    feats, labels = make_blobs(args.n, args.p, args.classes, args.spread, args.seed)
    try:
        write_dataset_csv(args.out, feats, labels)
    except OSError as exc:
        raise UsageError(f"gen-data: cannot write {args.out}: {exc.strerror}") from exc
    print(f"wrote {args.out} ({args.n} rows, {args.p} features, {args.classes} classes)")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plot import plot_results

    try:
        n = plot_results(args.input, args.out, args.column, args.overlay_theory)
    except SchemaError as exc:
        raise UsageError(f"plot: {args.input}: {exc}") from exc
    except KeyError as exc:
        raise UsageError(f"plot: {args.input}: missing column {exc.args[0]!r}") from exc
    except OSError as exc:
        raise UsageError(f"plot: {exc.filename}: {exc.strerror}") from exc
    print(f"wrote {args.out} ({n} cells)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="unlearn-ratio", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sweep", help="run the (e, kdp) phase-diagram sweep")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=_positive_int)
    s.add_argument("--out")
    s.add_argument("--loss", choices=LOSS_MODES)
    s.add_argument("--dataset", help="dataset CSV for --loss erm")
    s.add_argument("--reps", type=_positive_int, help="override n_reps")
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("theory", help="emit the analytic regime diagram as CSV")
    t.add_argument("--rf", type=float, default=0.01)
    t.add_argument("--mu", type=float, default=1.0)
    t.add_argument("--L", type=float, default=25.0)
    t.add_argument("--d", type=int, default=2)
    t.add_argument("--c-lower", type=float, default=1.0)
    t.add_argument("--c-upper", type=float, default=1.0)
    t.add_argument("--gamma", type=float, default=0.5)
    t.add_argument("--e-min", type=float, default=1e-2)
    t.add_argument("--e-max", type=float, default=1e2)
    t.add_argument("--e-num", type=_positive_int, default=9)
    t.add_argument("--kdp-min", type=float, default=1e-2)
    t.add_argument("--kdp-max", type=float, default=1e2)
    t.add_argument("--kdp-num", type=_positive_int, default=9)
    t.add_argument("--out")
    t.set_defaults(func=cmd_theory)

    v = sub.add_parser("verify", help="run the numerical lemma checks")
    v.add_argument("--lemma")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--tmax", type=_positive_int, default=30)
    v.add_argument("--all", action="store_true", help="include the Monte Carlo fine-tune rate check")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("gen-data", help="write a Gaussian-blobs classification CSV")
    g.add_argument("--n", type=_positive_int, default=200)
    g.add_argument("--p", type=_positive_int, default=4)
    g.add_argument("--classes", type=_positive_int, default=3)
    g.add_argument("--spread", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    pl = sub.add_parser("plot", help="render a results CSV as an SVG heatmap")
    pl.add_argument("--in", dest="input", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--column", default="ratio")
    pl.add_argument("--overlay-theory", action="store_true")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
