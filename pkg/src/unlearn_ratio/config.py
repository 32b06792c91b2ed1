"""File-backed sweep configuration (TOML) and the loss factories it describes."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import DomainError, ForgetSplit, ProblemSpec, RunConfig, default_horizons, log_grid
from .losses import (
    ErmLoss,
    SyntheticExperimentalLoss,
    SyntheticQuadraticLoss,
    hard_instance_mixture,
    read_dataset_csv,
    split_dataset,
)
from .optim import RuleKind, UpdateRule

LOSS_MODES = ("synthetic_quadratic", "synthetic_experimental", "erm")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        loc = ""
        if path:
            loc = f"{path}:{line}: " if line else f"{path}: "
        elif line:
            loc = f"line {line}: "
        super().__init__(loc + message)
        self.line = line


@dataclass(frozen=True)
class SweepConfig:
    mu: float = 1.0
    lipschitz: float = 25.0
    dim: int = 2
    rf: float = 0.01
    loss_mode: str = "synthetic_experimental"
    seed: int = 0
    n_reps: int = 50
    thresholds: tuple = field(default_factory=lambda: tuple(sorted(log_grid(1e-2, 1e2, 9), reverse=True)))
    kdp_grid: tuple = field(default_factory=lambda: log_grid(1e-2, 1e2, 9))
    horizons: tuple = field(default_factory=default_horizons)
    sensitivity_mode: str = "measured"
    estimator: str = "per_run"
    finetune_rule: str = "decaying"
    eval_every: int = 10
    threads: int = 1
    out: str = "results.csv"
    dataset: str | None = None
    # real-data schedule
    erm_rule: str = "epoch_decay"
    batch_size: int = 64
    lr: float = 1e-2
    lr_decay: float = 0.6
    decay_epochs: int = 1000
    l2_weight: float = 1.0
    erm_steps: int = 2000
    split_seed: int = 0

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise DomainError(f"loss must be one of {', '.join(LOSS_MODES)}, got {self.loss_mode!r}")
        if self.loss_mode == "erm" and not self.dataset:
            raise DomainError("erm mode requires a dataset path")
        if self.finetune_rule not in ("decaying", "constant"):
            raise DomainError("finetune_rule must be 'decaying' or 'constant'")
        if self.erm_rule not in ("epoch_decay", "decaying"):
            raise DomainError("erm rule must be 'epoch_decay' or 'decaying'")
        if self.threads < 1:
            raise DomainError("threads must be >= 1")
        if self.batch_size < 1 or self.erm_steps < 1 or self.decay_epochs < 1:
            raise DomainError("batch_size, steps and decay_epochs must be >= 1")
        ProblemSpec(self.mu, self.lipschitz, self.dim)
        ForgetSplit(self.rf)
        if self.loss_mode == "synthetic_experimental" and self.dim % 2:
            raise DomainError("synthetic_experimental needs an even dim")
        self.run_config()

    @property
    def split(self) -> ForgetSplit:
        return ForgetSplit(self.rf)

    def run_config(self) -> RunConfig:
        horizons = (self.erm_steps,) if self.loss_mode == "erm" else self.horizons
        return RunConfig(
            seed=self.seed,
            max_steps=max(horizons),
            n_reps=self.n_reps,
            thresholds=self.thresholds,
            kdp_grid=self.kdp_grid,
            sensitivity_mode=self.sensitivity_mode,
            horizons=horizons,
            estimator=self.estimator,
            eval_every=self.eval_every if self.loss_mode == "erm" else 1,
        )

    def loss_factory(self):
        """``T -> loss``; synthetic modes put the retain mean at ``1/(2 sqrt(T))``."""
        if self.loss_mode == "erm":
            feats, labels = read_dataset_csv(self.dataset)
            ds = split_dataset(feats, labels, self.rf, np.random.default_rng(self.split_seed))
            loss = ErmLoss(ds, self.l2_weight, self.batch_size, np.random.default_rng(self.split_seed + 1))
            return lambda T: loss
        spec = ProblemSpec(self.mu, self.lipschitz, self.dim)
        cls = SyntheticQuadraticLoss if self.loss_mode == "synthetic_quadratic" else SyntheticExperimentalLoss
        cache = {}

        def build(T):
            if T not in cache:
                cache[T] = cls(spec, hard_instance_mixture(1.0 / (2.0 * math.sqrt(T)), self.rf))
            return cache[T]

        return build

    def erm_update_rule(self, loss) -> UpdateRule | None:
        if self.loss_mode != "erm" or self.erm_rule != "epoch_decay":
            return None
        n_retain = loss.dataset.retain_indices.size
        steps_per_epoch = max(1, math.ceil(n_retain / self.batch_size))
        return UpdateRule(RuleKind.EPOCH_DECAY, self.lr, self.lr_decay, self.decay_epochs * steps_per_epoch)


# ---------------------------------------------------------------------------
# TOML loading

_SECTIONS = {
    "": {"seed", "threads", "loss", "out"},
    "problem": {"mu", "lipschitz", "dim", "rf"},
    "grid": {"e", "e_min", "e_max", "e_num", "kdp", "kdp_min", "kdp_max", "kdp_num",
             "horizons", "horizons_num", "horizons_max"},
    "run": {"n_reps", "sensitivity", "estimator", "finetune_rule", "eval_every"},
    "erm": {"dataset", "rule", "batch_size", "lr", "lr_decay", "decay_epochs", "l2_weight", "steps", "split_seed"},
}

_RENAME = {
    ("", "loss"): "loss_mode",
    ("run", "sensitivity"): "sensitivity_mode",
    ("erm", "rule"): "erm_rule",
    ("erm", "steps"): "erm_steps",
}


def _line_of(text: str, section: str, key: str) -> int | None:
    current = ""
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*=", line):
            return i
    return None


def _section_line(text: str, section: str) -> int | None:
    for i, raw in enumerate(text.splitlines(), start=1):
        if raw.strip().startswith(f"[{section}]"):
            return i
    return None


_TYPES = {f.name: f.type for f in fields(SweepConfig)}


def _coerce(name: str, value):
    kind = _TYPES[name]
    if kind in ("float",):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError("expected a number")
        return float(value)
    if kind in ("int",):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError("expected an integer")
        return value
    if kind.startswith("str"):
        if not isinstance(value, str):
            raise TypeError("expected a string")
        return value
    return value


def _num_list(value, what):
    if not isinstance(value, list) or not value:
        raise TypeError(f"{what} must be a non-empty array")
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        raise TypeError(f"{what} entries must be numbers")
    return [float(v) for v in value]


# message fragment -> candidate (section, key) to blame, tried in order
_ERROR_KEYS = (
    ("dataset", "erm", "dataset"),
    ("dataset", "", "loss"),
    ("forget fraction", "problem", "rf"),
    ("thresholds", "grid", "e"),
    ("kdp", "grid", "kdp"),
    ("horizons", "grid", "horizons"),
    ("even dim", "problem", "dim"),
    ("loss", "", "loss"),
    ("mu", "problem", "mu"),
    ("lipschitz", "problem", "lipschitz"),
    ("dim", "problem", "dim"),
    ("n_reps", "run", "n_reps"),
    ("threads", "", "threads"),
    ("finetune_rule", "run", "finetune_rule"),
    ("sensitivity", "run", "sensitivity"),
    ("estimator", "run", "estimator"),
    ("eval_every", "run", "eval_every"),
    ("erm rule", "erm", "rule"),
    ("batch_size", "erm", "batch_size"),
)


def parse_config(text: str, path: str | None = None) -> SweepConfig:
    """Parse TOML text into a :class:`SweepConfig`; errors carry a line number."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", int(m.group(1)) if m else None, path) from exc

    kw = {}
    grid = {}
    for section, body in [("", {k: v for k, v in data.items() if not isinstance(v, dict)})] + [
        (k, v) for k, v in data.items() if isinstance(v, dict)
    ]:
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]", _section_line(text, section), path)
        for key, value in body.items():
            line = _line_of(text, section, key)
            if key not in _SECTIONS[section]:
                where = f"[{section}]" if section else "top level"
                raise ConfigError(f"unknown key '{key}' in {where}", line, path)
            if section == "grid":
                grid[key] = (value, line)
                continue
            name = _RENAME.get((section, key), key)
            try:
                kw[name] = _coerce(name, value)
            except TypeError as exc:
                raise ConfigError(f"{key}: {exc}, got {value!r}", line, path) from None

    def gridval(prefix, lo, hi, num, descending=False):
        if prefix in grid:
            value, line = grid[prefix]
            try:
                vals = _num_list(value, prefix)
            except TypeError as exc:
                raise ConfigError(str(exc), line, path) from None
            return tuple(sorted(vals, reverse=descending)), line
        spec = {}
        for suffix, default in (("min", lo), ("max", hi), ("num", num)):
            value, line = grid.get(f"{prefix}_{suffix}", (default, None))
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{prefix}_{suffix} must be a number, got {value!r}", line, path)
            if suffix == "num" and (int(value) != value or value < 1):
                raise ConfigError(f"{prefix}_{suffix} must be a positive integer", line, path)
            if suffix != "num" and not value > 0:
                raise ConfigError(f"{prefix}_{suffix} must be positive", line, path)
            spec[suffix] = value
        vals = log_grid(spec["min"], spec["max"], int(spec["num"]))
        line = grid.get(f"{prefix}_min", (None, None))[1]
        return tuple(sorted(vals, reverse=descending)), line

    thresholds, e_line = gridval("e", 1e-2, 1e2, 9, descending=True)
    kdps, k_line = gridval("kdp", 1e-2, 1e2, 9)
    kw["thresholds"], kw["kdp_grid"] = thresholds, kdps
    if "horizons" in grid:
        value, h_line = grid["horizons"]
        try:
            hs = _num_list(value, "horizons")
        except TypeError as exc:
            raise ConfigError(str(exc), h_line, path) from None
        if any(int(h) != h or h < 1 for h in hs):
            raise ConfigError("horizons must be positive integers", h_line, path)
        kw["horizons"] = tuple(sorted({int(h) for h in hs}))
    elif "horizons_num" in grid or "horizons_max" in grid:
        num, h_line = grid.get("horizons_num", (13, None))
        hi, _ = grid.get("horizons_max", (1e6, None))
        kw["horizons"] = default_horizons(int(num), float(hi))

    try:
        return SweepConfig(**kw)
    except (DomainError, ValueError) as exc:
        msg = str(exc)
        line = None
        for needle, sec, key in _ERROR_KEYS:
            if needle in msg:
                line = _line_of(text, sec, key) or _line_of(text, sec, f"{key}_min")
                if line:
                    msg = f"{key}: {msg}" if not msg.startswith(key) else msg
                    break
        raise ConfigError(msg, line, path) from exc


def load_config(path) -> SweepConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from exc
    return parse_config(text, str(path))


def with_overrides(cfg: SweepConfig, **kw) -> SweepConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
