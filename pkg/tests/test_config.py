import pytest

from unlearn_ratio.config import ConfigError, SweepConfig, load_config, parse_config
from unlearn_ratio.core import DomainError


def test_defaults():
    cfg = SweepConfig()
    assert (cfg.mu, cfg.lipschitz, cfg.rf, cfg.dim, cfg.n_reps) == (1.0, 25.0, 0.01, 2, 50)
    assert cfg.batch_size == 64 and cfg.lr == 1e-2 and cfg.lr_decay == 0.6 and cfg.decay_epochs == 1000
    rc = cfg.run_config()
    assert rc.thresholds[0] == pytest.approx(100.0) and rc.horizons[-1] == 10**6


def test_parse_full():
    text = """
seed = 3
loss = "synthetic_quadratic"

[problem]
dim = 4
rf = 0.02

[grid]
e = [1.0, 10.0, 0.1]
kdp_min = 0.1
kdp_max = 10
kdp_num = 3
horizons = [1, 100]

[run]
n_reps = 5
estimator = "expected"
"""
    cfg = parse_config(text)
    assert cfg.seed == 3 and cfg.dim == 4 and cfg.rf == 0.02
    assert cfg.thresholds == (10.0, 1.0, 0.1)
    assert cfg.kdp_grid == pytest.approx((0.1, 1.0, 10.0))
    assert cfg.horizons == (1, 100)
    assert cfg.run_config().estimator.value == "expected"


@pytest.mark.parametrize(
    "text, line, needle",
    [
        ("seed = 1\n[problem]\nmu = 'x'\n", 3, "mu"),
        ("seed = 1\nbogus = 2\n", 2, "unknown key"),
        ("[problem]\nrf = 1.5\n", 2, "rf"),
        ("seed = \n", 1, "malformed"),
        ("[nope]\nx = 1\n", 1, "unknown section"),
        ("[grid]\ne = [1.0, -2.0]\n", 2, "thresholds"),
        ("loss = \"erm\"\n", 1, "dataset"),
        ("[run]\nn_reps = 0\n", 2, "n_reps"),
    ],
)
def test_errors_are_line_precise(text, line, needle):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "cfg.toml")
    assert info.value.line == line
    assert f"cfg.toml:{line}:" in str(info.value)
    assert needle in str(info.value)


def test_unreadable(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_experimental_needs_even_dim():
    with pytest.raises(DomainError):
        SweepConfig(dim=3)


def test_erm_horizon_is_step_budget(tmp_path):
    cfg = SweepConfig(loss_mode="erm", dataset=str(tmp_path / "x.csv"), erm_steps=300, eval_every=5)
    rc = cfg.run_config()
    assert rc.horizons == (300,) and rc.eval_every == 5
