from pathlib import Path

import numpy as np
import pytest

from mpmpg.errors import ConfigError
from mpmpg.harness import (
    aggregate_curves,
    emit_plot,
    parse_config,
    parse_config_text,
    parse_seeds,
    read_aggregate,
    read_curve_csv,
    run_suite,
    speedup_factor,
    write_aggregate,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

TINY = """
[suite]
seeds = 0, 2-3

[run.gpomdp]
algorithm = GPOMDP
batch_size = 4
iterations = 6
horizon = 30

[run.rpg]
algorithm = RPG
batch_size = 2
window = 2
budget = 12
horizon = 30
"""


def test_window_config_parses():
    suite = parse_config(CONFIGS / "cartpole_window.ini")
    assert suite.seeds == list(range(10))
    assert len(suite.runs) == 4 and len(list(suite.jobs())) == 40
    pairs = sorted((c.batch_size, c.window) for c in suite.runs.values())
    assert pairs == [(4, 8), (8, 4), (16, 2), (32, 1)]
    for c in suite.runs.values():
        assert c.batch_size * c.iterations == 6400
        assert c.step == 0.01 and c.sigma2 == 0.3 and c.theta_init == 0.0 and c.optimizer == "ADAM"


def test_ablation_config_parses():
    suite = parse_config(CONFIGS / "rpg_theory_ablation.ini")
    assert {c.algorithm for c in suite.runs.values()} == {"RPG", "RPG-TH"}


def test_seed_lists():
    assert parse_seeds("0-2, 7") == [0, 1, 2, 7]
    with pytest.raises(ValueError):
        parse_seeds("3-1")


def test_missing_batch_size_names_field():
    text = "[suite]\nseeds = 0\n\n[run.a]\nalgorithm = RPG\niterations = 3\n"
    with pytest.raises(ConfigError) as err:
        parse_config_text(text)
    assert "batch_size" in str(err.value) and err.value.line == 4


def test_zero_window_is_full_reuse():
    text = "[suite]\nseeds = 0\n[run.a]\nalgorithm = RPG\nbatch_size = 4\nwindow = 0\niterations = 3\n"
    assert parse_config_text(text).runs["a"].window == 0


def test_unknown_key_reports_line():
    text = "[suite]\nseeds = 0\n[run.a]\nalgorithm = RPG\nbatch_size = 4\nbogus = 1\niterations = 3\n"
    with pytest.raises(ConfigError) as err:
        parse_config_text(text, "x.ini")
    assert err.value.line == 6 and "bogus" in str(err.value)


def test_mixed_environments_rejected():
    text = TINY + "\n[run.other]\nalgorithm = GPOMDP\nbatch_size = 2\niterations = 2\nenv = quadratic\n"
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/suite.ini")


@pytest.fixture(scope="module")
def tiny_suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    suite = parse_config_text(TINY)
    agg, faults = run_suite(suite, out)
    return suite, out, agg, faults


def test_suite_writes_all_files(tiny_suite):
    _, out, agg, faults = tiny_suite
    assert not faults
    assert len(list(out.glob("*_seed*.csv"))) == 6 and agg.exists()
    c = read_curve_csv(out / "rpg_seed2.csv")
    assert c["collected"].tolist() == [2, 4, 6, 8, 10, 12]
    assert np.all(c["seed"] == 2)


def test_rerun_is_byte_identical(tiny_suite, tmp_path):
    suite, out, agg, _ = tiny_suite
    agg2, _ = run_suite(suite, tmp_path, threads=2)
    for f in sorted(out.glob("*.csv")) + sorted(out.glob("*.json")):
        assert (tmp_path / f.name).read_bytes() == f.read_bytes()


def test_aggregate_ci(tiny_suite):
    _, out, agg, _ = tiny_suite
    curves = [read_curve_csv(out / f"gpomdp_seed{s}.csv") for s in (0, 2, 3)]
    ys = np.stack([c["mean_return"] for c in curves])
    x, mean, ci = read_aggregate(agg)["gpomdp"]
    assert np.array_equal(x, curves[0]["collected"])
    assert np.allclose(mean, ys.mean(0), rtol=1e-14)
    assert np.allclose(ci, 1.96 * ys.std(0, ddof=1) / np.sqrt(3), rtol=1e-9)


def test_aggregate_rejects_mismatched_grids():
    a = {"collected": np.array([1.0, 2.0]), "mean_return": np.array([0.0, 1.0])}
    b = {"collected": np.array([1.0, 3.0]), "mean_return": np.array([0.0, 1.0])}
    with pytest.raises(ValueError):
        aggregate_curves([a, b])


def test_plot_has_both_series(tiny_suite, tmp_path):
    _, _, agg, _ = tiny_suite
    out = emit_plot(agg, tmp_path / "a.svg")
    svg = out.read_text()
    assert svg.startswith("<?xml") and "gpomdp" in svg and "rpg" in svg
    assert emit_plot(agg, tmp_path / "b.svg").read_bytes() == out.read_bytes()


def test_plot_refuses_empty(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("config,collected,mean,ci_low,ci_high,n\n")
    with pytest.raises(ValueError):
        emit_plot(p, tmp_path / "x.svg")


def learning_curve(x):
    return 200.0 * (1.0 - np.exp(-x / 1500.0))


def test_speedup_self_match():
    x = np.arange(32, 6401, 32, dtype=float)
    for y in (learning_curve(x), np.sin(x / 500.0) + x / 1000.0):
        r = speedup_factor((x, y), (x, y), 4)
        assert abs(r.factor - 1.0) <= 0.01 and r.ci_low <= r.factor <= r.ci_high


def test_speedup_synthetic_rescale():
    x = np.arange(8, 6401, 8, dtype=float)
    rpg = (x, learning_curve(2.0 * x))
    base = (x, learning_curve(x))
    r = speedup_factor(rpg, base, 4)
    assert r.factor == pytest.approx(2.0, abs=0.01)
    assert r.grid == (0.5, 5.0, 0.01)


def test_speedup_envelopes_bracket_estimate():
    x = np.arange(8, 6401, 8, dtype=float)
    r = speedup_factor((x, learning_curve(3 * x), np.full_like(x, 10.0)), (x, learning_curve(x), np.full_like(x, 10.0)), 4)
    assert r.ci_low < r.factor < r.ci_high


def test_speedup_refuses_disjoint_curves():
    a = (np.array([1.0, 2.0]), np.array([0.0, 1.0]))
    b = (np.array([100.0, 200.0]), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        speedup_factor(a, b, 2)


def test_write_aggregate_roundtrip(tmp_path):
    x = np.array([1.0, 2.0, 3.0])
    curves = [{"collected": x, "mean_return": x * k} for k in (1.0, 2.0, 3.0)]
    p = write_aggregate({"a": curves}, tmp_path / "agg.csv")
    xs, mean, ci = read_aggregate(p)["a"]
    assert np.allclose(mean, 2 * x) and np.all(ci > 0)
