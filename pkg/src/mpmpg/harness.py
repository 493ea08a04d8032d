"""Experiment suites: config files, batch runs, CSV output, aggregation, speedup.

Config files are INI-style. One ``[suite]`` section and one ``[run.NAME]``
section per configuration::

    [suite]
    seeds = 0-9            # comma list and/or inclusive ranges
    out_dir = results      # optional, relative to the working directory

    [run.rpg-8x4]
    algorithm = RPG        # RPG, RPG-TH, GPOMDP, MIW-PG, BH-PG, PGPE-RPG
    batch_size = 8
    window = 4             # 0 = reuse everything collected so far
    budget = 6400          # collected trajectories; or give iterations
    step = 0.01
    sigma2 = 0.3

Any field of :class:`~mpmpg.algo.RunConfig` may be set in a run section;
``theta_init`` takes a number or a comma list. Unknown keys are errors.
"""

import configparser
import csv
import dataclasses
import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .algo import COLUMNS, RunConfig, run
from .errors import ConfigError, MpmpgError

log = logging.getLogger(__name__)

AGG_COLUMNS = ("config", "collected", "mean", "ci_low", "ci_high", "n")
Z95 = 1.96

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_INT = {"horizon", "iterations", "batch_size", "window", "seed"}
_FLOAT = {"sigma2", "D", "delta", "step", "gamma"}
_RUN_KEYS = (set(_FIELDS) - {"seed"}) | {"budget"}
_SUITE_KEYS = {"seeds", "out_dir"}


@dataclass
class ExperimentSuite:
    runs: dict
    seeds: list
    out_dir: Path
    source: Path | None = None

    def jobs(self):
        for name, cfg in self.runs.items():
            for seed in self.seeds:
                yield name, dataclasses.replace(cfg, seed=seed)


@dataclass(frozen=True)
class SpeedupResult:
    factor: float
    ci_low: float
    ci_high: float
    grid: tuple
    mse: float


def _line_of(lines, section, key=None):
    """1-based line of ``[section]`` or of ``key`` inside it."""
    inside = False
    for i, raw in enumerate(lines, 1):
        text = raw.strip()
        if text.startswith("["):
            inside = text == f"[{section}]"
            if inside and key is None:
                return i
            continue
        if inside and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", text):
            return i
    return None


def parse_seeds(text):
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


def _convert(key, value):
    if key in _INT or key == "budget":
        return int(value)
    if key in _FLOAT:
        return float(value)
    if key == "theta_init":
        parts = [float(v) for v in value.split(",")]
        return parts[0] if len(parts) == 1 else parts
    return value.strip()


def _run_config(name, section, lines, path):
    kw = {}
    budget = None
    for key, value in section.items():
        line = _line_of(lines, f"run.{name}", key)
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown key {key!r} in [run.{name}]", line, path)
        try:
            v = _convert(key, value)
        except ValueError:
            raise ConfigError(f"bad value {value!r} for {key}", line, path) from None
        if key == "budget":
            budget = v
        else:
            kw[key] = v
    where = _line_of(lines, f"run.{name}")
    for required in ("algorithm", "batch_size"):
        if required not in kw:
            raise ConfigError(f"[run.{name}] is missing required field {required!r}", where, path)
    if budget is not None:
        if "iterations" in kw:
            raise ConfigError(f"[run.{name}] sets both budget and iterations", where, path)
        kw["iterations"] = budget // kw["batch_size"]
    elif "iterations" not in kw:
        raise ConfigError(f"[run.{name}] needs iterations or budget", where, path)
    try:
        return RunConfig(**kw)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"[run.{name}]: {err}", where, path) from None


def parse_config_text(text, path=None, base_dir=None):
    lines = text.splitlines()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path or "<config>"))
    except configparser.Error as err:
        raise ConfigError(str(err).splitlines()[0], getattr(err, "lineno", None), path) from None

    if not parser.has_section("suite"):
        raise ConfigError("missing [suite] section", None, path)
    suite = parser["suite"]
    for key in suite:
        if key not in _SUITE_KEYS:
            raise ConfigError(f"unknown key {key!r} in [suite]", _line_of(lines, "suite", key), path)
    if "seeds" not in suite:
        raise ConfigError("[suite] is missing required field 'seeds'", _line_of(lines, "suite"), path)
    try:
        seeds = parse_seeds(suite["seeds"])
    except ValueError as err:
        raise ConfigError(str(err), _line_of(lines, "suite", "seeds"), path) from None
    base_dir = Path(base_dir) if base_dir is not None else Path(".")
    out_dir = base_dir / suite.get("out_dir", "results")

    runs = {}
    for sec in parser.sections():
        if sec == "suite":
            continue
        if not sec.startswith("run."):
            raise ConfigError(f"unknown section [{sec}]", _line_of(lines, sec), path)
        name = sec[4:]
        if not re.fullmatch(r"[A-Za-z0-9_.+-]+", name):
            raise ConfigError(f"bad run name {name!r}", _line_of(lines, sec), path)
        runs[name] = _run_config(name, parser[sec], lines, path)
    if not runs:
        raise ConfigError("no [run.NAME] sections", None, path)
    envs = {(c.env, c.gamma) for c in runs.values()}
    if len(envs) > 1:
        raise ConfigError("all runs in a suite must share env and gamma", None, path)
    return ExperimentSuite(runs, seeds, out_dir, path)


def parse_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError("config file not found", None, path)
    return parse_config_text(path.read_text(), path)


def curve_csv_text(curve):
    from io import StringIO

    buf = StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in curve.rows:
        w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in COLUMNS])
    return buf.getvalue()


def write_curve(curve, path):
    path = Path(path)
    path.write_text(curve_csv_text(curve))
    side = {
        "algorithm": curve.algorithm,
        "seed": curve.seed,
        "selection": curve.selection,
        "theta_out": [float(v) for v in curve.theta_out],
        "faults": curve.faults,
    }
    path.with_suffix(".json").write_text(json.dumps(side, indent=1, sort_keys=True) + "\n")


def read_curve_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{path}: no rows")
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def _job(args):
    name, cfg, out_dir = args
    path = Path(out_dir) / f"{name}_seed{cfg.seed}.csv"
    try:
        curve = run(cfg)
    except MpmpgError as err:
        return name, cfg.seed, None, f"{err.code}: {err}"
    write_curve(curve, path)
    return name, cfg.seed, str(path), None


def run_suite(suite, out_dir=None, threads=1):
    """Run every (config, seed) job, then write ``aggregate.csv``.

    Returns ``(aggregate_path, faults)``; a faulting job is logged and skipped.
    """
    out_dir = Path(out_dir or suite.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(name, cfg, str(out_dir)) for name, cfg in suite.jobs()]
    if threads > 1:
        with ProcessPoolExecutor(threads) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    faults = []
    done = {}
    for name, seed, path, err in results:
        if err is not None:
            log.error("%s seed %d failed: %s", name, seed, err)
            faults.append((name, seed, err))
        else:
            done.setdefault(name, []).append(path)
    agg = out_dir / "aggregate.csv"
    write_aggregate({n: [read_curve_csv(p) for p in ps] for n, ps in done.items()}, agg)
    return agg, faults


def aggregate_curves(curves):
    """Mean and normal 95% CI of mean_return across seeds at each collected count."""
    xs = curves[0]["collected"]
    n_min = min(len(c["collected"]) for c in curves)
    xs = xs[:n_min]
    for c in curves:
        if not np.array_equal(c["collected"][:n_min], xs):
            raise ValueError("curves have different collected-trajectory grids")
    ys = np.stack([c["mean_return"][:n_min] for c in curves])
    mean = ys.mean(axis=0)
    n = len(curves)
    se = ys.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return xs, mean, Z95 * se, n


def write_aggregate(named_curves, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(AGG_COLUMNS)
        for name in sorted(named_curves):
            xs, mean, ci, n = aggregate_curves(named_curves[name])
            for x, m, c in zip(xs, mean, ci):
                w.writerow([name, int(x), repr(float(m)), repr(float(m - c)), repr(float(m + c)), n])
    return path


def read_aggregate(path):
    """{config: (x, mean, ci_half_width)} from an aggregate CSV."""
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{path}: empty aggregate")
    out = {}
    for r in rows:
        out.setdefault(r["config"], []).append(
            (float(r["collected"]), float(r["mean"]), float(r["ci_high"]) - float(r["mean"]))
        )
    return {k: tuple(np.array(col) for col in zip(*v)) for k, v in out.items()}


def _mse_at(x_rpg, y_rpg, x_base, y_base, s):
    xs = x_rpg * s
    lo, hi = max(xs[0], x_base[0]), min(xs[-1], x_base[-1])
    sel = (x_base >= lo) & (x_base <= hi)
    if sel.sum() < 2:
        return np.inf
    pred = np.interp(x_base[sel], xs, y_rpg)
    return float(np.mean((pred - y_base[sel]) ** 2))


def _best_scale(x_rpg, y_rpg, x_base, y_base, grid):
    mse = np.array([_mse_at(x_rpg, y_rpg, x_base, y_base, s) for s in grid])
    if not np.any(np.isfinite(mse)):
        raise ValueError("curves do not overlap for any scale in the grid")
    i = int(np.argmin(mse))
    return float(grid[i]), float(mse[i])


def speedup_factor(curve_rpg, curve_baseline, omega):
    """Scale s of the x axis that best maps the RPG curve onto the baseline.

    Curves are ``(x, mean)`` or ``(x, mean, ci_half_width)`` with x the
    collected-trajectory count. The RPG curve, drawn at ``s * x``, is
    linearly interpolated at the baseline's x values and compared by mean
    squared error over the overlap, for s in [0.5, omega + 1] by 0.01. The
    interval matches RPG's lower envelope against the baseline's upper one
    and vice versa.
    """
    grid = np.round(np.arange(50, int(round((omega + 1) * 100)) + 1) / 100.0, 2)
    x_r, y_r = np.asarray(curve_rpg[0], float), np.asarray(curve_rpg[1], float)
    x_b, y_b = np.asarray(curve_baseline[0], float), np.asarray(curve_baseline[1], float)
    c_r = np.asarray(curve_rpg[2], float) if len(curve_rpg) > 2 else np.zeros_like(y_r)
    c_b = np.asarray(curve_baseline[2], float) if len(curve_baseline) > 2 else np.zeros_like(y_b)
    s, mse = _best_scale(x_r, y_r, x_b, y_b, grid)
    s_a, _ = _best_scale(x_r, y_r - c_r, x_b, y_b + c_b, grid)
    s_b, _ = _best_scale(x_r, y_r + c_r, x_b, y_b - c_b, grid)
    lo, hi = min(s_a, s_b, s), max(s_a, s_b, s)
    return SpeedupResult(s, lo, hi, (float(grid[0]), float(grid[-1]), 0.01), mse)


def emit_plot(aggregate_csv, out_path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = read_aggregate(aggregate_csv)
    if not series:
        raise ValueError("nothing to plot")
    with plt.rc_context({"svg.hashsalt": "mpmpg"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        _draw(ax, series)
        fig.tight_layout()
        # fixed metadata and id salt keep repeated renders byte-identical
        fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_path


def _draw(ax, series):
    for name, (x, mean, ci) in sorted(series.items()):
        (line,) = ax.plot(x, mean, label=name, lw=1.2)
        ax.fill_between(x, mean - ci, mean + ci, color=line.get_color(), alpha=0.2, lw=0)
    ax.set_xlabel("trajectories collected")
    ax.set_ylabel("average return")
    ax.legend(frameon=False)
