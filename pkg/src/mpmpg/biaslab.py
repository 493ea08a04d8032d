"""Monte-Carlo bias checks for two-iterate trajectory reuse on a Gaussian bandit.

Each replication draws one action from N(theta1, sigma2), takes a
single-sample gradient step to theta2, draws one action from
N(theta2, sigma2), and evaluates a two-batch estimator at a target:

``MIW_DEP_TARGET``
    uniform MIW (beta = 1/2) at the history-dependent target theta2.
``MIW_INDEP_TARGET``
    uniform MIW at a fixed target theta_bar.
``BH_INDEP_TARGET``
    balance heuristic at a fixed target theta_bar.

The report compares the mean estimate with the analytic gradient at the
target; ``|z| > 4`` is read as detected bias.
"""

from dataclasses import dataclass

import numpy as np

from .errors import TooManyDiscards
from .policy import LOG_2PI

KINDS = ("MIW_DEP_TARGET", "MIW_INDEP_TARGET", "BH_INDEP_TARGET")
REWARDS = ("LINEAR", "QUADRATIC")
Z_THRESHOLD = 4.0
DISCARD_LIMIT = 0.01
GRID_ZETA = (0.25, 0.5, 1.0)
CHUNK = 1 << 18


def analytic_bandit_gradient(theta, sigma2, reward_map):
    """d/dtheta E[R(a)], a ~ N(theta, sigma2)."""
    if reward_map == "LINEAR":
        return np.ones_like(np.asarray(theta, dtype=float))
    if reward_map == "QUADRATIC":
        return 2.0 * np.asarray(theta, dtype=float)
    raise ValueError(f"unknown reward map {reward_map!r}")


def _reward(a, reward_map):
    return a if reward_map == "LINEAR" else a * a


def _logpdf(a, mean, sigma2):
    return -0.5 * (LOG_2PI + np.log(sigma2)) - (a - mean) ** 2 / (2.0 * sigma2)


@dataclass(frozen=True)
class BiasExperiment:
    kind: str
    reward: str = "LINEAR"
    zeta: float = 0.5
    theta1: float = 0.0
    sigma2: float = 0.5
    theta_bar: float = 0.0
    reps: int = 10**6
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.reward not in REWARDS:
            raise ValueError(f"reward must be one of {REWARDS}")
        if self.reps < 10**4:
            raise ValueError("need at least 10^4 replications")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class BiasReport:
    experiment: BiasExperiment
    bias: float
    std_error: float
    z: float
    verdict: str
    used: int
    discarded: int
    # mean and z of the on-policy term alone (history-dependent kind only)
    on_policy_bias: float = np.nan
    on_policy_z: float = np.nan

    @property
    def detected(self):
        return self.verdict == "BIAS_DETECTED"


class _Moments:
    def __init__(self):
        self.n = 0
        self.s = 0.0
        self.ss = 0.0

    def add(self, x):
        self.n += x.size
        self.s += float(np.sum(x))
        self.ss += float(np.sum(x * x))

    def mean_se(self):
        m = self.s / self.n
        var = (self.ss - self.n * m * m) / (self.n - 1)
        return m, np.sqrt(max(var, 0.0) / self.n)


def _chunk(exp, rng, m):
    s2, sd = exp.sigma2, np.sqrt(exp.sigma2)
    a1 = exp.theta1 + sd * rng.standard_normal(m)
    theta2 = exp.theta1 + exp.zeta * (a1 - exp.theta1) / s2 * _reward(a1, exp.reward)
    a2 = theta2 + sd * rng.standard_normal(m)
    r1, r2 = _reward(a1, exp.reward), _reward(a2, exp.reward)
    half = None
    with np.errstate(over="ignore", invalid="ignore"):
        if exp.kind == "MIW_DEP_TARGET":
            target = theta2
            w1 = np.exp(_logpdf(a1, theta2, s2) - _logpdf(a1, exp.theta1, s2))
            g2 = (a2 - theta2) / s2 * r2
            est = 0.5 * w1 * (a1 - theta2) / s2 * r1 + 0.5 * g2
            half = g2 - analytic_bandit_gradient(target, s2, exp.reward)
        elif exp.kind == "MIW_INDEP_TARGET":
            target = np.full(m, exp.theta_bar)
            w1 = np.exp(_logpdf(a1, target, s2) - _logpdf(a1, exp.theta1, s2))
            w2 = np.exp(_logpdf(a2, target, s2) - _logpdf(a2, theta2, s2))
            est = 0.5 * (w1 * (a1 - target) / s2 * r1 + w2 * (a2 - target) / s2 * r2)
        else:
            target = np.full(m, exp.theta_bar)
            # with N_1 = N_2 = 1 the weight is p_target / ((p_1 + p_2) / 2), estimator averages over M = 2
            terms = []
            for a, r in ((a1, r1), (a2, r2)):
                l1, l2 = _logpdf(a, exp.theta1, s2), _logpdf(a, theta2, s2)
                log_mix = np.logaddexp(l1, l2) - np.log(2.0)
                w = np.exp(_logpdf(a, target, s2) - log_mix)
                terms.append(w * (a - target) / s2 * r)
            est = 0.5 * (terms[0] + terms[1])
        diff = est - analytic_bandit_gradient(target, s2, exp.reward)
    return diff, half


def run_bias_experiment(exp, rng=None):
    rng = np.random.default_rng(exp.seed) if rng is None else rng
    acc, half_acc = _Moments(), _Moments()
    discarded = 0
    left = exp.reps
    while left > 0:
        m = min(CHUNK, left)
        left -= m
        diff, half = _chunk(exp, rng, m)
        ok = np.isfinite(diff)
        discarded += int(m - ok.sum())
        acc.add(diff[ok])
        if half is not None:
            half_acc.add(half[ok])
    if discarded > DISCARD_LIMIT * exp.reps:
        raise TooManyDiscards(discarded, exp.reps, DISCARD_LIMIT)
    bias, se = acc.mean_se()
    z = bias / se if se > 0 else (0.0 if bias == 0 else np.inf)
    verdict = "BIAS_DETECTED" if abs(z) > Z_THRESHOLD else "CONSISTENT_WITH_ZERO"
    hb, hz = np.nan, np.nan
    if half_acc.n:
        hb, hse = half_acc.mean_se()
        hz = hb / hse if hse > 0 else 0.0
    return BiasReport(exp, bias, se, z, verdict, acc.n, discarded, hb, hz)


def grid_search(kind, reps=10**6, seed=0, zetas=GRID_ZETA, rewards=REWARDS, **kw):
    """Run every (zeta, reward) pair; returns all reports, most significant first."""
    reports = []
    for reward in rewards:
        for zeta in zetas:
            exp = BiasExperiment(kind, reward, zeta, reps=reps, seed=seed, **kw)
            reports.append(run_bias_experiment(exp))
    return sorted(reports, key=lambda r: -abs(r.z))
