"""Learning loops: power-mean trajectory reuse and its baselines.

Every loop is a deterministic function of its config. Iteration ``k``
(1-based) draws its rollouts from ``default_rng([seed, k])``; the
uniform-random output pick uses ``default_rng([seed, 0])``.
"""

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .buffer import WindowBuffer
from .coefficients import adaptive_schedule, rpgth_schedule, thm61_schedule
from .divergence import chi2_hat
from .errors import DivergenceOverflow, IterationFault, MpmpgError, WeightOverflow
from .estimators import (
    HyperBatch,
    bh_estimate,
    miw_constant_estimate,
    mpm_estimate,
    on_policy_estimate,
    pgpe_mpm_estimate,
)
from .mdp import CartPole, OneStepEnv, rollout_batch
from .optim import Optimizer
from .policy import DeterministicLinearPolicy, GaussianHyperpolicy, LinearGaussianPolicy

ALGORITHMS = ("RPG", "RPG-TH", "GPOMDP", "MIW-PG", "BH-PG", "PGPE-RPG")
SELECTIONS = ("BEST", "UNIFORM-RANDOM")

log = logging.getLogger(__name__)


def make_env(name, horizon=200):
    if name == "cartpole":
        return CartPole(horizon)
    if name == "cartpole-zero":
        return CartPole(horizon, reward_scale=0.0)
    if name == "quadratic":
        return OneStepEnv(lambda a: -np.sum(a * a, axis=-1))
    raise ValueError(f"unknown environment {name!r}")


@dataclass
class RunConfig:
    algorithm: str = "RPG"
    env: str = "cartpole"
    horizon: int = 200
    iterations: int = 100
    batch_size: int = 8
    window: int = 4
    sigma2: float = 0.3
    theta_init: object = 0.0
    schedule: str | None = None
    D: float = 1.0
    delta: float = 0.1
    optimizer: str = "ADAM"
    step: float = 0.01
    gamma: float = 1.0
    seed: int = 0
    output: str = "BEST"
    inner: str = "GPOMDP"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.output not in SELECTIONS:
            raise ValueError(f"output must be one of {SELECTIONS}")
        if self.iterations < 1 or self.batch_size < 1 or self.window < 0:
            raise ValueError("need iterations >= 1, batch_size >= 1, window >= 0")
        if self.schedule is None:
            self.schedule = "RPGTH" if self.algorithm == "RPG-TH" else "ADAPTIVE"
        if self.schedule not in ("ADAPTIVE", "THM61", "RPGTH"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "THM61" and self.D < 1:
            raise ValueError("the THM61 schedule needs D >= 1")
        if self.schedule == "RPGTH" and not self.D > 0:
            raise ValueError("the RPGTH schedule needs D > 0")
        if self.algorithm == "GPOMDP":
            self.window = 1

    def omega_k(self, k):
        return k if self.window == 0 else min(self.window, k)


COLUMNS = (
    "iteration",
    "omega_k",
    "collected",
    "used",
    "mean_return",
    "grad_norm",
    "mean_alpha",
    "mean_lambda",
    "mean_dhat",
    "likelihood_evals",
    "policies_stored",
    "skipped",
    "seed",
)


@dataclass
class LearningCurve:
    algorithm: str
    seed: int
    rows: list = field(default_factory=list)
    thetas: list = field(default_factory=list)
    theta_out: np.ndarray | None = None
    selection: str = "BEST"
    faults: list = field(default_factory=list)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    @property
    def collected(self):
        return self.column("collected")

    @property
    def mean_return(self):
        return self.column("mean_return")

    def select_output(self, rule, seed):
        if rule == "BEST":
            i = int(np.argmax(self.mean_return))
        else:
            i = int(np.random.default_rng([seed, 0]).integers(len(self.thetas)))
        self.theta_out = self.thetas[i]
        self.selection = rule
        return self.theta_out


def _record(curve, cfg, k, omega_k, collected, used, ret, grad_norm, alpha, lam, dhat, evals, stored, skipped):
    curve.rows.append(
        {
            "iteration": k,
            "omega_k": omega_k,
            "collected": collected,
            "used": used,
            "mean_return": float(ret),
            "grad_norm": float(grad_norm),
            "mean_alpha": float(alpha),
            "mean_lambda": float(lam),
            "mean_dhat": float(dhat),
            "likelihood_evals": evals,
            "policies_stored": stored,
            "skipped": int(skipped),
            "seed": cfg.seed,
        }
    )


def _initial_theta(cfg, d):
    theta = np.asarray(cfg.theta_init, dtype=float)
    if theta.ndim == 0:
        return np.full(d, float(theta))
    if theta.size != d:
        raise ValueError(f"theta_init has {theta.size} entries, expected {d}")
    return theta.reshape(-1).copy()


def _adaptive_dhat(policy, buffer):
    dhat = []
    for e in buffer.entries:
        if e is buffer.entries[-1]:
            dhat.append(0.0)
            continue
        try:
            dhat.append(chi2_hat(policy, None, e.batch))
        except DivergenceOverflow as err:
            log.info("iterate %d dropped: %s", e.index, err)
            dhat.append(np.inf)
    return np.array(dhat)


def _coefficients(cfg, policy, buffer):
    w = buffer.omega_k
    if cfg.schedule == "ADAPTIVE":
        dhat = _adaptive_dhat(policy, buffer)
        return adaptive_schedule(dhat, cfg.batch_size, w), dhat
    if cfg.schedule == "RPGTH":
        return rpgth_schedule(cfg.D, cfg.batch_size, w), np.full(w, cfg.D)
    return thm61_schedule(policy.d_theta, cfg.delta, cfg.D, cfg.batch_size, w), np.full(w, cfg.D)


def _mean_finite(x):
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    return float(x.mean()) if x.size else np.nan


def _run_trajectory_loop(cfg, estimator):
    env = make_env(cfg.env, cfg.horizon)
    d_s, d_a = env.spec.state_dim, env.spec.action_dim
    theta = _initial_theta(cfg, d_s * d_a)
    base = LinearGaussianPolicy(theta, cfg.sigma2, d_s, d_a)
    opt = Optimizer(cfg.optimizer, cfg.step)
    buffer = WindowBuffer(cfg.window, "bh" if estimator == "BH" else "mpm")
    curve = LearningCurve(cfg.algorithm, cfg.seed)
    collected = 0

    for k in range(1, cfg.iterations + 1):
        rng = np.random.default_rng([cfg.seed, k])
        policy = base.with_params(theta)
        curve.thetas.append(theta.copy())
        try:
            batch = rollout_batch(env, policy, cfg.batch_size, rng, behavior_id=k)
            buffer.push(k, policy, batch)
            collected += len(batch)
            ret = float(np.mean(batch.returns(1.0)))
            tll = buffer.target_logliks(policy)
            alpha = lam = 1.0
            dhat = np.zeros(1)
            skipped = False
            grad = None
            if estimator == "GPOMDP":
                grad = on_policy_estimate(policy, batch, cfg.gamma, cfg.inner)
            elif estimator == "MPM":
                coeffs, dhat = _coefficients(cfg, policy, buffer)
                alpha, lam = coeffs.summary()
                grad = mpm_estimate(policy, buffer, coeffs, cfg.gamma, cfg.inner, tll)
            elif estimator == "MIW":
                alpha, lam = 1.0 / buffer.omega_k, 0.0
                try:
                    grad = miw_constant_estimate(policy, buffer, cfg.gamma, cfg.inner, target_ll=tll)
                except WeightOverflow as err:
                    curve.faults.append((k, str(err)))
                    skipped = True
            else:
                alpha, lam = np.nan, np.nan
                grad = bh_estimate(policy, buffer, cfg.gamma, cfg.inner, target_ll=tll)
            if grad is not None:
                theta = opt.ascend(theta, grad.vector)
        except MpmpgError as err:
            raise IterationFault(k, err) from err
        except FloatingPointError as err:
            raise IterationFault(k, err) from err
        _record(
            curve,
            cfg,
            k,
            buffer.omega_k,
            collected,
            buffer.n_trajectories,
            ret,
            0.0 if grad is None else grad.norm,
            alpha,
            lam,
            _mean_finite(dhat),
            buffer.eval_counter,
            buffer.policy_store_count,
            skipped,
        )

    curve.select_output(cfg.output, cfg.seed)
    return curve


def run_rpg(cfg):
    return _run_trajectory_loop(cfg, "MPM")


def run_gpomdp(cfg):
    return _run_trajectory_loop(cfg, "GPOMDP")


def run_miwpg(cfg):
    return _run_trajectory_loop(cfg, "MIW")


def run_bhpg(cfg):
    return _run_trajectory_loop(cfg, "BH")


def _hyper_chi2(xi_target, xi_behavior, sigma2):
    exponent = float(np.sum((xi_target - xi_behavior) ** 2) / sigma2)
    if exponent > 700.0:
        return np.inf
    return float(np.expm1(exponent))


def run_pgpe_rpg(cfg):
    """Parameter-based exploration: one rollout per sampled parameter vector."""
    env = make_env(cfg.env, cfg.horizon)
    d_s, d_a = env.spec.state_dim, env.spec.action_dim
    xi = _initial_theta(cfg, d_s * d_a)
    opt = Optimizer(cfg.optimizer, cfg.step)
    window = deque(maxlen=cfg.window or None)
    curve = LearningCurve(cfg.algorithm, cfg.seed)
    collected = 0

    for k in range(1, cfg.iterations + 1):
        rng = np.random.default_rng([cfg.seed, k])
        hyper = GaussianHyperpolicy(xi, cfg.sigma2)
        curve.thetas.append(xi.copy())
        try:
            thetas = hyper.sample(rng, cfg.batch_size)
            policy = DeterministicLinearPolicy(thetas, d_s, d_a)
            batch = rollout_batch(env, policy, cfg.batch_size, rng, behavior_id=k)
            collected += len(batch)
            returns = batch.returns(cfg.gamma)
            window.append(HyperBatch(thetas, returns, hyper.logpdf(thetas), hyper.params))
            w = len(window)
            if cfg.schedule == "ADAPTIVE":
                dhat = np.array([_hyper_chi2(xi, b.behavior_mean, cfg.sigma2) for b in window])
                dhat[-1] = 0.0
                coeffs = adaptive_schedule(dhat, cfg.batch_size, w)
            elif cfg.schedule == "RPGTH":
                dhat = np.full(w, cfg.D)
                coeffs = rpgth_schedule(cfg.D, cfg.batch_size, w)
            else:
                dhat = np.full(w, cfg.D)
                coeffs = thm61_schedule(xi.size, cfg.delta, cfg.D, cfg.batch_size, w)
            grad = pgpe_mpm_estimate(hyper, window, coeffs)
            xi = opt.ascend(xi, grad.vector)
        except (MpmpgError, FloatingPointError) as err:
            raise IterationFault(k, err) from err
        alpha, lam = coeffs.summary()
        _record(
            curve,
            cfg,
            k,
            w,
            collected,
            sum(len(b) for b in window),
            float(np.mean(batch.returns(1.0))),
            grad.norm,
            alpha,
            lam,
            _mean_finite(dhat),
            sum(len(b) for b in window),
            1,
            False,
        )

    curve.select_output(cfg.output, cfg.seed)
    return curve


RUNNERS = {
    "RPG": run_rpg,
    "RPG-TH": run_rpg,
    "GPOMDP": run_gpomdp,
    "MIW-PG": run_miwpg,
    "BH-PG": run_bhpg,
    "PGPE-RPG": run_pgpe_rpg,
}


def run(cfg):
    return RUNNERS[cfg.algorithm](cfg)
