"""Policy-gradient estimators, on-policy and importance weighted.

A *window* is an ordered sequence of trajectory batches, oldest first, one per
past iterate. Estimators accept either a plain list of
:class:`~mpmpg.mdp.TrajectoryBatch` or a :class:`~mpmpg.buffer.WindowBuffer`;
with a buffer, target log-likelihoods go through its cache and counters.

Every multi-batch estimator has the form ``sum_i (1/N_i) sum_j w_ij g_ij`` and
shares :func:`combine`, so estimators that reduce to one another in exact
arithmetic also agree bit for bit when their weights do.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import WeightOverflow
from .mdp import TrajectoryBatch

INNER = ("GPOMDP", "REINFORCE")
TAGS = ("REINFORCE", "GPOMDP", "SIW", "MIW", "BH", "MPM", "PGPE-MPM")

# exp() overflows a double just above this
MAX_LOG_WEIGHT = np.log(np.finfo(float).max)


@dataclass(frozen=True)
class GradientEstimate:
    vector: np.ndarray
    n_trajectories_used: int
    estimator_tag: str

    def __post_init__(self):
        if self.estimator_tag not in TAGS:
            raise ValueError(f"unknown estimator tag {self.estimator_tag!r}")
        if self.n_trajectories_used < 1:
            raise ValueError("an estimate needs at least one trajectory")
        if not np.all(np.isfinite(self.vector)):
            raise FloatingPointError("gradient estimate is not finite")

    @property
    def norm(self):
        return float(np.linalg.norm(self.vector))


def _as_batch(traj):
    if isinstance(traj, TrajectoryBatch):
        return traj
    return TrajectoryBatch.from_trajectories([traj])


def batch_loglik(policy, batch):
    """Per-trajectory log-likelihood under ``policy`` over the realized steps."""
    steps = policy.step_logdensity(batch.states, batch.actions)
    return np.sum(np.where(batch.mask, steps, 0.0), axis=1)


def batch_logratio(policy, batch):
    """log p_policy(tau) - log p_behavior(tau) for every trajectory in ``batch``."""
    out = batch_loglik(policy, batch) - np.sum(batch.behavior_logliks, axis=1)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite trajectory log-ratio")
    return out


def traj_logratio(policy, traj):
    lr = float(
        np.sum(policy.step_logdensity(traj.states, traj.actions)) - np.sum(traj.behavior_logliks)
    )
    if not np.isfinite(lr):
        raise FloatingPointError("non-finite trajectory log-ratio")
    return lr


def batch_grads(policy, batch, gamma=1.0, inner="GPOMDP"):
    """Single-trajectory gradient estimates, one row per trajectory."""
    if inner not in INNER:
        raise ValueError(f"inner estimator must be one of {INNER}, got {inner!r}")
    scores = policy.score(batch.states, batch.actions)
    scores = np.where(batch.mask[..., None], scores, 0.0)
    disc_r = batch.rewards * gamma ** np.arange(batch.rewards.shape[1])
    if inner == "REINFORCE":
        return scores.sum(axis=1) * disc_r.sum(axis=1)[:, None]
    return np.einsum("ntd,nt->nd", np.cumsum(scores, axis=1), disc_r)


def reinforce_grad(policy, traj, gamma=1.0):
    return batch_grads(policy, _as_batch(traj), gamma, "REINFORCE")[0]


def gpomdp_grad(policy, traj, gamma=1.0):
    return batch_grads(policy, _as_batch(traj), gamma, "GPOMDP")[0]


def combine(weights, grads):
    """sum_i (1/N_i) sum_j weights[i][j] * grads[i][j]."""
    total = 0.0
    for w, g in zip(weights, grads):
        total = total + (w @ g) / len(w)
    return np.asarray(total, dtype=float)


def _batches(window):
    return list(window.batches) if hasattr(window, "batches") else list(window)


def _target_ll(policy, window, target_ll):
    if target_ll is not None:
        return target_ll
    if hasattr(window, "target_logliks"):
        return window.target_logliks(policy)
    return [batch_loglik(policy, b) for b in _batches(window)]


def _behavior_ll(batch):
    return np.sum(batch.behavior_logliks, axis=1)


def _checked_exp(log_w):
    m = max(float(np.max(lw)) for lw in log_w)
    if m > MAX_LOG_WEIGHT:
        raise WeightOverflow(m)
    return [np.exp(lw) for lw in log_w]


def on_policy_estimate(policy, batch, gamma=1.0, inner="GPOMDP"):
    """Plain batch mean of the inner estimator."""
    g = batch_grads(policy, batch, gamma, inner)
    return GradientEstimate(combine([np.ones(len(batch))], [g]), len(batch), inner)


def siw_estimate(target_policy, behavior_trajs, gamma=1.0, inner="GPOMDP", target_ll=None):
    """Importance-weighted mean over trajectories from one behavior policy."""
    if isinstance(behavior_trajs, (list, tuple)):
        batch = TrajectoryBatch.from_trajectories(behavior_trajs)
    else:
        batch = _as_batch(behavior_trajs)
    ll = batch_loglik(target_policy, batch) if target_ll is None else target_ll
    (w,) = _checked_exp([ll - _behavior_ll(batch)])
    g = batch_grads(target_policy, batch, gamma, inner)
    return GradientEstimate(combine([w], [g]), len(batch), "SIW")


def miw_constant_estimate(
    target_policy, window, gamma=1.0, inner="GPOMDP", betas=None, target_ll=None
):
    """Multiple-IW estimate with constant coefficients (uniform by default)."""
    batches = _batches(window)
    if not batches:
        raise ValueError("empty window")
    betas = np.full(len(batches), 1.0 / len(batches)) if betas is None else np.asarray(betas, float)
    tll = _target_ll(target_policy, window, target_ll)
    log_w = [t - _behavior_ll(b) for t, b in zip(tll, batches)]
    iw = _checked_exp(log_w)
    weights = [beta * w for beta, w in zip(betas, iw)]
    grads = [batch_grads(target_policy, b, gamma, inner) for b in batches]
    return GradientEstimate(combine(weights, grads), sum(map(len, batches)), "MIW")


def bh_coefficients(logliks, sizes):
    """Balance-heuristic coefficients beta_i(tau) for a table of log-densities.

    ``logliks[j, i]`` is log p_i(tau_j); rows of the result sum to one.
    """
    logliks = np.asarray(logliks, dtype=float)
    z = logliks + np.log(np.asarray(sizes, dtype=float))
    return np.exp(z - logsumexp(z, axis=1, keepdims=True))


def mixture_logliks(policies, batches):
    """log sum_l (N_l/M) p_l(tau) for every trajectory of every batch."""
    sizes = np.array([len(b) for b in batches], dtype=float)
    log_mix = np.log(sizes / sizes.sum())
    out = []
    for b in batches:
        table = np.stack([batch_loglik(p, b) for p in policies], axis=1)
        out.append(logsumexp(table + log_mix, axis=1))
    return out


def bh_estimate(
    target_policy,
    window,
    gamma=1.0,
    inner="GPOMDP",
    policies=None,
    target_ll=None,
    mixture_ll=None,
):
    """Balance-heuristic estimate (1/M) sum p_target / sum_l (N_l/M) p_l * g.

    The mixture densities come from the window's cache when ``window`` is a
    buffer in BH mode, otherwise from the explicit list of ``policies``.
    """
    batches = _batches(window)
    weights = bh_weights(target_policy, window, policies, target_ll, mixture_ll)
    M = sum(map(len, batches))
    # per-batch factor N_i/M turns (1/M) sum_ij into the shared sum_i (1/N_i) sum_j form
    scaled = [w * (len(b) / M) for w, b in zip(weights, batches)]
    grads = [batch_grads(target_policy, b, gamma, inner) for b in batches]
    return GradientEstimate(combine(scaled, grads), M, "BH")


def bh_weights(target_policy, window, policies=None, target_ll=None, mixture_ll=None):
    """Effective importance weights p_target / sum_l (N_l/M) p_l, per batch."""
    batches = _batches(window)
    if not batches:
        raise ValueError("empty window")
    tll = _target_ll(target_policy, window, target_ll)
    if mixture_ll is None:
        if hasattr(window, "bh_mixture_logliks"):
            mixture_ll = window.bh_mixture_logliks(target_policy)
        elif policies is not None:
            mixture_ll = mixture_logliks(policies, batches)
        else:
            raise ValueError("BH needs the window policies or a BH-mode buffer")
    return _checked_exp([t - m for t, m in zip(tll, mixture_ll)])


def pm_weights(log_behavior_over_target, alpha, lam):
    """alpha / ((1-lam) exp(l) + lam) with l = log p_b - log p_target.

    Written so that neither branch exponentiates a positive number. Only
    ``lam == 0`` with a very negative ``l`` can overflow.
    """
    l = np.asarray(log_behavior_over_target, dtype=float)
    if alpha == 0.0:
        return np.zeros_like(l)
    if lam == 0.0:
        if np.any(-l > MAX_LOG_WEIGHT):
            raise WeightOverflow(float(np.max(-l)))
        return alpha * np.exp(-l)
    out = np.empty_like(l)
    neg = l <= 0
    out[neg] = alpha / (1.0 + (1.0 - lam) * np.expm1(l[neg]))
    e = np.exp(-l[~neg])
    out[~neg] = alpha * e / ((1.0 - lam) + lam * e)
    if not np.all(np.isfinite(out)):
        raise WeightOverflow(float(np.max(-l)))
    return out


def _coeff_arrays(coeffs, n):
    alpha = np.broadcast_to(np.asarray(coeffs.alpha, dtype=float), (n,))
    lam = np.broadcast_to(np.asarray(coeffs.lam, dtype=float), (n,))
    return alpha, lam


def mpm_estimate(target_policy, window, coeffs, gamma=1.0, inner="GPOMDP", target_ll=None):
    """Multiple power-mean estimate.

    ``coeffs`` carries one ``(alpha_i, lam_i)`` per window batch, oldest
    first. Batches with ``alpha_i == 0`` contribute nothing and are not
    differentiated through.
    """
    batches = _batches(window)
    if not batches:
        raise ValueError("empty window")
    alpha, lam = _coeff_arrays(coeffs, len(batches))
    tll = _target_ll(target_policy, window, target_ll)
    weights, grads, used = [], [], 0
    for a, l, t, b in zip(alpha, lam, tll, batches):
        used += len(b)
        if a == 0.0:
            continue
        weights.append(pm_weights(_behavior_ll(b) - t, a, l))
        grads.append(batch_grads(target_policy, b, gamma, inner))
    if not weights:
        raise ValueError("every window coefficient is zero")
    return GradientEstimate(combine(weights, grads), used, "MPM")


@dataclass
class HyperBatch:
    """Parameter samples drawn from one hyperpolicy and their returns."""

    thetas: np.ndarray
    returns: np.ndarray
    behavior_logliks: np.ndarray
    behavior_mean: np.ndarray | None = None

    def __len__(self):
        return len(self.returns)


def pgpe_grads(hyper, batch):
    return hyper.score(batch.thetas) * batch.returns[:, None]


def pgpe_mpm_estimate(target_hyper, hyper_window, coeffs):
    """Power-mean weighted hyper-gradient over a window of HyperBatch."""
    batches = list(hyper_window)
    if not batches:
        raise ValueError("empty window")
    alpha, lam = _coeff_arrays(coeffs, len(batches))
    weights, grads, used = [], [], 0
    for a, l, b in zip(alpha, lam, batches):
        used += len(b)
        if a == 0.0:
            continue
        lr = b.behavior_logliks - target_hyper.logpdf(b.thetas)
        weights.append(pm_weights(lr, a, l))
        grads.append(pgpe_grads(target_hyper, b))
    return GradientEstimate(combine(weights, grads), used, "PGPE-MPM")
