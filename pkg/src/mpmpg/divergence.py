"""Exponentiated Renyi divergences d_alpha between Gaussian-policy trajectory laws.

For two Gaussian action distributions with shared variance sigma2 I,
d_alpha = exp(alpha (alpha - 1) |mu1 - mu2|^2 / (2 sigma2)). The step-product
estimator multiplies that closed form over the states a trajectory visited
and averages over trajectories; chi2 = d_2 - 1.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceOverflow
from .mdp import Trajectory, TrajectoryBatch

METHODS = ("NAIVE_IS", "STEP_PRODUCT", "CLOSED_FORM_STATE")
EXPONENT_CAP = 700.0

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DivergenceEstimate:
    d_alpha_hat: float
    alpha: float
    method: str
    n_samples: int
    below_one: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.alpha > 1:
            raise ValueError("alpha must exceed 1")
        if self.method != "NAIVE_IS" and self.d_alpha_hat < 1.0:
            raise ValueError("closed-form based estimates cannot fall below 1")

    @property
    def chi2(self):
        return max(self.d_alpha_hat - 1.0, 0.0)


def _as_batch(trajs):
    if isinstance(trajs, TrajectoryBatch):
        return trajs
    if isinstance(trajs, Trajectory):
        trajs = [trajs]
    return TrajectoryBatch.from_trajectories(trajs)


def _check_alpha(alpha):
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")


def gaussian_state_dalpha(mu1, mu2, sigma2, alpha):
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    _check_alpha(alpha)
    diff = np.atleast_1d(np.asarray(mu1, dtype=float) - np.asarray(mu2, dtype=float))
    return float(np.exp(alpha * (alpha - 1.0) * np.sum(diff * diff) / (2.0 * sigma2)))


def step_product_dalpha(target_policy, behavior_policy, behavior_trajs, alpha=2.0):
    """Mean over trajectories of the per-state closed-form product.

    ``behavior_policy`` may be None when the batch caches its behavior mean
    actions, which is how the learning loop avoids storing old parameters.
    Only the visited states enter; actions and rewards are ignored.
    """
    _check_alpha(alpha)
    batch = _as_batch(behavior_trajs)
    target_mu = target_policy.mean(batch.states)
    if behavior_policy is not None:
        if behavior_policy.sigma2 != target_policy.sigma2:
            raise ValueError("closed form needs a shared variance")
        behavior_mu = behavior_policy.mean(batch.states)
    elif batch.behavior_means is not None:
        behavior_mu = batch.behavior_means
    else:
        raise ValueError("no behavior policy and no cached behavior means")
    diff = target_mu - behavior_mu
    sq = np.sum(np.where(batch.mask[..., None], diff * diff, 0.0), axis=(1, 2))
    exponents = alpha * (alpha - 1.0) * sq / (2.0 * target_policy.sigma2)
    top = float(np.max(exponents))
    if top > EXPONENT_CAP:
        raise DivergenceOverflow(top, EXPONENT_CAP)
    n = len(batch)
    log_mean = top + np.log(np.mean(np.exp(exponents - top)))
    # every factor is >= 1; rounding in the log-mean must not push below it
    value = max(float(np.exp(log_mean)), 1.0)
    return DivergenceEstimate(value, float(alpha), "STEP_PRODUCT", n)


def naive_is_dalpha(target_policy, behavior_trajs, alpha=2.0):
    """Sample mean of the importance weight raised to alpha. Can fall below 1."""
    from .estimators import batch_logratio

    _check_alpha(alpha)
    lr = alpha * batch_logratio(target_policy, _as_batch(behavior_trajs))
    top = float(np.max(lr))
    if top > EXPONENT_CAP:
        raise DivergenceOverflow(top, EXPONENT_CAP)
    n = len(lr)
    value = float(np.mean(np.exp(lr)))
    below = value < 1.0
    if below:
        log.info("naive d_alpha estimate %.6g below 1 with %d samples", value, n)
    return DivergenceEstimate(value, float(alpha), "NAIVE_IS", n, below)


def chi2_hat(target_policy, behavior_policy, behavior_trajs):
    return step_product_dalpha(target_policy, behavior_policy, behavior_trajs, 2.0).chi2
