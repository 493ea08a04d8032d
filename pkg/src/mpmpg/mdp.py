"""Environments, trajectories, batched rollouts and the enumeration oracle.

Environments are vectorized over a batch axis. A rollout draws all of its
randomness up front from one generator, in a fixed order (initial states,
action noise, uniforms), so a seed fully determines the batch and a batch of
one is bitwise equal to a single rollout.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import EnumerationBudgetExceeded, RolloutError


@dataclass(frozen=True)
class EnvironmentSpec:
    state_dim: int
    action_dim: int
    horizon: int
    gamma: float = 1.0
    r_max: float = np.inf

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.gamma == 1.0 and not np.isfinite(self.horizon):
            raise ValueError("gamma = 1 requires a finite horizon")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")


@dataclass
class Trajectory:
    """One episode of realized length T (<= the environment horizon).

    ``behavior_means`` optionally caches the acting Gaussian policy's mean
    action at each visited state, which lets divergence estimates run without
    keeping the behavior parameters around.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    behavior_logliks: np.ndarray
    behavior_id: int = 0
    behavior_means: np.ndarray | None = None

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.actions = np.atleast_2d(np.asarray(self.actions, dtype=float))
        self.rewards = np.atleast_1d(np.asarray(self.rewards, dtype=float))
        self.behavior_logliks = np.atleast_1d(np.asarray(self.behavior_logliks, dtype=float))
        n = len(self.rewards)
        if n < 1:
            raise ValueError("a trajectory needs at least one step")
        if not (len(self.states) == len(self.actions) == len(self.behavior_logliks) == n):
            raise ValueError("states, actions, rewards and behavior_logliks differ in length")

    def __len__(self):
        return len(self.rewards)

    def check_rewards(self, r_max):
        if np.any(np.abs(self.rewards) > r_max):
            raise ValueError(f"reward outside [-{r_max}, {r_max}]")


@dataclass
class TrajectoryBatch:
    """Trajectories from one behavior policy, padded to a common length.

    Arrays are ``(n, T, ...)``; ``mask[j, t]`` is True on realized steps.
    Padded entries are zero.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    behavior_logliks: np.ndarray
    mask: np.ndarray
    behavior_id: int = 0
    behavior_means: np.ndarray | None = None
    _lengths: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self._lengths = self.mask.sum(axis=1)
        if np.any(self._lengths < 1):
            raise ValueError("every trajectory needs at least one step")

    def __len__(self):
        return self.rewards.shape[0]

    @property
    def lengths(self):
        return self._lengths

    def __getitem__(self, j):
        n = int(self._lengths[j])
        means = None if self.behavior_means is None else self.behavior_means[j, :n]
        return Trajectory(
            self.states[j, :n],
            self.actions[j, :n],
            self.rewards[j, :n],
            self.behavior_logliks[j, :n],
            self.behavior_id,
            means,
        )

    def __iter__(self):
        for j in range(len(self)):
            yield self[j]

    def returns(self, gamma=1.0):
        T = self.rewards.shape[1]
        disc = gamma ** np.arange(T)
        return (self.rewards * disc).sum(axis=1)

    @classmethod
    def from_trajectories(cls, trajs):
        trajs = list(trajs)
        if not trajs:
            raise ValueError("empty trajectory list")
        ids = {t.behavior_id for t in trajs}
        if len(ids) != 1:
            raise ValueError("trajectories come from different behavior policies")
        n, T = len(trajs), max(len(t) for t in trajs)
        d_s, d_a = trajs[0].states.shape[1], trajs[0].actions.shape[1]
        states = np.zeros((n, T, d_s))
        actions = np.zeros((n, T, d_a))
        rewards = np.zeros((n, T))
        logliks = np.zeros((n, T))
        mask = np.zeros((n, T), dtype=bool)
        has_means = all(t.behavior_means is not None for t in trajs)
        means = np.zeros((n, T, d_a)) if has_means else None
        for j, t in enumerate(trajs):
            m = len(t)
            states[j, :m] = t.states
            actions[j, :m] = t.actions
            rewards[j, :m] = t.rewards
            logliks[j, :m] = t.behavior_logliks
            mask[j, :m] = True
            if has_means:
                means[j, :m] = t.behavior_means
        return cls(states, actions, rewards, logliks, mask, ids.pop(), means)


def discounted_return(traj, gamma):
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    rewards = np.asarray(traj.rewards if hasattr(traj, "rewards") else traj, dtype=float)
    return float(np.sum(rewards * gamma ** np.arange(len(rewards))))


class CartPole:
    """Continuous-action cart-pole.

    Classic physics (g = 9.8, cart 1.0, pole 0.1, half-length 0.5, Euler step
    0.02 s) with force = 30 * clip(a, -1, 1). Reward +1 for every step taken;
    the episode ends when |x| > 2.4 or |angle| > 12 degrees, or at the horizon.
    """

    gravity = 9.8
    mass_cart = 1.0
    mass_pole = 0.1
    half_length = 0.5
    tau = 0.02
    force_mag = 30.0
    x_threshold = 2.4
    angle_threshold = 12 * 2 * np.pi / 360

    def __init__(self, horizon=200, gamma=1.0, reward_scale=1.0):
        self.spec = EnvironmentSpec(4, 1, horizon, gamma, r_max=abs(reward_scale))
        self.reward_scale = reward_scale

    def reset(self, rng, n):
        return rng.uniform(-0.05, 0.05, size=(n, 4))

    def step(self, states, actions, u=None):
        x, x_dot, th, th_dot = states.T
        force = self.force_mag * np.minimum(np.maximum(actions[:, 0], -1.0), 1.0)
        total = self.mass_cart + self.mass_pole
        pml = self.mass_pole * self.half_length
        cos, sin = np.cos(th), np.sin(th)
        temp = (force + pml * th_dot**2 * sin) / total
        th_acc = (self.gravity * sin - cos * temp) / (
            self.half_length * (4.0 / 3.0 - self.mass_pole * cos**2 / total)
        )
        x_acc = temp - pml * th_acc * cos / total
        nxt = np.empty_like(states)
        nxt[:, 0] = x + self.tau * x_dot
        nxt[:, 1] = x_dot + self.tau * x_acc
        nxt[:, 2] = th + self.tau * th_dot
        nxt[:, 3] = th_dot + self.tau * th_acc
        done = (np.abs(nxt[:, 0]) > self.x_threshold) | (np.abs(nxt[:, 2]) > self.angle_threshold)
        rewards = np.full(len(states), float(self.reward_scale))
        return nxt, rewards, done


class OneStepEnv:
    """Single-step bandit: state fixed at 1, reward = reward_fn(action)."""

    def __init__(self, reward_fn, action_dim=1, r_max=np.inf):
        self.spec = EnvironmentSpec(1, action_dim, 1, 1.0, r_max)
        self.reward_fn = reward_fn

    def reset(self, rng, n):
        return np.ones((n, 1))

    def step(self, states, actions, u=None):
        rewards = np.asarray(self.reward_fn(actions), dtype=float).reshape(len(states))
        return states.copy(), rewards, np.ones(len(states), dtype=bool)


class FiniteMdp:
    """Small tabular MDP with a fixed horizon (no early termination)."""

    def __init__(self, transitions, rewards, initial, horizon, gamma=1.0):
        self.P = np.asarray(transitions, dtype=float)
        self.R = np.asarray(rewards, dtype=float)
        self.rho0 = np.asarray(initial, dtype=float)
        self.n_states, self.n_actions = self.R.shape
        if self.P.shape != (self.n_states, self.n_actions, self.n_states):
            raise ValueError("transition tensor must be (n_states, n_actions, n_states)")
        if not np.allclose(self.P.sum(axis=2), 1.0, atol=1e-12, rtol=0):
            raise ValueError("transition rows must sum to 1")
        if not abs(self.rho0.sum() - 1.0) <= 1e-12:
            raise ValueError("initial distribution must sum to 1")
        r_max = float(np.abs(self.R).max()) if self.R.size else 0.0
        self.spec = EnvironmentSpec(1, 1, horizon, gamma, r_max)

    @classmethod
    def random(cls, rng, n_states, n_actions, horizon, gamma=1.0):
        P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
        P /= P.sum(axis=2, keepdims=True)
        R = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
        rho0 = rng.dirichlet(np.ones(n_states))
        rho0 /= rho0.sum()
        return cls(P, R, rho0, horizon, gamma)

    def reset(self, rng, n):
        u = rng.random(n)
        s = np.minimum(np.sum(np.cumsum(self.rho0)[None] < u[:, None], axis=1), self.n_states - 1)
        return s[:, None].astype(float)

    def step(self, states, actions, u):
        s = states[:, 0].astype(int)
        a = actions[:, 0].astype(int)
        cdf = np.cumsum(self.P[s, a], axis=1)
        nxt = np.minimum(np.sum(cdf < u[:, None], axis=1), self.n_states - 1)
        return nxt[:, None].astype(float), self.R[s, a], np.zeros(len(states), dtype=bool)


def rollout_batch(env, policy, n, rng, behavior_id=0):
    """Run ``n`` episodes of ``policy`` in lock-step.

    Returns a TrajectoryBatch with per-step behavior log-densities and, for
    Gaussian policies, the behavior mean actions.
    """
    spec = env.spec
    if getattr(policy, "action_dim", spec.action_dim) != spec.action_dim:
        raise ValueError("policy action dimension does not match the environment")
    T, d_s, d_a = spec.horizon, spec.state_dim, spec.action_dim
    s = np.asarray(env.reset(rng, n), dtype=float)
    eps = rng.standard_normal((n, T, d_a))
    u = rng.random((n, T, 2))

    states = np.zeros((n, T, d_s))
    actions = np.zeros((n, T, d_a))
    rewards = np.zeros((n, T))
    mask = np.zeros((n, T), dtype=bool)
    has_mean = hasattr(policy, "mean")
    means = None
    alive = np.ones(n, dtype=bool)

    for t in range(T):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        st = s[idx]
        actor = policy.subset(idx) if hasattr(policy, "subset") else policy
        a = actor.act(st, eps[idx, t], u[idx, t, 0])
        if not (np.isfinite(st).all() and np.isfinite(a).all()):
            raise RolloutError(t)
        states[idx, t] = st
        actions[idx, t] = a
        mask[idx, t] = True
        nxt, r, done = env.step(st, a, u[idx, t, 1])
        rewards[idx, t] = r
        s[idx] = nxt
        alive[idx[done]] = False

    # evaluated on the padded arrays, the same way any later target evaluation is,
    # so a policy's log-ratio against its own trajectories is exactly zero
    logliks = np.where(mask, policy.step_logdensity(states, actions), 0.0)
    if has_mean:
        means = np.where(mask[..., None], policy.mean(states), 0.0)
    if np.any(np.abs(rewards) > spec.r_max):
        raise ValueError(f"reward outside [-{spec.r_max}, {spec.r_max}]")
    return TrajectoryBatch(states, actions, rewards, logliks, mask, behavior_id, means)


def rollout(env, policy, rng, behavior_id=0):
    return rollout_batch(env, policy, 1, rng, behavior_id)[0]


ENUMERATION_BUDGET = 10**6


def exact_gradient(fmdp, logits, gamma=None, budget=ENUMERATION_BUDGET):
    """Exact grad J under a tabular softmax policy, by enumerating trajectories."""
    grad = np.zeros(np.size(logits))
    for prob, score, ret in enumerate_trajectories(fmdp, logits, gamma, budget):
        grad += prob * score * ret
    return grad


def enumerate_trajectories(fmdp, logits, gamma=None, budget=ENUMERATION_BUDGET):
    """Yield ``(p(tau), grad log p(tau), R(tau))`` for every length-T trajectory."""
    from .policy import TabularSoftmaxPolicy

    gamma = fmdp.spec.gamma if gamma is None else gamma
    nS, nA, T = fmdp.n_states, fmdp.n_actions, fmdp.spec.horizon
    count = (nS * nA) ** T
    if count > budget:
        raise EnumerationBudgetExceeded(count, budget)
    policy = TabularSoftmaxPolicy(logits, nS, nA)
    logp = policy.log_probs()
    probs = np.exp(logp)
    disc = gamma ** np.arange(T)
    for seq in itertools.product(range(nS), range(nA), repeat=T):
        s = seq[0::2]
        a = seq[1::2]
        p = fmdp.rho0[s[0]]
        for t in range(T):
            p *= probs[s[t], a[t]]
            if t + 1 < T:
                p *= fmdp.P[s[t], a[t], s[t + 1]]
        if p == 0.0:
            continue
        score = policy.score(np.array(s, float)[:, None], np.array(a, float)[:, None]).sum(axis=0)
        ret = float(np.sum(fmdp.R[list(s), list(a)] * disc))
        yield p, score, ret
