"""Parametric policies and the Gaussian hyperpolicy.

Parameter layout: a linear policy's weight matrix has shape
``(state_dim, action_dim)`` and the flat parameter vector is its row-major
flattening, ``theta.reshape(-1)``. Scores use the same layout.

All methods broadcast over leading axes: ``states`` of shape ``(..., d_S)``
and ``actions`` of shape ``(..., d_A)``.

The linear Gaussian policy has an unbounded score on unbounded states, so the
usual bounded-score regularity condition only holds on bounded realizations;
nothing here enforces it.
"""

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)


def _as_matrix(theta, state_dim, action_dim):
    theta = np.asarray(theta, dtype=float)
    if theta.shape == (state_dim, action_dim):
        return theta.copy()
    if theta.size != state_dim * action_dim:
        raise ValueError(
            f"parameter of size {theta.size} does not fit ({state_dim}, {action_dim})"
        )
    return theta.reshape(state_dim, action_dim).copy()


class LinearGaussianPolicy:
    """a ~ N(theta^T s, sigma2 I) with fixed variance."""

    def __init__(self, theta, sigma2, state_dim=None, action_dim=None):
        theta = np.asarray(theta, dtype=float)
        if state_dim is None or action_dim is None:
            if theta.ndim != 2:
                raise ValueError("pass a 2-d theta or give state_dim and action_dim")
            state_dim, action_dim = theta.shape
        if not sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        self.matrix = _as_matrix(theta, state_dim, action_dim)
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("theta has non-finite entries")
        self.matrix.setflags(write=False)
        self.sigma2 = float(sigma2)
        self.state_dim = state_dim
        self.action_dim = action_dim

    @classmethod
    def zeros(cls, state_dim, action_dim, sigma2):
        return cls(np.zeros((state_dim, action_dim)), sigma2)

    @property
    def params(self):
        return self.matrix.reshape(-1).copy()

    @property
    def d_theta(self):
        return self.state_dim * self.action_dim

    def with_params(self, params):
        return LinearGaussianPolicy(params, self.sigma2, self.state_dim, self.action_dim)

    def mean(self, states):
        # explicit reduction instead of matmul: the result for one state must not
        # depend on how many other states share the call
        states = np.asarray(states, dtype=float)
        return np.sum(states[..., :, None] * self.matrix, axis=-2)

    def act(self, states, eps, u=None):
        """Action from pre-drawn standard normal noise ``eps``."""
        return self.mean(states) + np.sqrt(self.sigma2) * eps

    def sample_action(self, state, rng):
        eps = rng.standard_normal(self.action_dim)
        return self.act(state, eps)

    def step_logdensity(self, states, actions):
        diff = np.asarray(actions, dtype=float) - self.mean(states)
        sq = np.sum(diff * diff, axis=-1)
        return -0.5 * self.action_dim * (LOG_2PI + np.log(self.sigma2)) - sq / (2.0 * self.sigma2)

    def score(self, states, actions):
        states = np.asarray(states, dtype=float)
        diff = np.asarray(actions, dtype=float) - self.mean(states)
        outer = states[..., :, None] * diff[..., None, :] / self.sigma2
        return outer.reshape(outer.shape[:-2] + (self.d_theta,))

    def __repr__(self):
        return f"LinearGaussianPolicy(params={self.params!r}, sigma2={self.sigma2})"


class DeterministicLinearPolicy:
    """a = theta^T s, used under parameter-based exploration.

    ``theta`` may carry a leading batch axis, ``(n, d_theta)``, in which case
    row ``j`` acts for trajectory ``j`` of a batched rollout.
    """

    def __init__(self, theta, state_dim, action_dim):
        theta = np.asarray(theta, dtype=float)
        self.state_dim = state_dim
        self.action_dim = action_dim
        if theta.ndim == 2 and theta.shape[1] == state_dim * action_dim:
            self.matrices = theta.reshape(-1, state_dim, action_dim)
        else:
            self.matrices = _as_matrix(theta, state_dim, action_dim)[None]

    @property
    def d_theta(self):
        return self.state_dim * self.action_dim

    def subset(self, rows):
        """Policy restricted to the given batch rows (no-op when unbatched)."""
        if self.matrices.shape[0] == 1:
            return self
        return DeterministicLinearPolicy(
            self.matrices[rows].reshape(len(rows), -1), self.state_dim, self.action_dim
        )

    def act(self, states, eps=None, u=None):
        states = np.asarray(states, dtype=float)
        if self.matrices.shape[0] == 1:
            return states @ self.matrices[0]
        return np.einsum("ni,nij->nj", states, self.matrices)

    def step_logdensity(self, states, actions):
        # degenerate density; the trajectory log-likelihood is carried by the hyperpolicy
        return np.zeros(np.shape(states)[:-1])


class TabularSoftmaxPolicy:
    """Softmax over a table of logits, shape ``(n_states, n_actions)``.

    States and actions are integer indices stored in length-1 float vectors.
    """

    def __init__(self, logits, n_states=None, n_actions=None):
        logits = np.asarray(logits, dtype=float)
        if n_states is None or n_actions is None:
            n_states, n_actions = logits.shape
        self.logits = logits.reshape(n_states, n_actions).copy()
        self.n_states = n_states
        self.n_actions = n_actions
        self.state_dim = 1
        self.action_dim = 1

    @property
    def params(self):
        return self.logits.reshape(-1).copy()

    @property
    def d_theta(self):
        return self.n_states * self.n_actions

    def with_params(self, params):
        return TabularSoftmaxPolicy(params, self.n_states, self.n_actions)

    def probs(self):
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def log_probs(self):
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def act(self, states, eps=None, u=None):
        s = np.asarray(states)[..., 0].astype(int)
        cdf = np.cumsum(self.probs(), axis=1)[s]
        a = np.sum(cdf < np.asarray(u)[..., None], axis=-1)
        return np.minimum(a, self.n_actions - 1)[..., None].astype(float)

    def sample_action(self, state, rng):
        return self.act(np.asarray(state)[None], u=rng.random(1))[0]

    def step_logdensity(self, states, actions):
        s = np.asarray(states)[..., 0].astype(int)
        a = np.asarray(actions)[..., 0].astype(int)
        return self.log_probs()[s, a]

    def score(self, states, actions):
        s = np.asarray(states)[..., 0].astype(int)
        a = np.asarray(actions)[..., 0].astype(int)
        out = np.zeros(s.shape + (self.n_states, self.n_actions))
        probs = self.probs()
        idx = np.indices(s.shape)
        out[(*idx, s)] = -probs[s]
        out[(*idx, s, a)] += 1.0
        return out.reshape(s.shape + (self.d_theta,))


class GaussianHyperpolicy:
    """nu_xi = N(mean, sigma2 I) over policy parameters."""

    def __init__(self, mean, sigma2):
        if not sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {sigma2}")
        self.mean = np.asarray(mean, dtype=float).reshape(-1).copy()
        self.mean.setflags(write=False)
        self.sigma2 = float(sigma2)

    @property
    def params(self):
        return self.mean.copy()

    @property
    def dim(self):
        return self.mean.size

    def with_params(self, params):
        return GaussianHyperpolicy(params, self.sigma2)

    def sample(self, rng, n):
        return self.mean + np.sqrt(self.sigma2) * rng.standard_normal((n, self.dim))

    def logpdf(self, thetas):
        diff = np.asarray(thetas, dtype=float) - self.mean
        return -0.5 * self.dim * (LOG_2PI + np.log(self.sigma2)) - np.sum(diff * diff, axis=-1) / (
            2.0 * self.sigma2
        )

    def score(self, thetas):
        return (np.asarray(thetas, dtype=float) - self.mean) / self.sigma2


def hyper_score(hyperpolicy, theta_sample):
    return hyperpolicy.score(theta_sample)
