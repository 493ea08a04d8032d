"""Self-checks against exact references: enumeration and closed forms.

Each check yields ``(line, passed)`` so the CLI and the test-suite can share
the same fixtures.
"""

import numpy as np

from .divergence import gaussian_state_dalpha, naive_is_dalpha, step_product_dalpha
from .estimators import batch_grads, batch_loglik
from .mdp import FiniteMdp, OneStepEnv, exact_gradient, rollout_batch
from .policy import LinearGaussianPolicy, TabularSoftmaxPolicy

ORACLE_Z = 3.0
DIVERGENCE_RTOL = 0.05


def oracle_fixture(seed=0):
    """2-state, 2-action MDP with horizon 3 and discount 0.9, plus three logit tables."""
    rng = np.random.default_rng([seed, 7])
    mdp = FiniteMdp.random(rng, 2, 2, horizon=3, gamma=0.9)
    logits = [rng.normal(0.0, 0.5, size=(2, 2)) for _ in range(3)]
    return mdp, logits


def _mean_se(rows):
    rows = np.asarray(rows)
    return rows.mean(axis=0), rows.std(axis=0, ddof=1) / np.sqrt(len(rows))


def _line(name, est, se, truth):
    z = np.abs(est - truth) / np.where(se > 0, se, np.inf)
    worst = float(np.max(z))
    return f"{name:10s} max|z| = {worst:5.2f} (limit {ORACLE_Z})", worst <= ORACLE_Z


def oracle_checks(samples=10**5, seed=0):
    """Sample means of the single- and multi-batch estimators vs exact grad J.

    SIW and uniform MIW use a target that was fixed before any data was drawn.
    """
    mdp, (on, b1, b2) = oracle_fixture(seed)
    pol = target = TabularSoftmaxPolicy(on)
    rng = np.random.default_rng([seed, 1])
    batch = rollout_batch(mdp, pol, samples, rng)
    truth = exact_gradient(mdp, on, mdp.spec.gamma)
    for inner in ("REINFORCE", "GPOMDP"):
        g = batch_grads(pol, batch, mdp.spec.gamma, inner)
        yield _line(inner, *_mean_se(g), truth)

    behav = TabularSoftmaxPolicy(b1)
    bb = rollout_batch(mdp, behav, samples, np.random.default_rng([seed, 2]))
    w = np.exp(batch_loglik(target, bb) - np.sum(bb.behavior_logliks, axis=1))
    g = w[:, None] * batch_grads(target, bb, mdp.spec.gamma, "GPOMDP")
    yield _line("SIW", *_mean_se(g), truth)

    # two behavior policies, half the samples each, beta = 1/2
    half = samples // 2
    parts = []
    for i, logits in enumerate((b1, b2)):
        p = TabularSoftmaxPolicy(logits)
        b = rollout_batch(mdp, p, half, np.random.default_rng([seed, 3 + i]))
        w = np.exp(batch_loglik(target, b) - np.sum(b.behavior_logliks, axis=1))
        parts.append(0.5 * w[:, None] * batch_grads(target, b, mdp.spec.gamma, "GPOMDP"))
    est = sum(p.mean(axis=0) for p in parts)
    se = np.sqrt(sum(p.var(axis=0, ddof=1) / len(p) for p in parts))
    yield _line("MIW", est, se, truth)


def divergence_checks(samples=10**6, seed=0, ratios=(0.1, 0.25, 0.5), sigma2=0.5):
    """Naive Monte-Carlo d_2 vs the Gaussian closed form on a one-step bandit."""
    env = OneStepEnv(lambda a: np.zeros(len(a)))
    sd = np.sqrt(sigma2)
    for i, r in enumerate(ratios):
        behavior = LinearGaussianPolicy([[0.0]], sigma2)
        target = LinearGaussianPolicy([[r * sd]], sigma2)
        batch = rollout_batch(env, behavior, samples, np.random.default_rng([seed, i]))
        exact = gaussian_state_dalpha(r * sd, 0.0, sigma2, 2.0)
        naive = naive_is_dalpha(target, batch, 2.0).d_alpha_hat
        rel = abs(naive - exact) / exact
        yield (
            f"d2 |dmu|/sigma={r:<5} closed={exact:.6f} naive={naive:.6f} rel.err={rel:.4f}",
            rel <= DIVERGENCE_RTOL,
        )
        prod = step_product_dalpha(target, behavior, batch, 2.0).d_alpha_hat
        yield f"d2 |dmu|/sigma={r:<5} step-product={prod!r} closed={exact!r}", prod == exact
