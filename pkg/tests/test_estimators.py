from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_window
from mpmpg.coefficients import MpmCoefficients, adaptive_schedule, rpgth_schedule
from mpmpg.errors import WeightOverflow
from mpmpg.estimators import (
    GradientEstimate,
    HyperBatch,
    batch_grads,
    bh_coefficients,
    bh_estimate,
    bh_weights,
    gpomdp_grad,
    miw_constant_estimate,
    mpm_estimate,
    on_policy_estimate,
    pgpe_mpm_estimate,
    pm_weights,
    reinforce_grad,
    siw_estimate,
)
from mpmpg.mdp import CartPole, OneStepEnv, Trajectory, TrajectoryBatch, rollout_batch
from mpmpg.policy import GaussianHyperpolicy, LinearGaussianPolicy


def test_estimate_validation():
    with pytest.raises(ValueError):
        GradientEstimate(np.zeros(2), 0, "MPM")
    with pytest.raises(ValueError):
        GradientEstimate(np.zeros(2), 1, "XYZ")
    with pytest.raises(FloatingPointError):
        GradientEstimate(np.array([np.nan]), 1, "MPM")


def test_zero_rewards_give_zero_gradients():
    env = CartPole(50, reward_scale=0.0)
    pol = LinearGaussianPolicy(np.full(4, 0.1), 0.3, 4, 1)
    batch = rollout_batch(env, pol, 4, np.random.default_rng(0))
    for inner in ("REINFORCE", "GPOMDP"):
        assert np.all(batch_grads(pol, batch, 1.0, inner) == 0)
    assert np.all(siw_estimate(pol, batch).vector == 0)


def test_single_step_reinforce_is_score_times_reward():
    env = OneStepEnv(lambda a: 2.0 * a[:, 0] + 1)
    pol = LinearGaussianPolicy([[0.3]], 0.5)
    traj = rollout_batch(env, pol, 1, np.random.default_rng(1))[0]
    expect = pol.score(traj.states[0], traj.actions[0]) * traj.rewards[0]
    assert np.allclose(reinforce_grad(pol, traj), expect)
    assert np.array_equal(gpomdp_grad(pol, traj), reinforce_grad(pol, traj))


def test_gpomdp_causality():
    pol = LinearGaussianPolicy([[0.2]], 1.0)
    states = np.array([[1.0], [2.0], [-1.0]])
    actions = np.array([[0.5], [0.0], [3.0]])
    traj = Trajectory(states, actions, [1.5, 0.0, 0.0], pol.step_logdensity(states, actions))
    g = gpomdp_grad(pol, traj)
    assert np.allclose(g, pol.score(states[0], actions[0]) * 1.5)
    # reinforce uses the full score sum instead
    full = pol.score(states, actions).sum(axis=0) * 1.5
    assert np.allclose(reinforce_grad(pol, traj), full)


def test_discounting():
    pol = LinearGaussianPolicy([[0.0]], 1.0)
    states = np.ones((2, 1))
    actions = np.array([[1.0], [2.0]])
    traj = Trajectory(states, actions, [1.0, 1.0], pol.step_logdensity(states, actions))
    s1, s2 = 1.0, 2.0
    assert gpomdp_grad(pol, traj, 0.5)[0] == pytest.approx(s1 * 1 + (s1 + s2) * 0.5)
    assert reinforce_grad(pol, traj, 0.5)[0] == pytest.approx((s1 + s2) * 1.5)


def test_siw_self_target_is_on_policy_mean(window):
    pols, batches = window
    on = on_policy_estimate(pols[0], batches[0])
    assert np.array_equal(siw_estimate(pols[0], batches[0]).vector, on.vector)


def test_siw_bandit_matches_closed_form():
    # J(theta) = -E[(a - 1)^2] = -(theta - 1)^2 - sigma2, so grad = -2 (theta - 1)
    env = OneStepEnv(lambda a: -((a[:, 0] - 1.0) ** 2))
    behavior = LinearGaussianPolicy([[0.0]], 0.5)
    target = LinearGaussianPolicy([[0.2]], 0.5)
    batch = rollout_batch(env, behavior, 10**6, np.random.default_rng(4))
    est = siw_estimate(target, batch).vector[0]
    w = np.exp(-np.sum(batch.behavior_logliks, axis=1) + target.step_logdensity(batch.states, batch.actions)[:, 0])
    g = w * batch_grads(target, batch)[:, 0]
    se = g.std(ddof=1) / np.sqrt(g.size)
    assert abs(est - 1.6) <= 3 * se


def test_miw_reductions(window):
    pols, batches = window
    on = on_policy_estimate(pols[1], batches[1]).vector
    assert np.array_equal(miw_constant_estimate(pols[1], [batches[1]]).vector, on)
    # two batches from one policy: average of the two batch means
    env = CartPole(15)
    rng = np.random.default_rng(9)
    b1, b2 = (rollout_batch(env, pols[0], 6, rng) for _ in range(2))
    avg = 0.5 * (on_policy_estimate(pols[0], b1).vector + on_policy_estimate(pols[0], b2).vector)
    assert np.allclose(miw_constant_estimate(pols[0], [b1, b2]).vector, avg, atol=1e-12)


def test_bh_reductions(window):
    pols, batches = window
    on = on_policy_estimate(pols[2], batches[2]).vector
    assert np.array_equal(bh_estimate(pols[2], [batches[2]], policies=[pols[2]]).vector, on)
    env = CartPole(15)
    rng = np.random.default_rng(2)
    bs = [rollout_batch(env, pols[0], 5, rng) for _ in range(3)]
    pooled = TrajectoryBatch.from_trajectories([t for b in bs for t in b])
    est = bh_estimate(pols[0], bs, policies=[pols[0]] * 3).vector
    assert np.allclose(est, on_policy_estimate(pols[0], pooled).vector, atol=1e-12)


def test_bh_needs_policies(window):
    pols, batches = window
    with pytest.raises(ValueError):
        bh_estimate(pols[0], batches)


def test_bh_matches_direct_formula(window):
    pols, batches = window
    target = pols[-1]
    M = sum(len(b) for b in batches)
    total = np.zeros(4)
    for b in batches:
        for tr in b:
            p_t = np.exp(np.sum(target.step_logdensity(tr.states, tr.actions)))
            mix = sum(len(bb) / M * np.exp(np.sum(p.step_logdensity(tr.states, tr.actions))) for p, bb in zip(pols, batches))
            total += p_t / mix * gpomdp_grad(target, tr)
    assert np.allclose(bh_estimate(target, batches, policies=pols).vector, total / M, rtol=1e-9)


def test_mpm_on_policy_weight_is_alpha():
    l = np.zeros(7)
    for lam in (1e-6, 0.3, 1.0):
        assert np.all(pm_weights(l, 0.37, lam) == 0.37)


def test_mpm_single_iterate_equals_on_policy(window):
    pols, batches = window
    on = on_policy_estimate(pols[0], batches[0]).vector
    for lam in (0.01, 0.5, 1.0):
        c = MpmCoefficients(np.array([1.0]), np.array([lam]), "RPGTH")
        assert np.array_equal(mpm_estimate(pols[0], [batches[0]], c).vector, on)


def test_mpm_small_lambda_limit_is_miw(window):
    pols, batches = window
    target = pols[-1]
    alpha = np.array([0.2, 0.3, 0.5])
    # lam = 0 is outside the schedules' range; a bare namespace bypasses validation
    exact = SimpleNamespace(alpha=alpha, lam=np.zeros(3))
    miw = miw_constant_estimate(target, batches, betas=alpha).vector
    assert np.array_equal(mpm_estimate(target, batches, exact).vector, miw)
    near = MpmCoefficients(alpha, np.full(3, 1e-10), "ADAPTIVE")
    assert np.allclose(mpm_estimate(target, batches, near).vector, miw, rtol=1e-6)


def test_mpm_skips_zero_alpha(window):
    pols, batches = window
    c = MpmCoefficients(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, 0.5]), "ADAPTIVE")
    only = mpm_estimate(pols[-1], [batches[-1]], MpmCoefficients([1.0], [0.5], "ADAPTIVE"))
    got = mpm_estimate(pols[-1], batches, c)
    assert np.array_equal(got.vector, only.vector)
    assert got.n_trajectories_used == 15


def test_pm_weight_stable_and_overflow():
    l = np.array([-800.0, -5.0, 0.0, 5.0, 800.0])
    w = pm_weights(l, 0.5, 0.1)
    assert np.all(np.isfinite(w)) and np.all(w <= 0.5 / 0.1 + 1e-12) and np.all(w >= 0)
    direct = 0.5 / ((1 - 0.1) * np.exp(l[1:4]) + 0.1)
    assert np.allclose(w[1:4], direct, rtol=1e-14)
    with pytest.raises(WeightOverflow):
        pm_weights(np.array([-800.0]), 0.5, 0.0)


def test_siw_overflow_reports_logratio():
    env = OneStepEnv(lambda a: a[:, 0])
    behavior = LinearGaussianPolicy([[0.0]], 1e-4)
    target = LinearGaussianPolicy([[3.0]], 1e-4)
    batch = rollout_batch(env, target, 3, np.random.default_rng(0))
    with pytest.raises(WeightOverflow) as err:
        siw_estimate(behavior, TrajectoryBatch(batch.states, batch.actions, batch.rewards,
                                               np.full_like(batch.behavior_logliks, -1e6), batch.mask))
    assert err.value.max_logratio > 700


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.floats(0.0, 3.0))
def test_weight_bounds(seed, omega, dhat_scale):
    pols, batches = random_window(seed, omega=omega, n=3, horizon=8, spread=0.5)
    rng = np.random.default_rng(seed)
    target = pols[-1]
    dhat = np.append(rng.uniform(0, dhat_scale, size=omega - 1), 0.0)
    c = adaptive_schedule(dhat, 3, omega)
    for a, l, b in zip(c.alpha, c.lam, batches):
        lr = np.sum(b.behavior_logliks, axis=1) - np.sum(
            np.where(b.mask, target.step_logdensity(b.states, b.actions), 0), axis=1
        )
        w = pm_weights(lr, a, l)
        assert np.all(w > 0) and np.all(w <= a / l * (1 + 1e-12))
    M = sum(len(b) for b in batches)
    for w in bh_weights(target, batches, pols):
        assert np.all(w <= M / len(batches[-1]) * (1 + 1e-12))
    table = np.stack([[np.sum(np.where(b.mask[j], p.step_logdensity(b.states[j], b.actions[j]), 0))
                       for p in pols] for b in batches for j in range(len(b))])
    beta = bh_coefficients(table, [len(b) for b in batches])
    assert np.allclose(beta.sum(axis=1), 1.0, atol=1e-12, rtol=0)


def test_estimators_deterministic(window):
    pols, batches = window
    c = rpgth_schedule(1.0, 5, 3)
    a = mpm_estimate(pols[-1], batches, c).vector
    b = mpm_estimate(pols[-1], batches, c).vector
    assert a.tobytes() == b.tobytes()


def hyper_batch(hyper, rng, n, J):
    th = hyper.sample(rng, n)
    return HyperBatch(th, J(th), hyper.logpdf(th), hyper.params)


def test_pgpe_single_window_is_plain_pgpe():
    rng = np.random.default_rng(0)
    h = GaussianHyperpolicy([0.4, -0.2], 0.3)
    hb = hyper_batch(h, rng, 10, lambda t: -np.sum(t**2, axis=1))
    c = MpmCoefficients([1.0], [0.3], "ADAPTIVE")
    plain = np.mean(h.score(hb.thetas) * hb.returns[:, None], axis=0)
    assert np.allclose(pgpe_mpm_estimate(h, [hb], c).vector, plain, atol=1e-15)
    zero = HyperBatch(hb.thetas, np.zeros(10), hb.behavior_logliks)
    assert np.all(pgpe_mpm_estimate(h, [zero], c).vector == 0)


def test_pgpe_unbiased_on_quadratic():
    # J_P(xi) = E[-theta^2] = -xi^2 - sigma2; central difference of the closed form
    xi, s2, h = 0.7, 0.2, 1e-5
    JP = lambda x: -(x**2) - s2
    fd = (JP(xi + h) - JP(xi - h)) / (2 * h)
    hyper = GaussianHyperpolicy([xi], s2)
    th = hyper.sample(np.random.default_rng(3), 10**5)
    g = hyper.score(th)[:, 0] * -(th[:, 0] ** 2)
    c = MpmCoefficients([1.0], [0.5], "ADAPTIVE")
    est = pgpe_mpm_estimate(hyper, [HyperBatch(th, -(th[:, 0] ** 2), hyper.logpdf(th))], c).vector[0]
    assert abs(est - fd) <= 3 * g.std(ddof=1) / np.sqrt(g.size)
