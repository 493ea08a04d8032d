import numpy as np
import pytest

from conftest import random_window
from mpmpg.buffer import WindowBuffer
from mpmpg.estimators import batch_loglik, mixture_logliks


def filled(capacity, mode, k, n=4, seed=0):
    pols, batches = random_window(seed, omega=k, n=n, horizon=10)
    buf = WindowBuffer(capacity, mode)
    for i, (p, b) in enumerate(zip(pols, batches), 1):
        buf.push(i, p, b)
    return buf, pols, batches


def test_eviction_keeps_recent_consecutive():
    buf, _, _ = filled(2, "mpm", 3)
    assert buf.indices == [2, 3] and buf.oldest_index == 2 and buf.omega_k == 2


def test_unbounded_window():
    buf, _, _ = filled(0, "mpm", 5)
    assert buf.indices == [1, 2, 3, 4, 5]
    assert buf.n_trajectories == 20


def test_push_requires_consecutive_indices():
    buf, pols, batches = filled(3, "mpm", 2)
    with pytest.raises(ValueError):
        buf.push(7, pols[0], batches[0])


def test_trajectory_count_after_each_push():
    pols, batches = random_window(1, omega=5, n=4, horizon=10)
    buf = WindowBuffer(3)
    for k, (p, b) in enumerate(zip(pols, batches), 1):
        buf.push(k, p, b)
        assert buf.n_trajectories == 4 * min(3, k)


def test_mpm_counter_and_policy_store():
    buf, pols, _ = filled(3, "mpm", 3)
    assert buf.eval_counter == 0
    buf.target_logliks(pols[-1])
    assert buf.eval_counter == 12
    assert buf.policy_store_count == 1


def test_target_rows_of_own_behavior_are_cached():
    buf, pols, batches = filled(3, "mpm", 3)
    lls = buf.target_logliks(pols[-1])
    assert lls[-1] is buf.entries[-1].behavior_ll
    # recomputation for an older entry agrees exactly with its cache
    assert np.array_equal(batch_loglik(pols[0], batches[0]), np.sum(batches[0].behavior_logliks, axis=1))


def test_bh_mixture_refused_in_mpm_mode():
    buf, pols, _ = filled(2, "mpm", 2)
    with pytest.raises(RuntimeError):
        buf.bh_mixture_logliks(pols[-1])


def test_bh_single_entry_and_identical_policies():
    buf, pols, batches = filled(1, "bh", 1)
    mix = buf.bh_mixture_logliks(pols[0])
    assert np.array_equal(mix[0], np.sum(batches[0].behavior_logliks, axis=1))
    pols2, batches2 = random_window(2, omega=2, n=4, horizon=10, spread=0.0)
    same = WindowBuffer(2, "bh")
    same.push(1, pols2[0], batches2[0])
    same.push(2, pols2[0], batches2[1])
    mix = same.bh_mixture_logliks(pols2[0])
    assert np.allclose(mix[1], batch_loglik(pols2[0], batches2[1]), atol=1e-12)


def test_bh_incremental_cache_matches_direct_and_counts():
    pols, batches = random_window(4, omega=6, n=4, horizon=10)
    buf = WindowBuffer(3, "bh")
    total = 0
    for k, (p, b) in enumerate(zip(pols, batches), 1):
        buf.push(k, p, b)
        buf.target_logliks(p)
        mix = buf.bh_mixture_logliks(p)
        w = buf.omega_k
        assert buf.eval_counter == 2 * 4 * w
        assert buf.policy_store_count == w
        direct = mixture_logliks(pols[k - w : k], batches[k - w : k])
        for a, d in zip(mix, direct):
            assert np.allclose(a, d, atol=1e-12)
        total += buf.eval_counter
    assert buf.total_evals == total == sum(2 * 4 * min(3, k) for k in range(1, 7))
