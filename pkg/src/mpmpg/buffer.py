"""Sliding window of recent iterates' trajectory batches.

Two storage modes:

``mpm``
    Only the newest policy is kept. Older batches carry their own cached
    behavior log-densities (and Gaussian mean actions), which is all the
    power-mean and constant-coefficient estimators need.
``bh``
    Every window policy is kept so each trajectory can be evaluated under
    the whole mixture. Cross evaluations are cached, so an iteration only
    adds the new batch under every stored policy and the old batches under
    the new policy.

``eval_counter`` counts per-trajectory policy likelihoods consumed in the
current iteration, one per (trajectory, policy) pair, whether served from a
cache or computed. It resets on every push.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .estimators import batch_loglik

MODES = ("mpm", "bh")


@dataclass
class _Entry:
    index: int
    batch: object
    policy: object = None
    behavior_ll: np.ndarray = None
    # BH mode: log-likelihood of this batch under the policy of entry ``key``
    cross: dict = field(default_factory=dict)


def _same_params(p, q):
    return p is q or (
        type(p) is type(q)
        and getattr(p, "sigma2", None) == getattr(q, "sigma2", None)
        and np.array_equal(p.params, q.params)
    )


class WindowBuffer:
    def __init__(self, capacity, mode="mpm"):
        if capacity < 0:
            raise ValueError("capacity must be >= 0 (0 means unbounded)")
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.capacity = capacity
        self.mode = mode
        self.entries = deque()
        self.eval_counter = 0
        self.total_evals = 0
        self._last_target = None

    def push(self, index, policy, batch):
        if self.entries and index != self.entries[-1].index + 1:
            raise ValueError("iterate indices must be consecutive")
        if self.mode == "mpm" and self.entries:
            self.entries[-1].policy = None
        self.entries.append(_Entry(index, batch, policy, np.sum(batch.behavior_logliks, axis=1)))
        if self.capacity and len(self.entries) > self.capacity:
            gone = self.entries.popleft()
            for e in self.entries:
                e.cross.pop(gone.index, None)
        self.eval_counter = 0
        self._last_target = None

    def __len__(self):
        return len(self.entries)

    @property
    def omega_k(self):
        return len(self.entries)

    @property
    def oldest_index(self):
        return self.entries[0].index

    @property
    def indices(self):
        return [e.index for e in self.entries]

    @property
    def batches(self):
        return [e.batch for e in self.entries]

    @property
    def n_trajectories(self):
        return sum(len(e.batch) for e in self.entries)

    @property
    def policy_store_count(self):
        return sum(e.policy is not None for e in self.entries)

    def _count(self, n):
        self.eval_counter += n
        self.total_evals += n

    def _eval(self, entry, policy):
        # a batch under its own behavior policy is always served from the cache
        if entry.policy is not None and _same_params(entry.policy, policy):
            return entry.behavior_ll
        return batch_loglik(policy, entry.batch)

    def target_logliks(self, target):
        """Trajectory log-likelihoods of every window batch under ``target``."""
        if not self.entries:
            raise ValueError("empty window")
        out = [self._eval(e, target) for e in self.entries]
        self._count(self.n_trajectories)
        self._last_target = (target, self.indices, out)
        return out

    def bh_mixture_logliks(self, target):
        """log sum_l (N_l/M) p_l(tau) for every window trajectory."""
        if self.mode != "bh":
            raise RuntimeError("mixture densities need a buffer in bh mode")
        if not self.entries:
            raise ValueError("empty window")
        newest = self.entries[-1]
        target_table = None
        if self._last_target is not None:
            t, idx, lls = self._last_target
            if idx == self.indices and _same_params(t, target) and _same_params(newest.policy, target):
                target_table = dict(zip(idx, lls))
        evals = 0
        for e in self.entries:
            for p in self.entries:
                if p.index in e.cross:
                    continue
                if e is newest:
                    e.cross[p.index] = self._eval(e, p.policy)
                    evals += len(e.batch)
                elif p is newest and target_table is not None:
                    # the target is the newest policy: these pairs are already counted
                    e.cross[p.index] = target_table[e.index]
                else:
                    e.cross[p.index] = batch_loglik(p.policy, e.batch)
                    evals += len(e.batch)
        self._count(evals)
        sizes = np.array([len(p.batch) for p in self.entries], dtype=float)
        log_mix = np.log(sizes / sizes.sum())
        out = []
        for e in self.entries:
            z = np.stack([e.cross[p.index] for p in self.entries], axis=1) + log_mix
            top = z.max(axis=1, keepdims=True)
            out.append(top[:, 0] + np.log(np.sum(np.exp(z - top), axis=1)))
        return out
