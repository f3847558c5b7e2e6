"""Finite POMDP model, Bayes filter and piecewise-linear value evaluation.

Beliefs are plain 1-D float64 arrays over states. Transitions are stored in a
padded sparse layout (``t_idx``/``t_prob`` of shape ``(X, A, K)``) because grid
models have at most nine successors per state-action pair.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import kernels

ROW_TOL = 1e-9
RENORM_TOL = 1e-6
# rows already this close to one are kept bit-for-bit, so rebuilding a model is idempotent
EXACT_TOL = 1e-12
ZERO_LIKELIHOOD = 1e-300


class ModelError(ValueError):
    """Raised when model tables violate the probability invariants."""


class ZeroLikelihoodObservation(ArithmeticError):
    """The observation has (numerically) zero probability under the model."""

    def __init__(self, action, observation, likelihood):
        super().__init__(
            f"observation {observation} after action {action} has likelihood {likelihood:.3g}"
        )
        self.action = action
        self.observation = observation
        self.likelihood = likelihood


def _check_rows(arr, axis, name):
    """Validate rows summing to one; renormalize small drift, reject the rest."""
    if np.any(arr < 0):
        raise ModelError(f"{name} has negative entries")
    sums = arr.sum(axis=axis, keepdims=True)
    dev = np.abs(sums - 1.0)
    if np.any(dev > RENORM_TOL):
        raise ModelError(f"{name} rows deviate from 1 by up to {dev.max():.3g}")
    if np.any(dev > EXACT_TOL):
        arr = arr / sums
    return arr


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PomdpModel:
    """Immutable finite POMDP ``(X, A, Z, T, O, R, b0, gamma)``.

    Use :meth:`from_dense` or :meth:`from_sparse` rather than the raw
    constructor; they validate and normalize the tables.
    """

    t_idx: np.ndarray
    t_prob: np.ndarray
    obs: np.ndarray
    reward: np.ndarray
    discount: float
    initial_belief: np.ndarray
    t_cdf: np.ndarray = field(repr=False)
    obs_cdf: np.ndarray = field(repr=False)

    @property
    def num_states(self):
        return self.t_idx.shape[0]

    @property
    def num_actions(self):
        return self.t_idx.shape[1]

    @property
    def num_observations(self):
        return self.obs.shape[1]

    @classmethod
    def from_sparse(cls, t_idx, t_prob, obs, reward, discount, initial_belief=None):
        t_idx = np.asarray(t_idx, dtype=np.int64)
        t_prob = np.asarray(t_prob, dtype=np.float64)
        obs = np.asarray(obs, dtype=np.float64)
        reward = np.asarray(reward, dtype=np.float64)
        if t_idx.ndim != 3 or t_idx.shape != t_prob.shape:
            raise ModelError("transition index/probability tables must share shape (X, A, K)")
        n, na, _ = t_idx.shape
        if obs.ndim != 2 or obs.shape[0] != n:
            raise ModelError("observation table must have shape (X, Z)")
        if reward.shape != (n, na):
            raise ModelError("reward table must have shape (X, A)")
        if np.any((t_idx < 0) | (t_idx >= n)):
            raise ModelError("transition successor index out of range")
        if not 0.0 < discount < 1.0:
            raise ModelError(f"discount must lie in (0, 1), got {discount}")
        t_prob = _check_rows(t_prob, 2, "transition")
        obs = _check_rows(obs, 1, "observation")
        if initial_belief is None:
            initial_belief = np.full(n, 1.0 / n)
        b0 = make_belief(initial_belief, n)
        return cls(
            t_idx=_freeze(t_idx),
            t_prob=_freeze(t_prob),
            obs=_freeze(obs),
            reward=_freeze(reward),
            discount=float(discount),
            initial_belief=_freeze(b0),
            t_cdf=_freeze(np.cumsum(t_prob, axis=2)),
            obs_cdf=_freeze(np.cumsum(obs, axis=1)),
        )

    @classmethod
    def from_dense(cls, transition, obs, reward, discount, initial_belief=None):
        """Build from a dense ``T[x, a, x']`` array."""
        transition = np.asarray(transition, dtype=np.float64)
        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise ModelError("dense transition must have shape (X, A, X)")
        n, na, _ = transition.shape
        width = max(1, int((transition > 0).sum(axis=2).max()))
        t_idx = np.empty((n, na, width), dtype=np.int64)
        t_prob = np.zeros((n, na, width))
        for x in range(n):
            for a in range(na):
                nz = np.flatnonzero(transition[x, a] > 0)
                t_idx[x, a, :] = x
                t_idx[x, a, : len(nz)] = nz
                t_prob[x, a, : len(nz)] = transition[x, a, nz]
        return cls.from_sparse(t_idx, t_prob, obs, reward, discount, initial_belief)

    def dense_transition(self):
        """Dense ``T[x, a, x']``; only sensible for small models."""
        n, na, _ = self.t_idx.shape
        out = np.zeros((n, na, n))
        xs = np.arange(n)[:, None, None]
        acts = np.arange(na)[None, :, None]
        np.add.at(out, (np.broadcast_to(xs, self.t_idx.shape),
                        np.broadcast_to(acts, self.t_idx.shape), self.t_idx), self.t_prob)
        return out

    @property
    def reward_min(self):
        return float(self.reward.min())

    @property
    def reward_max(self):
        return float(self.reward.max())

    def content_hash(self):
        """Stable digest of every table, used to key solver caches."""
        h = hashlib.sha256()
        for arr in (self.t_idx, self.t_prob, self.obs, self.reward, self.initial_belief):
            h.update(str(arr.shape).encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr(self.discount).encode())
        return h.hexdigest()


def make_belief(probs, num_states=None):
    """Validate and copy a belief vector, renormalizing tiny drift."""
    b = np.array(probs, dtype=np.float64)
    if b.ndim != 1 or (num_states is not None and b.shape[0] != num_states):
        raise ModelError("belief has wrong shape")
    if np.any(b < 0) or np.any(b > 1 + ROW_TOL):
        raise ModelError("belief entries must lie in [0, 1]")
    total = b.sum()
    if abs(total - 1.0) > RENORM_TOL:
        raise ModelError(f"belief sums to {total}")
    return b / total if abs(total - 1.0) > EXACT_TOL else b


def point_belief(num_states, state):
    b = np.zeros(num_states)
    b[state] = 1.0
    return b


def uniform_belief(num_states, support=None):
    b = np.zeros(num_states)
    if support is None:
        b[:] = 1.0 / num_states
    else:
        support = np.asarray(support)
        b[support] = 1.0 / len(support)
    return b


def predict(model, b, a):
    """Predicted next-state distribution ``sum_x T(x, a, .) b(x)``."""
    return kernels.predict(model.t_idx, model.t_prob, np.ascontiguousarray(b, dtype=np.float64), a)


def obs_marginal(model, b, a, z):
    """Probability ``P(z | b, a)`` of observing ``z`` after taking ``a`` in ``b``."""
    return float(predict(model, b, a) @ model.obs[:, z])


def belief_update(model, b, a, z):
    """Bayes filter: predict through ``T``, weight by ``O(., z)``, renormalize."""
    post = predict(model, b, a) * model.obs[:, z]
    norm = post.sum()
    if not norm > ZERO_LIKELIHOOD:
        raise ZeroLikelihoodObservation(a, z, norm)
    return post / norm


def belief_reward(model, b, a):
    return float(model.reward[:, a] @ b)


@dataclass(frozen=True, eq=False)
class AlphaSet:
    """Piecewise-linear convex value function as a stack of alpha vectors.

    ``vectors`` has shape ``(count, X)``; ``actions[i]`` is the action attached
    to ``vectors[i]``.
    """

    vectors: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        vecs = np.array(self.vectors, dtype=np.float64, ndmin=2)
        acts = np.array(self.actions, dtype=np.int64, ndmin=1)
        if vecs.shape[0] == 0:
            raise ModelError("alpha set must be non-empty")
        if acts.shape != (vecs.shape[0],):
            raise ModelError("one action per alpha vector required")
        object.__setattr__(self, "vectors", _freeze(vecs))
        object.__setattr__(self, "actions", _freeze(acts))

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def num_states(self):
        return self.vectors.shape[1]

    def values(self, beliefs):
        """Max dot product for a batch of beliefs (rows)."""
        return (np.atleast_2d(beliefs) @ self.vectors.T).max(axis=1)


def alpha_value(b, alphas):
    """Return ``(max_i alpha_i . b, action of the first maximizing vector)``."""
    scores = alphas.vectors @ b
    i = int(np.argmax(scores))
    return float(scores[i]), int(alphas.actions[i])
