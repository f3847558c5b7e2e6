"""Offline value bounds: informed upper bound, point-based lower bound, MDP values.

Also hosts :func:`exact_value_bounded`, a finite-horizon oracle that returns a
certified interval around the optimal value; it is meant for small models in
tests and sanity checks.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import kernels
from .model import AlphaSet, alpha_value, predict

log = logging.getLogger(__name__)


class NotConverged(RuntimeError):
    """Iteration cap reached before the sup-norm change fell below epsilon."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 1e-4
    max_iterations: int = 500
    pbvi_iterations: int = 100
    pbvi_target_size: int = 128
    rng_seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1 or self.pbvi_target_size < 1 or self.pbvi_iterations < 0:
            raise ValueError("iteration counts and target size must be positive")


@dataclass
class Solution:
    """Solver output with convergence bookkeeping."""

    alphas: AlphaSet
    iterations: int
    residual: float
    converged: bool


def _check(result, strict, name):
    if strict and not result.converged:
        raise NotConverged(
            f"{name} stopped after {result.iterations} sweeps with change {result.residual:.3g}", result
        )
    if not result.converged:
        log.warning("%s not converged: change %.3g after %d sweeps", name, result.residual, result.iterations)
    return result


def _contiguous(model):
    return (
        np.ascontiguousarray(model.t_idx),
        np.ascontiguousarray(model.t_prob),
        np.ascontiguousarray(model.obs),
        np.ascontiguousarray(model.reward),
    )


def solve_fib(model, config=SolverConfig(), strict=False, callback=None):
    """Fast informed bound: one vector per action, iterated from ``R_max/(1-gamma)``.

    Every sweep from that start is pointwise non-increasing and stays above the
    optimal value. ``callback(sweep, alpha)`` sees each iterate.
    """
    t_idx, t_prob, obs, reward = _contiguous(model)
    gamma = model.discount
    alpha = np.full((model.num_actions, model.num_states), model.reward_max / (1.0 - gamma))
    change = np.inf
    sweeps = 0
    while sweeps < config.max_iterations:
        new = kernels.fib_sweep(t_idx, t_prob, obs, reward, alpha, gamma)
        sweeps += 1
        change = float(np.abs(new - alpha).max())
        alpha = new
        if callback is not None:
            callback(sweeps, alpha)
        if change < config.epsilon:
            break
    result = Solution(AlphaSet(alpha, np.arange(model.num_actions)), sweeps, change, change < config.epsilon)
    return _check(result, strict, "FIB")


def solve_mdp(model, config=SolverConfig(), strict=False):
    """Value iteration on the underlying fully observable MDP.

    Returns ``(values, policy, q_values, solution)``; the policy breaks ties
    toward the lowest action index.
    """
    t_idx, t_prob, _, reward = _contiguous(model)
    gamma = model.discount
    v = np.zeros(model.num_states)
    change = np.inf
    sweeps = 0
    q = reward.copy()
    while sweeps < config.max_iterations:
        q = reward + gamma * np.einsum("xak,xak->xa", t_prob, v[t_idx])
        new = q.max(axis=1)
        sweeps += 1
        change = float(np.abs(new - v).max())
        v = new
        if change < config.epsilon:
            break
    policy = np.argmax(q, axis=1)
    result = Solution(AlphaSet(q.T, np.arange(model.num_actions)), sweeps, change, change < config.epsilon)
    _check(result, strict, "MDP")
    return v, policy, q, result


def _point_backup(model, b, vectors, t_idx, t_prob):
    """Point backup of the vector set at ``b``; returns ``(alpha, action)``."""
    na, nz = model.num_actions, model.num_observations
    preds = np.stack([kernels.predict(t_idx, t_prob, b, a) for a in range(na)])
    support = np.flatnonzero(preds.any(axis=0))
    obs = model.obs[support]
    # scores[a, z, j] = sum_x' pred_a(x') O(x', z) alpha_j(x')
    weighted = preds[:, support, None] * obs[None]
    scores = weighted.transpose(0, 2, 1).reshape(na * nz, -1) @ vectors[:, support].T
    scores = scores.reshape(na, nz, -1)
    best = scores.argmax(axis=2)
    q = model.reward.T @ b + model.discount * np.take_along_axis(scores, best[:, :, None], 2)[:, :, 0].sum(axis=1)
    a = int(np.argmax(q))
    # h(x') = sum_z O(x', z) alpha_{best(a, z)}(x')
    h = np.einsum("xz,zx->x", model.obs, vectors[best[a]])
    alpha = model.reward[:, a] + model.discount * kernels.backproject(t_idx, t_prob, h, a)
    return alpha, a


def solve_pbvi(model, belief_set, config=SolverConfig(), iterations=None):
    """Point-based value iteration over a fixed belief set.

    Starts from the blind vector ``R_min/(1-gamma)`` and runs a fixed number of
    synchronous sweeps; each sweep keeps one backed-up vector per belief.
    """
    beliefs = np.atleast_2d(np.asarray(belief_set, dtype=np.float64))
    if beliefs.shape[0] == 0:
        raise ValueError("belief set must be non-empty")
    iterations = config.pbvi_iterations if iterations is None else iterations
    t_idx, t_prob, _, _ = _contiguous(model)
    vectors = np.full((1, model.num_states), model.reward_min / (1.0 - model.discount))
    actions = np.zeros(1, dtype=np.int64)
    for _ in range(iterations):
        new_vecs = np.empty((beliefs.shape[0], model.num_states))
        new_acts = np.empty(beliefs.shape[0], dtype=np.int64)
        for i, b in enumerate(beliefs):
            new_vecs[i], new_acts[i] = _point_backup(model, b, vectors, t_idx, t_prob)
        vectors, actions = new_vecs, new_acts
    return AlphaSet(vectors, actions)


def _sample_index(cdf, u):
    return int(np.searchsorted(cdf, u * cdf[-1], side="right"))


def expand_belief_set(model, beliefs, rng):
    """Greedy forward-sampling expansion of a belief set.

    For every point, simulate one step per action and keep the successor
    belief farthest (L1) from the growing set; add it when the distance is
    positive. The set at most doubles.
    """
    current = [np.asarray(b, dtype=np.float64) for b in np.atleast_2d(beliefs)]
    if not current:
        raise ValueError("belief set must be non-empty")
    stacked = np.array(current)
    for b in list(current):
        b_cdf = np.cumsum(b)
        best, best_dist = None, 0.0
        for a in range(model.num_actions):
            x = _sample_index(b_cdf, rng.random())
            k = _sample_index(model.t_cdf[x, a], rng.random())
            y = int(model.t_idx[x, a, k])
            z = _sample_index(model.obs_cdf[y], rng.random())
            post = predict(model, b, a) * model.obs[:, z]
            post /= post.sum()
            dist = float(np.abs(stacked - post).sum(axis=1).min())
            if dist > best_dist:
                best, best_dist = post, dist
        if best is not None:
            stacked = np.vstack([stacked, best])
    return stacked


def build_belief_set(model, config=SolverConfig(), rng=None):
    """Expand from ``{b0}`` until ``pbvi_target_size`` points or growth stalls."""
    rng = np.random.default_rng(config.rng_seed) if rng is None else rng
    beliefs = model.initial_belief[None, :].copy()
    while beliefs.shape[0] < config.pbvi_target_size:
        grown = expand_belief_set(model, beliefs, rng)
        if grown.shape[0] == beliefs.shape[0]:
            break
        beliefs = grown
    return beliefs[: config.pbvi_target_size]


@dataclass
class OfflineBounds:
    """Everything the online search needs from the offline stage."""

    upper: AlphaSet
    lower: AlphaSet
    belief_set: np.ndarray
    fib: Solution | None = None


def solve_bounds(model, config=SolverConfig()):
    fib = solve_fib(model, config)
    beliefs = build_belief_set(model, config)
    lower = solve_pbvi(model, beliefs, config)
    return OfflineBounds(fib.alphas, lower, beliefs, fib)


# ---------------------------------------------------------------------------
# bounded-horizon oracle
# ---------------------------------------------------------------------------

MAX_BRANCHING = 12
MAX_DEPTH = 8
_PRUNE_TOL = 1e-10
_LP_SLACK = 1e-9


def _dominance_filter(vecs):
    """Drop duplicates and vectors pointwise dominated by another one."""
    vecs = np.unique(vecs, axis=0)
    if vecs.shape[0] <= 1:
        return vecs
    keep = np.ones(vecs.shape[0], dtype=bool)
    for i in range(vecs.shape[0]):
        others = vecs[keep]
        dominated = np.all(others >= vecs[i], axis=1) & np.any(others > vecs[i], axis=1)
        if dominated.any():
            keep[i] = False
    return vecs[keep]


def _witness(v, kept):
    """LP: maximize d s.t. (v - k).b >= d for all kept k, b in the simplex."""
    n = v.shape[0]
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_ub = np.hstack([kept - v, np.ones((kept.shape[0], 1))])
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=np.zeros(kept.shape[0]),
        A_eq=np.hstack([np.ones((1, n)), np.zeros((1, 1))]),
        b_eq=[1.0],
        bounds=[(0, None)] * n + [(None, None)],
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        return None
    return -res.fun, res.x[:n]


def prune(vecs, rng=None, probes=256):
    """Reduce a vector set to (nearly) its maximal elements.

    Vectors dropped by the LP test lie at most ``_PRUNE_TOL`` plus solver slack
    above the retained upper surface.
    """
    vecs = _dominance_filter(np.atleast_2d(vecs))
    n_vec, n = vecs.shape
    if n_vec <= 1:
        return vecs
    rng = np.random.default_rng(0) if rng is None else rng
    points = np.vstack([np.eye(n), rng.dirichlet(np.ones(n), size=probes)])
    winners = np.unique(np.argmax(points @ vecs.T, axis=1))
    kept = [int(i) for i in winners]
    in_kept = np.zeros(n_vec, dtype=bool)
    in_kept[kept] = True
    pending = [i for i in range(n_vec) if not in_kept[i]]
    while pending:
        i = pending.pop()
        if in_kept[i]:
            continue
        found = _witness(vecs[i], vecs[kept])
        if found is None:
            # solver trouble: keeping a vector never changes the max surface
            kept.append(i)
            in_kept[i] = True
            continue
        if found[0] <= _PRUNE_TOL:
            continue
        scores = vecs @ found[1]
        scores[in_kept] = -np.inf
        j = int(np.argmax(scores))
        kept.append(j)
        in_kept[j] = True
        if j != i:
            pending.append(i)
    return vecs[np.sort(kept)]


def _projection_matrices(model):
    """``M[a][z][x', x] = O(x', z) T(x, a, x')`` as dense arrays."""
    dense = model.dense_transition()
    return np.einsum("yz,xay->azyx", model.obs, dense)


def exact_alpha_sets(model, depth, max_vectors=40, max_candidates=1500):
    """Exact finite-horizon value vectors (incremental pruning), leaf value 0.

    Stops early once a set grows past ``max_vectors``; a horizon whose
    cross-sums would exceed ``max_candidates`` is abandoned. Returns the sets
    for horizons ``0..k`` and a per-horizon error bound from pruning.
    """
    gamma = model.discount
    proj = _projection_matrices(model)
    na, nz = model.num_actions, model.num_observations
    rng = np.random.default_rng(12345)
    sets = [np.zeros((1, model.num_states))]
    errors = [0.0]
    prune_loss = _PRUNE_TOL + _LP_SLACK
    for _ in range(depth):
        prev = sets[-1]
        per_action = []
        for a in range(na):
            acc = None
            for z in range(nz):
                g = gamma * prev @ proj[a, z] + model.reward[:, a] / nz
                g = prune(g, rng)
                if acc is None:
                    acc = g
                    continue
                if acc.shape[0] * g.shape[0] > max_candidates:
                    return sets, errors
                acc = prune((acc[:, None, :] + g[None, :, :]).reshape(-1, g.shape[1]), rng)
            per_action.append(acc)
        new = prune(np.vstack(per_action), rng)
        errors.append(gamma * errors[-1] + (2 * nz + 1) * prune_loss)
        sets.append(new)
        if new.shape[0] > max_vectors:
            break
    return sets, errors


def _enumerate_value(model, beliefs, levels, leaf_vectors):
    """Vectorized expectimax over ``levels`` steps on unnormalized beliefs.

    Values are positively homogeneous in the belief, so the observation
    probability never has to be divided out; zero-mass branches contribute 0.
    """
    na, nz = model.num_actions, model.num_observations
    proj = _projection_matrices(model)
    stack = [np.atleast_2d(beliefs)]
    for _ in range(levels):
        cur = stack[-1]
        # children ordered (node, a, z)
        nxt = np.einsum("azyx,nx->nazy", proj, cur).reshape(-1, model.num_states)
        stack.append(nxt)
    values = (stack[-1] @ leaf_vectors.T).max(axis=1)
    for cur in reversed(stack[:-1]):
        future = values.reshape(cur.shape[0], na, nz).sum(axis=2)
        values = (cur @ model.reward + model.discount * future).max(axis=1)
    return values


class ExactOracle:
    """Reusable :func:`exact_value_bounded` for many beliefs on one model."""

    def __init__(self, model, depth, enumerate_only=False):
        na, nz = model.num_actions, model.num_observations
        if na * nz > MAX_BRANCHING or depth > MAX_DEPTH or depth < 0:
            raise TooLarge(f"|A|*|Z|={na * nz}, depth={depth} exceeds the enumeration guard")
        self.model = model
        self.depth = depth
        if enumerate_only or depth == 0:
            sets, errors = [np.zeros((1, model.num_states))], [0.0]
        else:
            sets, errors = exact_alpha_sets(model, depth)
        self.vector_depth = len(sets) - 1
        self.leaf_vectors = sets[-1]
        self.leaf_error = errors[-1]

    def finite_horizon_value(self, beliefs):
        """``V_d`` at each belief row (never above the truth) and how far below it may be."""
        levels = self.depth - self.vector_depth
        values = _enumerate_value(self.model, beliefs, levels, self.leaf_vectors)
        return values, self.model.discount ** levels * self.leaf_error

    def interval(self, b):
        lo, hi = self.intervals(np.atleast_2d(b))
        return float(lo[0]), float(hi[0])

    def intervals(self, beliefs):
        m = self.model
        v_d, slack = self.finite_horizon_value(np.atleast_2d(beliefs))
        tail = m.discount ** self.depth / (1.0 - m.discount)
        # every kept vector is a real policy value, so pruning can only lose value
        return v_d + tail * m.reward_min, v_d + slack + tail * m.reward_max


def exact_value_bounded(model, b, depth, enumerate_only=False):
    """Certified interval ``(lower, upper)`` containing ``V*(b)``.

    The depth-``depth`` expectimax value ``V_d`` (leaf value 0) is computed
    exactly, then padded with the discounted tail ``gamma^d R_min/(1-gamma)``
    below and ``gamma^d R_max/(1-gamma)`` above. Exact value vectors are used
    for the deepest horizons and explicit enumeration for the rest.
    """
    return ExactOracle(model, depth, enumerate_only).interval(b)
