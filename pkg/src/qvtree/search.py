"""Anytime QV-tree search.

The tree alternates belief nodes (:class:`VNode`) and belief-action nodes
(:class:`QNode`). Leaves are valued with the offline alpha sets; every node
carries an upper bound, a lower bound, a heuristic gap and a pointer to the
leaf in its subtree that should be expanded next, so selection is O(1) from the
root.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import ZERO_LIKELIHOOD, ZeroLikelihoodObservation, alpha_value, belief_update, predict

SAMPLE = "sample"
EXACT = "exact"
MAX_LOWER = "max_lower"
MAX_UPPER = "max_upper"


class AlreadyExpanded(RuntimeError):
    pass


@dataclass(frozen=True)
class QvtsConfig:
    samples_per_qnode: int = 64
    time_budget_ms: float = 1000.0
    gap_tolerance: float = 1e-3
    node_cap: int = 100_000
    max_expansions: int | None = None
    action_rule: str = MAX_LOWER
    expansion_mode: str = SAMPLE
    clamp_to_leaf_bounds: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_qnode < 1:
            raise ValueError("samples_per_qnode must be >= 1")
        if self.action_rule not in (MAX_LOWER, MAX_UPPER):
            raise ValueError(f"unknown action rule {self.action_rule!r}")
        if self.expansion_mode not in (SAMPLE, EXACT):
            raise ValueError(f"unknown expansion mode {self.expansion_mode!r}")


class VNode:
    """Belief node. Leaf beliefs are recomputed from the parent on demand."""

    __slots__ = ("_belief", "observation", "weight", "parent", "children",
                 "upper", "lower", "heuristic", "target", "leaf_upper", "leaf_lower")

    def __init__(self, belief, observation, weight, parent, upper, lower):
        self._belief = belief
        self.observation = observation
        self.weight = weight
        self.parent = parent
        self.children = []
        self.upper = self.leaf_upper = upper
        self.lower = self.leaf_lower = lower
        self.heuristic = upper - lower
        self.target = self

    @property
    def belief(self):
        if self._belief is None:
            q = self.parent
            return _posterior(predict(q.tree.model, q.parent.belief, q.action),
                              q.tree.model.obs[:, self.observation])
        return self._belief

    def materialize(self):
        if self._belief is None:
            self._belief = self.belief
        return self._belief

    @property
    def is_leaf(self):
        return not self.children

    def __repr__(self):
        return (f"VNode(z={self.observation}, w={self.weight:.3g}, U={self.upper:.4g}, "
                f"L={self.lower:.4g}, H={self.heuristic:.3g}, children={len(self.children)})")


class QNode:
    __slots__ = ("tree", "action", "parent", "children", "reward",
                 "upper", "lower", "heuristic", "target")

    def __init__(self, tree, action, parent, reward):
        self.tree = tree
        self.action = action
        self.parent = parent
        self.children = []
        self.reward = reward
        self.upper = self.lower = self.heuristic = 0.0
        self.target = None

    @property
    def belief(self):
        return self.parent.belief

    def __repr__(self):
        return (f"QNode(a={self.action}, U={self.upper:.4g}, L={self.lower:.4g}, "
                f"H={self.heuristic:.3g}, children={len(self.children)})")


def update_qnode(q):
    """Back up bounds and the expansion pointer from the observation children."""
    gamma = q.tree.model.discount
    up = 0.0
    lo = 0.0
    best = None
    best_score = -np.inf
    for v in q.children:
        up += v.weight * v.upper
        lo += v.weight * v.lower
        score = v.weight * v.heuristic
        if score > best_score:
            best, best_score = v, score
    q.upper = q.reward + gamma * up
    q.lower = q.reward + gamma * lo
    q.heuristic = gamma * best.weight * best.heuristic
    q.target = best.target


def update_vnode(v):
    """Max-back-up over actions; follow the upper-bound-maximizing action.

    With ``clamp_to_leaf_bounds`` the result is intersected with the node's
    own offline interval, which keeps intervals nested when the point-based
    lower bound is not uniformly improvable.
    """
    best = v.children[0]
    lo = best.lower
    for q in v.children[1:]:
        if q.upper > best.upper:
            best = q
        if q.lower > lo:
            lo = q.lower
    up = best.upper
    if best.tree.config.clamp_to_leaf_bounds:
        up = min(up, v.leaf_upper)
        lo = max(lo, v.leaf_lower)
    v.upper = up
    v.lower = lo
    v.heuristic = best.heuristic
    v.target = best.target


def _posterior(pred, likelihood):
    post = pred * likelihood
    return post / post.sum()


def forward_sampling(model, b, a, n, rng):
    """Draw ``n`` observations by simulating ``x ~ b, x' ~ T(x, a), z ~ O(x')``."""
    b = np.ascontiguousarray(b, dtype=np.float64)
    u = rng.random((n, 3))
    return kernels.sample_observations(np.cumsum(b), model.t_idx, model.t_cdf, model.obs_cdf, a, u)


class LeafScorer:
    """Upper and lower leaf bounds for every posterior of one prediction.

    States with identical observation rows are pooled: vector ``j`` scores
    ``sum_c O_c(z) sum_{x in c} pred(x) alpha_j(x) / P(z)`` on the posterior
    for ``z``, so one pass over the states serves every observation. Models
    without that structure score the explicit posteriors instead.
    """

    def __init__(self, model, upper, lower):
        self.model = model
        self.n_upper = len(upper)
        vectors = np.vstack([upper.vectors, lower.vectors])
        rows, inverse = np.unique(model.obs, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        self.pooled = rows.shape[0] * 4 <= model.num_states
        if self.pooled:
            self.order = np.argsort(inverse, kind="stable")
            cuts = np.searchsorted(inverse[self.order], np.arange(rows.shape[0] + 1))
            self.segments = list(zip(cuts[:-1], cuts[1:]))
            self.class_rows = rows
            self.vectors = np.ascontiguousarray(vectors[:, self.order])
        else:
            self.vectors = vectors

    def score(self, pred, zs, a):
        if self.pooled:
            scores, norms = self._pooled(pred, zs)
        else:
            scores, norms = self._explicit(pred, zs)
        bad = np.flatnonzero(~(norms > ZERO_LIKELIHOOD))
        if bad.size:
            raise ZeroLikelihoodObservation(a, int(zs[bad[0]]), float(norms[bad[0]]))
        scores /= norms[:, None]
        return scores[:, : self.n_upper].max(axis=1), scores[:, self.n_upper:].max(axis=1)

    def _pooled(self, pred, zs):
        p = pred[self.order]
        pooled = np.empty((len(self.segments), self.vectors.shape[0]))
        mass = np.empty(len(self.segments))
        for c, (lo, hi) in enumerate(self.segments):
            pooled[c] = self.vectors[:, lo:hi] @ p[lo:hi]
            mass[c] = p[lo:hi].sum()
        rows = self.class_rows[:, zs]
        return rows.T @ pooled, mass @ rows

    def _explicit(self, pred, zs):
        # posteriors live on the prediction's support; score only those columns
        support = np.flatnonzero(pred)
        p = pred[support]
        joint = p[None, :] * self.model.obs[np.ix_(support, zs)].T
        return joint @ self.vectors[:, support].T, joint.sum(axis=1)


class QVTree:
    """Search tree rooted at the current belief.

    ``bounds`` is any object with ``upper`` and ``lower`` :class:`AlphaSet`
    attributes (see :class:`qvtree.solvers.OfflineBounds`).
    """

    def __init__(self, model, bounds, b0, config=QvtsConfig()):
        self.model = model
        self.upper_set = bounds.upper
        self.lower_set = bounds.lower
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.scorer = LeafScorer(model, bounds.upper, bounds.lower)
        self.node_count = 0
        self.expansions = 0
        self.root = self._leaf(np.asarray(b0, dtype=np.float64), None, 1.0, None)

    # -- construction -------------------------------------------------------

    def _leaf(self, belief, observation, weight, parent):
        upper = float(self.upper_set.values(belief)[0])
        lower = float(self.lower_set.values(belief)[0])
        self.node_count += 1
        return VNode(belief, observation, weight, parent, upper, lower)

    def construct_qnode(self, b, a, parent):
        """Create the Q-node for ``(b, a)`` with one leaf per distinct observation."""
        model = self.model
        pred = predict(model, b, a)
        q = QNode(self, a, parent, float(model.reward[:, a] @ b))
        if self.config.expansion_mode == SAMPLE:
            draws = forward_sampling(model, b, a, self.config.samples_per_qnode, self.rng)
            zs, counts = np.unique(draws, return_counts=True)
            weights = counts / self.config.samples_per_qnode
        else:
            marg = pred @ model.obs
            zs = np.flatnonzero(marg > ZERO_LIKELIHOOD)
            weights = marg[zs]
        uppers, lowers = self.scorer.score(pred, zs, a)
        for i, z in enumerate(zs):
            q.children.append(VNode(None, int(z), float(weights[i]), q, float(uppers[i]), float(lowers[i])))
        self.node_count += len(zs)
        update_qnode(q)
        return q

    def expand_vnode(self, v):
        if v.children:
            raise AlreadyExpanded("node already has children")
        b = v.materialize()
        for a in range(self.model.num_actions):
            v.children.append(self.construct_qnode(b, a, v))
        update_vnode(v)
        self.expansions += 1

    # -- search loop ----------------------------------------------------------

    def find_vnode_to_expand(self):
        return self.root.target

    def backup(self, v):
        """Refresh every ancestor of ``v`` up to the root."""
        p = v.parent
        while p is not None:
            if isinstance(p, QNode):
                update_qnode(p)
            else:
                update_vnode(p)
            p = p.parent

    def step(self):
        v = self.find_vnode_to_expand()
        self.expand_vnode(v)
        self.backup(v)

    def planning_finished(self, started, expansions):
        cfg = self.config
        if self.root.upper - self.root.lower < cfg.gap_tolerance:
            return True
        if self.node_count >= cfg.node_cap:
            return True
        if cfg.max_expansions is not None and expansions >= cfg.max_expansions:
            return True
        return (time.perf_counter() - started) * 1000.0 >= cfg.time_budget_ms

    def plan(self):
        """Expand until a budget is hit, then return the action to execute."""
        started = time.perf_counter()
        done = 0
        while not self.planning_finished(started, done):
            self.step()
            done += 1
        return self.best_action()

    def best_action(self):
        root = self.root
        if not root.children:
            alphas = self.lower_set if self.config.action_rule == MAX_LOWER else self.upper_set
            return alpha_value(root.belief, alphas)[1]
        if self.config.action_rule == MAX_LOWER:
            key = lambda q: (q.lower, q.upper, -q.action)  # noqa: E731
        else:
            key = lambda q: (q.upper, q.lower, -q.action)  # noqa: E731
        return max(root.children, key=key).action

    def advance_root(self, a, z):
        """Re-root at the child for ``(a, z)``, or start fresh from the posterior."""
        root = self.root
        for q in root.children:
            if q.action != a:
                continue
            for v in q.children:
                if v.observation == z:
                    v.materialize()
                    v.parent = None
                    v.weight = 1.0
                    self.root = v
                    self.node_count = count_nodes(v)
                    return
        post = belief_update(self.model, root.belief, a, z)
        self.node_count = 0
        self.root = self._leaf(post, None, 1.0, None)


def count_nodes(v):
    total = 0
    stack = [v]
    while stack:
        node = stack.pop()
        total += 1
        stack.extend(node.children)
    return total


def iter_vnodes(root):
    stack = [root]
    while stack:
        node = stack.pop()
        if isinstance(node, VNode):
            yield node
        stack.extend(node.children)


def new_tree(model, bounds, b0, config=QvtsConfig()):
    return QVTree(model, bounds, b0, config)
