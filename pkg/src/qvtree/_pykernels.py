"""Pure numpy implementations of the hot loops.

Transition tables use a padded sparse layout: ``t_idx[x, a, k]`` is the k-th
successor of ``x`` under ``a`` and ``t_prob[x, a, k]`` its probability, with
unused slots carrying probability zero.
"""
import numpy as np


def predict(t_idx, t_prob, b, a):
    """Push a belief through the transition model: ``sum_x T(x, a, .) b(x)``."""
    weights = t_prob[:, a, :] * b[:, None]
    return np.bincount(t_idx[:, a, :].ravel(), weights=weights.ravel(), minlength=b.shape[0])


def backproject(t_idx, t_prob, h, a):
    """Expected next-state value: ``sum_x' T(x, a, x') h(x')`` for every x."""
    return np.einsum("xk,xk->x", t_prob[:, a, :], h[t_idx[:, a, :]])


def fib_sweep(t_idx, t_prob, obs, reward, alpha, gamma):
    """One synchronous sweep of the informed-bound backup over all vectors."""
    num_actions = alpha.shape[0]
    # weighted[x', z, a'] = O(x', z) * alpha_a'(x')
    weighted = obs[:, :, None] * alpha.T[:, None, :]
    out = np.empty_like(alpha)
    for a in range(num_actions):
        gathered = weighted[t_idx[:, a, :]]
        proj = np.einsum("xk,xkzc->xzc", t_prob[:, a, :], gathered)
        out[a] = reward[:, a] + gamma * proj.max(axis=2).sum(axis=1)
    return out


def sample_observations(b_cdf, t_idx, t_cdf, obs_cdf, a, u):
    """Map uniforms ``u[i] = (u_state, u_next, u_obs)`` to observation draws.

    Each stage takes the first index whose cumulative mass exceeds the
    scaled uniform, so zero-probability entries are never selected.
    """
    xs = np.searchsorted(b_cdf, u[:, 0] * b_cdf[-1], side="right")
    rows = t_cdf[xs, a, :]
    ks = (rows > (u[:, 1] * rows[:, -1])[:, None]).argmax(axis=1)
    nxt = t_idx[xs, a, ks]
    orow = obs_cdf[nxt]
    return (orow > (u[:, 2] * orow[:, -1])[:, None]).argmax(axis=1).astype(np.int64)
