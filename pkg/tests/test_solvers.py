import itertools

import numpy as np
import pytest

from qvtree.examples import random_pomdp, tiger
from qvtree.gridworld import STAY, MotionNoise, build_model, parse_map
from qvtree.model import AlphaSet, PomdpModel, alpha_value, point_belief
from qvtree.solvers import (ExactOracle, NotConverged, SolverConfig, TooLarge, build_belief_set,
                            exact_alpha_sets, exact_value_bounded, expand_belief_set, prune,
                            solve_bounds, solve_fib, solve_mdp, solve_pbvi)

RIGHT = 5
DETERMINISTIC = MotionNoise(1.0, 0.0, 0.0)


def perfect_obs_model(rng, n=5, na=3):
    t = rng.dirichlet(np.ones(n), size=(n, na))
    return PomdpModel.from_dense(t, np.eye(n), rng.uniform(-1, 1, (n, na)), 0.9)


def q_iteration(model, sweeps=2000):
    """Plain dense Q iteration, independent of the solver code."""
    t = model.dense_transition()
    q = np.zeros((model.num_states, model.num_actions))
    for _ in range(sweeps):
        q = model.reward + model.discount * t @ q.max(axis=1)
    return q


def expectimax(model, b, depth):
    """Recursive finite-horizon value with normalized beliefs (oracle for the oracle)."""
    if depth == 0:
        return 0.0
    best = -np.inf
    t = model.dense_transition()
    for a in range(model.num_actions):
        pred = b @ t[:, a, :]
        total = float(model.reward[:, a] @ b)
        for z in range(model.num_observations):
            joint = pred * model.obs[:, z]
            p = joint.sum()
            if p > 1e-300:
                total += model.discount * p * expectimax(model, joint / p, depth - 1)
        best = max(best, total)
    return best


def test_fib_equals_mdp_q_under_perfect_observation():
    rng = np.random.default_rng(0)
    for _ in range(3):
        m = perfect_obs_model(rng)
        cfg = SolverConfig(epsilon=1e-8, max_iterations=5000)
        fib = solve_fib(m, cfg)
        np.testing.assert_allclose(fib.alphas.vectors.T, q_iteration(m), atol=1e-6)


def test_fib_constant_reward_fixed_point():
    rng = np.random.default_rng(1)
    m = random_pomdp(rng)
    m = PomdpModel.from_sparse(m.t_idx, m.t_prob, m.obs, -np.ones_like(m.reward), 0.5)
    fib = solve_fib(m, SolverConfig(epsilon=1e-10))
    np.testing.assert_allclose(fib.alphas.vectors, -2.0, atol=1e-9)


def test_fib_iterates_are_monotone():
    m = random_pomdp(np.random.default_rng(2))
    seen = []
    solve_fib(m, SolverConfig(epsilon=1e-6), callback=lambda k, a: seen.append(a.copy()))
    for prev, cur in zip(seen, seen[1:]):
        assert np.all(cur <= prev + 1e-12)


def test_fib_strict_raises_with_partial_result():
    m = random_pomdp(np.random.default_rng(3))
    with pytest.raises(NotConverged) as info:
        solve_fib(m, SolverConfig(max_iterations=2), strict=True)
    assert info.value.result.iterations == 2


def test_tiger_fib_above_exact_lower_end():
    m = tiger()
    fib = solve_fib(m, SolverConfig(epsilon=1e-8, max_iterations=5000))
    lo, hi = exact_value_bounded(m, m.initial_belief, 8)
    assert alpha_value(m.initial_belief, fib.alphas)[0] >= lo


def test_pbvi_zero_sweeps_is_blind_bound():
    m = random_pomdp(np.random.default_rng(4))
    s = solve_pbvi(m, m.initial_belief[None], iterations=0)
    rng = np.random.default_rng(5)
    for b in rng.dirichlet(np.ones(m.num_states), size=10):
        assert alpha_value(b, s)[0] == pytest.approx(m.reward_min / (1 - m.discount))


def test_pbvi_matches_mdp_on_perfectly_observed_chain():
    g = parse_map("..G")
    m = build_model(g, DETERMINISTIC, sensor_accuracy=1.0)
    # identity observation so every state is revealed
    m = PomdpModel.from_sparse(m.t_idx, m.t_prob, np.eye(3), m.reward, 0.8, m.initial_belief)
    v, policy, _, _ = solve_mdp(m, SolverConfig(epsilon=1e-10, max_iterations=5000))
    beliefs = np.stack([point_belief(3, 1), point_belief(3, 2)])
    s = solve_pbvi(m, beliefs)
    assert alpha_value(point_belief(3, 1), s)[0] == pytest.approx(v[1], abs=1e-4)


def test_pbvi_below_fib_on_random_probes():
    rng = np.random.default_rng(6)
    for _ in range(3):
        m = random_pomdp(rng)
        bounds = solve_bounds(m, SolverConfig(pbvi_target_size=16))
        for b in rng.dirichlet(np.ones(m.num_states), size=50):
            assert alpha_value(b, bounds.lower)[0] <= alpha_value(b, bounds.upper)[0] + 1e-9


def _three_state_chain():
    # single observation, so posteriors equal predictions
    t = np.zeros((3, 3, 3))
    for x in range(3):
        t[x, 0, x] = 1.0
        t[x, 1, min(x + 1, 2)] = 1.0
        t[x, 2, x] = 0.5
        t[x, 2, min(x + 1, 2)] += 0.5
    return PomdpModel.from_dense(t, np.ones((3, 1)), np.zeros((3, 3)), 0.9, [1.0, 0.0, 0.0])


def test_expand_adds_farthest_candidate():
    m = _three_state_chain()
    b0 = m.initial_belief[None]
    grown = expand_belief_set(m, b0, np.random.default_rng(0))
    # candidates from e0: e0 (distance 0), e1 (distance 2), [.5, .5, 0] (distance 1)
    assert grown.shape[0] == 2
    np.testing.assert_allclose(grown[1], [0.0, 1.0, 0.0])


def test_expand_skips_duplicates():
    t = np.stack([np.eye(2)], axis=1)
    m = PomdpModel.from_dense(t, np.ones((2, 1)), np.zeros((2, 1)), 0.9, [1.0, 0.0])
    grown = expand_belief_set(m, m.initial_belief[None], np.random.default_rng(0))
    assert grown.shape[0] == 1


def test_build_belief_set_reaches_target_or_stalls():
    m = build_model(parse_map("....\n.G..\n....\n...."))
    beliefs = build_belief_set(m, SolverConfig(pbvi_target_size=128))
    assert beliefs.shape[0] == 128
    np.testing.assert_allclose(beliefs.sum(axis=1), 1.0, atol=1e-12)
    t = np.stack([np.eye(2)], axis=1)
    frozen = PomdpModel.from_dense(t, np.ones((2, 1)), np.zeros((2, 1)), 0.9, [1.0, 0.0])
    assert build_belief_set(frozen, SolverConfig(pbvi_target_size=128)).shape[0] == 1


def test_mdp_examples():
    m = build_model(parse_map("G"))
    v, policy, _, _ = solve_mdp(m)
    assert v[0] == 0.0 and policy[0] == STAY
    rng = np.random.default_rng(7)
    r = random_pomdp(rng)
    r = PomdpModel.from_sparse(r.t_idx, r.t_prob, r.obs, -np.ones_like(r.reward), 0.5)
    v, _, _, _ = solve_mdp(r, SolverConfig(epsilon=1e-12, max_iterations=200))
    np.testing.assert_allclose(v, -2.0, atol=1e-10)


def test_mdp_corridor():
    m = build_model(parse_map("..G"), DETERMINISTIC)
    v, policy, _, _ = solve_mdp(m, SolverConfig(epsilon=1e-12, max_iterations=2000))
    # entering the goal is free and idling there costs nothing
    np.testing.assert_allclose(v, [-1.0, 0.0, 0.0], atol=1e-9)
    assert policy[0] == RIGHT and policy[1] == RIGHT and policy[2] == STAY


def test_mdp_matches_dense_q_iteration():
    m = build_model(parse_map("#...\n..#.\n.G..\n...."))
    _, _, q, _ = solve_mdp(m, SolverConfig(epsilon=1e-12, max_iterations=5000))
    np.testing.assert_allclose(q, q_iteration(m, 5000), atol=1e-8)


def test_exact_depth_zero_is_blind_interval():
    m = random_pomdp(np.random.default_rng(8))
    lo, hi = exact_value_bounded(m, m.initial_belief, 0)
    assert lo == pytest.approx(m.reward_min / (1 - m.discount))
    assert hi == pytest.approx(m.reward_max / (1 - m.discount))


def test_exact_chain_example():
    # x0 -> x1 -> x1 ..., reward -1 in x0 and 0 afterwards
    t = np.zeros((2, 1, 2))
    t[:, 0, 1] = 1.0
    m = PomdpModel.from_dense(t, np.ones((2, 1)), np.array([[-1.0], [0.0]]), 0.5, [1.0, 0.0])
    lo, hi = exact_value_bounded(m, m.initial_belief, 2)
    assert lo == pytest.approx(-1.0 + 0.25 * -1.0 / 0.5, abs=1e-8)
    assert hi == pytest.approx(-1.0, abs=1e-8)


def test_exact_guard():
    m = random_pomdp(np.random.default_rng(9), num_actions=3, num_observations=5)
    with pytest.raises(TooLarge):
        exact_value_bounded(m, m.initial_belief, 2)
    with pytest.raises(TooLarge):
        exact_value_bounded(tiger(), tiger().initial_belief, 9)


def test_exact_value_matches_recursive_expectimax():
    rng = np.random.default_rng(10)
    for _ in range(4):
        m = random_pomdp(rng)
        oracle = ExactOracle(m, 4)
        enum = ExactOracle(m, 4, enumerate_only=True)
        for b in rng.dirichlet(np.ones(m.num_states), size=3):
            ref = expectimax(m, b, 4)
            v, slack = oracle.finite_horizon_value(b[None])
            assert v[0] <= ref + 1e-9 and ref <= v[0] + slack + 1e-9
            assert enum.finite_horizon_value(b[None])[0][0] == pytest.approx(ref, abs=1e-10)


def test_prune_keeps_upper_surface():
    rng = np.random.default_rng(11)
    vecs = rng.normal(size=(40, 3))
    kept = prune(vecs, rng)
    assert kept.shape[0] < 40
    probes = rng.dirichlet(np.ones(3), size=2000)
    np.testing.assert_allclose((probes @ kept.T).max(axis=1), (probes @ vecs.T).max(axis=1), atol=1e-8)


def test_exact_alpha_sets_match_enumeration_at_corners():
    m = random_pomdp(np.random.default_rng(12), num_states=3)
    sets, errors = exact_alpha_sets(m, 3)
    for k, vecs in enumerate(sets):
        for x in range(m.num_states):
            b = point_belief(m.num_states, x)
            ref = expectimax(m, b, k)
            got = (vecs @ b).max()
            assert got <= ref + 1e-9 and ref <= got + errors[k] + 1e-9


def test_alpha_set_values_are_batchable():
    s = AlphaSet(np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([0, 1]))
    beliefs = np.array(list(itertools.product([0.0, 0.5, 1.0], repeat=2)))
    np.testing.assert_allclose(s.values(beliefs), np.maximum(beliefs[:, 0], 2 * beliefs[:, 1]))
