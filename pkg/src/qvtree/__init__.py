"""Anytime POMDP planning with a bounded QV-tree search.

The offline stage computes an upper bound (fast informed bound) and a lower
bound (point-based value iteration); the online stage grows a search tree from
the current belief and acts on its bounds.
"""
from .gridworld import GridMap, MotionNoise, build_model, bundled_map, generate_landmark_map, load_map, parse_map
from .kernels import BACKEND
from .model import AlphaSet, PomdpModel, alpha_value, belief_update, obs_marginal
from .search import QvtsConfig, QVTree, forward_sampling
from .simulator import BatchConfig, Limits, World, run_batch, run_episode
from .solvers import SolverConfig, exact_value_bounded, solve_bounds, solve_fib, solve_mdp, solve_pbvi

__version__ = "0.1.0"

__all__ = [
    "AlphaSet", "BACKEND", "BatchConfig", "GridMap", "Limits", "MotionNoise", "PomdpModel",
    "QVTree", "QvtsConfig", "SolverConfig", "World", "alpha_value", "belief_update", "build_model",
    "bundled_map", "exact_value_bounded", "forward_sampling", "generate_landmark_map", "load_map",
    "obs_marginal", "parse_map", "run_batch", "run_episode", "solve_bounds", "solve_fib", "solve_mdp",
    "solve_pbvi",
]
