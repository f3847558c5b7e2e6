"""Small reference models used by tests, benchmarks and the CLI self-checks."""
import numpy as np

from .model import PomdpModel


def two_state_reference(discount=0.95):
    """Two states, identity dynamics, one noisy two-valued sensor.

    ``O(x0, z0) = 0.9`` and ``O(x1, z0) = 0.2``; from the uniform prior the
    first observation is ``z0`` with probability 0.55.
    """
    transition = np.stack([np.eye(2), np.eye(2)], axis=1)
    obs = np.array([[0.9, 0.1], [0.2, 0.8]])
    reward = np.array([[-1.0, 0.0], [0.0, -1.0]])
    return PomdpModel.from_dense(transition, obs, reward, discount, [0.5, 0.5])


def tiger(discount=0.95, accuracy=0.85):
    """Classic tiger problem: actions listen, open-left, open-right."""
    listen = np.eye(2)
    reset = np.full((2, 2), 0.5)
    transition = np.stack([listen, reset, reset], axis=1)
    obs = np.array([[accuracy, 1 - accuracy], [1 - accuracy, accuracy]])
    # state 0: tiger behind the left door
    reward = np.array([[-1.0, -100.0, 10.0], [-1.0, 10.0, -100.0]])
    return PomdpModel.from_dense(transition, obs, reward, discount, [0.5, 0.5])


def random_pomdp(rng, num_states=None, num_actions=None, num_observations=None,
                 discount=0.9, max_states=6, max_actions=3, max_observations=3):
    """Random dense model; unspecified sizes are drawn uniformly from ``2..max``."""
    n = num_states or int(rng.integers(2, max_states + 1))
    na = num_actions or int(rng.integers(2, max_actions + 1))
    nz = num_observations or int(rng.integers(2, max_observations + 1))
    transition = rng.dirichlet(np.ones(n), size=(n, na))
    obs = rng.dirichlet(np.ones(nz), size=n)
    reward = rng.uniform(-1.0, 1.0, size=(n, na))
    b0 = rng.dirichlet(np.ones(n))
    return PomdpModel.from_dense(transition, obs, reward, discount, b0)
