import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from qvtree import _pykernels, kernels
from qvtree.examples import random_pomdp
from qvtree.gridworld import build_model, generate_landmark_map, parse_map

ck = pytest.importorskip("qvtree._ckernels", reason="compiled kernels not built")


def models():
    rng = np.random.default_rng(0)
    yield build_model(parse_map("#....\n..#G.\n.....\n.#..."))
    yield build_model(generate_landmark_map(30, 12, seed=2, num_blocks=4))
    for _ in range(3):
        yield random_pomdp(rng, max_states=8)


@pytest.mark.parametrize("model", list(models()))
def test_predict_and_backproject_parity(model):
    rng = np.random.default_rng(1)
    b = rng.dirichlet(np.ones(model.num_states))
    h = rng.normal(size=model.num_states)
    for a in range(model.num_actions):
        np.testing.assert_allclose(ck.predict(model.t_idx, model.t_prob, b, a),
                                   _pykernels.predict(model.t_idx, model.t_prob, b, a), atol=1e-15)
        np.testing.assert_allclose(ck.backproject(model.t_idx, model.t_prob, h, a),
                                   _pykernels.backproject(model.t_idx, model.t_prob, h, a), atol=1e-13)


@pytest.mark.parametrize("model", list(models()))
def test_fib_sweep_parity(model):
    rng = np.random.default_rng(2)
    alpha = rng.normal(size=(model.num_actions, model.num_states))
    args = (model.t_idx, model.t_prob, np.ascontiguousarray(model.obs), np.ascontiguousarray(model.reward))
    np.testing.assert_allclose(ck.fib_sweep(*args, alpha, model.discount),
                               _pykernels.fib_sweep(*args, alpha, model.discount), atol=1e-12)


def test_predict_matches_dense_product():
    m = random_pomdp(np.random.default_rng(3))
    b = m.initial_belief
    t = m.dense_transition()
    for a in range(m.num_actions):
        np.testing.assert_allclose(kernels.predict(m.t_idx, m.t_prob, b, a), b @ t[:, a, :], atol=1e-15)


@pytest.mark.parametrize("model", list(models()))
def test_sampling_is_identical_across_backends(model):
    rng = np.random.default_rng(4)
    b = rng.dirichlet(np.ones(model.num_states))
    u = rng.random((2000, 3))
    for a in range(model.num_actions):
        args = (np.cumsum(b), model.t_idx, model.t_cdf, model.obs_cdf, a, u)
        np.testing.assert_array_equal(ck.sample_observations(*args), _pykernels.sample_observations(*args))


def test_sampling_never_picks_zero_mass_entries():
    # state 1 has no belief mass and observation 1 never occurs
    t = np.stack([np.eye(3)], axis=1)
    obs = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    from qvtree.model import PomdpModel

    m = PomdpModel.from_dense(t, obs, np.zeros((3, 1)), 0.9)
    b = np.array([0.5, 0.0, 0.5])
    u = np.vstack([np.linspace(0, 1, 1001, endpoint=False)] * 3).T
    for impl in (kernels, _pykernels):
        draws = impl.sample_observations(np.cumsum(b), m.t_idx, m.t_cdf, m.obs_cdf, 0, u)
        assert set(np.unique(draws)) == {0, 2}


def test_pure_python_switch():
    code = "import qvtree.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, QVTREE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("QVTREE_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"
    importlib.reload(kernels)
