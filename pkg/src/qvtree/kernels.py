"""Kernel backend selection.

The compiled module is used when it imports; set ``QVTREE_PURE_PYTHON=1`` to
force the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("QVTREE_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811
    except ImportError:
        _impl = _pykernels
    else:
        BACKEND = "cython"

if BACKEND == "cython":
    import numpy as np

    _c = np.ascontiguousarray

    # the compiled signatures take C-contiguous buffers; copies only happen for strided input
    def predict(t_idx, t_prob, b, a):
        return _impl.predict(_c(t_idx), _c(t_prob), _c(b, dtype=np.float64), a)

    def backproject(t_idx, t_prob, h, a):
        return _impl.backproject(_c(t_idx), _c(t_prob), _c(h, dtype=np.float64), a)

    def fib_sweep(t_idx, t_prob, obs, reward, alpha, gamma):
        return _impl.fib_sweep(_c(t_idx), _c(t_prob), _c(obs), _c(reward), _c(alpha), gamma)

    def sample_observations(b_cdf, t_idx, t_cdf, obs_cdf, a, u):
        return _impl.sample_observations(_c(b_cdf), _c(t_idx), _c(t_cdf), _c(obs_cdf), a, _c(u))
else:
    predict = _impl.predict
    backproject = _impl.backproject
    fib_sweep = _impl.fib_sweep
    sample_observations = _impl.sample_observations

__all__ = ["BACKEND", "predict", "backproject", "fib_sweep", "sample_observations"]
