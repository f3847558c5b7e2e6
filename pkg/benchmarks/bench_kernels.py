"""Compare the compiled kernels with the numpy fallback on a 100x40 grid model.

    python benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from qvtree import _pykernels
from qvtree.gridworld import build_model, generate_landmark_map

try:
    from qvtree import _ckernels
except ImportError:
    _ckernels = None


def cases(model, rng):
    b = rng.dirichlet(np.ones(model.num_states))
    h = rng.normal(size=model.num_states)
    alpha = rng.normal(size=(model.num_actions, model.num_states))
    u = rng.random((64, 3))
    obs = np.ascontiguousarray(model.obs)
    reward = np.ascontiguousarray(model.reward)
    b_cdf = np.cumsum(b)
    return {
        "predict": lambda k: k.predict(model.t_idx, model.t_prob, b, 1),
        "backproject": lambda k: k.backproject(model.t_idx, model.t_prob, h, 1),
        "fib_sweep": lambda k: k.fib_sweep(model.t_idx, model.t_prob, obs, reward, alpha, model.discount),
        "sample_observations(n=64)": lambda k: k.sample_observations(b_cdf, model.t_idx, model.t_cdf,
                                                                    model.obs_cdf, 1, u),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    model = build_model(generate_landmark_map(seed=args.seed))
    print(f"|X|={model.num_states} |A|={model.num_actions} |Z|={model.num_observations}")
    if _ckernels is None:
        print("compiled kernels not built; only the numpy fallback is timed")
    print(f"{'kernel':28s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(model, np.random.default_rng(args.seed)).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:28s} {py:10.3f} {'-':>10s} {'-':>8s}")
            continue
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:28s} {py:10.3f} {cy:10.3f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
