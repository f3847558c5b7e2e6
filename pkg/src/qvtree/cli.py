"""``qvtree`` command line: solve, simulate, compare, render, map.

Exit codes: 0 success, 2 input error, 3 missing prerequisite (e.g. no cache
with ``--no-solve``), 4 solver did not converge (caches are still written).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import gridworld, render
from .io import (CacheMismatch, ConfigError, KNOWN_KEYS, cache_key, cache_paths, load_config,
                 read_alpha_set, settings_from_mapping, write_alpha_set)
from .model import AlphaSet, ModelError, alpha_value
from .simulator import (PLANNERS, QVTS, MDP, BatchConfig, World, format_table, read_episode_csv,
                        replay_beliefs, run_batch)
from .solvers import OfflineBounds, build_belief_set, solve_fib, solve_mdp, solve_pbvi

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MISSING = 3
EXIT_NOT_CONVERGED = 4

log = logging.getLogger("qvtree")


class MissingPrerequisite(RuntimeError):
    pass


class InputError(ValueError):
    pass


def _load_grid(spec):
    """A map file path, ``builtin:NAME`` or ``landmark:SEED`` (generated 100x40 map)."""
    if spec is None:
        raise InputError("no map given (use --map or the 'map' config key)")
    if spec.startswith("builtin:"):
        try:
            return gridworld.bundled_map(spec.split(":", 1)[1])
        except FileNotFoundError as exc:
            raise InputError(f"no bundled map {spec!r}") from exc
    if spec.startswith("landmark:"):
        return gridworld.generate_landmark_map(seed=int(spec.split(":", 1)[1]))
    return gridworld.load_map(spec)


def _settings(args):
    raw = load_config(args.config) if args.config else {}
    for key in KNOWN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    return settings_from_mapping(raw)


def _world(settings):
    grid = _load_grid(settings.get("map"))
    return World(grid, settings["noise"], settings.get("sensor_accuracy", 0.95),
                 settings.get("discount", 0.95))


def _cache_dir(settings):
    return settings.get("cache_dir") or "qvtree-cache"


def load_cached(model, solver, cache_dir):
    """Bounds and MDP policy from the cache; raises on a miss or stale file."""
    paths = cache_paths(cache_dir, cache_key(model, solver))
    key = cache_key(model, solver)
    fib = read_alpha_set(paths["fib"], key)
    lower = read_alpha_set(paths["pbvi"], key)
    beliefs = read_alpha_set(paths["beliefs"], key).vectors
    q = read_alpha_set(paths["mdp"], key)
    policy = np.argmax(q.vectors, axis=0)
    return OfflineBounds(fib, lower, beliefs), policy


def solve_and_cache(model, solver, cache_dir):
    """Run every offline solver and write the four cache files.

    Returns ``(bounds, policy, converged)``.
    """
    fib = solve_fib(model, solver)
    beliefs = build_belief_set(model, solver)
    lower = solve_pbvi(model, beliefs, solver)
    _, policy, _, mdp = solve_mdp(model, solver)
    key = cache_key(model, solver)
    paths = cache_paths(cache_dir, key)
    os.makedirs(cache_dir, exist_ok=True)
    write_alpha_set(paths["fib"], fib.alphas, key)
    write_alpha_set(paths["pbvi"], lower, key)
    write_alpha_set(paths["beliefs"], AlphaSet(beliefs, np.full(len(beliefs), -1)), key)
    write_alpha_set(paths["mdp"], mdp.alphas, key)
    print(f"FIB sweeps: {fib.iterations} (change {fib.residual:.3g}, converged={fib.converged})")
    print(f"belief points: {len(beliefs)}, PBVI sweeps: {solver.pbvi_iterations}")
    print(f"MDP sweeps: {mdp.iterations} (change {mdp.residual:.3g}, converged={mdp.converged})")
    return OfflineBounds(fib.alphas, lower, beliefs, fib), policy, fib.converged and mdp.converged


def obtain_offline(model, solver, cache_dir, no_solve=False):
    try:
        bounds, policy = load_cached(model, solver, cache_dir)
        print(f"cache hit in {cache_dir}")
        return bounds, policy, True
    except (OSError, CacheMismatch) as exc:
        if no_solve:
            raise MissingPrerequisite(f"no usable cache in {cache_dir}: {exc}") from exc
    return solve_and_cache(model, solver, cache_dir)


def _print_gap(model, bounds):
    b0 = model.initial_belief
    up = alpha_value(b0, bounds.upper)[0]
    lo = alpha_value(b0, bounds.lower)[0]
    print(f"V_FIB(b0) = {up:.6f}  V_PBVI(b0) = {lo:.6f}  gap = {up - lo:.6f}")


def cmd_solve(args):
    settings = _settings(args)
    world = _world(settings)
    bounds, _, converged = obtain_offline(world.model, settings["solver"], _cache_dir(settings))
    _print_gap(world.model, bounds)
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def _simulate(args, planners=None):
    settings = _settings(args)
    world = _world(settings)
    planners = planners or settings["planners"]
    bounds = policy = None
    converged = True
    if QVTS in planners or MDP in planners:
        bounds, policy, converged = obtain_offline(world.model, settings["solver"], _cache_dir(settings),
                                                   no_solve=args.no_solve)
    config = BatchConfig(
        grid=world.grid, planners=tuple(planners), episodes=settings.get("episodes", 60),
        seed_base=settings.get("seed_base", 0), noise=settings["noise"],
        sensor_accuracy=world.sensor_accuracy, discount=world.discount, qvts=settings["qvts"],
        solver=settings["solver"], limits=settings["limits"],
        output_dir=settings.get("output_dir") or "qvtree-out", workers=settings.get("workers", 1),
        astar_cache_path=settings.get("astar_cache_path", False),
    )
    summaries, _ = run_batch(config, bounds, policy)
    print(format_table(summaries))
    print(f"outputs written to {config.output_dir}")
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_simulate(args):
    return _simulate(args)


def cmd_compare(args):
    return _simulate(args, PLANNERS)


def _parse_steps(text, last):
    if text in (None, "", "all"):
        return list(range(last + 1))
    steps = []
    for part in text.split(","):
        k = int(part)
        if not 0 <= k <= last:
            raise InputError(f"step {k} outside 0..{last}")
        steps.append(k)
    return steps


def cmd_render(args):
    settings = _settings(args)
    world = _world(settings)
    try:
        records = read_episode_csv(args.episode)
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"malformed episode CSV {args.episode}: {exc}") from exc
    n = world.grid.num_cells
    if any(not 0 <= r.state < n or not 0 <= r.action < gridworld.NUM_ACTIONS
           or not 0 <= r.observation < gridworld.NUM_OBSERVATIONS for r in records):
        raise InputError(f"episode CSV {args.episode} does not match the map")
    spec = render.RenderSpec(args.cell_size, not args.no_occupancy, not args.no_belief,
                             not args.no_path, not args.no_markers, args.format)
    beliefs = replay_beliefs(world.model, records)
    path = [records[0].state] + [r.next_state for r in records] if records else []
    start = path[0] if path else None
    out = settings.get("output_dir") or "qvtree-render"
    os.makedirs(out, exist_ok=True)
    written = []
    if not args.composite_only:
        for k in _parse_steps(args.steps, len(records)):
            name = os.path.join(out, f"step_{k:04d}.{spec.fmt}")
            render.save_image(name, world.grid, beliefs[k], path[: k + 1], start, spec)
            written.append(name)
    name = os.path.join(out, f"path.{spec.fmt}")
    render.save_image(name, world.grid, beliefs[-1], path, start, spec)
    written.append(name)
    print(f"wrote {len(written)} image(s) to {out}")
    return EXIT_OK


def cmd_map(args):
    grid = gridworld.generate_landmark_map(args.width, args.height, args.seed, args.blocks)
    text = gridworld.format_map(grid)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _add_config_flags(p):
    p.add_argument("--config", help="key = value configuration file")
    for key in sorted(KNOWN_KEYS):
        p.add_argument("--" + key.replace("_", "-"), dest=key, metavar="V", help=argparse.SUPPRESS)
    p.add_argument("--no-solve", action="store_true", help="fail instead of solving when the cache is missing")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qvtree",
        description="Anytime POMDP planning on grid maps. Every config key is also a flag "
                    "(e.g. --episodes 60, --time-budget-ms 500); flags override the config file.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, doc in (
        ("solve", cmd_solve, "compute and cache the offline bounds"),
        ("simulate", cmd_simulate, "run seeded episodes for the configured planners"),
        ("compare", cmd_compare, "simulate A*, MDP and QVTS with a joint summary"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_config_flags(p)
        p.set_defaults(func=func)
    p = sub.add_parser("render", help="draw beliefs and the path of a logged episode")
    _add_config_flags(p)
    p.add_argument("--episode", required=True, help="episode CSV written by simulate")
    p.add_argument("--steps", help="comma-separated steps, or 'all' (default)")
    p.add_argument("--composite-only", action="store_true")
    p.add_argument("--format", choices=("ppm", "svg"), default="ppm")
    p.add_argument("--cell-size", type=int, default=12)
    for layer in ("occupancy", "belief", "path", "markers"):
        p.add_argument(f"--no-{layer}", action="store_true")
    p.set_defaults(func=cmd_render)
    p = sub.add_parser("map", help="write a generated landmark map")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=100)
    p.add_argument("--height", type=int, default=40)
    p.add_argument("--blocks", type=int, default=18)
    p.add_argument("--output")
    p.set_defaults(func=cmd_map)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MissingPrerequisite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (InputError, ConfigError, ModelError, gridworld.MapError, gridworld.InvalidNoise,
            ArithmeticError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
