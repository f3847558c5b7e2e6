"""Closed-loop episodes and batch statistics for the grid navigation task.

All planners share the same environment and Bayes filter; baselines only read
the belief mode. Deterministic outputs (episode and summary CSVs) never
include wall-clock timings, which go to a separate ``timing.csv``.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import gridworld
from .baselines import ASTAR, MDP, BaselinePlanner, Unreachable, belief_mode
from .gridworld import STAY, MotionNoise, action_offset
from .model import ZeroLikelihoodObservation, belief_update
from .search import QvtsConfig, QVTree
from .solvers import SolverConfig, solve_bounds, solve_mdp

log = logging.getLogger(__name__)

QVTS = "qvts"
PLANNERS = (ASTAR, MDP, QVTS)

SUCCESS = "success"
WRONG_STOP = "failure-wrong-stop"
STEP_CAP = "failure-step-cap"
MODEL_FAILURE = "failure-model"
PLANNER_FAILURE = "failure-planner"

OFF_MAP = -1


@dataclass(frozen=True)
class Limits:
    max_steps: int = 500
    stop_patience: int = 3

    def __post_init__(self):
        if self.max_steps < 1 or self.stop_patience < 1:
            raise ValueError("max_steps and stop_patience must be >= 1")


@dataclass
class World:
    """Grid, noise parameters and the compiled model."""

    grid: gridworld.GridMap
    noise: MotionNoise = MotionNoise()
    sensor_accuracy: float = 0.95
    discount: float = 0.95
    model: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.model is None:
            self.model = gridworld.build_model(self.grid, self.noise, self.sensor_accuracy, self.discount)
        self._kernels = [sorted(gridworld.raw_kernel(a, self.noise).items())
                         for a in range(gridworld.NUM_ACTIONS)]

    def sample_raw_successor(self, x, a, u):
        """Sample ``y ~ T'(x, a, .)``; returns the cell or ``OFF_MAP``."""
        acc = 0.0
        kernel = self._kernels[a]
        cell = kernel[-1][0]
        for c, p in kernel:
            acc += p
            if u < acc:
                cell = c
                break
        r, col = self.grid.rc(x)
        dr, dc = action_offset(cell)
        if not self.grid.inside(r + dr, col + dc):
            return OFF_MAP
        return self.grid.index(r + dr, col + dc)


@dataclass
class StepRecord:
    step: int
    state: int
    action: int
    raw_successor: int
    next_state: int
    observation: int
    reward: float
    collision: bool
    belief_mode: int


@dataclass
class EpisodeLog:
    planner: str
    seed: int
    records: list = field(default_factory=list)
    outcome: str = STEP_CAP
    discounted_return: float = 0.0
    planning_ms: list = field(default_factory=list)
    initial_state: int = -1

    @property
    def steps(self):
        return len(self.records)

    @property
    def collisions(self):
        return sum(r.collision for r in self.records)

    @property
    def success(self):
        return self.outcome == SUCCESS


def discounted_return(records, discount):
    total = 0.0
    for r in records:
        total += discount ** r.step * r.reward
    return total


class QvtsPlanner:
    """Adapter running one search tree per episode."""

    name = QVTS

    def __init__(self, model, bounds, config=QvtsConfig()):
        self.model = model
        self.bounds = bounds
        self.config = config
        self.tree = None

    def reset(self, belief, seed=0):
        seq = np.random.SeedSequence([self.config.seed, seed])
        cfg = replace(self.config, seed=int(seq.generate_state(1)[0]))
        self.tree = QVTree(self.model, self.bounds, belief, cfg)

    def act(self, belief):
        return self.tree.plan()

    def observe(self, action, observation, belief):
        self.tree.advance_root(action, observation)


def _initial_state(world, rng):
    grid = world.grid
    if grid.start_region:
        return int(grid.start_region[rng.integers(len(grid.start_region))])
    cdf = np.cumsum(world.model.initial_belief)
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))


def run_episode(world, planner, seed, limits=Limits()):
    """Simulate one episode; never raises for planner or model trouble."""
    model = world.model
    grid = world.grid
    rng = np.random.default_rng(seed)
    x = _initial_state(world, rng)
    belief = model.initial_belief.copy()
    name = getattr(planner, "name", type(planner).__name__)
    episode = EpisodeLog(planner=name, seed=seed, initial_state=x)
    if isinstance(planner, QvtsPlanner):
        planner.reset(belief, seed)
    else:
        planner.reset(belief)
    streak = 0
    for k in range(limits.max_steps):
        started = time.perf_counter()
        try:
            a = int(planner.act(belief))
        except Unreachable:
            episode.outcome = PLANNER_FAILURE
            break
        episode.planning_ms.append((time.perf_counter() - started) * 1000.0)
        reward = float(model.reward[x, a])
        y = world.sample_raw_successor(x, a, rng.random())
        collision = y == OFF_MAP or bool(grid.cells[y])
        nxt = x if collision else y
        orow = model.obs_cdf[nxt]
        z = int(np.searchsorted(orow, rng.random() * orow[-1], side="right"))
        episode.records.append(StepRecord(k, x, a, y, nxt, z, reward, collision, -1))
        try:
            belief = belief_update(model, belief, a, z)
            planner.observe(a, z, belief)
        except ZeroLikelihoodObservation:
            episode.outcome = MODEL_FAILURE
            break
        episode.records[-1].belief_mode = belief_mode(belief)
        x = nxt
        streak = streak + 1 if a == STAY else 0
        if streak >= limits.stop_patience:
            episode.outcome = SUCCESS if x == grid.goal else WRONG_STOP
            break
    else:
        episode.outcome = STEP_CAP
    episode.discounted_return = discounted_return(episode.records, model.discount)
    return episode


def replay_beliefs(model, records, b0=None):
    """Beliefs after each logged step, recomputed from the (action, observation) pairs."""
    b = model.initial_belief.copy() if b0 is None else np.asarray(b0, dtype=np.float64)
    out = [b]
    for r in records:
        b = belief_update(model, b, r.action, r.observation)
        out.append(b)
    return out


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

@dataclass
class BatchConfig:
    grid: gridworld.GridMap
    planners: tuple = PLANNERS
    episodes: int = 60
    seed_base: int = 0
    noise: MotionNoise = MotionNoise()
    sensor_accuracy: float = 0.95
    discount: float = 0.95
    qvts: QvtsConfig = QvtsConfig()
    solver: SolverConfig = SolverConfig()
    limits: Limits = Limits()
    output_dir: str | None = None
    workers: int = 1
    astar_cache_path: bool = False


@dataclass
class BatchSummary:
    planner: str
    episodes: int
    successes: int
    failure_rate: float
    reward_mean: float
    reward_std: float
    collisions_mean: float
    collisions_std: float
    steps_mean: float
    steps_std: float
    steps_all_mean: float
    steps_all_std: float
    reward_success_mean: float
    reward_success_std: float
    collisions_success_mean: float
    collisions_success_std: float
    planning_ms_mean: float = float("nan")
    planning_ms_std: float = float("nan")

    CSV_FIELDS = (
        "planner", "episodes", "successes", "failure_rate",
        "reward_mean", "reward_std", "collisions_mean", "collisions_std",
        "steps_mean", "steps_std", "steps_all_mean", "steps_all_std",
        "reward_success_mean", "reward_success_std",
        "collisions_success_mean", "collisions_success_std",
    )

    def row(self):
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


def _mean_std(values):
    """Mean and sample standard deviation; std is 0 for fewer than two values."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return float("nan"), float("nan")
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return float(values.mean()), std


def summarize(planner, logs):
    ok = [e for e in logs if e.success]
    reward = _mean_std([e.discounted_return for e in logs])
    coll = _mean_std([e.collisions for e in logs])
    steps = _mean_std([e.steps for e in ok])
    steps_all = _mean_std([e.steps for e in logs])
    reward_ok = _mean_std([e.discounted_return for e in ok])
    coll_ok = _mean_std([e.collisions for e in ok])
    times = [t for e in logs for t in e.planning_ms]
    plan = _mean_std(times) if times else (float("nan"), float("nan"))
    n = len(logs)
    return BatchSummary(
        planner, n, len(ok), (n - len(ok)) / n if n else float("nan"),
        *reward, *coll, *steps, *steps_all, *reward_ok, *coll_ok, *plan,
    )


def make_planner(kind, world, bounds=None, policy=None, qvts=QvtsConfig(), astar_cache_path=False):
    if kind == QVTS:
        return QvtsPlanner(world.model, bounds, qvts)
    if kind == MDP:
        return BaselinePlanner(MDP, world.grid, policy=policy)
    if kind == ASTAR:
        return BaselinePlanner(ASTAR, world.grid, cache_path=astar_cache_path)
    raise ValueError(f"unknown planner {kind!r}")


_WORKER = {}


def _worker_init(world, planners):
    _WORKER["world"] = world
    _WORKER["planners"] = planners


def _worker_run(args):
    kind, seed, limits = args
    return run_episode(_WORKER["world"], _WORKER["planners"][kind], seed, limits)


def run_batch(config, bounds=None, policy=None):
    """Run ``episodes`` seeded episodes per planner; returns ``(summaries, logs)``.

    ``bounds``/``policy`` may be passed in (e.g. from a cache); otherwise they
    are solved here when a planner needs them.
    """
    world = World(config.grid, config.noise, config.sensor_accuracy, config.discount)
    if QVTS in config.planners and bounds is None:
        bounds = solve_bounds(world.model, config.solver)
    if MDP in config.planners and policy is None:
        policy = solve_mdp(world.model, config.solver)[1]
    planners = {
        kind: make_planner(kind, world, bounds, policy, config.qvts, config.astar_cache_path)
        for kind in config.planners
    }
    jobs = [(kind, config.seed_base + i, config.limits)
            for kind in config.planners for i in range(config.episodes)]
    if config.workers > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(config.workers, _worker_init, (world, planners)) as pool:
            results = pool.map(_worker_run, jobs, chunksize=1)
    else:
        results = [run_episode(world, planners[kind], seed, limits) for kind, seed, limits in jobs]
    logs = {kind: [] for kind in config.planners}
    for (kind, _, _), episode in zip(jobs, results):
        logs[kind].append(episode)
    summaries = {kind: summarize(kind, logs[kind]) for kind in config.planners}
    if config.output_dir:
        write_outputs(config.output_dir, summaries, logs)
    return summaries, logs


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

EPISODE_FIELDS = ("step", "state", "action", "raw_successor", "next_state",
                  "observation", "reward", "collision", "belief_mode")


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def write_episode_csv(episode, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPISODE_FIELDS)
        for r in episode.records:
            w.writerow([_fmt(getattr(r, f)) for f in EPISODE_FIELDS])


def read_episode_csv(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(EPISODE_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"episode CSV lacks columns {sorted(missing)}")
        for row in reader:
            records.append(StepRecord(
                int(row["step"]), int(row["state"]), int(row["action"]), int(row["raw_successor"]),
                int(row["next_state"]), int(row["observation"]), float(row["reward"]),
                bool(int(row["collision"])), int(row["belief_mode"]),
            ))
    return records


def write_outputs(out_dir, summaries, logs):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "episodes.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["planner", "seed", "initial_state", "outcome", "steps", "collisions", "discounted_return"])
        for kind, eps in logs.items():
            for e in eps:
                w.writerow([kind, e.seed, e.initial_state, e.outcome, e.steps, e.collisions,
                            repr(e.discounted_return)])
                write_episode_csv(e, os.path.join(out_dir, f"episode_{kind}_{e.seed}.csv"))
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, BatchSummary.CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for s in summaries.values():
            w.writerow({k: _fmt(v) for k, v in s.row().items()})
    with open(os.path.join(out_dir, "timing.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["planner", "planning_ms_mean", "planning_ms_std"])
        for s in summaries.values():
            w.writerow([s.planner, f"{s.planning_ms_mean:.3f}", f"{s.planning_ms_std:.3f}"])


def format_table(summaries):
    """Human-readable summary table, one row per planner."""
    lines = [f"{'planner':8s} {'reward':>16s} {'collisions':>14s} {'steps':>16s} {'fail':>6s} {'plan ms':>18s}"]
    for s in summaries.values():
        plan = "-" if math.isnan(s.planning_ms_mean) else f"{s.planning_ms_mean:.2f}+-{s.planning_ms_std:.2f}"
        lines.append(
            f"{s.planner:8s} {s.reward_mean:8.2f}+-{s.reward_std:<6.2f} "
            f"{s.collisions_mean:6.2f}+-{s.collisions_std:<5.2f} "
            f"{s.steps_mean:8.2f}+-{s.steps_std:<6.2f} {s.failure_rate:6.2f} {plan:>18s}"
        )
    return "\n".join(lines)
