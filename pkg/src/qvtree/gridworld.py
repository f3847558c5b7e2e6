"""Occupancy-grid navigation model.

Nine actions index the 3x3 stencil around the robot in row-major order, so
action ``a`` moves by ``(a // 3 - 1, a % 3 - 1)`` in (row, col) and action 4
stays put. Four sensors read the occupancy of the up/left/right/down
neighbours (actions 1, 3, 5, 7); observation bit ``i`` holds sensor ``i`` in
that order. Cells outside the map count as occupied for motion, sensing and
reward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PomdpModel

STAY = 4
NUM_ACTIONS = 9
SENSOR_ACTIONS = (1, 3, 5, 7)
NUM_OBSERVATIONS = 1 << len(SENSOR_ACTIONS)
ACTION_NAMES = ("up-left", "up", "up-right", "left", "stay", "right", "down-left", "down", "down-right")
# stencil cells in clockwise order; lateral slip goes to the ring neighbours
_RING = (1, 2, 5, 8, 7, 6, 3, 0)


def action_offset(a):
    return a // 3 - 1, a % 3 - 1


def offset_action(dr, dc):
    return (dr + 1) * 3 + (dc + 1)


def lateral_actions(a):
    i = _RING.index(a)
    return _RING[i - 1], _RING[(i + 1) % len(_RING)]


class MapError(ValueError):
    pass


class NonRectangular(MapError):
    pass


class MissingGoal(MapError):
    pass


class MultipleGoals(MapError):
    pass


class GoalOccupied(MapError):
    pass


class InvalidNoise(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridMap:
    """Row-major occupancy grid with a goal cell and optional start region."""

    width: int
    height: int
    cells: np.ndarray
    goal: int
    start_region: tuple = ()

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.uint8).reshape(-1)
        if self.width < 1 or self.height < 1 or cells.size != self.width * self.height:
            raise NonRectangular("cell count does not match width*height")
        if not 0 <= self.goal < cells.size:
            raise MissingGoal("goal index outside the map")
        if cells[self.goal]:
            raise GoalOccupied("goal cell is occupied")
        cells = cells.copy()
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "start_region", tuple(int(c) for c in self.start_region))

    @property
    def num_cells(self):
        return self.width * self.height

    def rc(self, cell):
        return divmod(int(cell), self.width)

    def index(self, row, col):
        return row * self.width + col

    def inside(self, row, col):
        return 0 <= row < self.height and 0 <= col < self.width

    def occupied(self, row, col):
        """Occupancy with off-map cells reading as occupied."""
        return not self.inside(row, col) or bool(self.cells[row * self.width + col])

    def free_cells(self):
        return np.flatnonzero(self.cells == 0)

    def neighbor(self, cell, a):
        """Stencil neighbour ``N_a(cell)`` or ``None`` when it falls off the map."""
        r, c = self.rc(cell)
        dr, dc = action_offset(a)
        if not self.inside(r + dr, c + dc):
            return None
        return self.index(r + dr, c + dc)

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return (self.width, self.height, self.goal, self.start_region) == (
            other.width, other.height, other.goal, other.start_region
        ) and np.array_equal(self.cells, other.cells)

    __hash__ = None


@dataclass(frozen=True)
class MotionNoise:
    p_intended: float = 0.8
    p_stay: float = 0.1
    p_lateral: float = 0.05

    def validate(self):
        parts = (self.p_intended, self.p_stay, self.p_lateral)
        if min(parts) < 0 or abs(self.p_intended + self.p_stay + 2 * self.p_lateral - 1) > 1e-9:
            raise InvalidNoise(f"motion noise {parts} does not form a distribution")


def parse_map(text):
    """Parse the ASCII map format: ``#`` wall, ``.`` free, ``G`` goal, ``S`` start."""
    lines = [ln.rstrip("\r") for ln in text.strip("\n").split("\n")]
    lines = [ln.strip() for ln in lines if ln.strip()]
    if not lines:
        raise NonRectangular("empty map")
    width = len(lines[0])
    if any(len(ln) != width for ln in lines):
        raise NonRectangular("map rows have different lengths")
    cells, goals, starts = [], [], []
    for r, ln in enumerate(lines):
        for c, ch in enumerate(ln):
            i = r * width + c
            if ch == "#":
                cells.append(1)
            elif ch in ".GS":
                cells.append(0)
                if ch == "G":
                    goals.append(i)
                elif ch == "S":
                    starts.append(i)
            else:
                raise MapError(f"unknown map character {ch!r} at row {r}, column {c}")
    if not goals:
        raise MissingGoal("map has no goal cell 'G'")
    if len(goals) > 1:
        raise MultipleGoals(f"map has {len(goals)} goal cells")
    return GridMap(width, len(lines), np.array(cells), goals[0], tuple(starts))


def format_map(grid):
    starts = set(grid.start_region)
    rows = []
    for r in range(grid.height):
        row = []
        for c in range(grid.width):
            i = grid.index(r, c)
            if i == grid.goal:
                row.append("G")
            elif grid.cells[i]:
                row.append("#")
            elif i in starts:
                row.append("S")
            else:
                row.append(".")
        rows.append("".join(row))
    return "\n".join(rows) + "\n"


def load_map(path):
    with open(path) as fh:
        return parse_map(fh.read())


def raw_kernel(a, noise):
    """Pre-clamp stencil distribution ``T'`` as ``{action_cell: prob}``."""
    if a == STAY:
        return {STAY: 1.0}
    left, right = lateral_actions(a)
    out = {}
    for cell, p in ((a, noise.p_intended), (STAY, noise.p_stay), (left, noise.p_lateral), (right, noise.p_lateral)):
        if p > 0:
            out[cell] = out.get(cell, 0.0) + p
    return out


def build_transition(grid, noise=MotionNoise()):
    """Clamped transition tables ``(t_idx, t_prob)`` with four slots per pair.

    Mass aimed at an occupied or off-map cell stays on the current cell.
    Occupied cells are absorbing.
    """
    noise.validate()
    n = grid.num_cells
    slots = 4
    t_idx = np.repeat(np.arange(n, dtype=np.int64)[:, None, None], NUM_ACTIONS, axis=1)
    t_idx = np.repeat(t_idx, slots, axis=2)
    t_prob = np.zeros((n, NUM_ACTIONS, slots))
    t_prob[:, :, 0] = 1.0
    kernels = [raw_kernel(a, noise) for a in range(NUM_ACTIONS)]
    for x in grid.free_cells():
        r, c = grid.rc(x)
        for a in range(NUM_ACTIONS):
            dest = {}
            for cell, p in kernels[a].items():
                dr, dc = action_offset(cell)
                y = x if grid.occupied(r + dr, c + dc) else grid.index(r + dr, c + dc)
                dest[y] = dest.get(y, 0.0) + p
            t_prob[x, a, 0] = 0.0
            for k, (y, p) in enumerate(sorted(dest.items())):
                t_idx[x, a, k] = y
                t_prob[x, a, k] = p
    return t_idx, t_prob


def observation_word(grid, cell):
    """Noise-free sensor reading of ``cell`` as a 4-bit integer."""
    r, c = grid.rc(cell)
    word = 0
    for bit, s in enumerate(SENSOR_ACTIONS):
        dr, dc = action_offset(s)
        if grid.occupied(r + dr, c + dc):
            word |= 1 << bit
    return word


def build_observation(grid, sensor_accuracy=0.95):
    """Independent-sensor likelihood table ``O[x, z]``; occupied rows are uniform."""
    if not 0.5 < sensor_accuracy <= 1.0:
        raise ValueError("sensor accuracy must lie in (0.5, 1]")
    n = grid.num_cells
    zs = np.arange(NUM_OBSERVATIONS)
    obs = np.full((n, NUM_OBSERVATIONS), 1.0 / NUM_OBSERVATIONS)
    for x in grid.free_cells():
        truth = observation_word(grid, x)
        row = np.ones(NUM_OBSERVATIONS)
        for bit in range(len(SENSOR_ACTIONS)):
            agree = ((zs >> bit) & 1) == ((truth >> bit) & 1)
            row *= np.where(agree, sensor_accuracy, 1.0 - sensor_accuracy)
        obs[x] = row
    return obs


def cell_reward(grid, row, col):
    """Per-cell reward ``r``: -2 occupied or off-map, 0 at the goal, else -1."""
    if grid.occupied(row, col):
        return -2.0
    return 0.0 if grid.index(row, col) == grid.goal else -1.0


def build_reward(grid, noise=MotionNoise()):
    """Stage reward ``R[x, a]`` from the pre-clamp kernel; idling off-goal costs -2."""
    noise.validate()
    n = grid.num_cells
    reward = np.zeros((n, NUM_ACTIONS))
    kernels = [raw_kernel(a, noise) for a in range(NUM_ACTIONS)]
    for x in range(n):
        r, c = grid.rc(x)
        for a in range(NUM_ACTIONS):
            if a == STAY and x != grid.goal:
                reward[x, a] = -2.0
                continue
            total = 0.0
            for cell, p in kernels[a].items():
                dr, dc = action_offset(cell)
                total += p * cell_reward(grid, r + dr, c + dc)
            reward[x, a] = total
    return reward


def build_model(grid, noise=MotionNoise(), sensor_accuracy=0.95, discount=0.95):
    """Compile the grid into a :class:`PomdpModel` with a uniform prior on free cells."""
    t_idx, t_prob = build_transition(grid, noise)
    obs = build_observation(grid, sensor_accuracy)
    reward = build_reward(grid, noise)
    free = grid.free_cells()
    b0 = np.zeros(grid.num_cells)
    b0[free] = 1.0 / len(free)
    return PomdpModel.from_sparse(t_idx, t_prob, obs, reward, discount, b0)


def generate_landmark_map(width=100, height=40, seed=0, num_blocks=18, goal=None):
    """Open floor with a few rectangular obstacles acting as sparse landmarks.

    Obstacles are kept away from the outer wall and from each other so the map
    stays connected; most free cells read the all-clear observation. The goal
    defaults to the top-right corner, whose north-east reading no other free
    cell can produce.
    """
    rng = np.random.default_rng(seed)
    cells = np.zeros((height, width), dtype=np.uint8)
    placed = 0
    attempts = 0
    while placed < num_blocks and attempts < 5000:
        attempts += 1
        h = int(rng.integers(1, 4))
        w = int(rng.integers(1, 6))
        r = int(rng.integers(3, height - 3 - h))
        c = int(rng.integers(3, width - 3 - w))
        # two-cell clearance around each block
        if cells[max(r - 2, 0): r + h + 2, max(c - 2, 0): c + w + 2].any():
            continue
        cells[r: r + h, c: c + w] = 1
        placed += 1
    if goal is None:
        goal = (0, width - 1)
    gr, gc = goal
    cells[gr, gc] = 0
    return GridMap(width, height, cells.reshape(-1), gr * width + gc)


def bundled_map(name="five_by_five"):
    """Load one of the maps shipped in ``qvtree/data``."""
    from importlib import resources

    return parse_map(resources.files("qvtree").joinpath("data", f"{name}.txt").read_text())
