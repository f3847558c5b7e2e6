"""Known-state planners driven by the mode of the belief."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .gridworld import NUM_ACTIONS, STAY, action_offset, offset_action

ASTAR = "astar"
MDP = "mdp"


class Unreachable(RuntimeError):
    pass


def belief_mode(b):
    """Most likely state; ``np.argmax`` already prefers the lowest index on ties."""
    return int(np.argmax(b))


def octile_distance(grid, a, b, straight=1.0, diagonal=1.0):
    """Octile distance between two cells.

    With unit diagonal cost this reduces to the Chebyshev distance, which is
    the exact cost in an obstacle-free 8-connected grid.
    """
    ar, ac = grid.rc(a)
    br, bc = grid.rc(b)
    dr, dc = abs(ar - br), abs(ac - bc)
    return straight * (dr + dc) + (diagonal - 2 * straight) * min(dr, dc)


def _neighbors(grid, cell):
    r, c = grid.rc(cell)
    for a in range(NUM_ACTIONS):
        if a == STAY:
            continue
        dr, dc = action_offset(a)
        if not grid.occupied(r + dr, c + dc):
            yield grid.index(r + dr, c + dc)


def astar_path(grid, start, goal=None):
    """Shortest 8-connected path with unit step cost, as a list of cells."""
    goal = grid.goal if goal is None else goal
    if grid.cells[start]:
        raise Unreachable(f"start cell {start} is occupied")
    g = {start: 0}
    parent = {start: None}
    counter = 0
    frontier = [(octile_distance(grid, start, goal), 0, counter, start)]
    closed = set()
    while frontier:
        _, cost, _, cell = heapq.heappop(frontier)
        if cell in closed:
            continue
        if cell == goal:
            path = [cell]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        closed.add(cell)
        for nxt in _neighbors(grid, cell):
            new_cost = cost + 1
            if new_cost < g.get(nxt, np.inf):
                g[nxt] = new_cost
                parent[nxt] = cell
                counter += 1
                heapq.heappush(frontier, (new_cost + octile_distance(grid, nxt, goal), new_cost, counter, nxt))
    raise Unreachable(f"no path from cell {start} to the goal")


def step_action(grid, frm, to):
    fr, fc = grid.rc(frm)
    tr, tc = grid.rc(to)
    return offset_action(tr - fr, tc - fc)


def astar_plan(grid, start):
    """First action along the A* path from ``start``; stay when already at the goal."""
    path = astar_path(grid, start)
    if len(path) == 1:
        return STAY
    return step_action(grid, path[0], path[1])


def mdp_act(policy, b):
    return int(policy[belief_mode(b)])


@dataclass
class BaselinePlanner:
    """A* or MDP policy evaluated at the belief mode.

    ``cache_path`` keeps following the last A* path while the mode moves along
    it, instead of replanning every step.
    """

    kind: str
    grid: object
    policy: np.ndarray | None = None
    cache_path: bool = False

    def __post_init__(self):
        if self.kind not in (ASTAR, MDP):
            raise ValueError(f"unknown baseline {self.kind!r}")
        if self.kind == MDP and (self.policy is None or len(self.policy) != self.grid.num_cells):
            raise ValueError("MDP baseline needs a policy over every state")
        self._path = None

    @property
    def name(self):
        return self.kind

    def reset(self, belief):
        self._path = None

    def act(self, belief):
        if self.kind == MDP:
            return mdp_act(self.policy, belief)
        mode = belief_mode(belief)
        if self.cache_path and self._path and mode in self._path:
            i = self._path.index(mode)
            self._path = self._path[i:]
        else:
            self._path = astar_path(self.grid, mode)
        if len(self._path) == 1:
            return STAY
        return step_action(self.grid, self._path[0], self._path[1])

    def observe(self, action, observation, belief):
        pass
