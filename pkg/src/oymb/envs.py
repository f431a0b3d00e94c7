"""Sparse-reward environments: the Robo maze with noisy LIDAR and discrete MountainCar.

Both environments return reward 1 only on the step that reaches the goal, and
expose the achieved/desired goal hooks hindsight relabeling needs.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

GRID = 10
DIFFICULTIES = ("easy", "medium", "hard")
_GOAL_CHARS = {"E": "easy", "M": "medium", "H": "hard"}

# (min squares away, inclusive reading range); last row covers >= 4
LIDAR_TABLE = ((1, (10, 30)), (2, (31, 80)), (3, (81, 150)), (4, (151, 300)))

# headings clockwise from north; (drow, dcol)
HEADINGS = ("N", "E", "S", "W")
_MOVES = {"N": (-1, 0), "E": (0, 1), "S": (1, 0), "W": (0, -1)}

FORWARD, TURN_LEFT, TURN_RIGHT = 0, 1, 2
ROBO_ACTIONS = ("forward", "turn_left", "turn_right")
ROBO_HORIZON = {"easy": 150, "medium": 150, "hard": 300}

# feature scales keep the network inputs O(1)
DIST_SCALE = 14.0
LIDAR_SCALE = 300.0
CELL_SCALE = 10.0


class MapError(ValueError):
    pass


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    goal_dim: int
    n_actions: int
    horizon: int

    def __post_init__(self):
        if self.horizon <= 0 or self.n_actions < 2:
            raise ValueError("invalid environment spec")


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    achieved_goal: np.ndarray
    reward: float
    terminal: bool


# ---------------------------------------------------------------------------
# Maze maps


@dataclass(frozen=True)
class MazeMap:
    walls: np.ndarray  # (10, 10) bool
    start: tuple[int, int]
    goals: dict  # difficulty -> (row, col)

    def is_free(self, row: int, col: int) -> bool:
        return 0 <= row < GRID and 0 <= col < GRID and not self.walls[row, col]


def bfs_distances(walls: np.ndarray, start: tuple[int, int]) -> dict[tuple[int, int], int]:
    """Shortest move counts (ignoring turns) from ``start`` to every reachable free cell."""
    dist = {start: 0}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for dr, dc in _MOVES.values():
            nr, nc = r + dr, c + dc
            if 0 <= nr < GRID and 0 <= nc < GRID and not walls[nr, nc] and (nr, nc) not in dist:
                dist[(nr, nc)] = dist[(r, c)] + 1
                queue.append((nr, nc))
    return dist


def parse_map(text: str) -> MazeMap:
    """Parse a 10x10 map over ``#.SEMH``; every goal must be reachable from S."""
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) != GRID:
        raise MapError(f"map must have {GRID} rows, got {len(lines)}")
    walls = np.zeros((GRID, GRID), dtype=bool)
    marks: dict[str, list[tuple[int, int]]] = {ch: [] for ch in "SEMH"}
    for r, line in enumerate(lines):
        if len(line) != GRID:
            raise MapError(f"row {r} must have {GRID} characters, got {len(line)}")
        for c, ch in enumerate(line):
            if ch == "#":
                walls[r, c] = True
            elif ch in marks:
                marks[ch].append((r, c))
            elif ch != ".":
                raise MapError(f"unexpected character {ch!r} at cell ({r}, {c})")
    for ch, cells in marks.items():
        if not cells:
            raise MapError(f"map has no {ch!r} cell")
        if len(cells) > 1:
            raise MapError(f"map has duplicate {ch!r} cells at {cells}")
    start = marks["S"][0]
    goals = {name: marks[ch][0] for ch, name in _GOAL_CHARS.items()}
    reachable = bfs_distances(walls, start)
    for name, cell in goals.items():
        if cell not in reachable:
            raise MapError(f"{name} goal at cell {cell} is unreachable from start {start}")
    return MazeMap(walls=walls, start=start, goals=goals)


def load_map(path=None) -> MazeMap:
    """Load a map file; ``None`` loads the shipped default."""
    if path is None:
        text = resources.files("oymb").joinpath("maps/default.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_map(text)


DEFAULT_MAP_PATH = "oymb/maps/default.txt"


# ---------------------------------------------------------------------------
# Robo


@dataclass(frozen=True)
class RoboState:
    row: int
    col: int
    heading: str
    goal: tuple[int, int]
    steps: int = 0


def lidar_squares(maze: MazeMap, row: int, col: int, heading: str) -> int:
    """Cells from the agent to the first wall (or grid edge) ahead; adjacent wall is 1."""
    dr, dc = _MOVES[heading]
    n = 1
    r, c = row + dr, col + dc
    while maze.is_free(r, c):
        n += 1
        r, c = r + dr, c + dc
    return n


def lidar_range(squares: int) -> tuple[int, int]:
    for threshold, bounds in reversed(LIDAR_TABLE):
        if squares >= threshold:
            return bounds
    raise ValueError(f"squares must be >= 1, got {squares}")


def robo_observation(state: RoboState, maze: MazeMap, rng: np.random.Generator) -> np.ndarray:
    """Raw [distance to goal, noisy LIDAR reading]."""
    dist = math.hypot(state.row - state.goal[0], state.col - state.goal[1])
    lo, hi = lidar_range(lidar_squares(maze, state.row, state.col, state.heading))
    lidar = int(rng.integers(lo, hi + 1))
    return np.array([dist, float(lidar)])


def robo_reset(maze: MazeMap, difficulty: str, rng: np.random.Generator, heading: str = "E"):
    if difficulty not in DIFFICULTIES:
        raise ValueError(f"difficulty must be one of {DIFFICULTIES}")
    state = RoboState(maze.start[0], maze.start[1], heading, maze.goals[difficulty])
    return state, robo_observation(state, maze, rng)


def robo_step(state: RoboState, action: int, maze: MazeMap, rng: np.random.Generator, horizon: int | None = None):
    """Apply forward / turn_left / turn_right; blocked forward moves leave the agent in place."""
    h = HEADINGS.index(state.heading)
    row, col, heading = state.row, state.col, state.heading
    if action == FORWARD:
        dr, dc = _MOVES[heading]
        if maze.is_free(row + dr, col + dc):
            row, col = row + dr, col + dc
    elif action == TURN_LEFT:
        heading = HEADINGS[(h - 1) % 4]
    elif action == TURN_RIGHT:
        heading = HEADINGS[(h + 1) % 4]
    else:
        raise ValueError(f"invalid Robo action {action!r}")
    new = replace(state, row=row, col=col, heading=heading, steps=state.steps + 1)
    achieved = np.array([float(row), float(col)])
    reached = (row, col) == tuple(state.goal)
    terminal = reached or (horizon is not None and new.steps >= horizon)
    result = StepResult(robo_observation(new, maze, rng), achieved, 1.0 if reached else 0.0, terminal)
    return new, result


# ---------------------------------------------------------------------------
# MountainCar

MC_MIN_POS, MC_MAX_POS = -1.2, 0.6
MC_MAX_SPEED = 0.07
MC_GOAL = 0.5
MC_FORCE = 0.001
MC_GRAVITY = 0.0025
MC_HORIZON = 250
MC_ACTIONS = ("left", "none", "right")


@dataclass(frozen=True)
class MountainCarState:
    position: float
    velocity: float
    steps: int = 0


def mc_reset(rng: np.random.Generator):
    state = MountainCarState(float(rng.uniform(-0.6, -0.4)), 0.0)
    return state, np.array([state.position, state.velocity])


def mc_step(state: MountainCarState, action: int, horizon: int | None = None):
    if action not in (0, 1, 2):
        raise ValueError(f"invalid MountainCar action {action!r}")
    p, v = state.position, state.velocity
    v = v + (action - 1) * MC_FORCE + math.cos(3 * p) * (-MC_GRAVITY)
    v = min(max(v, -MC_MAX_SPEED), MC_MAX_SPEED)
    p = p + v
    p = min(max(p, MC_MIN_POS), MC_MAX_POS)
    if p == MC_MIN_POS:
        v = 0.0
    new = MountainCarState(p, v, state.steps + 1)
    reached = p >= MC_GOAL
    terminal = reached or (horizon is not None and new.steps >= horizon)
    return new, StepResult(np.array([p, v]), np.array([p]), 1.0 if reached else 0.0, terminal)


# ---------------------------------------------------------------------------
# Stateful wrappers used by the agent


class RoboEnv:
    """Robo maze task. Network input is [dist/14, lidar/300] || goal cell / 10."""

    goal_dim = 2

    def __init__(self, maze: MazeMap | None = None, difficulty: str = "easy", horizon: int | None = None):
        if difficulty not in DIFFICULTIES:
            raise ValueError(f"difficulty must be one of {DIFFICULTIES}")
        self.maze = maze if maze is not None else load_map()
        self.difficulty = difficulty
        self.spec = EnvSpec(2, 2, 3, horizon or ROBO_HORIZON[difficulty])
        self.desired_goal = np.array(self.maze.goals[difficulty], dtype=float)
        self.state: RoboState | None = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state, obs = robo_reset(self.maze, self.difficulty, rng)
        return obs

    def step(self, action: int, rng: np.random.Generator) -> StepResult:
        self.state, result = robo_step(self.state, action, self.maze, rng, self.spec.horizon)
        return result

    def achieved_goal(self) -> np.ndarray:
        return np.array([float(self.state.row), float(self.state.col)])

    @staticmethod
    def goal_reached(achieved, desired) -> bool:
        return bool(achieved[0] == desired[0] and achieved[1] == desired[1])

    @staticmethod
    def features(obs: np.ndarray) -> np.ndarray:
        return np.array([obs[0] / DIST_SCALE, obs[1] / LIDAR_SCALE])

    @staticmethod
    def goal_features(goal) -> np.ndarray:
        return np.asarray(goal, dtype=float) / CELL_SCALE


class MountainCarEnv:
    """Sparse MountainCar. Network input is [position, velocity] || 0.5."""

    goal_dim = 1

    def __init__(self, horizon: int | None = None):
        self.spec = EnvSpec(2, 1, 3, horizon or MC_HORIZON)
        self.desired_goal = np.array([MC_GOAL])
        self.state: MountainCarState | None = None

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state, obs = mc_reset(rng)
        return obs

    def step(self, action: int, rng: np.random.Generator) -> StepResult:
        self.state, result = mc_step(self.state, action, self.spec.horizon)
        return result

    def achieved_goal(self) -> np.ndarray:
        return np.array([self.state.position])

    @staticmethod
    def goal_reached(achieved, desired) -> bool:
        return bool(achieved[0] >= desired[0])

    @staticmethod
    def features(obs: np.ndarray) -> np.ndarray:
        return np.asarray(obs, dtype=float)

    @staticmethod
    def goal_features(goal) -> np.ndarray:
        return np.asarray(goal, dtype=float)


TASKS = ("mountaincar", "robo_easy", "robo_medium", "robo_hard")


def make_env(task: str, maze: MazeMap | None = None, horizon: int | None = None):
    if task == "mountaincar":
        return MountainCarEnv(horizon)
    if task.startswith("robo_") and task[5:] in DIFFICULTIES:
        return RoboEnv(maze, task[5:], horizon)
    raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
