"""Replay memory with final-state hindsight relabeling and the OYMB sampler.

The memory is append-only. Reward-1 transitions are tracked in two index
lists: ``real_indices`` (the relabel goal was the real goal) and
``her_indices`` (a virtual goal). The OYMB sampler draws a guaranteed number
of its batch from those lists, real-goal entries first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

_UNLISTED, _REAL, _HER = 0, 1, 2


@dataclass
class Transition:
    obs: np.ndarray
    goal: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    next_achieved_goal: np.ndarray
    terminal: bool

    def __post_init__(self):
        if self.reward not in (0, 1):
            raise ValueError(f"reward must be 0 or 1, got {self.reward!r}")


class _Growable:
    """Append-only numpy array with amortised doubling."""

    def __init__(self, tail_shape: tuple[int, ...], dtype, capacity: int = 1024):
        self._data = np.zeros((capacity, *tail_shape), dtype=dtype)
        self.size = 0

    def append(self, value) -> int:
        if self.size == len(self._data):
            grown = np.zeros((2 * len(self._data), *self._data.shape[1:]), dtype=self._data.dtype)
            grown[: self.size] = self._data
            self._data = grown
        self._data[self.size] = value
        self.size += 1
        return self.size - 1

    @property
    def view(self) -> np.ndarray:
        return self._data[: self.size]


class ReplayMemory:
    """Unbounded transition store plus real/HER reward-1 index lists."""

    def __init__(self, obs_dim: int, goal_dim: int, achieved_dim: int):
        self.obs_dim = obs_dim
        self.goal_dim = goal_dim
        self.achieved_dim = achieved_dim
        self._obs = _Growable((obs_dim,), float)
        self._goal = _Growable((goal_dim,), float)
        self._action = _Growable((), np.intp)
        self._reward = _Growable((), float)
        self._next_obs = _Growable((obs_dim,), float)
        self._next_achieved = _Growable((achieved_dim,), float)
        self._terminal = _Growable((), bool)
        self._listed = _Growable((), np.uint8)
        self._real = _Growable((), np.intp)
        self._her = _Growable((), np.intp)

    def __len__(self) -> int:
        return self._obs.size

    # views; valid until the next store
    @property
    def obs(self) -> np.ndarray:
        return self._obs.view

    @property
    def goal(self) -> np.ndarray:
        return self._goal.view

    @property
    def actions(self) -> np.ndarray:
        return self._action.view

    @property
    def rewards(self) -> np.ndarray:
        return self._reward.view

    @property
    def next_obs(self) -> np.ndarray:
        return self._next_obs.view

    @property
    def next_achieved_goal(self) -> np.ndarray:
        return self._next_achieved.view

    @property
    def terminals(self) -> np.ndarray:
        return self._terminal.view

    @property
    def real_indices(self) -> np.ndarray:
        return self._real.view

    @property
    def her_indices(self) -> np.ndarray:
        return self._her.view

    def store(self, t: Transition) -> int:
        obs = np.asarray(t.obs, dtype=float)
        next_obs = np.asarray(t.next_obs, dtype=float)
        if obs.shape != (self.obs_dim,) or next_obs.shape != (self.obs_dim,):
            raise ValueError("observation length does not match memory")
        if np.shape(t.goal) != (self.goal_dim,) or np.shape(t.next_achieved_goal) != (self.achieved_dim,):
            raise ValueError("goal length does not match memory")
        self._obs.append(obs)
        self._goal.append(t.goal)
        self._action.append(t.action)
        self._reward.append(t.reward)
        self._next_obs.append(next_obs)
        self._next_achieved.append(t.next_achieved_goal)
        self._terminal.append(t.terminal)
        return self._listed.append(_UNLISTED)

    def __getitem__(self, i: int) -> Transition:
        if not 0 <= i < len(self):
            raise IndexError(i)
        return Transition(
            obs=self.obs[i].copy(),
            goal=self.goal[i].copy(),
            action=int(self.actions[i]),
            reward=float(self.rewards[i]),
            next_obs=self.next_obs[i].copy(),
            next_achieved_goal=self.next_achieved_goal[i].copy(),
            terminal=bool(self.terminals[i]),
        )

    def list_of(self, i: int) -> str | None:
        """Which index list holds transition ``i``: 'real', 'her' or None."""
        return {_UNLISTED: None, _REAL: "real", _HER: "her"}[int(self._listed.view[i])]

    def dump(self, path) -> None:
        """Write one tab-separated line per transition (debugging aid)."""
        with open(path, "w") as fh:
            fh.write("obs\tgoal\taction\treward\tnext_obs\tnext_achieved\tterminal\tlist\n")
            for i in range(len(self)):
                vec = lambda a: " ".join(repr(float(x)) for x in a)  # noqa: E731
                fh.write(
                    f"{vec(self.obs[i])}\t{vec(self.goal[i])}\t{int(self.actions[i])}\t"
                    f"{int(self.rewards[i])}\t{vec(self.next_obs[i])}\t{vec(self.next_achieved_goal[i])}\t"
                    f"{int(self.terminals[i])}\t{self.list_of(i) or '-'}\n"
                )


def relabel_episode(
    memory: ReplayMemory,
    episode_indices: Sequence[int],
    real_goal,
    goal_predicate: Callable[[np.ndarray, np.ndarray], bool],
    rewrite_goal: Callable[[np.ndarray], np.ndarray] | None = None,
    mark_terminal: bool = True,
) -> int:
    """Final-state hindsight relabeling of one finished episode.

    The virtual goal is the achieved goal of the episode's last transition.
    Every transition of the episode whose next achieved goal satisfies
    ``goal_predicate(achieved, virtual_goal)`` gets reward 1 and is filed
    under ``real_indices`` when the virtual goal satisfies the real goal,
    otherwise under ``her_indices``. If ``rewrite_goal`` is given, it maps the
    virtual goal to goal-slot features which overwrite the stored goal of
    relabeled transitions from failed episodes. With ``mark_terminal`` the
    relabeled transitions are also flagged terminal, mirroring the
    environments, which end an episode when its goal is reached.

    Returns the number of transitions whose reward changed.
    """
    if len(episode_indices) == 0:
        return 0
    real_goal = np.asarray(real_goal, dtype=float)
    virtual = memory.next_achieved_goal[episode_indices[-1]].copy()
    is_real = bool(goal_predicate(virtual, real_goal))
    new_goal = None if (rewrite_goal is None or is_real) else np.asarray(rewrite_goal(virtual), dtype=float)

    rewards = memory.rewards
    listed = memory._listed.view
    changed = 0
    for i in episode_indices:
        if not goal_predicate(memory.next_achieved_goal[i], virtual):
            continue
        if rewards[i] != 1.0:
            rewards[i] = 1.0
            changed += 1
        if mark_terminal:
            memory.terminals[i] = True
        if new_goal is not None:
            memory.goal[i] = new_goal
        if listed[i] == _UNLISTED:
            if is_real:
                listed[i] = _REAL
                memory._real.append(i)
            else:
                listed[i] = _HER
                memory._her.append(i)
    return changed


def round_half_up(x: float) -> int:
    """Round half away from zero (for the non-negative values used here)."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


@dataclass(frozen=True)
class OYMBState:
    """Current guaranteed fraction ``lam`` and its multiplicative schedule."""

    lam: float
    delta: float = 1.0
    limit: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.limit is None:
            object.__setattr__(self, "limit", self.lam)
        if not 0.0 <= self.limit <= 1.0:
            raise ValueError(f"limit must lie in [0, 1], got {self.limit}")

    @property
    def limit_kind(self) -> str:
        if self.delta < 1:
            return "min"
        if self.delta > 1:
            return "max"
        return "inert"


def schedule_step(state: OYMBState) -> OYMBState:
    """Multiply lambda by delta, clamping at the limit."""
    kind = state.limit_kind
    if kind == "inert":
        return state
    lam = state.delta * state.lam
    if kind == "min" and lam < state.limit:
        lam = state.limit
    elif kind == "max" and lam > state.limit:
        lam = state.limit
    return replace(state, lam=lam)


@dataclass
class SampleBatch:
    indices: np.ndarray
    obs: np.ndarray
    goal: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    terminals: np.ndarray
    n_real: int
    n_her: int
    n_random: int

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def states(self) -> np.ndarray:
        """Network inputs s||g."""
        return np.concatenate([self.obs, self.goal], axis=1)

    @property
    def next_states(self) -> np.ndarray:
        """Network inputs s'||g."""
        return np.concatenate([self.next_obs, self.goal], axis=1)


def _gather(memory: ReplayMemory, idx: np.ndarray, counts: tuple[int, int, int]) -> SampleBatch:
    return SampleBatch(
        indices=idx,
        obs=memory.obs[idx],
        goal=memory.goal[idx],
        actions=memory.actions[idx],
        rewards=memory.rewards[idx],
        next_obs=memory.next_obs[idx],
        terminals=memory.terminals[idx],
        n_real=counts[0],
        n_her=counts[1],
        n_random=counts[2],
    )


def oymb_counts(memory: ReplayMemory, batch_size: int, lam: float) -> tuple[int, int, int]:
    """(n_real, n_her, n_random) for one OYMB batch."""
    n = round_half_up(batch_size * lam)
    n_real = min(n, len(memory.real_indices))
    n_her = min(n - n_real, len(memory.her_indices))
    return n_real, n_her, batch_size - n_real - n_her


def oymb_indices(
    memory: ReplayMemory, batch_size: int, lam: float, rng: np.random.Generator, batches: int = 1
) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Index matrix of shape (batches, batch_size) drawn by the OYMB rule."""
    if len(memory) == 0:
        raise ValueError("cannot sample from an empty replay memory")
    if batch_size < 1:
        raise ValueError("batch size must be at least 1")
    counts = oymb_counts(memory, batch_size, lam)
    n_real, n_her, n_random = counts
    parts = []
    if n_real:
        real = memory.real_indices
        parts.append(real[rng.integers(0, len(real), size=(batches, n_real))])
    if n_her:
        her = memory.her_indices
        parts.append(her[rng.integers(0, len(her), size=(batches, n_her))])
    if n_random:
        parts.append(rng.integers(0, len(memory), size=(batches, n_random)))
    return np.concatenate(parts, axis=1), counts


def uniform_indices(
    memory: ReplayMemory, batch_size: int, rng: np.random.Generator, batches: int = 1
) -> np.ndarray:
    if len(memory) == 0:
        raise ValueError("cannot sample from an empty replay memory")
    if batch_size < 1:
        raise ValueError("batch size must be at least 1")
    return rng.integers(0, len(memory), size=(batches, batch_size))


def oymb_sample(memory: ReplayMemory, batch_size: int, state: OYMBState, rng: np.random.Generator) -> SampleBatch:
    """Batch with ``round(B * lam)`` reward-1 draws (real first, then HER) topped up uniformly.

    Shortfalls in either index list are routed to the uniform part, so the
    batch always has exactly ``batch_size`` transitions.
    """
    idx, counts = oymb_indices(memory, batch_size, state.lam, rng)
    return _gather(memory, idx[0], counts)


def uniform_sample(memory: ReplayMemory, batch_size: int, rng: np.random.Generator) -> SampleBatch:
    idx = uniform_indices(memory, batch_size, rng)[0]
    return _gather(memory, idx, (0, 0, batch_size))
