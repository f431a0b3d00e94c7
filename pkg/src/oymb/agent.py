"""DQN agent trained from hindsight-relabeled replay, with OYMB or uniform minibatches."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import neuralnet as nn
from . import replay
from .replay import OYMBState, ReplayMemory, SampleBatch, Transition

SAMPLERS = ("oymb", "uniform")


@dataclass(frozen=True)
class OYMBConfig:
    lam: float = 0.25
    delta: float = 1.0
    limit: float = 0.25

    def initial_state(self) -> OYMBState:
        return OYMBState(self.lam, self.delta, self.limit)


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.98
    batch_size: int = 64
    episodes: int = 250
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    sampler: str = "oymb"
    oymb: OYMBConfig = field(default_factory=OYMBConfig)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    warmup: int | None = None  # None: batch_size
    her_rewrite_goal: bool = False
    her_terminal: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")

    @property
    def warmup_steps(self) -> int:
        return self.batch_size if self.warmup is None else self.warmup


class Agent:
    """Online and target Q-networks, optimizer state and the current OYMB schedule."""

    def __init__(self, d_in: int, n_actions: int, config: AgentConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.params = nn.init_params(d_in, n_actions, rng) if rng is not None else nn.zero_params(d_in, n_actions)
        self.target = nn.copy_params(self.params)
        self.adam = nn.AdamState.for_params(
            self.params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps
        )
        self.oymb = config.oymb.initial_state()
        self.episode = 0

    @property
    def n_actions(self) -> int:
        return self.params.n_actions

    def sync_target(self) -> None:
        self.target.flat[:] = self.params.flat


def epsilon_at(config: AgentConfig, episode: int) -> float:
    """Linear anneal from epsilon_start (first episode) to epsilon_end (last)."""
    if config.episodes <= 1:
        return config.epsilon_start
    frac = min(max(episode / (config.episodes - 1), 0.0), 1.0)
    return config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac


def select_action(agent: Agent, state: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    # one uniform draw per call keeps the policy stream aligned regardless of epsilon
    if rng.random() < epsilon:
        return int(rng.integers(agent.n_actions))
    return int(np.argmax(nn.forward(agent.params, state)))


def td_targets(batch: SampleBatch, target: nn.MLPParameters, gamma: float) -> np.ndarray:
    """r + gamma * max_a' Q_target(s'||g, a'), or r alone on terminal transitions."""
    next_q = nn.forward(target, batch.next_states).max(axis=1)
    return batch.rewards + gamma * np.where(batch.terminals, 0.0, next_q)


def train_step(agent: Agent, memory: ReplayMemory, config: AgentConfig, rng: np.random.Generator) -> float | None:
    """Sample one batch and apply one Adam step; None while the memory is below warmup."""
    if len(memory) == 0 or len(memory) < config.warmup_steps:
        return None
    if config.sampler == "oymb":
        batch = replay.oymb_sample(memory, config.batch_size, agent.oymb, rng)
    else:
        batch = replay.uniform_sample(memory, config.batch_size, rng)
    y = td_targets(batch, agent.target, config.gamma)
    loss, grad = nn.loss_and_grad(agent.params, batch.states, batch.actions, y)
    nn.adam_step(agent.params, grad, agent.adam)
    return loss


@dataclass
class EpisodeRecord:
    success: bool
    steps: int
    lam: float
    mean_loss: float
    relabeled: int


@dataclass
class Streams:
    """Independent random streams for one run, all derived from the run seed."""

    env: np.random.Generator
    policy: np.random.Generator
    sampling: np.random.Generator
    init: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> Streams:
        return cls(*(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)))


def run_episode(agent: Agent, env, memory: ReplayMemory, config: AgentConfig, streams: Streams) -> EpisodeRecord:
    eps = epsilon_at(config, agent.episode)
    goal_feat = env.goal_features(env.desired_goal)
    obs = env.features(env.reset(streams.env))
    lam = agent.oymb.lam
    indices = []
    losses = []
    success = False
    for _ in range(env.spec.horizon):
        action = select_action(agent, np.concatenate([obs, goal_feat]), eps, streams.policy)
        result = env.step(action, streams.env)
        next_obs = env.features(result.observation)
        indices.append(memory.store(Transition(
            obs=obs, goal=goal_feat, action=action, reward=result.reward,
            next_obs=next_obs, next_achieved_goal=result.achieved_goal, terminal=result.terminal,
        )))
        loss = train_step(agent, memory, config, streams.sampling)
        if loss is not None:
            losses.append(loss)
        obs = next_obs
        if result.reward == 1.0:
            success = True
        if result.terminal:
            break

    rewrite = env.goal_features if config.her_rewrite_goal else None
    relabeled = replay.relabel_episode(
        memory, indices, env.desired_goal, env.goal_reached, rewrite, config.her_terminal
    )
    agent.oymb = replay.schedule_step(agent.oymb)
    agent.sync_target()
    agent.episode += 1
    return EpisodeRecord(
        success=success,
        steps=len(indices),
        lam=lam,
        mean_loss=float(np.mean(losses)) if losses else math.nan,
        relabeled=relabeled,
    )


@dataclass
class RunMetrics:
    successes: np.ndarray  # int, one per episode
    cumulative: np.ndarray
    lambdas: np.ndarray
    losses: np.ndarray
    steps: np.ndarray

    @classmethod
    def from_records(cls, records: list[EpisodeRecord]) -> RunMetrics:
        successes = np.array([int(r.success) for r in records], dtype=np.int64)
        return cls(
            successes=successes,
            cumulative=np.cumsum(successes),
            lambdas=np.array([r.lam for r in records], dtype=float),
            losses=np.array([r.mean_loss for r in records], dtype=float),
            steps=np.array([r.steps for r in records], dtype=np.int64),
        )


def make_memory(env) -> ReplayMemory:
    return ReplayMemory(env.spec.obs_dim, env.spec.goal_dim, len(env.desired_goal))


def run_training(
    env,
    config: AgentConfig,
    seed: int,
    lambda_schedule: Callable[[int], float] | None = None,
    on_episode_end: Callable[[int, Agent, ReplayMemory], None] | None = None,
    zero_init: bool = False,
) -> RunMetrics:
    """Train for ``config.episodes`` episodes from a fresh agent and memory.

    ``lambda_schedule`` overrides the multiplicative schedule with a manual
    per-episode lambda. ``zero_init`` starts from an all-zero network.
    """
    streams = Streams.from_seed(seed)
    spec = env.spec
    agent = Agent(spec.obs_dim + spec.goal_dim, spec.n_actions, config, None if zero_init else streams.init)
    memory = make_memory(env)
    records = []
    for episode in range(config.episodes):
        if lambda_schedule is not None:
            agent.oymb = OYMBState(lambda_schedule(episode))
        records.append(run_episode(agent, env, memory, config, streams))
        if on_episode_end is not None:
            on_episode_end(episode, agent, memory)
    return RunMetrics.from_records(records)
