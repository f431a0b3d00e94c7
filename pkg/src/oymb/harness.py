"""Experiment configs, multi-seed HER vs HER+OYMB runs, the minibatch proportion probe, CSV output.

Config files are INI-style ``key = value`` text::

    [experiment]
    task = robo_easy
    runs = 5

    [arm her]
    sampler = uniform

    [arm her_oymb]
    sampler = oymb
    lambda = 0.25

Unset keys take the per-task defaults in ``TASK_DEFAULTS``. Unknown sections
and keys are rejected.
"""

from __future__ import annotations

import configparser
import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import replay
from .agent import SAMPLERS, AgentConfig, OYMBConfig, RunMetrics, run_training
from .envs import TASKS, load_map, make_env

log = logging.getLogger(__name__)

# episodes, runs and the tuned (lambda, delta, limit) per task
TASK_DEFAULTS = {
    "mountaincar": {"episodes": 250, "runs": 10, "oymb": (0.05, 1.0, 0.05)},
    "robo_easy": {"episodes": 250, "runs": 5, "oymb": (0.25, 1.0, 0.25)},
    "robo_medium": {"episodes": 250, "runs": 5, "oymb": (0.25, 1.0, 0.25)},
    "robo_hard": {"episodes": 250, "runs": 5, "oymb": (0.25, 1.0, 0.25)},
}
# kept for reference; there is no runnable lunar lander task
LUNARLANDER_OYMB = (0.65, 0.996, 0.01)

EXPERIMENT_HEADER = ["episode", "mean_cum_success", "std_cum_success", "mean_lambda"]
RUN_HEADER = ["episode", "success", "cum_success", "lambda", "mean_loss"]
PROBE_HEADER = ["episode", "sampler", "mean_prop", "min_prop", "max_prop"]

DEFAULT_PROBE_SCHEDULE = ((0, 0.04), (25, 0.025), (50, 0.055))


class ConfigError(ValueError):
    pass


class RunError(RuntimeError):
    pass


@dataclass(frozen=True)
class ArmConfig:
    name: str
    sampler: str
    oymb: OYMBConfig = field(default_factory=OYMBConfig)


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    arms: tuple[ArmConfig, ...]
    episodes: int
    runs: int
    seed: int = 0
    out: str = "results"
    map_path: str | None = None
    horizon: int | None = None
    agent: AgentConfig = field(default_factory=AgentConfig)
    zero_init: bool = False

    def agent_config(self, arm: ArmConfig) -> AgentConfig:
        return replace(self.agent, episodes=self.episodes, sampler=arm.sampler, oymb=arm.oymb)


@dataclass(frozen=True)
class ProbeConfig:
    task: str = "robo_easy"
    episodes: int = 100
    draws: int = 1000
    probe_batch_size: int = 1000
    schedule: tuple[tuple[int, float], ...] = DEFAULT_PROBE_SCHEDULE
    seed: int = 0
    map_path: str | None = None
    horizon: int | None = None
    agent: AgentConfig = field(default_factory=AgentConfig)

    def target(self, episode: int) -> float:
        """Scheduled lambda for an episode; each segment runs until the next one starts."""
        lam = self.schedule[0][1]
        for start, value in self.schedule:
            if episode >= start:
                lam = value
        return lam


# ---------------------------------------------------------------------------
# Config parsing

_AGENT_KEYS = {
    "gamma": float, "batch_size": int, "lr": float, "epsilon_start": float, "epsilon_end": float,
    "warmup": int, "her_rewrite_goal": bool, "her_terminal": bool,
}
_EXPERIMENT_KEYS = {
    "task": str, "episodes": int, "runs": int, "seed": int, "out": str, "map": str,
    "horizon": int, "zero_init": bool, **_AGENT_KEYS,
}
_ARM_KEYS = {"sampler": str, "lambda": float, "delta": float, "limit": float}
_PROBE_KEYS = {
    "task": str, "episodes": int, "draws": int, "probe_batch_size": int, "schedule": str,
    "seed": int, "map": str, "horizon": int, **_AGENT_KEYS,
}


def _read(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    for section in parser.sections():
        if section not in ("experiment", "probe") and not section.startswith("arm "):
            raise ConfigError(f"unknown section [{section}]")
    return parser


def _typed(parser, section: str, schema: dict) -> dict:
    values = {}
    for key in parser[section]:
        if key not in schema:
            raise ConfigError(f"unknown key '{key}' in [{section}]")
        kind = schema[key]
        try:
            if kind is bool:
                values[key] = parser.getboolean(section, key)
            elif kind is str:
                values[key] = parser.get(section, key).strip()
            else:
                values[key] = kind(parser.get(section, key))
        except ValueError:
            raise ConfigError(f"{section}.{key}: expected {kind.__name__}, got {parser.get(section, key)!r}") from None
    return values


def _task(values: dict, section: str) -> str:
    task = values.get("task")
    if task is None:
        raise ConfigError(f"{section}.task is required")
    if task not in TASKS:
        raise ConfigError(f"{section}.task: unknown task {task!r}; expected one of {', '.join(TASKS)}")
    return task


def _agent(values: dict, section: str) -> AgentConfig:
    kwargs = {k: values[k] for k in _AGENT_KEYS if k in values}
    try:
        return AgentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def _map_path(values: dict, base: Path, section: str) -> str | None:
    if "map" not in values:
        return None
    path = Path(values["map"])
    if not path.is_absolute():
        path = base / path
    if not path.is_file():
        raise ConfigError(f"{section}.map: file not found: {path}")
    return str(path)


def _positive(values: dict, key: str, section: str, minimum: int = 1) -> None:
    if key in values and values[key] < minimum:
        raise ConfigError(f"{section}.{key} must be >= {minimum}, got {values[key]}")


def load_config(path) -> ExperimentConfig:
    parser = _read(path)
    if not parser.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    values = _typed(parser, "experiment", _EXPERIMENT_KEYS)
    task = _task(values, "experiment")
    defaults = TASK_DEFAULTS[task]
    for key, minimum in (("runs", 1), ("episodes", 0), ("horizon", 1)):
        _positive(values, key, "experiment", minimum)

    arms = []
    for section in parser.sections():
        if not section.startswith("arm "):
            continue
        name = section[4:].strip()
        if not name or not name.replace("_", "").replace("-", "").isalnum():
            raise ConfigError(f"arm name {name!r} must be alphanumeric (with _ or -)")
        a = _typed(parser, section, _ARM_KEYS)
        sampler = a.get("sampler")
        if sampler not in SAMPLERS:
            raise ConfigError(f"{section}.sampler must be one of {', '.join(SAMPLERS)}")
        lam, delta, limit = defaults["oymb"]
        lam = a.get("lambda", lam)
        oymb = OYMBConfig(lam, a.get("delta", delta), a.get("limit", limit if "lambda" not in a else lam))
        try:
            oymb.initial_state()
        except ValueError as exc:
            raise ConfigError(f"[{section}]: {exc}") from None
        arms.append(ArmConfig(name, sampler, oymb))
    if not arms:
        arms = default_arms(task)

    return ExperimentConfig(
        task=task,
        arms=tuple(arms),
        episodes=values.get("episodes", defaults["episodes"]),
        runs=values.get("runs", defaults["runs"]),
        seed=values.get("seed", 0),
        out=values.get("out", "results"),
        map_path=_map_path(values, Path(path).parent, "experiment"),
        horizon=values.get("horizon"),
        agent=_agent(values, "experiment"),
        zero_init=values.get("zero_init", False),
    )


def default_arms(task: str) -> tuple[ArmConfig, ...]:
    return (
        ArmConfig("her", "uniform", OYMBConfig(*TASK_DEFAULTS[task]["oymb"])),
        ArmConfig("her_oymb", "oymb", OYMBConfig(*TASK_DEFAULTS[task]["oymb"])),
    )


def parse_schedule(text: str, episodes: int) -> tuple[tuple[int, float], ...]:
    """``"0:0.04, 25:0.025, 50:0.055"`` -> ((0, 0.04), (25, 0.025), (50, 0.055))."""
    segments = []
    for part in text.split(","):
        try:
            start, lam = part.split(":")
            segments.append((int(start), float(lam)))
        except ValueError:
            raise ConfigError(f"probe.schedule: cannot parse segment {part.strip()!r}") from None
    starts = [s for s, _ in segments]
    if not segments or starts[0] != 0:
        raise ConfigError("probe.schedule: first segment must start at episode 0")
    if any(b <= a for a, b in zip(starts, starts[1:])):
        raise ConfigError("probe.schedule: segment starts must be strictly increasing")
    if episodes and starts[-1] >= episodes:
        raise ConfigError("probe.schedule: segment starts beyond the last episode")
    if any(not 0.0 <= lam <= 1.0 for _, lam in segments):
        raise ConfigError("probe.schedule: lambda values must lie in [0, 1]")
    return tuple(segments)


def load_probe_config(path) -> ProbeConfig:
    parser = _read(path)
    if not parser.has_section("probe"):
        raise ConfigError("missing [probe] section")
    values = _typed(parser, "probe", _PROBE_KEYS)
    if "task" not in values:
        values["task"] = "robo_easy"
    task = _task(values, "probe")
    for key, minimum in (("episodes", 0), ("draws", 1), ("probe_batch_size", 1), ("horizon", 1)):
        _positive(values, key, "probe", minimum)
    episodes = values.get("episodes", 100)
    schedule = DEFAULT_PROBE_SCHEDULE
    if "schedule" in values:
        schedule = parse_schedule(values["schedule"], episodes)
    return ProbeConfig(
        task=task,
        episodes=episodes,
        draws=values.get("draws", 1000),
        probe_batch_size=values.get("probe_batch_size", 1000),
        schedule=schedule,
        seed=values.get("seed", 0),
        map_path=_map_path(values, Path(path).parent, "probe"),
        horizon=values.get("horizon"),
        agent=_agent(values, "probe"),
    )


# ---------------------------------------------------------------------------
# Experiments


@dataclass
class ArmResult:
    arm: ArmConfig
    runs: list[RunMetrics]
    seeds: list[int]

    def aggregate(self) -> dict[str, np.ndarray]:
        cum = np.array([r.cumulative for r in self.runs], dtype=float)
        lam = np.array([r.lambdas for r in self.runs], dtype=float)
        n = cum.shape[1] if cum.ndim == 2 else 0
        return {
            "mean_cum_success": cum.mean(axis=0) if n else np.zeros(0),
            "std_cum_success": cum.std(axis=0) if n else np.zeros(0),
            "mean_lambda": lam.mean(axis=0) if n else np.zeros(0),
        }


def _make_env(task, map_path, horizon):
    maze = load_map(map_path) if task.startswith("robo") else None
    return make_env(task, maze, horizon)


def _run_one(task, map_path, horizon, agent_config, seed, zero_init) -> RunMetrics:
    env = _make_env(task, map_path, horizon)
    return run_training(env, agent_config, seed, zero_init=zero_init)


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> dict[str, ArmResult]:
    """Every arm for ``config.runs`` seeds (base_seed + r). Results do not depend on ``jobs``."""
    tasks = [(arm, r, config.seed + r) for arm in config.arms for r in range(config.runs)]
    args = [
        (config.task, config.map_path, config.horizon, config.agent_config(arm), seed, config.zero_init)
        for arm, _, seed in tasks
    ]
    results: dict[str, ArmResult] = {arm.name: ArmResult(arm, [], []) for arm in config.arms}

    def collect(outcomes):
        for (arm, r, seed), outcome in zip(tasks, outcomes):
            results[arm.name].runs.append(outcome)
            results[arm.name].seeds.append(seed)

    if jobs <= 1:
        outcomes = []
        for (arm, r, seed), a in zip(tasks, args):
            log.info("arm %s run %d (seed %d)", arm.name, r, seed)
            try:
                outcomes.append(_run_one(*a))
            except Exception as exc:
                raise RunError(f"arm {arm.name} run {r} (seed {seed}) failed: {exc}") from exc
        collect(outcomes)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one, *a) for a in args]
            outcomes = []
            for (arm, r, seed), fut in zip(tasks, futures):
                try:
                    outcomes.append(fut.result())
                except Exception as exc:
                    raise RunError(f"arm {arm.name} run {r} (seed {seed}) failed: {exc}") from exc
        collect(outcomes)
    return results


# ---------------------------------------------------------------------------
# Proportion probe


@dataclass
class ProbeSeries:
    sampler: str
    mean: np.ndarray
    min: np.ndarray
    max: np.ndarray
    available: np.ndarray  # |real_indices| + |her_indices| at probe time
    memory_size: np.ndarray
    base_rate: np.ndarray  # fraction of reward-1 transitions in memory


@dataclass
class ProbeResult:
    config: ProbeConfig
    targets: np.ndarray
    series: dict[str, ProbeSeries]


def batch_proportions(memory, sampler: str, batch_size: int, draws: int, lam: float, rng) -> np.ndarray:
    """Fraction of reward-1 transitions in each of ``draws`` batches from the given sampler."""
    if sampler == "oymb":
        idx, _ = replay.oymb_indices(memory, batch_size, lam, rng, batches=draws)
    else:
        idx = replay.uniform_indices(memory, batch_size, rng, batches=draws)
    ones = (memory.rewards[idx] == 1.0).sum(axis=1)
    return ones / batch_size


def proportion_probe(config: ProbeConfig) -> ProbeResult:
    """Train one agent per sampler and, after every episode, measure minibatch reward-1 proportions.

    The OYMB agent trains and is probed with the manual lambda schedule; the
    uniform agent trains and is probed with uniform batches.
    """
    targets = np.array([config.target(e) for e in range(config.episodes)])
    series = {}
    for sampler in SAMPLERS:
        env = _make_env(config.task, config.map_path, config.horizon)
        agent_config = replace(config.agent, episodes=config.episodes, sampler=sampler)
        probe_rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1000,)))
        rows = {k: [] for k in ("mean", "min", "max", "available", "memory_size", "base_rate")}

        def probe(episode, agent, memory):
            props = batch_proportions(
                memory, sampler, config.probe_batch_size, config.draws, targets[episode], probe_rng
            )
            rows["mean"].append(props.mean())
            rows["min"].append(props.min())
            rows["max"].append(props.max())
            rows["available"].append(len(memory.real_indices) + len(memory.her_indices))
            rows["memory_size"].append(len(memory))
            rows["base_rate"].append(float(np.mean(memory.rewards == 1.0)))

        run_training(env, agent_config, config.seed, lambda_schedule=config.target, on_episode_end=probe)
        series[sampler] = ProbeSeries(sampler, *(np.array(rows[k]) for k in rows))
    return ProbeResult(config, targets, series)


# ---------------------------------------------------------------------------
# CSV output


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _write_rows(path, header, rows) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_experiment_csv(aggregate: dict[str, np.ndarray], path) -> None:
    n = len(aggregate.get("mean_cum_success", ()))
    rows = (
        (e, aggregate["mean_cum_success"][e], aggregate["std_cum_success"][e], aggregate["mean_lambda"][e])
        for e in range(n)
    )
    _write_rows(path, EXPERIMENT_HEADER, rows)


def write_run_csv(metrics: RunMetrics, path) -> None:
    rows = (
        (e, metrics.successes[e], metrics.cumulative[e], metrics.lambdas[e], metrics.losses[e])
        for e in range(len(metrics.successes))
    )
    _write_rows(path, RUN_HEADER, rows)


def write_probe_csv(series: ProbeSeries, path) -> None:
    rows = ((e, series.sampler, series.mean[e], series.min[e], series.max[e]) for e in range(len(series.mean)))
    _write_rows(path, PROBE_HEADER, rows)


def write_experiment(results: dict[str, ArmResult], out_dir) -> list[Path]:
    """``run_<arm>.csv`` aggregates plus ``runs/<arm>_seed<seed>.csv`` per-run series."""
    out_dir = Path(out_dir)
    written = []
    for name, result in results.items():
        path = out_dir / f"run_{name}.csv"
        write_experiment_csv(result.aggregate(), path)
        written.append(path)
        for seed, metrics in zip(result.seeds, result.runs):
            write_run_csv(metrics, out_dir / "runs" / f"{name}_seed{seed}.csv")
    return written


def write_probe(result: ProbeResult, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for sampler, series in result.series.items():
        path = out_dir / f"probe_{sampler}.csv"
        write_probe_csv(series, path)
        written.append(path)
    return written


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
