"""Experiment configuration: nested YAML mapped onto dataclasses.

Unknown keys are rejected at every level so that a typo in a sweep config
fails loudly instead of silently running defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from softrtc import envs
from softrtc.weights import RULE_TAGS, DelayScaled, Fixed, Offset, Schedule, WindowRule


class ConfigError(ValueError):
    """Invalid experiment configuration; carries the offending field path."""


@dataclass
class EnvSection:
    tasks: list = field(default_factory=lambda: ["point_mass_track"])
    dt: float = 0.05
    episode_length: int = 200
    action_bound: float = 4.0
    solve_threshold: float = 0.1
    switch_step: int = 100
    min_jump: float = 0.8


@dataclass
class DataSection:
    episodes: int = 40
    # task -> list of [kp, kd]; tasks not listed use the built-in expert
    expert_gains: dict = field(default_factory=dict)


@dataclass
class ModelSection:
    horizon: int = 8
    action_dim: int = 2
    hidden: list = field(default_factory=lambda: [64, 64])


@dataclass
class TrainSection:
    epochs: int = 300
    batch_size: int = 128
    lr: float = 1e-3
    d_max: int = 4
    eps_denom: float = 1e-6
    init: str | None = None  # checkpoint to fine-tune from


@dataclass
class WindowSection:
    rule: str = "delay_scaled"
    lam: int = 2
    h_max: int = 5
    h: int = 3
    L: int = 0
    cap: int = 8
    schedule: str = "linear"


@dataclass
class ExecutionSection:
    s: int = 4
    mode: str = "rtc"


@dataclass
class SolverSection:
    steps: int = 5


@dataclass
class EvalSection:
    delays: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    episodes: int = 32
    checkpoint: str | None = None  # defaults to <out>/checkpoint.json


@dataclass
class SweepSection:
    axis: str = "offset_L"
    values: list = field(default_factory=lambda: [0, 1, 2, 3, 4, 5, 6])
    retrain: bool = True


@dataclass
class BenchSection:
    batch_sizes: list = field(default_factory=lambda: [1, 32])
    warmup: int = 20
    iters: int = 200
    delay: int = 2


@dataclass
class ExperimentConfig:
    name: str = "soft"
    seed: int = 0
    out_dir: str = "runs/default"
    env: EnvSection = field(default_factory=EnvSection)
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    window: WindowSection = field(default_factory=WindowSection)
    execution: ExecutionSection = field(default_factory=ExecutionSection)
    solver: SolverSection = field(default_factory=SolverSection)
    eval: EvalSection = field(default_factory=EvalSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


SWEEP_AXES = {
    # axis name -> (window rule tag, window field it sets)
    "lambda": ("delay_scaled", "lam"),
    "fixed_h": ("fixed", "h"),
    "offset_L": ("offset", "L"),
}


def _build(cls, data, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"unknown key(s): {', '.join(where + k for k in unknown)}")
    kwargs = {}
    for key, value in data.items():
        f = fields[key]
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(sub):
            kwargs[key] = _build(sub, value, f"{path}.{key}" if path else key)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def from_dict(data: dict | None) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data or {}, "")
    validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from None
    return from_dict(data)


def _require(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate(cfg: ExperimentConfig) -> None:
    H = cfg.model.horizon
    _require(_is_int(cfg.seed), "seed", "must be an integer")
    _require(isinstance(cfg.env.tasks, list) and cfg.env.tasks, "env.tasks", "must be a nonempty list")
    for t in cfg.env.tasks:
        _require(t in envs.TASKS, "env.tasks", f"unknown task {t!r}; expected one of {list(envs.TASKS)}")
    for k, v in cfg.data.expert_gains.items():
        _require(k in envs.TASKS, "data.expert_gains", f"unknown task {k!r}")
        _require(isinstance(v, list) and v and all(len(g) == 2 for g in v),
                 f"data.expert_gains.{k}", "must be a list of [kp, kd] pairs")
    _require(_is_int(H) and H >= 1, "model.horizon", "must be an integer >= 1")
    _require(cfg.model.action_dim == 2, "model.action_dim", "toy tasks are 2-D; must be 2")
    _require(isinstance(cfg.model.hidden, list) and cfg.model.hidden and all(_is_int(h) and h >= 1 for h in cfg.model.hidden),
             "model.hidden", "must be a nonempty list of positive integers")
    _require(cfg.env.episode_length >= H, "env.episode_length", f"must be >= model.horizon ({H})")
    _require(_is_int(cfg.data.episodes) and cfg.data.episodes >= 1, "data.episodes", "must be >= 1")
    _require(_is_int(cfg.train.epochs) and cfg.train.epochs >= 0, "train.epochs", "must be >= 0")
    _require(_is_int(cfg.train.batch_size) and cfg.train.batch_size >= 1, "train.batch_size", "must be >= 1")
    _require(cfg.train.lr > 0, "train.lr", "must be positive")
    _require(cfg.train.eps_denom > 0, "train.eps_denom", "must be positive")
    _require(_is_int(cfg.train.d_max) and 0 <= cfg.train.d_max <= H, "train.d_max", f"must lie in [0, {H}]")
    _require(cfg.window.rule in RULE_TAGS, "window.rule", f"must be one of {sorted(RULE_TAGS)}")
    try:
        Schedule(cfg.window.schedule)
    except ValueError:
        raise ConfigError(f"window.schedule: must be one of {[s.value for s in Schedule]}") from None
    _require(cfg.window.cap <= H, "window.cap", f"must be <= model.horizon ({H})")
    try:
        window_rule(cfg.window)
    except ValueError as exc:
        raise ConfigError(f"window: {exc}") from None
    _require(cfg.execution.mode in ("naive", "rtc"), "execution.mode", "must be 'naive' or 'rtc'")
    s = cfg.execution.s
    _require(_is_int(s) and 1 <= s <= H, "execution.s", f"must lie in [1, {H}]")
    _require(isinstance(cfg.eval.delays, list) and cfg.eval.delays and all(_is_int(d) and d >= 0 for d in cfg.eval.delays),
             "eval.delays", "must be a nonempty list of nonnegative integers")
    _require(H >= s + max(cfg.eval.delays), "eval.delays",
             f"model.horizon ({H}) must be >= execution.s ({s}) + max delay ({max(cfg.eval.delays)})")
    _require(_is_int(cfg.eval.episodes) and cfg.eval.episodes >= 1, "eval.episodes", "must be >= 1")
    _require(_is_int(cfg.solver.steps) and cfg.solver.steps >= 1, "solver.steps", "must be >= 1")
    _require(cfg.sweep.axis in SWEEP_AXES, "sweep.axis", f"must be one of {sorted(SWEEP_AXES)}")
    _require(isinstance(cfg.sweep.values, list) and cfg.sweep.values, "sweep.values", "must be a nonempty list")
    for v in cfg.sweep.values:
        try:
            window_rule(sweep_window(cfg.window, cfg.sweep.axis, v))
        except ValueError as exc:
            raise ConfigError(f"sweep.values: {v!r}: {exc}") from None
    _require(all(_is_int(b) and b >= 1 for b in cfg.bench.batch_sizes), "bench.batch_sizes", "must be positive integers")
    _require(cfg.bench.warmup >= 1, "bench.warmup", "must be >= 1")
    _require(cfg.bench.iters >= 10, "bench.iters", "must be >= 10")
    _require(0 <= cfg.bench.delay <= H - s, "bench.delay", f"must lie in [0, H - s = {H - s}]")


def window_rule(w: WindowSection) -> WindowRule:
    if w.rule == "delay_scaled":
        return DelayScaled(lam=w.lam, h_max=w.h_max)
    if w.rule == "fixed":
        return Fixed(h=w.h)
    if w.rule == "offset":
        return Offset(L=w.L, cap=w.cap)
    raise ValueError(f"unknown window rule {w.rule!r}")


def sweep_window(w: WindowSection, axis: str, value) -> WindowSection:
    tag, key = SWEEP_AXES[axis]
    return dataclasses.replace(w, rule=tag, **{key: value})


def env_spec(cfg: ExperimentConfig, task: str) -> envs.EnvSpec:
    e = cfg.env
    return envs.EnvSpec(kind=task, dt=e.dt, episode_length=e.episode_length, action_bound=e.action_bound,
                        solve_threshold=e.solve_threshold, switch_step=e.switch_step, min_jump=e.min_jump)


def expert_config(cfg: ExperimentConfig, task: str) -> envs.ExpertConfig:
    gains = cfg.data.expert_gains.get(task)
    return envs.ExpertConfig(gains=tuple(map(tuple, gains))) if gains else envs.default_expert(task)
