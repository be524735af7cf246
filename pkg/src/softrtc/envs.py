"""Toy 2-D double-integrator tasks with scripted PD experts.

Two tasks share the dynamics pos += vel*dt, vel += a*dt:

* ``point_mass_track`` follows a smooth Lissajous reference;
* ``mode_switch`` holds a static target that relocates at a fixed step, which
  puts a known discontinuity in the middle of every episode.

Observations are [pos, vel, ref(t+i) - pos for i in 0..H-1], so obs_dim = 4 + 2H.
Per-step reward is exp(-|pos - ref|) / episode_length, giving returns in [0, 1].
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

TASKS = ("point_mass_track", "mode_switch")
DATASET_FORMAT = "softrtc-dataset"


@dataclass(frozen=True)
class EnvSpec:
    kind: str = "point_mass_track"
    dt: float = 0.05
    episode_length: int = 200
    action_bound: float = 4.0
    solve_threshold: float = 0.1
    # mode_switch only
    switch_step: int = 100
    min_jump: float = 0.8

    def __post_init__(self):
        if self.kind not in TASKS:
            raise ValueError(f"unknown task {self.kind!r}; expected one of {TASKS}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (np.isfinite(self.action_bound) and self.action_bound > 0):
            raise ValueError("action_bound must be finite and positive")
        if not self.solve_threshold > 0:
            raise ValueError("solve_threshold must be positive")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")


@dataclass(frozen=True)
class ExpertConfig:
    """PD gains; with several entries each demo episode draws one pair uniformly."""

    gains: tuple[tuple[float, float], ...] = ((16.0, 8.0),)

    def __post_init__(self):
        object.__setattr__(self, "gains", tuple((float(kp), float(kd)) for kp, kd in self.gains))
        if not self.gains:
            raise ValueError("expert needs at least one gain pair")


def default_expert(kind: str) -> ExpertConfig:
    """Stiff tracking for the smooth reference; gentler gains for target jumps,
    whose closed loop has to tolerate several steps of chunking latency."""
    if kind == "mode_switch":
        return ExpertConfig(gains=((4.0, 4.0),))
    return ExpertConfig(gains=((16.0, 8.0),))


@dataclass(frozen=True)
class EnvState:
    pos: np.ndarray
    vel: np.ndarray
    ref_params: dict = field(compare=False)
    step: int = 0


def reference(spec: EnvSpec, ref_params: dict, step) -> tuple[np.ndarray, np.ndarray]:
    """Reference position and velocity at integer step(s); arrays of shape (..., 2)."""
    k = np.asarray(step, dtype=np.float64)
    if spec.kind == "point_mass_track":
        c = np.asarray(ref_params["center"])
        amp = np.asarray(ref_params["amp"])
        w = np.asarray(ref_params["freq"])
        phi = np.asarray(ref_params["phase"])
        arg = w * (k[..., None] * spec.dt) + phi
        return c + amp * np.sin(arg), amp * w * np.cos(arg)
    a = np.asarray(ref_params["target_a"])
    b = np.asarray(ref_params["target_b"])
    pos = np.where((k < spec.switch_step)[..., None], a, b)
    return pos, np.zeros_like(pos)


def reset(spec: EnvSpec, rng: np.random.Generator) -> EnvState:
    if spec.kind == "point_mass_track":
        ref_params = {
            "center": rng.uniform(-0.5, 0.5, 2).tolist(),
            "amp": rng.uniform(0.3, 0.6, 2).tolist(),
            "freq": rng.uniform(0.4, 0.8, 2).tolist(),
            "phase": rng.uniform(0.0, 2 * np.pi, 2).tolist(),
        }
        p0, v0 = reference(spec, ref_params, 0)
        pos = p0 + rng.normal(0.0, 0.05, 2)
        return EnvState(pos=pos, vel=v0.copy(), ref_params=ref_params)
    a = rng.uniform(-1.0, 1.0, 2)
    while True:
        b = rng.uniform(-1.0, 1.0, 2)
        if np.linalg.norm(b - a) >= spec.min_jump:
            break
    ref_params = {"target_a": a.tolist(), "target_b": b.tolist()}
    pos = a + rng.normal(0.0, 0.05, 2)
    return EnvState(pos=pos, vel=np.zeros(2), ref_params=ref_params)


def clip_action(spec: EnvSpec, action) -> np.ndarray:
    action = np.asarray(action, dtype=np.float64)
    if not np.isfinite(action).all():
        raise ValueError("non-finite action")
    return np.clip(action, -spec.action_bound, spec.action_bound)


def step(spec: EnvSpec, state: EnvState, action) -> tuple[EnvState, float]:
    a = clip_action(spec, action)
    pos = state.pos + state.vel * spec.dt
    vel = state.vel + a * spec.dt
    k = state.step + 1
    ref_pos, _ = reference(spec, state.ref_params, k)
    reward = float(np.exp(-np.linalg.norm(pos - ref_pos))) / spec.episode_length
    return EnvState(pos=pos, vel=vel, ref_params=state.ref_params, step=k), reward


def tracking_error(spec: EnvSpec, state: EnvState) -> float:
    ref_pos, _ = reference(spec, state.ref_params, state.step)
    return float(np.linalg.norm(state.pos - ref_pos))


def observe(spec: EnvSpec, state: EnvState, H: int) -> np.ndarray:
    ref_pos, _ = reference(spec, state.ref_params, state.step + np.arange(H))
    return np.concatenate([state.pos, state.vel, (ref_pos - state.pos).ravel()])


def obs_dim(H: int) -> int:
    return 4 + 2 * H


def expert_action(spec: EnvSpec, state: EnvState, gains=(16.0, 8.0)) -> np.ndarray:
    kp, kd = gains
    ref_pos, ref_vel = reference(spec, state.ref_params, state.step)
    a = kp * (ref_pos - state.pos) + kd * (ref_vel - state.vel)
    return clip_action(spec, a)


def is_solved(log, spec: EnvSpec) -> bool:
    return bool(log.final_error < spec.solve_threshold)


def episode_return(log, spec: EnvSpec) -> float:
    return float(np.sum(log.rewards))


@dataclass
class Dataset:
    obs: np.ndarray      # (N, obs_dim)
    chunks: np.ndarray   # (N, H, A)
    episode: np.ndarray  # (N,) episode index of each pair
    t: np.ndarray        # (N,) step index of each pair
    meta: dict

    def __len__(self) -> int:
        return self.obs.shape[0]

    @property
    def horizon(self) -> int:
        return self.chunks.shape[1]


def expert_episode(spec: EnvSpec, rng: np.random.Generator, gains) -> tuple[list, np.ndarray]:
    """Roll the expert for one episode; returns states (length E+1) and actions (E, 2)."""
    state = reset(spec, rng)
    states, actions = [state], []
    for _ in range(spec.episode_length):
        a = expert_action(spec, state, gains)
        state, _ = step(spec, state, a)
        states.append(state)
        actions.append(a)
    return states, np.array(actions)


def generate_demos(spec: EnvSpec, n_episodes: int, H: int, seed: int,
                   expert: ExpertConfig | None = None) -> Dataset:
    expert = expert or default_expert(spec.kind)
    E = spec.episode_length
    if E < H:
        raise ValueError(f"episode length {E} shorter than chunk horizon {H}")
    obs, chunks, ep_idx, t_idx = [], [], [], []
    for ep, ss in enumerate(np.random.SeedSequence(seed).spawn(n_episodes)):
        rng = np.random.default_rng(ss)
        gains = expert.gains[rng.integers(len(expert.gains))]
        states, actions = expert_episode(spec, rng, gains)
        for t in range(E - H + 1):
            obs.append(observe(spec, states[t], H))
            chunks.append(actions[t:t + H])
            ep_idx.append(ep)
            t_idx.append(t)
    meta = {
        "env": asdict(spec),
        "expert": asdict(expert),
        "n_episodes": n_episodes,
        "horizon": H,
        "seed": seed,
    }
    return Dataset(np.array(obs), np.array(chunks), np.array(ep_idx), np.array(t_idx), meta)


def save_dataset(path, ds: Dataset, extra: dict | None = None) -> None:
    """Line-delimited JSON: one header line, then one record per (obs, chunk) pair."""
    header = {"format": DATASET_FORMAT, "version": 1, "meta": ds.meta, "n": len(ds)}
    if extra:
        header.update(extra)
    lines = [json.dumps(header, sort_keys=True)]
    for i in range(len(ds)):
        lines.append(json.dumps({
            "episode": int(ds.episode[i]),
            "t": int(ds.t[i]),
            "obs": ds.obs[i].tolist(),
            "chunk": ds.chunks[i].tolist(),
        }))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    with open(path) as f:
        header = json.loads(f.readline())
        if header.get("format") != DATASET_FORMAT:
            raise ValueError(f"{path}: not a softrtc dataset")
        recs = [json.loads(line) for line in f if line.strip()]
    if len(recs) != header["n"]:
        raise ValueError(f"{path}: expected {header['n']} records, found {len(recs)}")
    return Dataset(
        obs=np.array([r["obs"] for r in recs], dtype=np.float64),
        chunks=np.array([r["chunk"] for r in recs], dtype=np.float64),
        episode=np.array([r["episode"] for r in recs], dtype=np.int64),
        t=np.array([r["t"] for r in recs], dtype=np.int64),
        meta=header["meta"],
    )


def spec_from_dict(d: dict) -> EnvSpec:
    return replace(EnvSpec(), **d)
