"""Asynchronous chunked execution under a fixed inference delay.

Timeline for execution horizon s and delay d (all in controller steps):

* chunk k is generated from the observation at step k*s and becomes available
  at step k*s + d; chunk 0 is generated synchronously (delay 0);
* steps k*s .. k*s+d-1 still execute chunk k-1 at local indices s .. s+d-1;
* from step k*s + d on, chunk k runs at local indices d, d+1, ...

In rtc mode chunk k is sampled with the aligned previous chunk as prior, so the
committed prefix it conditions on is exactly what the controller executes while
it is being generated. Delay is pure bookkeeping; nothing sleeps.
"""

from __future__ import annotations

import json
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from softrtc import envs, metrics
from softrtc.infer import PriorChunk, SolverConfig, generate_chunk
from softrtc.model import ModelParams
from softrtc.weights import Schedule, WindowRule, rule_tag

MODES = ("naive", "rtc")


@dataclass(frozen=True)
class ExecutionConfig:
    H: int = 8
    s: int = 4
    d: int = 0
    episode_length: int = 200
    mode: str = "rtc"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 1 <= self.s <= self.H:
            raise ValueError(f"execution horizon s={self.s} must satisfy 1 <= s <= H={self.H}")
        if self.d < 0:
            raise ValueError("delay must be >= 0")
        if self.H < self.s + self.d:
            raise ValueError(f"H={self.H} < s+d={self.s + self.d}: some steps would have no action")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")


@dataclass
class RolloutLog:
    actions: np.ndarray        # (E, A) executed, post-clip
    rewards: np.ndarray        # (E,)
    chunk_index: np.ndarray    # (E,) which chunk produced each executed action
    local_index: np.ndarray    # (E,) token index inside that chunk
    boundaries: list[int]      # first step executing each newly adopted chunk (after step 0)
    gen_times: list[float]     # wall-clock seconds per chunk generation
    final_error: float
    solved: bool
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.actions.shape[0]


def align_prior(prev_chunk: np.ndarray, s: int, H: int) -> PriorChunk:
    """Re-index the previous chunk into the new chunk's frame: Y[j] = prev[s + j]."""
    prev_chunk = np.asarray(prev_chunk, dtype=np.float64)
    values = np.zeros_like(prev_chunk)
    overlap = H - s
    values[:overlap] = prev_chunk[s:]
    valid = np.arange(H) < overlap
    return PriorChunk(values=values, valid=valid)


def rollout(spec: envs.EnvSpec, params: ModelParams, cfg: ExecutionConfig, rule: WindowRule,
            schedule: Schedule | str, solver: SolverConfig, seed) -> RolloutLog:
    """One episode. `seed` (int or SeedSequence) splits into env and policy streams."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    env_ss, pol_ss = ss.spawn(2)
    env_rng = np.random.default_rng(env_ss)
    pol_rng = np.random.default_rng(pol_ss)
    H, s, d = cfg.H, cfg.s, cfg.d
    if params.config.horizon != H:
        raise ValueError(f"model horizon {params.config.horizon} != execution horizon {H}")

    state = envs.reset(spec, env_rng)
    E = cfg.episode_length
    acts, rews, cidx, lidx, bounds, times = [], [], [], [], [], []
    chunks: list[np.ndarray] = []
    active = -1
    for t in range(E):
        if t % s == 0:
            k = t // s
            obs = envs.observe(spec, state, H)
            delay = 0 if k == 0 else d
            prior = None
            if cfg.mode == "rtc" and k > 0:
                prior = align_prior(chunks[k - 1], s, H)
            tic = time.perf_counter()
            if cfg.mode == "rtc":
                chunk = generate_chunk(params, obs, prior, delay, rule, schedule, solver, pol_rng)
            else:
                chunk = generate_chunk(params, obs, None, 0, rule, Schedule.ZEROS, solver, pol_rng)
            times.append(time.perf_counter() - tic)
            chunks.append(chunk)
        # newest chunk whose generation has finished
        k = t // s
        if k > 0 and t < k * s + d:
            k -= 1
        if k != active:
            if active >= 0:
                bounds.append(t)
            active = k
        j = t - k * s
        a = envs.clip_action(spec, chunks[k][j])
        state, r = envs.step(spec, state, a)
        acts.append(a)
        rews.append(r)
        cidx.append(k)
        lidx.append(j)

    err = envs.tracking_error(spec, state)
    return RolloutLog(
        actions=np.array(acts), rewards=np.array(rews),
        chunk_index=np.array(cidx), local_index=np.array(lidx),
        boundaries=bounds, gen_times=times,
        final_error=err, solved=bool(err < spec.solve_threshold),
    )


def save_log(path, log: RolloutLog) -> None:
    """Line-delimited JSON: header, one record per step, footer with outcomes."""
    lines = [json.dumps({"kind": "header", "meta": log.meta, "steps": len(log)}, sort_keys=True)]
    for t in range(len(log)):
        lines.append(json.dumps({
            "kind": "step", "t": t, "action": log.actions[t].tolist(), "reward": float(log.rewards[t]),
            "chunk": int(log.chunk_index[t]), "local": int(log.local_index[t]),
        }))
    lines.append(json.dumps({
        "kind": "footer", "boundaries": log.boundaries, "gen_times": log.gen_times,
        "final_error": log.final_error, "solved": log.solved,
    }))
    Path(path).write_text("\n".join(lines) + "\n")


def load_log(path) -> RolloutLog:
    recs = [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
    header, steps, footer = recs[0], recs[1:-1], recs[-1]
    if header.get("kind") != "header" or footer.get("kind") != "footer" or len(steps) != header["steps"]:
        raise ValueError(f"{path}: malformed rollout log")
    return RolloutLog(
        actions=np.array([r["action"] for r in steps], dtype=np.float64),
        rewards=np.array([r["reward"] for r in steps], dtype=np.float64),
        chunk_index=np.array([r["chunk"] for r in steps], dtype=np.int64),
        local_index=np.array([r["local"] for r in steps], dtype=np.int64),
        boundaries=list(footer["boundaries"]), gen_times=list(footer["gen_times"]),
        final_error=footer["final_error"], solved=footer["solved"], meta=header["meta"],
    )


# --- evaluation grid ---------------------------------------------------------

RESULT_COLUMNS = ("method", "task", "delay", "seed", "return", "solve",
                  "action_delta", "action_jerk", "boundary_jump")


@dataclass(frozen=True)
class Method:
    """What gets evaluated: a checkpoint plus how its chunks are executed."""

    name: str
    params: ModelParams
    mode: str
    rule: WindowRule
    schedule: Schedule

    def describe(self) -> dict:
        return {"name": self.name, "mode": self.mode, "rule": rule_tag(self.rule),
                "rule_params": asdict(self.rule), "schedule": Schedule(self.schedule).value,
                "params_sha256": self.params.digest()}


def episode_seed(master_seed: int, task: str, episode: int) -> np.random.SeedSequence:
    """Common random numbers: the seed ignores method and delay."""
    return np.random.SeedSequence([int(master_seed), zlib.crc32(task.encode()), int(episode)])


def _run_cell(args):
    method, spec, exec_cfg, solver, master_seed, episode = args
    log = rollout(spec, method.params, exec_cfg, method.rule, method.schedule, solver,
                  episode_seed(master_seed, spec.kind, episode))
    return result_row(method.name, spec.kind, exec_cfg.d, episode, log, spec)


def result_row(method: str, task: str, delay: int, seed: int, log: RolloutLog, spec: envs.EnvSpec) -> dict:
    return {
        "method": method, "task": task, "delay": int(delay), "seed": int(seed),
        "return": envs.episode_return(log, spec),
        "solve": int(envs.is_solved(log, spec)),
        "action_delta": metrics.action_delta(log.actions),
        "action_jerk": metrics.action_jerk(log.actions),
        "boundary_jump": metrics.boundary_jump(log),
    }


def evaluate(method: Method, specs, delays, episodes: int, H: int, s: int, solver: SolverConfig,
             master_seed: int = 0, workers: int = 1) -> list[dict]:
    """Rows over the grid task x delay x episode, in that (fixed) order."""
    cells = []
    for spec in specs:
        for d in delays:
            exec_cfg = ExecutionConfig(H=H, s=s, d=int(d), episode_length=spec.episode_length, mode=method.mode)
            for ep in range(episodes):
                cells.append((method, spec, exec_cfg, solver, master_seed, ep))
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, cells, chunksize=max(1, len(cells) // (4 * workers))))
    return [_run_cell(c) for c in cells]
