"""Multi-method experiments: base policy, training-time RTC fine-tunes, frontier."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from softrtc import envs
from softrtc import model as mdl
from softrtc.executor import Method, evaluate
from softrtc.infer import SolverConfig
from softrtc.training import TrainConfig, train
from softrtc.weights import DelayScaled, Offset, Schedule

log = logging.getLogger(__name__)


def aggregate(rows: list[dict], keys=("method", "task", "delay")) -> list[dict]:
    """Per-cell means of the per-episode result rows, in first-seen order."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key, rs in groups.items():
        cell = dict(zip(keys, key))
        cell["episodes"] = len(rs)
        for col in ("return", "solve", "action_delta", "action_jerk", "boundary_jump"):
            cell[col] = float(np.mean([r[col] for r in rs]))
        out.append(cell)
    return out


@dataclass(frozen=True)
class FrontierSetup:
    """Desk-scale analog of the hard/soft/offset comparison at high delay.

    H=12 keeps the soft windows inside the valid overlap H - s at d=4; with
    H=8 and s=4 every soft token at d=4 would lack an aligned prior.
    """

    task: str = "mode_switch"
    H: int = 12
    s: int = 4
    delay: int = 4
    demo_episodes: int = 40
    base_epochs: int = 300
    finetune_epochs: int = 60
    d_max: int = 4
    episodes: int = 32
    offsets: tuple[int, ...] = (1, 2, 3, 4)
    offset_cap: int = 8
    soft_lam: int = 2
    soft_h_max: int = 5
    steps: int = 5


def frontier_methods(setup: FrontierSetup, seed: int):
    """Train the base policy and its fine-tunes for one seed.

    Returns (name, params, mode, rule, schedule) tuples; the base policy runs
    naive execution, every fine-tune runs with its training window at inference.
    """
    spec = envs.EnvSpec(kind=setup.task)
    ds = envs.generate_demos(spec, setup.demo_episodes, setup.H, seed=10_000 + seed)
    cfg = mdl.ModelConfig(obs_dim=envs.obs_dim(setup.H), horizon=setup.H, seed=seed)
    base = train(ds, TrainConfig(epochs=setup.base_epochs, d_max=0, seed=seed), mdl.init_model(cfg)).params
    variants = [("train_hard", Offset(0, setup.offset_cap), Schedule.ZEROS),
                ("train_soft", DelayScaled(setup.soft_lam, setup.soft_h_max), Schedule.LINEAR)]
    variants += [(f"offset_L{L}", Offset(L, setup.offset_cap), Schedule.LINEAR) for L in setup.offsets]
    out = [("base_naive", base, "naive", Offset(0, setup.offset_cap), Schedule.ZEROS)]
    for name, rule, schedule in variants:
        tc = TrainConfig(epochs=setup.finetune_epochs, d_max=setup.d_max, rule=rule, schedule=schedule, seed=seed)
        out.append((name, train(ds, tc, base).params, "rtc", rule, schedule))
    return out


def run_frontier(setup: FrontierSetup, seeds, workers: int = 1) -> list[dict]:
    """Per-(method, seed) cell summaries at the configured delay."""
    spec = envs.EnvSpec(kind=setup.task)
    rows = []
    for seed in seeds:
        for name, params, mode, rule, schedule in frontier_methods(setup, seed):
            m = Method(name, params, mode, rule, schedule)
            ep_rows = evaluate(m, [spec], [setup.delay], setup.episodes, setup.H, setup.s,
                               SolverConfig(steps=setup.steps), master_seed=seed, workers=workers)
            cell = aggregate(ep_rows)[0]
            cell["train_seed"] = seed
            rows.append(cell)
            log.info("seed %d %-12s solve %.3f jerk %.4f", seed, name, cell["solve"], cell["action_jerk"])
    return rows


def median_by_method(rows: list[dict]) -> dict[str, dict]:
    out: dict[str, dict] = {}
    for name in dict.fromkeys(r["method"] for r in rows):
        rs = [r for r in rows if r["method"] == name]
        out[name] = {col: float(np.median([r[col] for r in rs]))
                     for col in ("return", "solve", "action_delta", "action_jerk", "boundary_jump")}
    return out


def count_inversions(seq, decreasing: bool = True) -> int:
    """Adjacent pairs that go against the expected direction."""
    seq = list(seq)
    if decreasing:
        return sum(b > a for a, b in zip(seq, seq[1:]))
    return sum(b < a for a, b in zip(seq, seq[1:]))
