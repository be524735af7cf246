"""Continuity metrics on executed action streams and bootstrap intervals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ContinuityReport:
    action_delta: float
    action_jerk: float
    boundary_jump: float


@dataclass(frozen=True)
class BootstrapCI:
    point: float
    lower: float
    upper: float
    level: float = 0.95
    resamples: int = 10000


def _stream(actions, min_len: int) -> np.ndarray:
    a = np.asarray(actions, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] < min_len:
        raise ValueError(f"need at least {min_len} actions, got {a.shape[0]}")
    return a


def action_delta(actions) -> float:
    """Mean l2 norm of a[t+1] - a[t]."""
    a = _stream(actions, 2)
    return float(np.mean(np.linalg.norm(np.diff(a, axis=0), axis=1)))


def action_jerk(actions) -> float:
    """Mean l2 norm of the second difference a[t+2] - 2 a[t+1] + a[t]."""
    a = _stream(actions, 3)
    return float(np.mean(np.linalg.norm(a[2:] - 2.0 * a[1:-1] + a[:-2], axis=1)))


def boundary_jump(log) -> float:
    """Mean l2 jump between the last old-chunk action and the first new-chunk action."""
    b = np.asarray(log.boundaries, dtype=np.int64)
    if b.size == 0:
        raise ValueError("rollout has no chunk boundaries")
    a = _stream(log.actions, 2)
    return float(np.mean(np.linalg.norm(a[b] - a[b - 1], axis=1)))


def continuity(log) -> ContinuityReport:
    return ContinuityReport(action_delta(log.actions), action_jerk(log.actions), boundary_jump(log))


def bootstrap_ci(values, level: float = 0.95, resamples: int = 10000, seed: int = 0) -> BootstrapCI:
    """Percentile bootstrap of the mean over per-task values."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError("bootstrap needs at least two values")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, v.size, size=(resamples, v.size))
    means = v[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return BootstrapCI(float(v.mean()), float(lo), float(hi), level, resamples)
