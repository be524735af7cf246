"""Soft-conditioning endpoints, token weights and token-wise blending.

A chunk of H tokens splits into three regions for a realized delay d:

    committed prefix   j < d          weight 1
    soft window        d <= j < e     weight g(u), g nonincreasing
    free tail          j >= e         weight 0

The same weights drive the corrupted training input and the blended solver
state at inference, so everything here is pure numpy over small arrays.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Union

import numpy as np


class Schedule(str, enum.Enum):
    LINEAR = "linear"
    ZEROS = "zeros"
    SHIFTED_LINEAR = "shifted_linear"


@dataclass(frozen=True)
class DelayScaled:
    lam: int = 2
    h_max: int = 5

    def __post_init__(self):
        if int(self.lam) != self.lam or self.lam < 1:
            raise ValueError(f"delay multiplier must be an integer >= 1, got {self.lam}")
        if self.h_max < 0:
            raise ValueError(f"h_max must be >= 0, got {self.h_max}")


@dataclass(frozen=True)
class Fixed:
    h: int = 3

    def __post_init__(self):
        if self.h < 0:
            raise ValueError(f"fixed window length must be >= 0, got {self.h}")


@dataclass(frozen=True)
class Offset:
    L: int = 0
    cap: int = 8

    def __post_init__(self):
        if self.L < 0:
            raise ValueError(f"offset length must be >= 0, got {self.L}")


WindowRule = Union[DelayScaled, Fixed, Offset]

RULE_TAGS = {"delay_scaled": DelayScaled, "fixed": Fixed, "offset": Offset}


def rule_tag(rule: WindowRule) -> str:
    for tag, cls in RULE_TAGS.items():
        if isinstance(rule, cls):
            return tag
    raise TypeError(f"not a window rule: {rule!r}")


def make_rule(tag: str, **params) -> WindowRule:
    """Build a window rule from its config tag ("delay_scaled", "fixed", "offset")."""
    try:
        cls = RULE_TAGS[tag]
    except KeyError:
        raise ValueError(f"unknown window rule {tag!r}; expected one of {sorted(RULE_TAGS)}") from None
    return cls(**params)


@dataclass(frozen=True)
class WeightProfile:
    omega: np.ndarray
    d: int
    e: int

    @property
    def horizon(self) -> int:
        return self.omega.shape[0]


def _check_delay(d: int, H: int) -> None:
    if not 0 <= d <= H:
        raise ValueError(f"delay must satisfy 0 <= d <= H={H}, got d={d}")


def endpoint(rule: WindowRule, d: int, H: int) -> int:
    """Token index where the soft window ends.

    The zero-delay endpoint is 0 for every rule. For d > 0 the raw rule value is
    clamped into [d, H] so the window never ends inside the committed prefix.
    """
    _check_delay(d, H)
    if d == 0:
        return 0
    if isinstance(rule, DelayScaled):
        # integer lam and d: ceil(lam * d) is exact
        e = min(int(rule.lam) * d, rule.h_max)
    elif isinstance(rule, Fixed):
        e = max(d, rule.h)
    elif isinstance(rule, Offset):
        if rule.cap > H:
            raise ValueError(f"offset cap {rule.cap} exceeds chunk horizon {H}")
        e = min(d + rule.L, rule.cap)
    else:
        raise TypeError(f"not a window rule: {rule!r}")
    return min(max(e, d), H)


def token_weights(rule: WindowRule, schedule: Schedule | str, d: int, H: int) -> WeightProfile:
    """Weight profile for delay d; the returned array is read-only and shared."""
    return _token_weights(rule, Schedule(schedule), int(d), int(H))


@functools.lru_cache(maxsize=4096)
def _token_weights(rule: WindowRule, schedule: Schedule, d: int, H: int) -> WeightProfile:
    e = endpoint(rule, d, H)
    omega = np.zeros(H, dtype=np.float64)
    omega[:d] = 1.0
    if e > d and schedule is not Schedule.ZEROS:
        j = np.arange(d, e, dtype=np.float64)
        if schedule is Schedule.LINEAR:
            u = (j - d) / (e - d)
        else:
            u = (j - d + 1) / (e - d + 1)
        omega[d:e] = 1.0 - u
    omega.flags.writeable = False
    return WeightProfile(omega=omega, d=d, e=e)


def blend_state(omega, prior: np.ndarray, state: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Token-wise convex combination omega_j * prior[j] + (1 - omega_j) * state[j].

    `omega` is either a WeightProfile or a raw (..., H) array; prior and state
    are (..., H, A). With `valid` given, a positive weight on a token without an
    aligned prior is an error.
    """
    w = omega.omega if isinstance(omega, WeightProfile) else np.asarray(omega, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    state = np.asarray(state, dtype=np.float64)
    if prior.shape != state.shape:
        raise ValueError(f"prior shape {prior.shape} != state shape {state.shape}")
    if w.shape[-1] != state.shape[-2]:
        raise ValueError(f"weights cover {w.shape[-1]} tokens, chunk has {state.shape[-2]}")
    if valid is not None and np.any((w > 0) & ~np.asarray(valid, dtype=bool)):
        raise ValueError("positive weight on a token whose prior is invalid")
    w = w[..., None]
    return w * prior + (1.0 - w) * state


def blend_time(omega, t: float) -> np.ndarray:
    """Per-token flow times omega_j + (1 - omega_j) * t."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"flow time must lie in [0, 1], got {t}")
    w = omega.omega if isinstance(omega, WeightProfile) else np.asarray(omega, dtype=np.float64)
    return w + (1.0 - w) * t
