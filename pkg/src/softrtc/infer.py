"""Explicit-Euler chunk sampling with token-wise prior blending.

Before every solver step the state and the flow time are blended toward the
aligned previous chunk:

    x~_k = w * Y + (1 - w) * x_k
    t~_k = w + (1 - w) * k / T
    x_{k+1} = x~_k + v(obs, x~_k, t~_k) / T

With w == 0 this is plain Euler flow sampling; with binary w it is hard
training-time RTC. The returned chunk is x_T as produced by the last step.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from softrtc import model as mdl
from softrtc.weights import Schedule, WindowRule, token_weights


@dataclass(frozen=True)
class SolverConfig:
    steps: int = 5
    seed: int = 0
    trace: bool = False
    post_blend: bool = False

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("solver needs at least one flow step")


@dataclass
class PriorChunk:
    values: np.ndarray  # (H, A) or (B, H, A)
    valid: np.ndarray   # (H,) bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != (self.values.shape[-2],):
            raise ValueError("validity mask must have one entry per token")


@dataclass
class TraceStep:
    x_blend: np.ndarray
    t_blend: np.ndarray
    x: np.ndarray


def effective_weights(rule: WindowRule, schedule, d: int, H: int, prior: PriorChunk | None) -> np.ndarray:
    """Token weights for delay d, zeroed where the prior has no aligned action."""
    valid = None if prior is None else prior.valid.tobytes()
    return _plan(rule, Schedule(schedule), int(d), int(H), 1, valid).omega


@dataclass(frozen=True)
class _Plan:
    omega: np.ndarray
    blend: bool
    w: np.ndarray            # chunk-shaped weights
    one_minus_w: np.ndarray  # chunk-shaped 1 - w
    t_rows: np.ndarray       # (T, *batch, H) blended flow time per solver step


@functools.lru_cache(maxsize=4096)
def _plan(rule, schedule, d, H, steps, valid, shape=None) -> _Plan:
    """Everything about a solve that depends on the weights but not on the data.

    `shape` is the chunk shape (*batch, H, A); weights and times are materialized
    at that shape so the solver loop only runs same-shape elementwise ops.
    """
    omega = token_weights(rule, schedule, d, H).omega
    if valid is None:
        if omega.any():
            raise ValueError(f"delay {d} puts weight on the prior but no prior was given")
    else:
        omega = omega * np.frombuffer(valid, dtype=bool)
    t_k = np.arange(steps)[:, None] / steps
    blend = valid is not None and bool(omega.any())
    if blend:
        t_grid = omega + (1.0 - omega) * t_k
    else:
        t_grid = np.repeat(t_k, H, axis=1)
    shape = shape or (H, 1)
    w = np.broadcast_to(omega[:, None], shape).copy()
    t_rows = np.broadcast_to(t_grid.reshape((steps,) + (1,) * (len(shape) - 2) + (H,)),
                             (steps,) + tuple(shape[:-1])).copy()
    one_minus_w = 1.0 - w
    for a in (omega, w, one_minus_w, t_rows):
        a.flags.writeable = False
    return _Plan(omega, blend, w, one_minus_w, t_rows)


def _solve(field, obs, prior_values, plan: _Plan, x0, record):
    """Shared Euler loop; `field(obs, x, t)` returns the velocity."""
    trace = [] if record else None
    x = x0
    steps = plan.t_rows.shape[0]
    dt = 1.0 / steps
    blend = plan.blend
    if blend:
        w_prior = plan.w * prior_values
        one_minus_w = plan.one_minus_w
    for k in range(steps):
        x_b = w_prior + one_minus_w * x if blend else x
        t_b = plan.t_rows[k]
        v = field(obs, x_b, t_b)
        if record:
            trace.append(TraceStep(x_blend=x_b, t_blend=np.array(t_b), x=x))
        x = x_b + dt * v
        if not np.isfinite(x).all():
            raise FloatingPointError(f"non-finite solver state at step {k}")
    return x, trace


def _run(params, obs, prior, d, rule, schedule, solver, rng, field, record):
    cfg = params.config
    H, A = cfg.horizon, cfg.action_dim
    obs = np.asarray(obs, dtype=np.float64)
    valid = None if prior is None else prior.valid.tobytes()
    shape = obs.shape[:-1] + (H, A)
    plan = _plan(rule, Schedule(schedule), int(d), H, solver.steps, valid, shape)
    x0 = rng.standard_normal(shape)
    if field is None:
        field = lambda o, x, t: mdl.forward(params, o, x, t)  # noqa: E731
    prior_values = None if prior is None else prior.values
    x, trace = _solve(field, obs, prior_values, plan, x0, record)
    if solver.post_blend and prior_values is not None:
        x = plan.w * prior_values + plan.one_minus_w * x
    return x, trace


def generate_chunk(params: mdl.ModelParams, obs, prior: PriorChunk | None, d: int, rule: WindowRule,
                   schedule: Schedule | str, solver: SolverConfig, rng: np.random.Generator,
                   field=None) -> np.ndarray:
    """Sample one action chunk (or a batch, if obs carries a leading batch axis).

    `field` overrides the velocity callable, e.g. to count model evaluations.
    """
    x, _ = _run(params, obs, prior, d, rule, schedule, solver, rng, field, record=False)
    return x


def solver_trace(params: mdl.ModelParams, obs, prior: PriorChunk | None, d: int, rule: WindowRule,
                 schedule: Schedule | str, solver: SolverConfig, rng: np.random.Generator,
                 field=None) -> tuple[np.ndarray, list[TraceStep]]:
    """Like generate_chunk, but also returns (x~_k, t~_k, x_k) for every step."""
    return _run(params, obs, prior, d, rule, schedule, solver, rng, field, record=True)
