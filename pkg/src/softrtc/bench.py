"""Steady-state chunk-generation latency for naive, hard and soft sampling."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from softrtc import model as mdl
from softrtc.executor import align_prior
from softrtc.infer import PriorChunk, SolverConfig, generate_chunk
from softrtc.weights import DelayScaled, Offset, Schedule

METHODS = ("naive", "hard", "soft")

# a measured sample shorter than this is dominated by timer overhead
MIN_SAMPLE_SECONDS = 1e-3


@dataclass
class BenchResult:
    method: str
    batch: int
    warmup: int
    iters: int
    inner_reps: int
    mean: float
    median: float
    p95: float
    model_evals: int
    ratio_vs_naive: float = 1.0


class CountingField:
    """Velocity callable that counts model evaluations."""

    def __init__(self, params: mdl.ModelParams):
        self.params = params
        self.calls = 0

    def __call__(self, obs, x, t):
        self.calls += 1
        return mdl.forward(self.params, obs, x, t)


def method_setup(method: str, H: int, s: int, d: int):
    """(rule, schedule, delay, needs_prior) for a benchmark method tag."""
    if method == "naive":
        return Offset(0, H), Schedule.ZEROS, 0, False
    if method == "hard":
        return Offset(0, H), Schedule.ZEROS, d, True
    if method == "soft":
        return DelayScaled(2, 5), Schedule.LINEAR, d, True
    raise ValueError(f"unknown bench method {method!r}; expected one of {METHODS}")


def _fixed_inputs(params: mdl.ModelParams, batch: int, s: int, seed: int):
    cfg = params.config
    rng = np.random.default_rng(seed)
    obs = rng.standard_normal((batch, cfg.obs_dim))
    prev = rng.standard_normal((cfg.horizon, cfg.action_dim))
    p = align_prior(prev, s, cfg.horizon)
    prior = PriorChunk(values=np.broadcast_to(p.values, (batch, cfg.horizon, cfg.action_dim)).copy(), valid=p.valid)
    return obs, prior


def _prepare(method, params, batch, steps, s, d, seed):
    rule, schedule, delay, needs_prior = method_setup(method, params.config.horizon, s, d)
    obs, prior = _fixed_inputs(params, batch, s, seed)
    prior = prior if needs_prior else None
    solver = SolverConfig(steps=steps)
    rng = np.random.default_rng(seed)

    counter = CountingField(params)
    generate_chunk(params, obs, prior, delay, rule, schedule, solver, rng, field=counter)

    def call():
        generate_chunk(params, obs, prior, delay, rule, schedule, solver, rng)

    return call, counter.calls


def _inner_reps(call) -> int:
    reps = 1
    while True:
        tic = time.perf_counter()
        for _ in range(reps):
            call()
        if time.perf_counter() - tic >= MIN_SAMPLE_SECONDS:
            return reps
        reps *= 2


def _sample(call, reps: int) -> float:
    tic = time.perf_counter()
    for _ in range(reps):
        call()
    return (time.perf_counter() - tic) / reps


def _result(method, batch, warmup, iters, reps, samples, evals) -> BenchResult:
    samples = np.asarray(samples)
    return BenchResult(method=method, batch=batch, warmup=warmup, iters=iters, inner_reps=reps,
                       mean=float(samples.mean()), median=float(np.median(samples)),
                       p95=float(np.percentile(samples, 95)), model_evals=evals)


def time_generation(method: str, params: mdl.ModelParams, batch: int = 1, warmup: int = 20, iters: int = 200,
                    steps: int = 5, s: int = 4, d: int = 2, seed: int = 0) -> BenchResult:
    """Warm up, then time `iters` samples of one chunk-generation call on fixed inputs.

    Calls faster than the timer can resolve are repeated inside each sample.
    """
    if warmup < 1 or iters < 10:
        raise ValueError("need warmup >= 1 and iters >= 10")
    call, evals = _prepare(method, params, batch, steps, s, d, seed)
    for _ in range(warmup):
        call()
    reps = _inner_reps(call)
    samples = [_sample(call, reps) for _ in range(iters)]
    return _result(method, batch, warmup, iters, reps, samples, evals)


def run_bench(params: mdl.ModelParams, batches=(1, 32), warmup: int = 20, iters: int = 200,
              steps: int = 5, s: int = 4, d: int = 2, seed: int = 0) -> list[BenchResult]:
    """All methods timed in lockstep, rotating the order every sample.

    Host drift (frequency scaling, noisy neighbours) then lands on every method
    alike instead of on whichever one happened to run during it.
    """
    if warmup < 1 or iters < 10:
        raise ValueError("need warmup >= 1 and iters >= 10")
    out = []
    for batch in batches:
        prepared = {m: _prepare(m, params, batch, steps, s, d, seed) for m in METHODS}
        for m in METHODS:
            for _ in range(warmup):
                prepared[m][0]()
        reps = max(_inner_reps(prepared[m][0]) for m in METHODS)
        samples = {m: [] for m in METHODS}
        for i in range(iters):
            for j in range(len(METHODS)):
                m = METHODS[(i + j) % len(METHODS)]
                samples[m].append(_sample(prepared[m][0], reps))
        results = {m: _result(m, batch, warmup, iters, reps, samples[m], prepared[m][1]) for m in METHODS}
        for m in METHODS:
            results[m].ratio_vs_naive = results[m].median / results["naive"].median
            out.append(results[m])
    return out


def write_report(path, results: list[BenchResult], extra: dict | None = None) -> None:
    doc = {"results": [asdict(r) for r in results]}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
