"""Prior-informed corruption and the token-masked flow-matching objective.

For a target chunk A, noise eps and flow time tau, token j is corrupted at its
own time tau_j = w_j + (1 - w_j) * tau, so clamped tokens (w_j = 1) sit at the
data endpoint and free tokens (w_j = 0) follow ordinary flow matching. The loss
weights each token by (1 - w_j) and normalizes per sample:

    sum_j (1 - w_j) |v_j - (A_j - eps_j)|^2 / (sum_j (1 - w_j) + eps_denom)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from softrtc import model as mdl
from softrtc.weights import DelayScaled, Schedule, WindowRule, token_weights

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss."""


@dataclass
class TrainSample:
    obs: np.ndarray
    target: np.ndarray
    d: int = 0


@dataclass
class CorruptedChunk:
    x_omega: np.ndarray
    tau_omega: np.ndarray
    noise: np.ndarray
    tau: float


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 128
    lr: float = 1e-3
    d_max: int = 4
    eps_denom: float = 1e-6
    rule: WindowRule = field(default_factory=DelayScaled)
    schedule: Schedule = Schedule.LINEAR
    seed: int = 0

    def __post_init__(self):
        self.schedule = Schedule(self.schedule)
        if not self.eps_denom > 0:
            raise ValueError("eps_denom must be positive")
        if self.d_max < 0:
            raise ValueError("d_max must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


def corrupt(target, noise, tau, omega) -> CorruptedChunk:
    """Corrupted input for one chunk (H, A) or a batch (B, H, A) with taus (B,)."""
    target = np.asarray(target, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    w = omega.omega if hasattr(omega, "omega") else np.asarray(omega, dtype=np.float64)
    if target.shape != noise.shape or w.shape != target.shape[:-1]:
        raise ValueError(f"shape mismatch: target {target.shape}, noise {noise.shape}, weights {w.shape}")
    tau_arr = np.asarray(tau, dtype=np.float64)
    if np.any(tau_arr < 0) or np.any(tau_arr > 1):
        raise ValueError("tau must lie in [0, 1]")
    tau_w = w + (1.0 - w) * tau_arr[..., None]
    tw = tau_w[..., None]
    x_w = tw * target + (1.0 - tw) * noise
    return CorruptedChunk(x_omega=x_w, tau_omega=tau_w, noise=noise, tau=tau)


def _as_arrays(batch):
    if isinstance(batch, (list, tuple)) and batch and isinstance(batch[0], TrainSample):
        obs = np.stack([s.obs for s in batch])
        targets = np.stack([s.target for s in batch])
        delays = np.array([s.d for s in batch], dtype=np.int64)
        return obs, targets, delays
    obs, targets, delays = batch
    return np.asarray(obs, np.float64), np.asarray(targets, np.float64), np.asarray(delays, np.int64)


def weight_matrix(rule: WindowRule, schedule, delays, H: int) -> np.ndarray:
    cache = {}
    rows = []
    for d in delays:
        d = int(d)
        if d not in cache:
            cache[d] = token_weights(rule, schedule, d, H).omega
        rows.append(cache[d])
    return np.array(rows).reshape(len(rows), H)


def masked_loss(v, target, noise, omega, eps_denom):
    """Batch-mean masked loss and its gradient wrt the velocity v."""
    resid = v - (target - noise)
    sq = np.sum(resid * resid, axis=-1)
    w = 1.0 - omega
    num = np.sum(w * sq, axis=-1)
    den = np.sum(w, axis=-1) + eps_denom
    B = v.shape[0]
    loss = np.mean(num / den)
    g_v = (2.0 / B) * (w / den[:, None])[..., None] * resid
    return loss, g_v


def loss_and_grads(params: mdl.ModelParams, batch, rule: WindowRule, schedule,
                   rng: np.random.Generator, eps_denom: float = 1e-6):
    """Masked flow-matching loss and flat parameter gradients for one batch.

    Draw order is fixed (all noise first, then all taus) so that independent
    reference implementations can replay the same randomness.
    """
    obs, targets, delays = _as_arrays(batch)
    if targets.shape[0] == 0:
        raise ValueError("empty batch")
    B, H, A = targets.shape
    noise = rng.standard_normal((B, H, A))
    tau = rng.uniform(0.0, 1.0, B)
    omega = weight_matrix(rule, schedule, delays, H)
    c = corrupt(targets, noise, tau, omega)
    z, _ = mdl._batch_inputs(params.config, obs, c.x_omega, c.tau_omega)
    layers = params.layers
    out, acts = mdl._forward_pass(layers, z)
    v = out.reshape(B, H, A)
    loss, g_v = masked_loss(v, targets, noise, omega, eps_denom)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}")
    grads, _ = mdl._backward_pass(layers, acts, g_v.reshape(B, H * A))
    return float(loss), grads


@dataclass
class TrainResult:
    params: mdl.ModelParams
    loss_curve: list = field(default_factory=list)  # (step, loss)
    epoch_losses: list = field(default_factory=list)


def train(dataset, config: TrainConfig, init: mdl.ModelParams) -> TrainResult:
    """Adam on the masked objective; delays redrawn per example every epoch."""
    obs, targets = np.asarray(dataset.obs), np.asarray(dataset.chunks)
    N, H, _ = targets.shape
    if N == 0:
        raise ValueError("empty dataset")
    if config.d_max > H:
        raise ValueError(f"d_max={config.d_max} exceeds chunk horizon {H}")
    rng = np.random.default_rng(config.seed)
    params = init.copy()
    opt = mdl.OptimizerState.zeros(params.flat.size, lr=config.lr)
    result = TrainResult(params=params)
    for epoch in range(config.epochs):
        delays = rng.integers(0, config.d_max + 1, size=N)
        order = rng.permutation(N)
        total = 0.0
        for lo in range(0, N, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            loss, grads = loss_and_grads(
                params, (obs[idx], targets[idx], delays[idx]),
                config.rule, config.schedule, rng, config.eps_denom,
            )
            params, opt = mdl.adam_step(params, grads, opt)
            result.loss_curve.append((opt.step, loss))
            total += loss * len(idx)
        result.epoch_losses.append(total / N)
        log.debug("epoch %d loss %.5f", epoch, result.epoch_losses[-1])
    result.params = params
    return result
