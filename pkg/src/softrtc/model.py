"""Fully-connected vector field v(obs, x, t) with per-token flow times.

The network input is the concatenation [obs, flatten(x), t] and the output is
reshaped to the chunk shape (H, A). Hidden layers use tanh, the last layer is
linear. Gradients are computed by hand so the whole package stays numpy-only,
and everything runs in float64 so finite-difference checks are meaningful.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "softrtc-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    obs_dim: int
    horizon: int = 8
    action_dim: int = 2
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        for name in ("obs_dim", "horizon", "action_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden widths must be a nonempty list of positive integers")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.obs_dim + self.horizon * self.action_dim + self.horizon

    @property
    def out_dim(self) -> int:
        return self.horizon * self.action_dim

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.in_dim, *self.hidden, self.out_dim]
        return list(zip(dims[:-1], dims[1:]))

    def num_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_shapes())


@dataclass
class ModelParams:
    """Trainable parameters stored as one flat float64 vector.

    `layers` returns (W, b) views into `flat`, so optimizer updates on the flat
    vector and per-layer access never disagree.
    """

    config: ModelConfig
    flat: np.ndarray

    def __post_init__(self):
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.shape != (self.config.num_params(),):
            raise ValueError(f"expected {self.config.num_params()} parameters, got {self.flat.shape}")

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return unflatten(self.config, self.flat)

    def copy(self) -> ModelParams:
        return ModelParams(self.config, self.flat.copy())

    def digest(self) -> str:
        return hashlib.sha256(self.flat.tobytes()).hexdigest()


def unflatten(config: ModelConfig, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    offset = 0
    for fan_in, fan_out in config.layer_shapes():
        W = flat[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = flat[offset:offset + fan_out]
        offset += fan_out
        layers.append((W, b))
    return layers


def flatten(layers) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in layers])


def init_model(config: ModelConfig) -> ModelParams:
    """Weights ~ N(0, 1/fan_in), biases zero; deterministic in config.seed."""
    rng = np.random.default_rng(config.seed)
    parts = []
    for fan_in, fan_out in config.layer_shapes():
        parts.append(rng.standard_normal((fan_in, fan_out)).ravel() / np.sqrt(fan_in))
        parts.append(np.zeros(fan_out))
    return ModelParams(config, np.concatenate(parts))


def _batch_inputs(config: ModelConfig, obs, x, t):
    obs = np.asarray(obs, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    single = x.ndim == 2
    if single:
        obs, x, t = obs[None], x[None], t[None]
    H, A = config.horizon, config.action_dim
    B = x.shape[0]
    if obs.shape != (B, config.obs_dim) or x.shape != (B, H, A) or t.shape != (B, H):
        raise ValueError(
            f"shape mismatch: obs {obs.shape}, x {x.shape}, t {t.shape} "
            f"for obs_dim={config.obs_dim}, H={H}, A={A}"
        )
    z = np.concatenate([obs, x.reshape(B, H * A), t], axis=1)
    if not np.isfinite(z).all():
        raise ValueError("non-finite model input")
    return z, single


def _forward_pass(layers, z):
    """Returns the output and the per-layer inputs needed by the backward pass."""
    acts = [z]
    h = z
    for W, b in layers[:-1]:
        h = np.tanh(h @ W + b)
        acts.append(h)
    W, b = layers[-1]
    return h @ W + b, acts


def _backward_pass(layers, acts, g_out):
    """Reverse pass; returns (flat param grads, grad wrt the network input)."""
    grads = []
    g = g_out
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        h_in = acts[i]
        grads.append((h_in.T @ g, g.sum(axis=0)))
        g = g @ W.T
        if i > 0:
            # acts[i] = tanh(pre), d tanh = 1 - tanh^2
            g = g * (1.0 - h_in * h_in)
    grads.reverse()
    return flatten(grads), g


def forward(params: ModelParams, obs, x, t) -> np.ndarray:
    """Velocity for a chunk (H, A) or a batch of chunks (B, H, A)."""
    cfg = params.config
    z, single = _batch_inputs(cfg, obs, x, t)
    out, _ = _forward_pass(params.layers, z)
    out = out.reshape(-1, cfg.horizon, cfg.action_dim)
    return out[0] if single else out


def backward(params: ModelParams, obs, x, t, upstream) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of <forward(params, obs, x, t), upstream> wrt the flat params and x."""
    cfg = params.config
    z, single = _batch_inputs(cfg, obs, x, t)
    upstream = np.asarray(upstream, dtype=np.float64)
    if single:
        upstream = upstream[None]
    B = z.shape[0]
    if upstream.shape != (B, cfg.horizon, cfg.action_dim):
        raise ValueError(f"upstream shape {upstream.shape} does not match output")
    layers = params.layers
    _, acts = _forward_pass(layers, z)
    g_params, g_z = _backward_pass(layers, acts, upstream.reshape(B, -1))
    lo = cfg.obs_dim
    g_x = g_z[:, lo:lo + cfg.horizon * cfg.action_dim].reshape(B, cfg.horizon, cfg.action_dim)
    return g_params, (g_x[0] if single else g_x)


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **hyper) -> OptimizerState:
        return cls(m=np.zeros(n), v=np.zeros(n), **hyper)


def adam_step(params: ModelParams, grads: np.ndarray, state: OptimizerState) -> tuple[ModelParams, OptimizerState]:
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.flat.shape:
        raise ValueError(f"gradient shape {grads.shape} != parameter shape {params.flat.shape}")
    if not np.isfinite(grads).all():
        raise FloatingPointError("non-finite gradient")
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    flat = params.flat - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = OptimizerState(m, v, step, state.lr, state.beta1, state.beta2, state.eps)
    return ModelParams(params.config, flat), new_state


def save_checkpoint(path, params: ModelParams, meta: dict | None = None) -> None:
    """JSON dump of config + flat params; float repr round-trips bit-exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "params_sha256": params.digest(),
        "meta": meta or {},
        "params": params.flat.tolist(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a softrtc checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    cfg = ModelConfig(**doc["config"])
    params = ModelParams(cfg, np.array(doc["params"], dtype=np.float64))
    if params.digest() != doc["params_sha256"]:
        raise ValueError(f"{path}: parameter hash mismatch")
    return params, doc.get("meta", {})
