import numpy as np
import pytest

from softrtc import model as mdl

from conftest import tiny_config


def _inputs(cfg, rng, B=None):
    lead = () if B is None else (B,)
    obs = rng.standard_normal(lead + (cfg.obs_dim,))
    x = rng.standard_normal(lead + (cfg.horizon, cfg.action_dim))
    t = rng.uniform(0, 1, lead + (cfg.horizon,))
    return obs, x, t


def test_param_count_by_hand():
    cfg = tiny_config()  # in = 4 + 3*1 + 3 = 10, hidden 8, out 3
    assert cfg.in_dim == 10 and cfg.out_dim == 3
    assert cfg.num_params() == (10 * 8 + 8) + (8 * 3 + 3)
    assert mdl.init_model(cfg).flat.size == cfg.num_params()


def test_init_deterministic_and_seed_sensitive():
    a = mdl.init_model(tiny_config(seed=3))
    b = mdl.init_model(tiny_config(seed=3))
    c = mdl.init_model(tiny_config(seed=4))
    assert a.flat.tobytes() == b.flat.tobytes()
    assert a.digest() == b.digest() != c.digest()


def test_flatten_roundtrip(tiny_params):
    layers = mdl.unflatten(tiny_params.config, tiny_params.flat)
    assert mdl.flatten(layers).tobytes() == tiny_params.flat.tobytes()


def test_forward_matches_manual_mlp(tiny_params, rng):
    cfg = tiny_params.config
    obs, x, t = _inputs(cfg, rng)
    (W1, b1), (W2, b2) = tiny_params.layers
    z = np.concatenate([obs, x.ravel(), t])
    expect = (np.tanh(z @ W1 + b1) @ W2 + b2).reshape(cfg.horizon, cfg.action_dim)
    np.testing.assert_allclose(mdl.forward(tiny_params, obs, x, t), expect, rtol=0, atol=1e-14)


def test_forward_batch_equals_rows(tiny_params, rng):
    obs, x, t = _inputs(tiny_params.config, rng, B=5)
    batched = mdl.forward(tiny_params, obs, x, t)
    for i in range(5):
        np.testing.assert_allclose(batched[i], mdl.forward(tiny_params, obs[i], x[i], t[i]), rtol=0, atol=1e-14)


def test_forward_rejects_bad_inputs(tiny_params, rng):
    obs, x, t = _inputs(tiny_params.config, rng)
    with pytest.raises(ValueError):
        mdl.forward(tiny_params, obs[:-1], x, t)
    x[0, 0] = np.nan
    with pytest.raises(ValueError):
        mdl.forward(tiny_params, obs, x, t)


def test_backward_matches_finite_differences(rng):
    cfg = tiny_config(hidden=(6, 5))
    params = mdl.init_model(cfg)
    obs, x, t = _inputs(cfg, rng, B=3)
    up = rng.standard_normal((3, cfg.horizon, cfg.action_dim))
    g_p, g_x = mdl.backward(params, obs, x, t, up)

    def f(flat, xx):
        return float(np.sum(mdl.forward(mdl.ModelParams(cfg, flat), obs, xx, t) * up))

    h = 1e-6
    fd = np.empty_like(params.flat)
    for i in range(fd.size):
        e = np.zeros_like(fd)
        e[i] = h
        fd[i] = (f(params.flat + e, x) - f(params.flat - e, x)) / (2 * h)
    np.testing.assert_allclose(g_p, fd, rtol=1e-6, atol=1e-8)
    fdx = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        fdx[idx] = (f(params.flat, x + e) - f(params.flat, x - e)) / (2 * h)
    np.testing.assert_allclose(g_x, fdx, rtol=1e-6, atol=1e-8)


def test_adam_first_step_by_hand(tiny_params):
    n = tiny_params.flat.size
    g = np.linspace(-1, 1, n)
    st = mdl.OptimizerState.zeros(n, lr=0.1)
    new, st2 = mdl.adam_step(tiny_params, g, st)
    # first step: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
    expect = tiny_params.flat - 0.1 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(new.flat, expect, rtol=0, atol=1e-15)
    assert st2.step == 1
    np.testing.assert_allclose(st2.m, 0.1 * g)
    np.testing.assert_allclose(st2.v, 0.001 * g * g)


def test_adam_rejects_nonfinite(tiny_params):
    g = np.zeros(tiny_params.flat.size)
    g[3] = np.inf
    with pytest.raises(FloatingPointError):
        mdl.adam_step(tiny_params, g, mdl.OptimizerState.zeros(g.size))


def test_checkpoint_roundtrip(tmp_path, rng):
    params = mdl.init_model(tiny_config(seed=9))
    params = mdl.ModelParams(params.config, params.flat + rng.standard_normal(params.flat.size) * 1e-3)
    path = tmp_path / "ck.json"
    mdl.save_checkpoint(path, params, meta={"note": 1})
    loaded, meta = mdl.load_checkpoint(path)
    assert loaded.flat.tobytes() == params.flat.tobytes()
    assert loaded.config == params.config
    assert meta == {"note": 1}
    first = path.read_bytes()
    mdl.save_checkpoint(path, loaded, meta=meta)
    assert path.read_bytes() == first


def test_checkpoint_tamper_detected(tmp_path, tiny_params):
    path = tmp_path / "ck.json"
    mdl.save_checkpoint(path, tiny_params)
    text = path.read_text().replace('"params": [', '"params": [1.5, ', 1)
    path.write_text(text)
    with pytest.raises(ValueError):
        mdl.load_checkpoint(path)
