import numpy as np
import pytest

from softrtc import envs
from softrtc import model as mdl
from softrtc.training import TrainConfig, train

ACCEPTANCE_LINES = []


def record_criterion(number: int, title: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"[{status}] criterion {number:>2}: {title}" + (f" | {detail}" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(obs_dim=4, H=3, A=1, hidden=(8,), seed=0):
    return mdl.ModelConfig(obs_dim=obs_dim, horizon=H, action_dim=A, hidden=hidden, seed=seed)


@pytest.fixture
def tiny_params():
    return mdl.init_model(tiny_config())


@pytest.fixture(scope="session")
def point_mass_demos():
    return envs.generate_demos(envs.EnvSpec(), 40, 8, seed=0)


@pytest.fixture(scope="session")
def trained_point_mass(point_mass_demos):
    """Default-budget policy on PointMassTrack (about 20 s on one core)."""
    cfg = mdl.ModelConfig(obs_dim=envs.obs_dim(8))
    return train(point_mass_demos, TrainConfig(epochs=300, d_max=4), mdl.init_model(cfg))


@pytest.fixture(scope="session")
def small_trained():
    """A quickly trained toy policy: non-degenerate, cheap to roll out."""
    spec = envs.EnvSpec(episode_length=60)
    ds = envs.generate_demos(spec, 4, 8, seed=5)
    cfg = mdl.ModelConfig(obs_dim=envs.obs_dim(8), hidden=(32, 32), seed=5)
    return train(ds, TrainConfig(epochs=20, d_max=4, seed=5), mdl.init_model(cfg)).params
