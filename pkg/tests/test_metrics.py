from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from softrtc.metrics import action_delta, action_jerk, bootstrap_ci, boundary_jump


def test_unit_examples():
    const = np.tile([0.3, -1.2], (10, 1))
    assert action_delta(const) == 0.0 and action_jerk(const) == 0.0
    affine = np.arange(10.0)[:, None] * np.array([[0.5, -2.0]]) + 1.0
    assert action_jerk(affine) == 0.0
    assert action_delta([(0.0, 0.0), (3.0, 4.0)]) == 5.0


def test_jerk_example():
    # second difference of [0, 1, 0] is -2
    assert action_jerk([0.0, 1.0, 0.0]) == 2.0


def test_too_short_streams():
    with pytest.raises(ValueError):
        action_delta([[1.0, 2.0]])
    with pytest.raises(ValueError):
        action_jerk([[1.0], [2.0]])


floats = st.floats(-100, 100, allow_nan=False)


@given(st.lists(st.tuples(floats, floats), min_size=3, max_size=20), st.tuples(floats, floats))
def test_translation_invariance(stream, offset):
    a = np.array(stream)
    b = a + np.array(offset)
    assert action_delta(b) == pytest.approx(action_delta(a), abs=1e-9)
    assert action_jerk(b) == pytest.approx(action_jerk(a), abs=1e-9)


def test_boundary_jump_example():
    log = SimpleNamespace(actions=np.array([[0.0, 0], [0, 0], [3, 4], [3, 4], [3, 5]]), boundaries=[2, 4])
    assert boundary_jump(log) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        boundary_jump(SimpleNamespace(actions=log.actions, boundaries=[]))


def test_bootstrap_constant_values():
    ci = bootstrap_ci([2.0] * 5)
    assert ci.point == ci.lower == ci.upper == 2.0


def test_bootstrap_brackets_mean_and_is_deterministic():
    v = np.random.default_rng(0).normal(1.0, 1.0, 50)
    a, b = bootstrap_ci(v, seed=3), bootstrap_ci(v, seed=3)
    assert a == b
    assert a.lower < a.point < a.upper
    # percentile interval of the mean roughly spans +-1.96 standard errors
    se = v.std(ddof=1) / np.sqrt(v.size)
    assert a.upper - a.lower == pytest.approx(2 * 1.96 * se, rel=0.15)


def test_bootstrap_coverage():
    rng = np.random.default_rng(1)
    hits = 0
    for i in range(200):
        ci = bootstrap_ci(rng.normal(0.0, 1.0, 40), resamples=2000, seed=i)
        hits += ci.lower <= 0.0 <= ci.upper
    assert 0.88 <= hits / 200 <= 0.99


def test_bootstrap_needs_two_values():
    with pytest.raises(ValueError):
        bootstrap_ci([1.0])
