import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backup_shield.backup import pendulum_backup_controller
from backup_shield.dynamics import eval_closed_loop, eval_drift, fd_jacobian, pendulum_plant
from backup_shield.errors import DimensionError, NonFiniteControlError

coords = st.floats(-3.0, 3.0, allow_nan=False)
PLANT = pendulum_plant()


@pytest.fixture
def plant():
    return pendulum_plant()


@pytest.mark.parametrize("x, expected", [
    ((0.0, 0.0), (0.0, 0.0)),
    ((math.pi / 2, 1.0), (1.0, 1.0)),
    ((-math.pi / 2, 0.5), (0.5, -1.0)),
])
def test_drift_examples(plant, x, expected):
    np.testing.assert_allclose(eval_drift(plant, x), expected, atol=1e-15)


def test_closed_loop_examples(plant):
    k_b, _ = pendulum_backup_controller(0.7)
    np.testing.assert_allclose(eval_closed_loop(plant, [0.0, 1.0], lambda x: np.zeros(1)), [1.0, 0.0])
    np.testing.assert_allclose(eval_closed_loop(plant, [0.0, 1.0], k_b), [1.0, -0.7], atol=1e-15)
    np.testing.assert_allclose(eval_closed_loop(plant, [0.3, 0.0], k_b), [0.0, 0.0], atol=1e-15)


def test_dimension_mismatch_rejected(plant):
    with pytest.raises(DimensionError):
        eval_drift(plant, [0.0, 0.0, 0.0])
    with pytest.raises(DimensionError):
        eval_closed_loop(plant, [0.0, 0.0], lambda x: np.zeros(2))


def test_non_finite_controller_reports_state(plant):
    with pytest.raises(NonFiniteControlError) as info:
        eval_closed_loop(plant, [0.1, 0.2], lambda x: np.array([np.nan]))
    np.testing.assert_array_equal(info.value.state, [0.1, 0.2])


@settings(max_examples=50, deadline=None)
@given(coords, coords)
def test_jac_f_matches_finite_differences(x1, x2):
    plant = PLANT
    x = np.array([x1, x2])
    fd = fd_jacobian(plant.f, x)
    np.testing.assert_allclose(plant.jac_f(x), fd, rtol=1e-5, atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(coords, coords)
def test_backup_closed_loop_is_linear(x1, x2):
    plant = PLANT
    K = 0.7
    k_b, _ = pendulum_backup_controller(K)
    field = eval_closed_loop(plant, [x1, x2], k_b)
    np.testing.assert_allclose(field, [x2, -K * x2], atol=1e-12)


def test_batched_evaluation(plant, rng):
    xs = rng.normal(size=(7, 3, 2))
    assert plant.f(xs).shape == (7, 3, 2)
    assert plant.g(xs).shape == (7, 3, 2, 1)
    assert plant.jac_g_cols(xs).shape == (7, 3, 1, 2, 2)
