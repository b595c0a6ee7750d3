import numpy as np
import pytest

from fedgems.models.classifier import LINEAR, AdamState, Classifier, TrainableModel, param_count
from fedgems.models.experiment import OptimizerConfig
from fedgems.services import optimizer


def _zero_model() -> Classifier:
    return Classifier(LINEAR, 1, 0, 2, np.zeros(param_count(1, 0, 2)))


def test_zero_gradient_is_a_fixed_point():
    model = Classifier.create(3, 2, 2, np.random.default_rng(0))
    new, state = optimizer.adam_step(model, np.zeros(model.size), AdamState.zeros(model.size), OptimizerConfig())
    np.testing.assert_array_equal(new.params, model.params)
    assert state.t == 1


def test_first_step_moves_by_learning_rate():
    model = _zero_model()
    grad = np.zeros(model.size)
    grad[0] = 1.0
    new, state = optimizer.adam_step(model, grad, AdamState.zeros(model.size), OptimizerConfig(learning_rate=0.001))
    assert new.params[0] == pytest.approx(-0.001, rel=1e-6)
    np.testing.assert_array_equal(new.params[1:], 0.0)
    np.testing.assert_allclose(state.m[0], 0.1)
    np.testing.assert_allclose(state.v[0], 0.001)


def test_step_is_pure_and_deterministic():
    rng = np.random.default_rng(1)
    model = Classifier.create(3, 0, 2, rng)
    grad = rng.normal(size=model.size)
    state = AdamState.zeros(model.size)
    before = model.params.copy()
    a = optimizer.adam_step(model, grad, state, OptimizerConfig())
    b = optimizer.adam_step(model, grad, state, OptimizerConfig())
    np.testing.assert_array_equal(a[0].params, b[0].params)
    np.testing.assert_array_equal(model.params, before)
    assert state.t == 0


def test_shape_mismatch():
    model = _zero_model()
    with pytest.raises(ValueError):
        optimizer.adam_step(model, np.zeros(model.size + 1), AdamState.zeros(model.size), OptimizerConfig())


def test_apply_updates_trainable_in_place():
    tm = TrainableModel(_zero_model())
    optimizer.apply(tm, np.ones(tm.model.size), OptimizerConfig(learning_rate=0.01))
    optimizer.apply(tm, np.ones(tm.model.size), OptimizerConfig(learning_rate=0.01))
    assert tm.opt.t == 2
    np.testing.assert_allclose(tm.model.params, -0.02, rtol=1e-6)
