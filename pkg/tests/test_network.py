import numpy as np
import pytest

from fedgems.models.classifier import HIDDEN, LINEAR, Classifier, param_count
from fedgems.models.dataset import Dataset
from fedgems.services.losses import cross_entropy, kl_divergence, softmax
from fedgems.services.network import LossSpec, accuracy, batch_logits, forward, forward_backward


def _random_spec(kind: str, rng, n: int, c: int, temperature: float = 1.0) -> LossSpec:
    labels = rng.integers(0, c, size=n)
    targets = softmax(rng.normal(size=(n, c)) * 2.0)
    if kind == "ce":
        return LossSpec.ce(labels, c)
    if kind == "composite":
        return LossSpec.composite(float(rng.uniform(0.0, 1.0)), labels, targets, temperature)
    # per-row weights, as the server mixes branches inside one batch
    return LossSpec.mixed(labels, rng.choice([1.0, 0.75, 0.0], size=n), targets, temperature)


def _finite_difference(model: Classifier, x, spec: LossSpec, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros(model.size)
    for i in range(model.size):
        plus = model.params.copy()
        minus = model.params.copy()
        plus[i] += h
        minus[i] -= h
        lp = forward_backward(model.with_params(plus), x, spec)[0]
        lm = forward_backward(model.with_params(minus), x, spec)[0]
        grad[i] = (lp - lm) / (2 * h)
    return grad


@pytest.mark.parametrize("hidden", [0, 5])
@pytest.mark.parametrize("loss_kind", ["ce", "composite", "mixed"])
@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(hidden, loss_kind, seed):
    rng = np.random.default_rng(seed)
    model = Classifier.create(4, hidden, 3, rng)
    x = rng.normal(size=(3, 4))
    temperature = 1.0 if seed % 2 == 0 else 2.0
    spec = _random_spec(loss_kind, rng, 3, 3, temperature)
    _, grad, _ = forward_backward(model, x, spec)
    numeric = _finite_difference(model, x, spec)
    err = np.linalg.norm(grad - numeric) / max(np.linalg.norm(grad) + np.linalg.norm(numeric), 1e-12)
    assert err < 1e-4


def test_ce_logit_gradient_is_p_minus_y():
    model = Classifier(LINEAR, 2, 0, 2, np.zeros(param_count(2, 0, 2)))
    loss, grad, z = forward_backward(model, np.array([0.3, -1.2]), LossSpec.ce([0], 2))
    np.testing.assert_allclose(z, [0.0, 0.0])
    # bias gradient equals dloss/dlogits
    np.testing.assert_allclose(grad[-2:], [-0.5, 0.5])
    assert loss == pytest.approx(np.log(2))


def test_composite_with_weight_one_is_cross_entropy():
    rng = np.random.default_rng(3)
    model = Classifier.create(4, 5, 3, rng)
    x = rng.normal(size=(6, 4))
    labels = rng.integers(0, 3, size=6)
    targets = softmax(rng.normal(size=(6, 3)))
    loss_ce, grad_ce, _ = forward_backward(model, x, LossSpec.ce(labels, 3))
    loss_mix, grad_mix, _ = forward_backward(model, x, LossSpec.composite(1.0, labels, targets))
    assert loss_mix == pytest.approx(loss_ce, abs=1e-12)
    np.testing.assert_allclose(grad_mix, grad_ce, atol=1e-12)


def test_composite_with_weight_zero_is_kl():
    rng = np.random.default_rng(4)
    model = Classifier.create(4, 0, 3, rng)
    x = rng.normal(size=(5, 4))
    labels = rng.integers(0, 3, size=5)
    targets = softmax(rng.normal(size=(5, 3)))
    loss, _, z = forward_backward(model, x, LossSpec.composite(0.0, labels, targets))
    assert loss == pytest.approx(float(np.mean(kl_divergence(targets, softmax(z)))), abs=1e-12)


def test_matching_targets_give_zero_kl_gradient():
    rng = np.random.default_rng(5)
    model = Classifier.create(4, 3, 3, rng)
    x = rng.normal(size=(4, 4))
    targets = softmax(forward(model, x))
    loss, grad, _ = forward_backward(model, x, LossSpec.composite(0.0, [0, 1, 2, 0], targets))
    assert loss == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(grad, 0.0, atol=1e-12)


def test_single_sample_returns_vector_logits():
    model = Classifier.create(4, 0, 3)
    loss, grad, z = forward_backward(model, np.ones(4), LossSpec.ce([1], 3))
    assert z.shape == (3,)
    assert grad.shape == (model.size,)
    assert loss == pytest.approx(cross_entropy(z, 1))


def test_dimension_mismatch():
    model = Classifier.create(4, 0, 3)
    with pytest.raises(ValueError):
        forward(model, np.ones(5))
    with pytest.raises(ValueError):
        forward_backward(model, np.ones((2, 5)), LossSpec.ce([0, 1], 3))
    with pytest.raises(ValueError):
        LossSpec.composite(1.5, [0], [[0.5, 0.25, 0.25]])


def test_classifier_validation():
    with pytest.raises(ValueError):
        Classifier(LINEAR, 4, 2, 3, np.zeros(param_count(4, 2, 3)))
    with pytest.raises(ValueError):
        Classifier(HIDDEN, 4, 2, 3, np.zeros(5))
    assert Classifier.create(4, 2, 3).kind == HIDDEN


def test_hidden_layout_is_row_major():
    model = Classifier.create(3, 2, 4, np.random.default_rng(0))
    w1, b1, w2, b2 = model.unpack()
    assert w1.shape == (3, 2) and b1.shape == (2,) and w2.shape == (2, 4) and b2.shape == (4,)
    np.testing.assert_array_equal(w1.ravel(), model.params[:6])


def test_batch_logits_and_accuracy():
    rng = np.random.default_rng(0)
    model = Classifier.create(2, 0, 2, rng)
    x = rng.normal(size=(50, 2))
    np.testing.assert_allclose(batch_logits(model, x, 7), forward(model, x))
    ds = Dataset(x, np.argmax(forward(model, x), axis=1), 2)
    assert accuracy(model, ds) == 1.0
    assert np.isnan(accuracy(model, ds.subset(np.array([], dtype=int))))
