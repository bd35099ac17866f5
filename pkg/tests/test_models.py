import numpy as np
import pytest

from selective_debias import models
from selective_debias.data import LabeledEmbeddings
from selective_debias.models import (
    ClassifierHead,
    DivergenceError,
    LinearLayer,
    TrainConfig,
    gradient_check,
    hidden_activations,
    init_head,
    loss_and_grads,
    predict_proba,
    softmax,
    train_head,
)
from selective_debias.tensor_core import DimensionError


def blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    x = rng.normal(scale=0.5, size=(n, 2)) + np.where(y[:, None] == 1, 3.0, -3.0)
    return LabeledEmbeddings(x, y, y, 2, 2)


def test_logreg_separates_blobs():
    data = blobs()
    head = train_head(data, (2, 2), TrainConfig(epochs=200))
    assert np.mean(models.predict(head, data.features) == data.labels) >= 0.99
    assert head.loss_history[-1] < head.loss_history[0]


def test_zero_epochs_returns_init():
    head = train_head(blobs(), (2, 2), TrainConfig(epochs=0, seed=5))
    ref = init_head((2, 2), 5)
    np.testing.assert_array_equal(head.layers[0].weight, ref.layers[0].weight)
    assert head.loss_history == ()


def test_training_deterministic():
    cfg = TrainConfig(epochs=5, seed=3)
    a = train_head(blobs(), (2, 4, 2), cfg)
    b = train_head(blobs(), (2, 4, 2), cfg)
    for la, lb in zip(a.layers, b.layers):
        np.testing.assert_array_equal(la.weight, lb.weight)
        np.testing.assert_array_equal(la.bias, lb.bias)


def test_divergence_is_reported():
    data = blobs()
    x = np.asarray(data.features) * 1e200
    big = LabeledEmbeddings(x, data.labels, data.protected, 2, 2)
    with pytest.raises(DivergenceError):
        with np.errstate(all="ignore"):
            train_head(big, (2, 2), TrainConfig(epochs=3, learning_rate=10.0))


def test_architecture_mismatch():
    with pytest.raises(DimensionError):
        train_head(blobs(), (3, 2))


def test_softmax_closed_form():
    np.testing.assert_allclose(softmax(np.array([np.log(2.0), 0.0])), [2 / 3, 1 / 3], atol=1e-12)
    # max subtraction keeps huge logits finite
    assert np.all(np.isfinite(softmax(np.array([1000.0, 0.0]))))


def test_zero_head_is_uniform():
    head = ClassifierHead((LinearLayer(np.zeros((3, 4)), np.zeros(3)),), 3)
    np.testing.assert_allclose(predict_proba(head, np.ones(4)), 1 / 3)


def test_probabilities_sum_to_one():
    head = init_head((5, 7, 3), seed=2)
    p = predict_proba(head, np.random.default_rng(0).normal(size=(50, 5)) * 10)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_hidden_activations_shapes_and_replay():
    head = init_head((4, 3, 2), seed=1)
    acts = hidden_activations(head, np.ones(4))
    assert [a.shape[0] for a in acts] == [4, 3]
    x = np.random.default_rng(1).normal(size=(20, 4))
    last = hidden_activations(head, x)[-1]
    replay = softmax(head.layers[-1](last))
    np.testing.assert_allclose(replay, predict_proba(head, x), atol=1e-12)


def test_identity_layers_pass_non_negative_input():
    eye = LinearLayer(np.eye(3), np.zeros(3))
    head = ClassifierHead((eye, eye), 3)
    x = np.array([0.0, 1.0, 2.5])
    for a in hidden_activations(head, x):
        np.testing.assert_array_equal(a, x)


def test_gradient_check_logreg():
    rng = np.random.default_rng(0)
    head = init_head((6, 3), seed=0)
    x, y = rng.normal(size=(8, 6)), rng.integers(0, 3, 8)
    assert gradient_check(head, x, y) <= 1e-6


def test_gradient_check_mlp():
    rng = np.random.default_rng(1)
    head = init_head((10, 5, 2), seed=1)
    x, y = rng.normal(size=(8, 10)), rng.integers(0, 2, 8)
    assert gradient_check(head, x, y, l2=0.01) <= 1e-5


def test_gradient_check_catches_wrong_gradient(monkeypatch):
    rng = np.random.default_rng(2)
    head = init_head((4, 2), seed=2)
    x, y = rng.normal(size=(8, 4)), rng.integers(0, 2, 8)
    real = models.loss_and_grads

    def wrong(h, xx, yy, l2=0.0):
        loss, grads = real(h, xx, yy, l2)
        return loss, [(2 * gw, gb) for gw, gb in grads]

    monkeypatch.setattr(models, "loss_and_grads", wrong)
    assert gradient_check(head, x, y) > 0.1


def test_zero_weight_bias_gradient():
    rng = np.random.default_rng(3)
    head = ClassifierHead((LinearLayer(np.zeros((3, 4)), np.zeros(3)),), 3)
    x, y = rng.normal(size=(10, 4)), rng.integers(0, 3, 10)
    _, grads = loss_and_grads(head, x, y)
    expected = (np.full((10, 3), 1 / 3) - np.eye(3)[y]).mean(axis=0)
    np.testing.assert_allclose(grads[0][1], expected, atol=1e-15)


def test_head_json_round_trip(tmp_path):
    head = init_head((4, 8, 3), seed=9)
    head.save(tmp_path / "h.json")
    back = ClassifierHead.load(tmp_path / "h.json")
    x = np.random.default_rng(0).normal(size=(5, 4))
    np.testing.assert_array_equal(predict_proba(head, x), predict_proba(back, x))
    assert back.sizes == (4, 8, 3)
