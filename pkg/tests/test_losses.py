import math

import numpy as np
import pytest

import dew
import losses
from core_types import DewWeights, Prediction, TrainConfig


def _config(**kw):
    return TrainConfig(seed=0, workers=1, **kw)


def test_predicted_proportion():
    assert np.allclose(losses.predicted_proportion([[0.3, 0.7]]).values, [0.3, 0.7])
    assert np.allclose(losses.predicted_proportion([[1, 0], [0, 1]]).values, [0.5, 0.5])
    three = [[0.2, 0.8], [0.3, 0.7], [0.5, 0.5]]
    assert losses.predicted_proportion(three).values[0] == pytest.approx(1 / 3)


@pytest.mark.parametrize("p, weak, expected", [
    ([1.0, 0.0], [[1.0, 0.0]], 0.0),
    ([0.5, 0.5], [[0.5, 0.5]], math.log(2)),
    ([0.5, 0.5], [[0.25, 0.75]], 0.836988),
])
def test_bag_loss_values(p, weak, expected):
    loss, per_bag, _ = losses.bag_loss([p], [weak])
    assert loss == pytest.approx(expected, abs=1e-6)
    assert per_bag[0] == pytest.approx(expected, abs=1e-6)


def test_bag_loss_gradient_formula(rng):
    weak = rng.dirichlet(np.ones(3), size=(2, 4))
    p = np.array([[0.5, 0.25, 0.25], [0.0, 0.5, 0.5]])
    _, _, grad = losses.bag_loss(p, weak)
    pbar = weak.mean(axis=1)
    expected = -p[:, None, :] / (4 * 2 * pbar[:, None, :])
    assert np.allclose(grad, np.broadcast_to(expected, weak.shape))


def test_bag_loss_respects_gibbs_inequality(rng):
    for _ in range(200):
        c = int(rng.integers(2, 6))
        p = rng.dirichlet(np.ones(c), size=3)
        weak = rng.dirichlet(np.ones(c), size=(3, 5))
        loss, _, _ = losses.bag_loss(p, weak)
        assert loss >= float(np.mean(dew.entropy(p, axis=1))) - 1e-12


@pytest.mark.parametrize("probs, expected", [
    ([0.2, 0.5, 0.3], 1),
    ([0.5, 0.5], 0),
    ([1 / 3, 1 / 3, 1 / 3], 0),
])
def test_harden(probs, expected):
    label = losses.harden(np.array(probs))
    assert label.class_index == expected
    assert sum(label.onehot) == 1
    assert losses.harden(Prediction(probs)).class_index == expected


def test_instance_loss_values():
    strong = np.array([[[0.0, 1.0], [0.5, 0.5]]])
    pseudo = np.array([[1, 0]])
    loss, _, _ = losses.instance_loss(pseudo, strong, np.array([[1.0, 1.0]]))
    assert loss == pytest.approx(math.log(2) / 2)
    zero_weight, _, _ = losses.instance_loss(pseudo, strong, np.array([[1.0, 0.0]]))
    assert zero_weight == 0.0


def test_instance_loss_is_linear_in_weights(rng):
    strong = rng.dirichlet(np.ones(4), size=(3, 5))
    pseudo = rng.integers(0, 4, size=(3, 5))
    w = rng.uniform(size=(3, 5))
    one, _, _ = losses.instance_loss(pseudo, strong, w)
    two, _, _ = losses.instance_loss(pseudo, strong, 2 * w)
    assert two == pytest.approx(2 * one, abs=1e-12)


def test_instance_loss_gradient_touches_only_pseudo_class(rng):
    strong = rng.dirichlet(np.ones(3), size=(1, 2))
    _, _, grad = losses.instance_loss(np.array([[2, 0]]), strong, np.array([[1.0, 0.5]]))
    assert grad[0, 0, 2] == pytest.approx(-1.0 / (2 * strong[0, 0, 2]))
    assert grad[0, 1, 0] == pytest.approx(-0.5 / (2 * strong[0, 1, 0]))
    assert np.count_nonzero(grad) == 2


def _batch(rng, n=2, m=4, c=3):
    weak = rng.dirichlet(np.ones(c), size=(n, m))
    strong = rng.dirichlet(np.ones(c), size=(n, m))
    counts = rng.multinomial(m, np.full(c, 1.0 / c), size=n)
    return counts, weak, strong


def test_total_loss_combines_terms(rng):
    counts, weak, strong = _batch(rng)
    report, grads = losses.total_loss(counts, weak, strong, _config(lam=0.5))
    assert report.total == pytest.approx(report.bag_loss + 0.5 * report.instance_loss, abs=1e-12)
    assert np.all(np.isfinite([report.bag_loss, report.instance_loss, report.total]))
    _, _, grad_i = losses.instance_loss(
        losses.harden_batch(weak), strong, dew.combined_weights(counts, weak, 1.0, 1.0))
    assert np.allclose(grads.strong, 0.5 * grad_i)


def test_zero_lambda_is_bag_loss_only(rng):
    counts, weak, strong = _batch(rng)
    report, grads = losses.total_loss(counts, weak, strong, _config(lam=0.0))
    assert report.total == report.bag_loss
    assert not grads.strong.any()


def test_zero_weights_match_zero_lambda(rng):
    counts, weak, strong = _batch(rng)
    zeros = np.zeros(weak.shape[:2])
    zero_w = DewWeights(zeros, zeros, zeros)
    a, _ = losses.total_loss(counts, weak, strong, _config(lam=0.7), weights=zero_w)
    b, _ = losses.total_loss(counts, weak, strong, _config(lam=0.0))
    assert a.total == b.total


def test_ablation_switches_change_only_instance_term(rng):
    counts, weak, strong = _batch(rng)
    reports = [
        losses.total_loss(counts, weak, strong, _config(
            ablation_use_bag_weight=bw, ablation_use_instance_weight=iw))[0]
        for bw in (True, False) for iw in (True, False)
    ]
    assert len({r.bag_loss for r in reports}) == 1
    assert reports[-1].mean_weight == 1.0


def test_supervised_loss(rng):
    probs = rng.dirichlet(np.ones(3), size=4)
    labels = np.array([0, 1, 2, 1])
    loss, grad = losses.supervised_loss(labels, probs)
    assert loss == pytest.approx(-np.mean(np.log(probs[np.arange(4), labels])))
    assert np.count_nonzero(grad) == 4
