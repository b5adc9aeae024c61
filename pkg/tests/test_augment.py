import numpy as np
import pytest

import augment
from augment import AugmentPolicy
from core_types import TrainConfig, ValidationError


def test_identity_policy_returns_input(rng):
    x = rng.standard_normal(6)
    for kind in ("weak", "strong"):
        out = augment.apply(AugmentPolicy(kind), x, np.random.default_rng(0))
        assert np.array_equal(out, x)


def test_same_generator_state_same_output(rng):
    x = rng.standard_normal((5, 3))
    policy = AugmentPolicy("strong", 0.3, 0.4)
    a = augment.apply(policy, x, np.random.default_rng(11))
    b = augment.apply(policy, x, np.random.default_rng(11))
    assert np.array_equal(a, b)


def test_strong_dropout_replays_seeded_draws():
    x = np.arange(1.0, 9.0)
    policy = AugmentPolicy("strong", 0.0, 0.25)
    out = augment.apply(policy, x, np.random.default_rng(42))
    replay = np.random.default_rng(42)
    replay.standard_normal(8)
    dropped = replay.random(8) < 0.25
    assert np.array_equal(out == 0.0, dropped)
    assert np.array_equal(out[~dropped], x[~dropped])


def test_weak_policy_rejects_dropout():
    with pytest.raises(ValidationError):
        AugmentPolicy("weak", 0.1, 0.2)


def test_strong_perturbs_at_least_as_much_as_weak():
    x = np.ones((20000, 1))
    weak = augment.apply(AugmentPolicy("weak", 0.5), x, np.random.default_rng(1))
    strong = augment.apply(AugmentPolicy("strong", 0.5, 0.3), x, np.random.default_rng(2))
    assert np.mean((strong - x) ** 2) >= np.mean((weak - x) ** 2)


def test_policies_scale_with_feature_std():
    config = TrainConfig(seed=0, workers=1)
    weak, strong = augment.policies_for(config, np.array([1.0, 2.0]))
    assert np.allclose(weak.noise_sigma, [0.05, 0.1])
    assert np.allclose(strong.noise_sigma, [0.15, 0.3])
    assert strong.dropout_rate == 0.2
