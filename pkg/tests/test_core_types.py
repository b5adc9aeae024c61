import math

import numpy as np
import pytest

import bagging
from core_types import (
    Bag, BagCollection, ConfigError, Dataset, Prediction, ValidationError, TrainConfig,
    proportions_from_counts, validate_bag, validate_collection,
)


@pytest.fixture
def four_rows():
    return Dataset(np.arange(8, dtype=float).reshape(4, 2), [0, 0, 1, 1], 2)


def test_validate_bag_accepts_consistent_bag(four_rows):
    bag = Bag((0, 1, 2, 3), (2, 2), (0.5, 0.5))
    assert validate_bag(bag, four_rows) == []


def test_validate_bag_flags_proportion_count_mismatch(four_rows):
    bag = Bag((0, 1, 2, 3), (2, 2), (0.6, 0.4))
    violations = validate_bag(bag, four_rows)
    assert "proportions[0]×M ≠ counts[0]" in violations
    assert "proportions[1]×M ≠ counts[1]" in violations


def test_validate_bag_flags_duplicate_index(four_rows):
    bag = Bag((0, 1, 3, 3), (2, 2), (0.5, 0.5))
    assert validate_bag(bag, four_rows) == ["indices not unique"]


def test_validate_bag_reports_every_violation(four_rows):
    bag = Bag((0, 0, 9, 1), (3, 2), (0.5, 0.5))
    violations = validate_bag(bag, four_rows)
    assert "indices not unique" in violations
    assert any("out of range" in v for v in violations)
    assert any("counts sum to 5" in v for v in violations)


def test_validate_bag_checks_counts_against_labels(four_rows):
    bag = Bag.from_counts((0, 1, 2, 3), (3, 1))
    assert "counts do not match dataset labels" in validate_bag(bag, four_rows)


def test_validate_collection_flags_overlap(four_rows):
    a = Bag.from_counts((0, 2), (1, 1))
    b = Bag.from_counts((2, 1), (1, 1))
    violations = validate_collection(BagCollection((a, b)), four_rows)
    assert any("also in bag 0" in v for v in violations)


@pytest.mark.parametrize("counts, expected", [
    ([2, 2], (0.5, 0.5)),
    ([4, 0], (1.0, 0.0)),
    ([1, 3], (0.25, 0.75)),
])
def test_proportions_from_counts(counts, expected):
    assert proportions_from_counts(counts) == expected


def test_proportions_from_counts_rejects_empty_bag():
    with pytest.raises(ValidationError, match="empty bag"):
        proportions_from_counts([0, 0, 0])


def test_proportions_sum_to_one(rng):
    for _ in range(500):
        counts = rng.integers(0, 50, size=int(rng.integers(2, 12)))
        counts[int(rng.integers(0, counts.size))] += 1
        assert abs(math.fsum(proportions_from_counts(counts)) - 1.0) <= 1e-12


def test_generated_bags_always_validate(rng):
    x = rng.standard_normal((97, 3))
    y = rng.integers(0, 5, size=97)
    data = Dataset(x, y, 5)
    for m in (1, 4, 16, 97):
        assert validate_collection(bagging.generate_bags(data, m, seed=m), data) == []


def test_dataset_arrays_are_read_only(four_rows):
    with pytest.raises(ValueError):
        four_rows.features[0, 0] = 1.0


def test_dataset_rejects_out_of_range_labels():
    with pytest.raises(ValidationError):
        Dataset(np.zeros((2, 2)), [0, 2], 2)


def test_prediction_requires_probability_vector():
    assert Prediction([0.5, 0.5]).class_index == 0
    with pytest.raises(ValidationError):
        Prediction([0.7, 0.7])


def test_train_config_collects_field_problems():
    with pytest.raises(ConfigError) as err:
        TrainConfig(beta_b=0.0, beta_i=-1.0, bags_per_step=0, seed=0, workers=1).check()
    assert set(err.value.problems) == {"beta_b", "beta_i", "bags_per_step"}


def test_train_config_defaults_follow_published_settings():
    c = TrainConfig(seed=0, workers=1)
    assert (c.lam, c.beta_b, c.beta_i) == (0.5, 1.0, 1.0)
    assert (c.lr0, c.momentum, c.weight_decay) == (0.03, 0.9, 5e-4)
    assert c.validate() == {}
