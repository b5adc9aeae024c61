"""
Weak and strong perturbation policies for feature vectors.

Weak views get small Gaussian noise; strong views get larger noise followed
by random feature dropout. Randomness always comes from an explicit
numpy Generator owned by the caller.
"""
from dataclasses import dataclass
from typing import Union

import numpy as np

from core_types import ValidationError

WEAK = "weak"
STRONG = "strong"


@dataclass(frozen=True, eq=False)
class AugmentPolicy:
    kind: str
    noise_sigma: Union[float, np.ndarray] = 0.0
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in (WEAK, STRONG):
            raise ValidationError(f"unknown augmentation kind {self.kind!r}")
        if np.any(np.asarray(self.noise_sigma) < 0):
            raise ValidationError("noise_sigma must be >= 0")
        if not 0 <= self.dropout_rate < 1:
            raise ValidationError("dropout_rate must lie in [0, 1)")
        if self.kind == WEAK and self.dropout_rate != 0:
            raise ValidationError("weak policy must have dropout_rate = 0")


def apply(policy: AugmentPolicy, x, rng: np.random.Generator) -> np.ndarray:
    """Perturb a feature vector (or each row of a matrix).

    Draw order is fixed: one normal draw per coordinate, then (strong only)
    one uniform draw per coordinate; a coordinate is zeroed when its uniform
    draw is below dropout_rate.
    """
    x = np.asarray(x, dtype=np.float64)
    out = x + policy.noise_sigma * rng.standard_normal(x.shape)
    if policy.kind == STRONG:
        keep = rng.random(x.shape) >= policy.dropout_rate
        out = np.where(keep, out, 0.0)
    return out


def policies_for(config, feature_std):
    """Build (weak, strong) policies scaled by the per-feature training std."""
    std = np.asarray(feature_std, dtype=np.float64)
    weak = AugmentPolicy(WEAK, config.weak_noise_sigma * std)
    strong = AugmentPolicy(STRONG, config.strong_noise_sigma * std, config.strong_dropout_rate)
    return weak, strong
