"""Label-safe image augmentation.

Only photometric changes exist here: additive Gaussian noise, a global
brightness offset and a per-channel offset. Anything geometric (zoom,
shear, rotation, crops, flips) would move the camera pose the image
depicts, so the policy type has no field for it and :func:`augment` never
sees a pose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..render import quantize
from ..rng import numpy_rng


@dataclass(frozen=True)
class AugmentationPolicy:
    noise: bool = True
    noise_sigma: float = 3.0
    brightness: bool = True
    brightness_range: tuple[float, float] = (-10.0, 10.0)
    channel_shift: bool = True
    channel_shift_range: tuple[float, float] = (-8.0, 8.0)

    @classmethod
    def disabled(cls) -> "AugmentationPolicy":
        return cls(noise=False, brightness=False, channel_shift=False)

    @property
    def active(self) -> bool:
        return self.noise or self.brightness or self.channel_shift

    def validate(self) -> None:
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        for lo, hi in (self.brightness_range, self.channel_shift_range):
            if lo > hi:
                raise ValueError("augmentation ranges must satisfy low <= high")


def augment(image: np.ndarray, policy: AugmentationPolicy, seed: int) -> np.ndarray:
    """Apply noise, then brightness, then channel shift; clamp and round back to uint8."""
    policy.validate()
    if not policy.active:
        return image.copy()
    rng = numpy_rng(seed)
    x = image.astype(np.float64)
    if policy.noise:
        x = x + rng.normal(0.0, policy.noise_sigma, size=x.shape)
    if policy.brightness:
        x = x + rng.uniform(*policy.brightness_range)
    if policy.channel_shift:
        x = x + rng.uniform(*policy.channel_shift_range, size=3)
    return quantize(x)
