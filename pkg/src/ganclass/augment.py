"""On-the-fly stochastic image transforms for the training data path.

Each enabled transform fires independently with the configured probability,
so some images in an epoch pass through untouched and the transform mask for
a given image changes from epoch to epoch. The stored dataset is never
modified and its size never changes; the test-time path must simply not call
``augment``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor

KNOWN_TRANSFORMS = ("hflip", "vflip", "rotate", "noise")
EXACT_ANGLES = (90, 180, 270)


@dataclass(frozen=True)
class AugmentConfig:
    """Which transforms run, how often, and with which parameters."""

    probability: float = 0.5
    transforms: tuple[str, ...] = KNOWN_TRANSFORMS
    angles: tuple[int, ...] = EXACT_ANGLES
    noise_sigma: float = 0.05

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0):
            raise ValueError(f"probability must be in [0, 1], got {self.probability}")
        for t in self.transforms:
            if t not in KNOWN_TRANSFORMS:
                raise ValueError(f"unknown transform {t!r}; known: {KNOWN_TRANSFORMS}")
        for a in self.angles:
            if a not in EXACT_ANGLES:
                raise ValueError(f"angle {a} not a multiple of 90 in {EXACT_ANGLES}")
        if not self.angles:
            raise ValueError("angles must not be empty")
        if self.noise_sigma < 0.0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def _check_image(image: Tensor) -> None:
    if image.ndim != 3 or image.shape[0] != 1:
        raise ValueError(f"expected [1,S,S] grayscale image, got shape {image.shape}")


def hflip(image: Tensor) -> Tensor:
    """Mirror left-right."""
    _check_image(image)
    return Tensor(image.data[:, :, ::-1].copy())


def vflip(image: Tensor) -> Tensor:
    """Mirror top-bottom."""
    _check_image(image)
    return Tensor(image.data[:, ::-1, :].copy())


def rotate(image: Tensor, angle: int) -> Tensor:
    """Rotate a square image clockwise by an exact multiple of 90 degrees.

    Pure pixel permutation, no interpolation.
    """
    _check_image(image)
    if image.shape[1] != image.shape[2]:
        raise ValueError(f"rotate requires a square image, got {image.shape}")
    if angle not in EXACT_ANGLES:
        raise ValueError(f"angle must be one of {EXACT_ANGLES}, got {angle}")
    k = angle // 90
    return Tensor(np.rot90(image.data, k=-k, axes=(1, 2)).copy())


def add_noise(image: Tensor, sigma: float, rng: np.random.Generator) -> Tensor:
    """Add seeded Gaussian noise and clamp back to [-1, 1]."""
    _check_image(image)
    if sigma < 0.0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return image
    noisy = image.data + rng.normal(0.0, sigma, size=image.shape)
    return Tensor(np.clip(noisy, -1.0, 1.0).astype(image.data.dtype))


def augment(image: Tensor, config: AugmentConfig, rng: np.random.Generator) -> Tensor:
    """Apply each enabled transform independently with probability ``config.probability``.

    The input tensor is never modified; when no transform fires the input is
    returned as-is (bit-identical).
    """
    _check_image(image)
    out = image
    p = config.probability
    for name in KNOWN_TRANSFORMS:
        if name not in config.transforms:
            continue
        if rng.random() >= p:
            continue
        if name == "hflip":
            out = hflip(out)
        elif name == "vflip":
            out = vflip(out)
        elif name == "rotate":
            angle = int(rng.choice(config.angles))
            out = rotate(out, angle)
        elif name == "noise":
            out = add_noise(out, config.noise_sigma, rng)
    if out is not image:
        out = Tensor(np.clip(out.data, -1.0, 1.0).astype(image.data.dtype))
    return out
