"""Synthetic test images: layered membrane-like phantoms, smooth bump fields,
and flat frames.  Deterministic per seed."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .forward import ImageGrid

_KINDS = ("layered_cornea", "gmm_field", "flat")


@dataclass(frozen=True)
class PhantomSpec:
    kind: str
    height: int
    width: int
    seed: int = 0
    # layer contrast parameters (layered_cornea) / flat value
    background: float = 0.08
    band_strength: float = 0.75
    speckle_strength: float = 0.35
    value: float = 0.5

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.height < 1 or self.width < 1:
            raise ValueError("phantom dims must be positive")


# Arc depths as fractions of image height; jitter keeps the geometry family
# tight enough that an ensemble-fitted prior is informative.
_ARC_DEPTHS = (0.28, 0.48, 0.66)
_ARC_JITTER = 0.02


def _layered_cornea(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.height, spec.width
    rows = np.arange(h)[:, None]
    cols = (np.arange(w) - (w - 1) / 2.0) / (w / 2.0)

    img = np.full((h, w), spec.background)
    for depth in _ARC_DEPTHS:
        center = (depth + _ARC_JITTER * rng.standard_normal()) * h
        curvature = (0.10 + 0.03 * rng.random()) * h
        width_px = (0.018 + 0.006 * rng.random()) * h
        amplitude = spec.band_strength * (0.8 + 0.3 * rng.random())
        arc = center + curvature * cols**2
        img += amplitude * np.exp(-((rows - arc) ** 2) / (2.0 * width_px**2))

    # multiplicative speckle: smoothed exponential field, unit mean
    speckle = rng.exponential(scale=1.0, size=(h, w))
    speckle = gaussian_filter(speckle, sigma=0.8)
    speckle /= speckle.mean()
    img *= (1.0 - spec.speckle_strength) + spec.speckle_strength * speckle
    return np.clip(img, 0.0, 1.0)


def _gmm_field(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    h, w = spec.height, spec.width
    rows = np.arange(h)[:, None]
    cols = np.arange(w)[None, :]
    img = np.zeros((h, w))
    for _ in range(6):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        sy = rng.uniform(0.05, 0.2) * h
        sx = rng.uniform(0.05, 0.2) * w
        amp = rng.uniform(0.2, 1.0)
        img += amp * np.exp(-((rows - cy) ** 2) / (2 * sy**2) - ((cols - cx) ** 2) / (2 * sx**2))
    peak = img.max()
    if peak > 0:
        img = img / peak
    return np.clip(img, 0.0, 1.0)


def generate_phantom(spec: PhantomSpec) -> ImageGrid:
    """Render the phantom described by ``spec`` (values in [0, 1])."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "flat":
        if not 0.0 <= spec.value <= 1.0:
            raise ValueError(f"flat value must lie in [0, 1], got {spec.value}")
        data = np.full((spec.height, spec.width), spec.value)
    elif spec.kind == "layered_cornea":
        data = _layered_cornea(spec, rng)
    else:
        data = _gmm_field(spec, rng)
    return ImageGrid(data)


def row_profile_peak_count(image: ImageGrid, min_prominence: float = 0.05) -> int:
    """Count local maxima of the column-averaged row profile (arc detector)."""
    profile = image.data.mean(axis=1)
    count = 0
    for i in range(1, profile.size - 1):
        if profile[i] > profile[i - 1] and profile[i] >= profile[i + 1]:
            base = min(profile[max(0, i - 5) : i + 6].min(), profile[i])
            if profile[i] - base >= min_prominence:
                count += 1
    return count
