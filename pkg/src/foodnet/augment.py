"""Bounded random affine expansion (rotation, translation, scaling)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .rng import Rng

# source coordinates this close outside the image still count as inside;
# keeps 90-degree rotations from losing a border row to cos(pi/2) != 0
_EDGE_TOL = 1e-6


@dataclass(frozen=True)
class AugmentConfig:
    max_rotation_deg: float = 20.0
    max_translate_frac: float = 0.1
    scale_min: float = 0.9
    scale_max: float = 1.1
    fill_value: float = 0.0

    def __post_init__(self):
        values = (self.max_rotation_deg, self.max_translate_frac, self.scale_min, self.scale_max, self.fill_value)
        if not all(math.isfinite(v) for v in values):
            raise ConfigError("augmentation bounds must be finite")
        if self.max_rotation_deg < 0 or self.max_translate_frac < 0:
            raise ConfigError("rotation and translation bounds must be >= 0")
        if not 0 < self.scale_min <= 1 <= self.scale_max:
            raise ConfigError(f"need 0 < scale_min <= 1 <= scale_max, got [{self.scale_min}, {self.scale_max}]")
        if not 0 <= self.fill_value <= 1:
            raise ConfigError(f"fill_value must lie in [0, 1], got {self.fill_value}")

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(0.0, 0.0, 1.0, 1.0, 0.0)


@dataclass(frozen=True)
class AffineParams:
    rotation_deg: float = 0.0
    translate_x: float = 0.0
    translate_y: float = 0.0
    scale: float = 1.0


def sample_affine(config: AugmentConfig, rng: Rng, width: int = 128, height: int = 128) -> AffineParams:
    """Draw rotation, x-shift, y-shift, scale (exactly four uniforms, in that order)."""
    u = rng.uniform(4)
    tx = config.max_translate_frac * width
    ty = config.max_translate_frac * height
    return AffineParams(
        rotation_deg=float(config.max_rotation_deg * (2 * u[0] - 1)),
        translate_x=float(tx * (2 * u[1] - 1)),
        translate_y=float(ty * (2 * u[2] - 1)),
        scale=float(config.scale_min + (config.scale_max - config.scale_min) * u[3]),
    )


def affine_matrix(params: AffineParams, width: int, height: int) -> np.ndarray:
    """2x3 matrix taking output pixel (x, y) to the source location it samples.

    Inverse warp about the image centre: src = R(-theta) (p - c) / s + c - t.
    """
    if params.scale == 0:
        raise ConfigError("affine scale must be nonzero")
    theta = math.radians(params.rotation_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    inv = 1.0 / params.scale
    a = np.array([[cos_t, sin_t], [-sin_t, cos_t]]) * inv
    center = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
    t = np.array([params.translate_x, params.translate_y])
    offset = center - a @ center - t
    return np.hstack([a, offset[:, None]])


def warp_bilinear(image: np.ndarray, matrix: np.ndarray, fill_value: float = 0.0) -> np.ndarray:
    """Resample ``image`` (H, W, C) through an inverse-mapping 2x3 matrix.

    Locations outside [0, W-1] x [0, H-1] take ``fill_value``.
    """
    if image.ndim != 3:
        raise ShapeError(f"warp expects an (H, W, C) image, got shape {image.shape}")
    h, w, _ = image.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    m = np.asarray(matrix, dtype=np.float64)
    sx = m[0, 0] * xs + m[0, 1] * ys + m[0, 2]
    sy = m[1, 0] * xs + m[1, 1] * ys + m[1, 2]
    inside = (sx >= -_EDGE_TOL) & (sx <= w - 1 + _EDGE_TOL) & (sy >= -_EDGE_TOL) & (sy <= h - 1 + _EDGE_TOL)
    sx = np.clip(sx, 0, w - 1)
    sy = np.clip(sy, 0, h - 1)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    src = image.astype(np.float64, copy=False)
    top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
    bottom = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
    out = top * (1 - fy) + bottom * fy
    out = np.where(inside[..., None], out, fill_value)
    return out.astype(image.dtype)


def expand_batch(images: np.ndarray, labels, config: AugmentConfig, rng: Rng):
    """Warp every image of a (B, H, W, C) batch by its own random affine map.

    Parameters for all images are drawn up front, in batch order, so the
    result only depends on the rng state.  Labels pass through unchanged.
    """
    if len(images) == 0:
        raise ShapeError("expand_batch needs a nonempty batch")
    _, h, w, _ = images.shape
    draws = [sample_affine(config, rng, w, h) for _ in range(len(images))]
    out = np.empty_like(images)
    for i, p in enumerate(draws):
        if p == AffineParams():
            out[i] = images[i]
        else:
            out[i] = warp_bilinear(images[i], affine_matrix(p, w, h), config.fill_value)
    return out, labels
