"""Procedural stand-in dataset: ten classes of coloured shapes on noisy backgrounds.

Class ``c`` draws shape ``c // 2`` (disk, triangle, bar, ring, checker) in
colour family ``c % 2``.  The two classes sharing a shape differ only in hue,
so a grayscale pipeline sees them as nearly the same thing.
"""
from __future__ import annotations

import colorsys
import math

import numpy as np

from .dataset import PackedDataset
from .errors import ConfigError
from .rng import Rng

SHAPES = ("disk", "triangle", "bar", "ring", "checker")
MAX_CLASSES = 2 * len(SHAPES)


def class_hue(c: int) -> float:
    return (0.2 * (c // 2) + 0.5 * (c % 2)) % 1.0


def _shape_mask(shape: str, xs, ys, cx, cy, r, angle):
    dx, dy = xs - cx, ys - cy
    # rotate into the shape's own frame
    u = dx * math.cos(angle) + dy * math.sin(angle)
    v = -dx * math.sin(angle) + dy * math.cos(angle)
    d = np.hypot(dx, dy)
    if shape == "disk":
        return d <= r
    if shape == "ring":
        return (d <= r) & (d >= 0.55 * r)
    if shape == "bar":
        return (np.abs(u) <= r) & (np.abs(v) <= 0.3 * r)
    if shape == "triangle":
        # equilateral triangle inscribed in radius r, apex along -v
        inside = v <= 0.5 * r
        for k in (1, 2):
            a = 2 * math.pi * k / 3
            inside &= (u * math.sin(a) + v * math.cos(a)) <= 0.5 * r
        return inside
    if shape == "checker":
        in_square = (np.abs(u) <= r) & (np.abs(v) <= r)
        cell = np.floor((u + r) / (r / 2)) + np.floor((v + r) / (r / 2))
        return in_square & (cell % 2 == 0)
    raise ConfigError(f"unknown shape {shape!r}")


def render(c: int, rng: Rng, size: int) -> np.ndarray:
    """One float64 (size, size, 3) image of class ``c`` in [0, 1]."""
    cx, cy, r, angle, hue_j, sat, val, bg = rng.uniform(8)
    cx = (0.3 + 0.4 * cx) * size
    cy = (0.3 + 0.4 * cy) * size
    r = (0.16 + 0.12 * r) * size
    angle = 2 * math.pi * angle
    hue = (class_hue(c) + 0.06 * (hue_j - 0.5)) % 1.0
    color = np.array(colorsys.hsv_to_rgb(hue, 0.65 + 0.35 * sat, 0.65 + 0.35 * val))
    background = 0.2 + 0.4 * bg

    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    mask = _shape_mask(SHAPES[c // 2], xs, ys, cx, cy, r, angle)
    img = np.full((size, size, 3), background)
    img[mask] = color
    img += 0.16 * (rng.uniform(size * size * 3).reshape(size, size, 3) - 0.5)
    return np.clip(img, 0.0, 1.0)


def make_synthetic(classes: int = 10, per_class: int = 50, seed: int = 0, size: int = 128) -> PackedDataset:
    """Deterministic dataset of ``classes * per_class`` records named class0.. .

    Records are interleaved (one of each class in turn), so any prefix is
    close to balanced.
    """
    if not 2 <= classes <= MAX_CLASSES:
        raise ConfigError(f"synthetic data supports 2..{MAX_CLASSES} classes, got {classes}")
    if per_class < 2:
        raise ConfigError(f"per_class must be >= 2, got {per_class}")
    rng = Rng(seed)
    n = classes * per_class
    labels = np.tile(np.arange(classes, dtype=np.uint8), per_class)
    pixels = np.empty((n, size, size, 3), dtype=np.uint8)
    for i, c in enumerate(labels):
        pixels[i] = np.rint(render(int(c), rng, size) * 255.0).astype(np.uint8)
    return PackedDataset([f"class{i}" for i in range(classes)], labels, pixels)
