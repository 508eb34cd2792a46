"""Bag-of-features baseline: dense SIFT-style descriptors on grayscale images,
a k-means visual vocabulary, L1 word histograms and a one-vs-rest linear SVM.

Model file layout (little-endian)::

    b"BOFM1\\0" | u32 k | u32 descriptor dim | k*dim f32 centroids |
    u8 class count | class count x (k f32 weights, f32 bias)
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagicError, ConfigError, DatasetError, HeaderError, ShapeError, TruncatedFileError
from .rng import Rng, mix64

MAGIC = b"BOFM1\0"
N_BINS = 8
N_CELLS = 4
DESCRIPTOR_DIM = N_CELLS * N_CELLS * N_BINS
CLAMP = 0.2


def grayscale(image: np.ndarray) -> np.ndarray:
    """Luma 0.299 R + 0.587 G + 0.114 B of an (H, W, 3) image."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"grayscale expects an (H, W, 3) image, got {image.shape}")
    return image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114


def orientation_planes(gray: np.ndarray) -> np.ndarray:
    """Per-pixel gradient magnitude split over 8 orientation bins, (H, W, 8).

    Central differences (edge-replicated border); bin centres at multiples of
    45 degrees, each magnitude shared linearly between its two nearest bins.
    """
    g = np.pad(np.asarray(gray, dtype=np.float64), 1, mode="edge")
    gx = (g[1:-1, 2:] - g[1:-1, :-2]) / 2.0
    gy = (g[2:, 1:-1] - g[:-2, 1:-1]) / 2.0
    mag = np.hypot(gx, gy).ravel()
    pos = (np.arctan2(gy, gx).ravel() % (2 * math.pi)) * (N_BINS / (2 * math.pi))
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    lo %= N_BINS
    hi = (lo + 1) % N_BINS
    planes = np.zeros((mag.size, N_BINS))
    rows = np.arange(mag.size)
    planes[rows, lo] += mag * (1 - frac)
    planes[rows, hi] += mag * frac
    return planes.reshape(*np.shape(gray), N_BINS)


def descriptor_grid(height: int, width: int, step: int = 8, patch: int = 16) -> np.ndarray:
    """Top-left (y, x) of every full patch, row-major."""
    ys = np.arange(0, height - patch + 1, step)
    xs = np.arange(0, width - patch + 1, step)
    return np.stack(np.meshgrid(ys, xs, indexing="ij"), axis=-1).reshape(-1, 2)


def normalize_descriptors(raw: np.ndarray) -> np.ndarray:
    """L2-normalise, clamp at 0.2, renormalise; near-empty rows become zero."""
    raw = np.asarray(raw, dtype=np.float64)
    norm = np.linalg.norm(raw, axis=1, keepdims=True)
    flat = norm[:, 0] < 1e-6
    out = np.minimum(raw / np.where(flat[:, None], 1.0, norm), CLAMP)
    norm2 = np.linalg.norm(out, axis=1, keepdims=True)
    out = out / np.where(norm2 > 0, norm2, 1.0)
    out[flat] = 0.0
    return out


def dense_descriptors(gray: np.ndarray, step: int = 8, patch: int = 16):
    """128-d gradient-histogram descriptors on a regular grid.

    Returns ``(descriptors, locations)``: an (n, 128) array laid out as
    (cell row, cell column, orientation bin) and the (n, 2) top-left patch
    corners from :func:`descriptor_grid`.
    """
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ShapeError(f"dense_descriptors expects a 2-D image, got {gray.shape}")
    if patch % N_CELLS or patch <= 0:
        raise ConfigError(f"patch size must be a positive multiple of {N_CELLS}, got {patch}")
    if step < 1:
        raise ConfigError(f"step must be >= 1, got {step}")
    h, w = gray.shape
    if h < patch or w < patch:
        raise ShapeError(f"image {h}x{w} smaller than {patch}x{patch} patch")

    planes = orientation_planes(gray)
    integral = np.zeros((h + 1, w + 1, N_BINS))
    integral[1:, 1:] = planes.cumsum(axis=0).cumsum(axis=1)

    locs = descriptor_grid(h, w, step, patch)
    cell = patch // N_CELLS
    offs = np.arange(N_CELLS) * cell
    y0 = (locs[:, 0, None] + offs)[:, :, None]   # n, 4, 1
    x0 = (locs[:, 1, None] + offs)[:, None, :]   # n, 1, 4
    y1, x1 = y0 + cell, x0 + cell
    sums = integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0]
    return normalize_descriptors(sums.reshape(len(locs), DESCRIPTOR_DIM)), locs


def image_descriptors(image: np.ndarray, step: int = 8, patch: int = 16) -> np.ndarray:
    return dense_descriptors(grayscale(image), step, patch)[0]


def sq_distances(points: np.ndarray, centroids: np.ndarray, chunk: int = 32768) -> np.ndarray:
    """Squared Euclidean distances, (n, k), computed in row chunks."""
    c2 = np.einsum("ij,ij->i", centroids, centroids)
    out = np.empty((len(points), len(centroids)))
    for s in range(0, len(points), chunk):
        p = points[s:s + chunk]
        d = np.einsum("ij,ij->i", p, p)[:, None] - 2.0 * (p @ centroids.T) + c2
        out[s:s + chunk] = np.maximum(d, 0.0)
    return out


def assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per point (ties to the lowest index) and its squared distance."""
    d = sq_distances(points, centroids)
    idx = d.argmin(axis=1)
    return idx, d[np.arange(len(points)), idx]


@dataclass
class Codebook:
    centroids: np.ndarray
    objective_trace: list[float] = field(default_factory=list, compare=False)

    @property
    def k(self) -> int:
        return len(self.centroids)


def kmeans_pp(points: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    n = len(points)
    chosen = [min(int(rng.random() * n), n - 1)]
    d2 = sq_distances(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        u = rng.random()
        if total > 0:
            i = int(np.searchsorted(np.cumsum(d2), u * total, side="right"))
            i = min(i, n - 1)
        else:
            i = min(int(u * n), n - 1)
        chosen.append(i)
        d2 = np.minimum(d2, sq_distances(points, points[i:i + 1])[:, 0])
    return points[chosen].copy()


def _update(points, labels, dist, centroids):
    k = len(centroids)
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels, minlength=k)
    present = np.flatnonzero(counts)
    starts = np.concatenate([[0], np.cumsum(counts[present])[:-1]])
    sums = np.add.reduceat(points[order], starts, axis=0)
    new = centroids.copy()
    new[present] = sums / counts[present, None]
    dist = dist.copy()
    for j in np.flatnonzero(counts == 0):
        far = int(dist.argmax())
        new[j] = points[far]
        dist[far] = -1.0
    return new


def kmeans(points, k: int, max_iters: int = 100, seed: int = 0) -> Codebook:
    """k-means++ seeding followed by Lloyd iterations.

    Stops when an assignment repeats or after ``max_iters`` assignment
    steps.  ``objective_trace`` records the sum of squared distances after
    each assignment step.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ShapeError(f"kmeans expects an (n, d) array, got {points.shape}")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if len(points) < k:
        raise DatasetError(f"k-means needs at least k={k} points, got {len(points)}")
    centroids = kmeans_pp(points, k, Rng(seed))
    trace = []
    prev = None
    for _ in range(max_iters):
        labels, dist = assign(points, centroids)
        trace.append(float(dist.sum()))
        if prev is not None and np.array_equal(labels, prev):
            break
        centroids = _update(points, labels, dist, centroids)
        prev = labels
    return Codebook(centroids, trace)


def encode_histogram(descriptors: np.ndarray, codebook) -> np.ndarray:
    """L1-normalised visual-word counts (zero vector for an empty descriptor set)."""
    centroids = codebook.centroids if isinstance(codebook, Codebook) else np.asarray(codebook)
    descriptors = np.asarray(descriptors, dtype=np.float64).reshape(-1, centroids.shape[1]) \
        if np.size(descriptors) == 0 else np.asarray(descriptors, dtype=np.float64)
    if descriptors.ndim != 2 or descriptors.shape[1] != centroids.shape[1]:
        raise ShapeError(f"descriptor shape {descriptors.shape} does not match codebook dim {centroids.shape[1]}")
    k = len(centroids)
    if len(descriptors) == 0:
        return np.zeros(k)
    idx, _ = assign(descriptors, centroids.astype(np.float64))
    counts = np.bincount(idx, minlength=k).astype(np.float64)
    return counts / counts.sum()


@dataclass
class SvmModel:
    weights: np.ndarray   # (classes, dim)
    bias: np.ndarray      # (classes,)
    lam: float = 1e-4

    @property
    def n_classes(self) -> int:
        return len(self.bias)

    def scores(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1] != self.weights.shape[1]:
            raise ShapeError(f"input dim {x.shape[-1]} does not match SVM dim {self.weights.shape[1]}")
        return x @ self.weights.T + self.bias


def svm_train(histograms, labels, lam: float = 1e-4, epochs: int = 100, seed: int = 0,
              n_classes: int | None = None) -> SvmModel:
    """One-vs-rest linear SVM by Pegasos-style stochastic subgradient descent.

    Each binary problem minimises lam/2 |w|^2 + mean hinge loss with step
    1/(lam t).  The bias is folded in as a constant-1 feature (so it is
    regularised too).  All classes see the same seeded per-epoch visiting
    order.
    """
    x = np.asarray(histograms, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise ShapeError(f"histograms {x.shape} inconsistent with {len(y)} labels")
    if lam <= 0:
        raise ConfigError(f"lambda must be > 0, got {lam}")
    if len(np.unique(y)) < 2:
        raise DatasetError("SVM training needs at least two classes present")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    xa = np.hstack([x, np.ones((len(x), 1))])
    signs = np.where(y[:, None] == np.arange(n_classes)[None, :], 1.0, -1.0)
    w = np.zeros((n_classes, xa.shape[1]))
    rng = Rng(seed)
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(len(xa)):
            t += 1
            eta = 1.0 / (lam * t)
            xi, si = xa[i], signs[i]
            violated = si * (w @ xi) < 1.0
            w *= 1.0 - eta * lam
            w[violated] += (eta * si[violated])[:, None] * xi
    return SvmModel(w[:, :-1].copy(), w[:, -1].copy(), lam)


def svm_predict(model: SvmModel, histogram) -> int | np.ndarray:
    """Highest-scoring class; ties resolve to the lowest index.  Accepts one
    histogram or a stack of them."""
    s = model.scores(histogram)
    return int(s.argmax()) if s.ndim == 1 else s.argmax(axis=1)


@dataclass
class BofModel:
    centroids: np.ndarray   # (k, dim) float32
    svm: SvmModel

    def __eq__(self, other):
        return (isinstance(other, BofModel) and np.array_equal(self.centroids, other.centroids)
                and np.array_equal(self.svm.weights, other.svm.weights)
                and np.array_equal(self.svm.bias, other.svm.bias))

    @property
    def k(self) -> int:
        return len(self.centroids)

    def histograms(self, images, step: int = 8, patch: int = 16) -> np.ndarray:
        return np.stack([encode_histogram(image_descriptors(im, step, patch), self.centroids) for im in images])

    def predict(self, images) -> np.ndarray:
        return svm_predict(self.svm, self.histograms(images))


def train_bof(images, labels, n_classes: int, k: int = 256, lam: float = 1e-4, epochs: int = 100,
              seed: int = 0, max_descriptors: int = 100_000, kmeans_iters: int = 50) -> BofModel:
    """Full baseline fit on (N, H, W, 3) images in [0, 1]."""
    per_image = [image_descriptors(im) for im in images]
    pool = np.concatenate(per_image) if per_image else np.zeros((0, DESCRIPTOR_DIM))
    if len(pool) > max_descriptors:
        keep = Rng(mix64(seed ^ 0x5EED)).permutation(len(pool))[:max_descriptors]
        pool = pool[np.sort(keep)]
    if len(pool) < k:
        raise DatasetError(f"vocabulary size k={k} exceeds the {len(pool)} available descriptors")
    book = kmeans(pool, k, kmeans_iters, seed)
    centroids = book.centroids.astype(np.float32)
    hists = np.stack([encode_histogram(d, centroids) for d in per_image])
    svm = svm_train(hists, labels, lam, epochs, mix64(seed + 1), n_classes=n_classes)
    svm = SvmModel(svm.weights.astype(np.float32), svm.bias.astype(np.float32), lam)
    return BofModel(centroids, svm)


def encode_bof(model: BofModel) -> bytes:
    k, dim = model.centroids.shape
    parts = [MAGIC, struct.pack("<II", k, dim), model.centroids.astype("<f4").tobytes(),
             struct.pack("<B", model.svm.n_classes)]
    for w, b in zip(model.svm.weights, model.svm.bias):
        parts += [np.asarray(w, dtype="<f4").tobytes(), struct.pack("<f", b)]
    return b"".join(parts)


def save_bof(model: BofModel, path) -> None:
    Path(path).write_bytes(encode_bof(model))


def decode_bof(data: bytes) -> BofModel:
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(MAGIC, bytes(data[:len(MAGIC)]))
    pos = len(MAGIC)

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedFileError(what, n, len(data) - pos)
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    k, dim = struct.unpack("<II", take(8, "header"))
    if k < 1 or dim < 1:
        raise HeaderError(f"degenerate codebook header k={k}, dim={dim}")
    centroids = np.frombuffer(take(4 * k * dim, "centroids"), dtype="<f4").reshape(k, dim).astype(np.float32)
    (n_classes,) = struct.unpack("<B", take(1, "class count"))
    weights = np.empty((n_classes, k), dtype=np.float32)
    bias = np.empty(n_classes, dtype=np.float32)
    for c in range(n_classes):
        weights[c] = np.frombuffer(take(4 * k, "class weights"), dtype="<f4")
        (bias[c],) = struct.unpack("<f", take(4, "class bias"))
    if pos != len(data):
        raise HeaderError(f"{len(data) - pos} trailing bytes in model file")
    return BofModel(centroids, SvmModel(weights, bias))


def load_bof(path) -> BofModel:
    return decode_bof(Path(path).read_bytes())
