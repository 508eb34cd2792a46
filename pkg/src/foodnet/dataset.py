"""Image ingestion, 128x128 resizing, stratified splitting and the packed
``FIMG1`` dataset format.

Packed layout (little-endian)::

    b"FIMG1\\0" | u32 record count | u16 width | u16 height | u8 channels |
    u8 class count | class count x (u32 byte length, UTF-8 name) |
    records: u8 label + width*height*channels bytes (row-major, RGB interleaved)
"""
from __future__ import annotations

import logging
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (BadMagicError, DatasetError, HeaderError, ImageDecodeError,
                     LabelOverflowError, TruncatedFileError)
from .rng import Rng

log = logging.getLogger(__name__)

MAGIC = b"FIMG1\0"
IMAGE_SIZE = 128
RASTER_EXTENSIONS = {".jpg", ".jpeg", ".png", ".bmp", ".gif", ".tif", ".tiff", ".webp", ".ppm", ".pgm"}
_HEADER = struct.Struct("<6sIHHBB")


@dataclass
class DatasetManifest:
    classes: list[str]
    items: list[tuple[str, int]]
    skipped: int = 0

    def __post_init__(self):
        k = len(self.classes)
        for source, label in self.items:
            if not 0 <= label < k:
                raise DatasetError(f"item {source!r} has label {label} outside {k} classes")

    def __len__(self):
        return len(self.items)

    @property
    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.items], dtype=np.int64)


@dataclass
class PackedDataset:
    class_names: list[str]
    labels: np.ndarray                 # (N,) uint8
    pixels: np.ndarray                 # (N, H, W, C) uint8
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 4 or len(self.pixels) != len(self.labels):
            raise DatasetError(f"pixels {self.pixels.shape} inconsistent with {len(self.labels)} labels")
        if not 1 <= len(self.class_names) <= 255:
            raise DatasetError("packed datasets hold between 1 and 255 classes")
        if len(self.labels) and int(self.labels.max()) >= len(self.class_names):
            raise LabelOverflowError(int(self.labels.max()), len(self.class_names))

    def __len__(self):
        return len(self.labels)

    def __eq__(self, other):
        return (isinstance(other, PackedDataset) and self.class_names == other.class_names
                and np.array_equal(self.labels, other.labels) and np.array_equal(self.pixels, other.pixels))

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def channels(self) -> int:
        return self.pixels.shape[3]

    def images(self) -> np.ndarray:
        """Pixels as float32 in [0, 1]."""
        return self.pixels.astype(np.float32) / np.float32(255.0)

    def subset(self, indices) -> "PackedDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return PackedDataset(list(self.class_names), self.labels[indices], self.pixels[indices])


def _is_raster(path: Path) -> bool:
    return path.is_file() and path.suffix.lower() in RASTER_EXTENSIONS


def _readable(path: Path) -> bool:
    try:
        with Image.open(path) as im:
            im.verify()
        return True
    except (OSError, UnidentifiedImageError, SyntaxError, ValueError):
        return False


def ingest_directory(root) -> DatasetManifest:
    """One subdirectory per class; classes and files both in bytewise-sorted order."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    class_dirs = sorted((d for d in root.iterdir() if d.is_dir()), key=lambda d: os.fsencode(d.name))
    if not class_dirs:
        raise DatasetError(f"dataset root {root} contains no class directories")
    items, skipped = [], 0
    for label, d in enumerate(class_dirs):
        files = sorted((p for p in d.iterdir() if _is_raster(p)), key=lambda p: os.fsencode(p.name))
        good = 0
        for p in files:
            if _readable(p):
                items.append((str(p), label))
                good += 1
            else:
                skipped += 1
                log.warning("skipping unreadable image %s", p)
        if good == 0:
            raise DatasetError(f"class directory {d.name!r} holds no readable images")
    return DatasetManifest([d.name for d in class_dirs], items, skipped)


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of an (H, W, C) array with pixel-centre alignment.

    Output pixel i samples input coordinate (i + 0.5) * in/out - 0.5,
    clamped to the valid range; no aspect-ratio preservation.
    """
    src = np.asarray(image, dtype=np.float64)
    in_h, in_w = src.shape[:2]

    def axis(n_in, n_out):
        pos = np.clip((np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5, 0, n_in - 1)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, wy = axis(in_h, out_h)
    x0, x1, wx = axis(in_w, out_w)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    rows = src[y0] * (1 - wy) + src[y1] * wy
    return rows[:, x0] * (1 - wx) + rows[:, x1] * wx


def _decode(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(path, str(exc)) from exc


def load_resize_bytes(item, size: int = IMAGE_SIZE) -> np.ndarray:
    """Decode and resample to (size, size, 3), returned in byte units (float64)."""
    path = item[0] if isinstance(item, tuple) else item
    return resize_bilinear(_decode(path), size, size)


def load_resize(item, size: int = IMAGE_SIZE) -> np.ndarray:
    """Decode, stretch to (size, size, 3) and scale to [0, 1] as value/255."""
    return (load_resize_bytes(item, size) / 255.0).astype(np.float32)


def _train_count(n: int, train_frac: float) -> int:
    # absorb float fuzz such as 0.29 * 100 = 28.999999999999996
    return math.floor(train_frac * n + 1e-9)


def split_indices(labels, n_classes: int, train_frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified split: per class (in class order) shuffle with one shared
    seeded stream and send floor(train_frac * n_c) items to training."""
    if not 0 < train_frac < 1:
        raise DatasetError(f"train fraction must lie in (0, 1), got {train_frac}")
    labels = np.asarray(labels, dtype=np.int64)
    rng = Rng(seed)
    train, test = [], []
    for c in range(n_classes):
        idx = np.flatnonzero(labels == c)
        if len(idx) < 2:
            raise DatasetError(f"class {c} has {len(idx)} item(s); splitting needs at least 2")
        idx = idx[rng.permutation(len(idx))]
        k = _train_count(len(idx), train_frac)
        train.append(idx[:k])
        test.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split(manifest: DatasetManifest, train_frac: float = 0.8, seed: int = 0):
    tr, te = split_indices(manifest.labels, len(manifest.classes), train_frac, seed)
    pick = lambda idx: DatasetManifest(list(manifest.classes), [manifest.items[i] for i in idx])
    return pick(tr), pick(te)


def split_packed(ds: PackedDataset, train_frac: float = 0.8, seed: int = 0):
    tr, te = split_indices(ds.labels, len(ds.class_names), train_frac, seed)
    return ds.subset(tr), ds.subset(te)


def pack_manifest(manifest: DatasetManifest, size: int = IMAGE_SIZE) -> PackedDataset:
    n = len(manifest)
    pixels = np.empty((n, size, size, 3), dtype=np.uint8)
    for i, (source, _) in enumerate(manifest.items):
        pixels[i] = np.clip(np.rint(load_resize_bytes(source, size)), 0, 255).astype(np.uint8)
    return PackedDataset(list(manifest.classes), manifest.labels.astype(np.uint8), pixels)


def pack(manifest: DatasetManifest, path, size: int = IMAGE_SIZE) -> PackedDataset:
    ds = pack_manifest(manifest, size)
    save_packed(ds, path)
    return ds


def encode_packed(ds: PackedDataset) -> bytes:
    n, h, w, c = ds.pixels.shape
    parts = [_HEADER.pack(MAGIC, n, w, h, c, len(ds.class_names))]
    for name in ds.class_names:
        raw = name.encode("utf-8")
        parts += [struct.pack("<I", len(raw)), raw]
    records = np.empty((n, 1 + h * w * c), dtype=np.uint8)
    records[:, 0] = ds.labels
    records[:, 1:] = ds.pixels.reshape(n, -1)
    parts.append(records.tobytes())
    return b"".join(parts)


def save_packed(ds: PackedDataset, path) -> None:
    Path(path).write_bytes(encode_packed(ds))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(what, n, len(self.data) - self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))

    def names(self, count: int, what: str) -> list[str]:
        out = []
        for _ in range(count):
            (length,) = self.unpack("<I", what)
            try:
                out.append(self.take(length, what).decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise HeaderError(f"{what} is not valid UTF-8") from exc
        return out


def decode_packed(data: bytes) -> PackedDataset:
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(MAGIC, bytes(data[:len(MAGIC)]))
    r = _Reader(data)
    _, n, w, h, c, k = r.unpack(_HEADER.format, "header")
    if w == 0 or h == 0 or c == 0 or k == 0:
        raise HeaderError(f"degenerate header: {w}x{h}x{c}, {k} classes")
    names = r.names(k, "class names")
    rec = 1 + w * h * c
    body = r.take(n * rec, "records")
    if r.pos != len(data):
        raise HeaderError(f"{len(data) - r.pos} trailing bytes after {n} records")
    records = np.frombuffer(body, dtype=np.uint8).reshape(n, rec)
    labels = records[:, 0].copy()
    if n and int(labels.max()) >= k:
        raise LabelOverflowError(int(labels.max()), k)
    return PackedDataset(names, labels, records[:, 1:].reshape(n, h, w, c).copy())


def load_packed(path) -> PackedDataset:
    return decode_packed(Path(path).read_bytes())


def save_image(pixels: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 array, or float array in [0, 1], as a raster file."""
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, "RGB").save(path)
