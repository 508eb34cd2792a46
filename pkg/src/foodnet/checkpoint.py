"""``CNCK1`` network checkpoints.

Layout (little-endian)::

    b"CNCK1\\0" | u32 layer count |
    per layer: u8 kind tag, u32 extent x3 |
    u32 input height, width, channels |
    every parameter tensor as f32, declaration order |
    u32 class count | per class: u32 byte length, UTF-8 name

Extents are (K, out channels, 0) for conv, (width, 0, 0) for dense and the
IEEE-754 bit pattern of the rate for dropout; other kinds write zeros.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagicError, HeaderError, ShapeError, TruncatedFileError
from .network import KINDS, LayerSpec, NetworkModel, infer_shapes

MAGIC = b"CNCK1\0"
TAGS = {kind: i for i, kind in enumerate(KINDS)}
_LAYER = struct.Struct("<BIII")


def _f32_bits(x: float) -> int:
    return struct.unpack("<I", struct.pack("<f", x))[0]


def _bits_f32(b: int) -> float:
    return struct.unpack("<f", struct.pack("<I", b))[0]


def _extents(layer: LayerSpec) -> tuple[int, int, int]:
    if layer.kind == "conv":
        return layer.size, layer.channels, 0
    if layer.kind == "dense":
        return layer.size, 0, 0
    if layer.kind == "dropout":
        return _f32_bits(layer.rate), 0, 0
    return 0, 0, 0


def encode_checkpoint(model: NetworkModel) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(model.layers))]
    for layer in model.layers:
        parts.append(_LAYER.pack(TAGS[layer.kind], *_extents(layer)))
    parts.append(struct.pack("<III", *model.input_shape))
    for p in model.params:
        parts.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    parts.append(struct.pack("<I", len(model.class_names)))
    for name in model.class_names:
        raw = name.encode("utf-8")
        parts += [struct.pack("<I", len(raw)), raw]
    return b"".join(parts)


def save_checkpoint(model: NetworkModel, path) -> None:
    Path(path).write_bytes(encode_checkpoint(model))


def decode_checkpoint(data: bytes) -> NetworkModel:
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

    (n_layers,) = struct.unpack("<I", take(4, "layer count"))
    if n_layers > 4096:
        raise HeaderError(f"implausible layer count {n_layers}")
    layers = []
    for _ in range(n_layers):
        tag, a, b, _c = _LAYER.unpack(take(_LAYER.size, "layer table"))
        if tag >= len(KINDS):
            raise HeaderError(f"unknown layer tag {tag}")
        kind = KINDS[tag]
        try:
            if kind == "conv":
                layers.append(LayerSpec("conv", size=a, channels=b))
            elif kind == "dense":
                layers.append(LayerSpec("dense", size=a))
            elif kind == "dropout":
                layers.append(LayerSpec("dropout", rate=_bits_f32(a)))
            else:
                layers.append(LayerSpec(kind))
        except ValueError as exc:
            raise HeaderError(f"invalid layer entry: {exc}") from exc
    input_shape = struct.unpack("<III", take(12, "input shape"))
    try:
        _, pshapes = infer_shapes(layers, input_shape)
    except ShapeError as exc:
        raise HeaderError(f"layer table inconsistent with input shape {input_shape}: {exc}") from exc

    params = []
    for shape in pshapes:
        n = int(np.prod(shape))
        params.append(np.frombuffer(take(4 * n, "parameters"), dtype="<f4").astype(np.float32).reshape(shape))
    (n_names,) = struct.unpack("<I", take(4, "class count"))
    names = []
    for _ in range(n_names):
        (length,) = struct.unpack("<I", take(4, "class names"))
        try:
            names.append(take(length, "class names").decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise HeaderError("class name is not valid UTF-8") from exc
    if pos != len(data):
        raise HeaderError(f"{len(data) - pos} trailing bytes after checkpoint body")
    try:
        return NetworkModel(layers, params, names, tuple(input_shape))
    except ShapeError as exc:
        raise HeaderError(str(exc)) from exc


def load_checkpoint(path) -> NetworkModel:
    return decode_checkpoint(Path(path).read_bytes())
