"""Layer graph, forward/backward passes, softmax and cross-entropy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError
from .rng import Rng

KINDS = ("conv", "maxpool", "relu", "dropout", "flatten", "dense", "softmax")
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    size: int = 0          # conv kernel size K, or dense width
    channels: int = 0      # conv output channels
    rate: float = 0.0      # dropout rate

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv" and (self.size < 1 or self.channels < 1):
            raise ConfigError(f"conv layer needs K >= 1 and channels >= 1, got {self}")
        if self.kind == "dense" and self.size < 1:
            raise ConfigError(f"dense layer needs width >= 1, got {self}")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {self.rate}")

    @property
    def has_params(self) -> bool:
        return self.kind in ("conv", "dense")


def conv(k: int, channels: int) -> LayerSpec:
    return LayerSpec("conv", size=k, channels=channels)


def dense(units: int) -> LayerSpec:
    return LayerSpec("dense", size=units)


def dropout(rate: float) -> LayerSpec:
    return LayerSpec("dropout", rate=rate)


MAXPOOL = LayerSpec("maxpool")
RELU = LayerSpec("relu")
FLATTEN = LayerSpec("flatten")
SOFTMAX = LayerSpec("softmax")


def paper_layers(n_classes: int = 10) -> list[LayerSpec]:
    """Three conv-ReLU-pool stages (7x7/32, 5x5/64, 3x3/128), dense 128, softmax head."""
    return [
        conv(7, 32), RELU, MAXPOOL,
        conv(5, 64), RELU, MAXPOOL,
        conv(3, 128), RELU, MAXPOOL,
        dropout(0.25),
        FLATTEN,
        dense(128), RELU,
        dropout(0.5),
        dense(n_classes),
        SOFTMAX,
    ]


def infer_shapes(layers, input_shape) -> tuple[list[tuple], list[tuple]]:
    """Walk the chain from ``input_shape``.

    Returns (per-layer output shapes, parameter shapes in declaration order).
    """
    shape = tuple(int(s) for s in input_shape)
    if len(shape) != 3 or min(shape) < 1:
        raise ShapeError(f"input shape must be (H, W, C) with positive extents, got {input_shape}")
    outs, pshapes = [], []
    for i, layer in enumerate(layers):
        if layer.kind == "conv":
            if len(shape) != 3:
                raise ShapeError(f"layer {i} (conv) needs a spatial input, got {shape}")
            h, w, c = shape
            if h < layer.size or w < layer.size:
                raise ShapeError(f"layer {i}: {h}x{w} input too small for {layer.size}x{layer.size} kernel")
            pshapes += [(layer.size, layer.size, c, layer.channels), (layer.channels,)]
            shape = (h - layer.size + 1, w - layer.size + 1, layer.channels)
        elif layer.kind == "maxpool":
            if len(shape) != 3 or shape[0] < 2 or shape[1] < 2:
                raise ShapeError(f"layer {i}: cannot 2x2-pool shape {shape}")
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif layer.kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif layer.kind == "dense":
            if len(shape) != 1:
                raise ShapeError(f"layer {i} (dense) needs a flat input, got {shape}; add a flatten layer")
            pshapes += [(shape[0], layer.size), (layer.size,)]
            shape = (layer.size,)
        elif layer.kind == "softmax":
            if len(shape) != 1 or i != len(layers) - 1:
                raise ShapeError("softmax must be the final layer and follow a flat input")
        outs.append(shape)
    if not layers or layers[-1].kind != "softmax":
        raise ShapeError("network must end with a softmax layer")
    return outs, pshapes


@dataclass
class NetworkModel:
    layers: list[LayerSpec]
    params: list[np.ndarray]
    class_names: list[str]
    input_shape: tuple[int, int, int] = (128, 128, 3)
    output_shapes: list[tuple] = field(init=False, repr=False)

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self.output_shapes, pshapes = infer_shapes(self.layers, self.input_shape)
        if len(pshapes) != len(self.params):
            raise ShapeError(f"expected {len(pshapes)} parameter tensors, got {len(self.params)}")
        for expect, p in zip(pshapes, self.params):
            if tuple(p.shape) != expect:
                raise ShapeError(f"parameter shape {p.shape} does not match layer chain (expected {expect})")
        n_out = self.output_shapes[-1][0]
        if len(self.class_names) != n_out:
            raise ShapeError(f"{len(self.class_names)} class names for a {n_out}-way output")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    @property
    def dtype(self):
        return self.params[0].dtype if self.params else np.dtype(np.float32)

    def astype(self, dtype) -> "NetworkModel":
        return NetworkModel(list(self.layers), [p.astype(dtype) for p in self.params],
                            list(self.class_names), self.input_shape)

    def copy(self) -> "NetworkModel":
        return self.astype(self.dtype)

    def with_params(self, params) -> "NetworkModel":
        return NetworkModel(list(self.layers), list(params), list(self.class_names), self.input_shape)


def build_network(layers, input_shape, class_names, seed: int, dtype=np.float32) -> NetworkModel:
    """Initialise parameters: He-normal for every weight tensor except the
    one feeding softmax, which gets normal(0, sqrt(1/fan_in)); zero biases."""
    _, pshapes = infer_shapes(layers, input_shape)
    rng = Rng(seed)
    last_dense = max(i for i, l in enumerate(layers) if l.kind == "dense") if any(
        l.kind == "dense" for l in layers) else -1
    params = []
    slot = 0
    for i, layer in enumerate(layers):
        if not layer.has_params:
            continue
        wshape, bshape = pshapes[slot], pshapes[slot + 1]
        slot += 2
        fan_in = int(np.prod(wshape[:-1]))
        gain = 1.0 if i == last_dense else 2.0
        w = rng.normal(int(np.prod(wshape))) * math.sqrt(gain / fan_in)
        params += [w.reshape(wshape).astype(dtype), np.zeros(bshape, dtype=dtype)]
    return NetworkModel(list(layers), params, list(class_names), tuple(input_shape))


def build_paper_network(seed: int = 0, input_shape=(128, 128, 3), class_names=None) -> NetworkModel:
    if class_names is None:
        class_names = [f"class{i}" for i in range(10)]
    return build_network(paper_layers(len(class_names)), input_shape, class_names, seed)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the row max so large logits cannot overflow."""
    z = np.asarray(logits)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(labels, n_classes: int, batch: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != batch:
        raise ShapeError(f"{labels.shape[0]} labels for a batch of {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ShapeError(f"label out of range [0, {n_classes}): {labels.min()}..{labels.max()}")
    return labels


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of the true classes; probabilities floored at 1e-12."""
    probs = np.atleast_2d(probs)
    labels = _check_labels(labels, probs.shape[1], probs.shape[0])
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))


@dataclass
class ForwardCache:
    entries: list
    probs: np.ndarray
    masks: dict  # layer index -> scaled dropout mask actually applied
    outputs: list = field(default_factory=list)


def forward(model: NetworkModel, batch: np.ndarray, mode: str = "eval", rng: Rng | None = None,
            masks: dict | None = None, keep_outputs: bool = False) -> tuple[np.ndarray, ForwardCache]:
    """Run the layer chain on a (B, H, W, C) batch.

    In ``train`` mode dropout layers draw fresh inverted-dropout masks from
    ``rng`` (advanced in place) unless ``masks`` supplies them per layer
    index.  ``eval`` mode skips dropout entirely.  ``keep_outputs`` stores
    every layer's output in ``cache.outputs`` (used by the gradient checker).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(batch)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or tuple(x.shape[1:]) != model.input_shape:
        raise ShapeError(f"batch shape {np.shape(batch)} does not match network input {model.input_shape}")
    x = x.astype(model.dtype, copy=False)
    if mode == "train" and rng is None and masks is None and any(
            l.kind == "dropout" and l.rate > 0 for l in model.layers):
        raise ValueError("train mode with dropout needs an rng or explicit masks")

    entries = []
    outputs = []
    used_masks = {}
    slot = 0
    for i, layer in enumerate(model.layers):
        kind = layer.kind
        if kind == "conv":
            w, b = model.params[slot], model.params[slot + 1]
            slot += 2
            entries.append(x)
            x = kernels.conv2d_forward(x, w, b)
        elif kind == "dense":
            w, b = model.params[slot], model.params[slot + 1]
            slot += 2
            entries.append(x)
            x = x @ w + b
        elif kind == "relu":
            active = x > 0
            entries.append(active)
            x = x * active
        elif kind == "maxpool":
            shape = x.shape
            x, argmax = kernels.maxpool2d_forward(x)
            entries.append((argmax, shape))
        elif kind == "flatten":
            entries.append(x.shape)
            x = x.reshape(x.shape[0], -1)
        elif kind == "dropout":
            mask = None
            if mode == "train" and layer.rate > 0:
                if masks is not None and i in masks:
                    mask = masks[i].astype(x.dtype, copy=False)
                else:
                    keep = rng.uniform(x.size).reshape(x.shape) >= layer.rate
                    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - layer.rate))
                used_masks[i] = mask
                x = x * mask
            entries.append(mask)
        elif kind == "softmax":
            entries.append(None)
            x = softmax(x)
        if keep_outputs:
            outputs.append(x)
    return x, ForwardCache(entries, x, used_masks, outputs)


def backward(model: NetworkModel, cache: ForwardCache, labels) -> list[np.ndarray]:
    """Exact gradient of mean cross-entropy w.r.t. every parameter tensor.

    Softmax and cross-entropy are fused: the gradient reaching the logits is
    (probs - onehot) / B.
    """
    probs = cache.probs
    labels = _check_labels(labels, probs.shape[1], probs.shape[0])
    bsz = probs.shape[0]
    g = probs.copy()
    g[np.arange(bsz), labels] -= 1
    g /= bsz

    grads: list = [None] * len(model.params)
    slot = len(model.params)
    for i in range(len(model.layers) - 1, -1, -1):
        layer, entry = model.layers[i], cache.entries[i]
        kind = layer.kind
        if kind == "softmax":
            continue
        if kind == "dense":
            slot -= 2
            w = model.params[slot]
            grads[slot] = entry.T @ g
            grads[slot + 1] = g.sum(axis=0)
            g = g @ w.T
        elif kind == "conv":
            slot -= 2
            w = model.params[slot]
            gi, gw, gb = kernels.conv2d_backward(g, entry, w, need_input_grad=i > 0)
            grads[slot], grads[slot + 1] = gw, gb
            g = gi
        elif kind == "relu":
            g = g * entry
        elif kind == "maxpool":
            argmax, shape = entry
            g = kernels.maxpool2d_backward(g, argmax, shape)
        elif kind == "flatten":
            g = g.reshape(entry)
        elif kind == "dropout":
            if entry is not None:
                g = g * entry
        if g is None:
            break
    return grads


def predict_proba(model: NetworkModel, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    out = []
    for start in range(0, len(images), batch_size):
        probs, _ = forward(model, images[start:start + batch_size], "eval")
        out.append(probs)
    if not out:
        return np.zeros((0, model.n_classes), dtype=model.dtype)
    return np.concatenate(out)


def predict(model: NetworkModel, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Eval-mode argmax; ties resolve to the smallest class index."""
    return predict_proba(model, images, batch_size).argmax(axis=1)


def evaluate(model: NetworkModel, images: np.ndarray, labels, batch_size: int = 64) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) in eval mode."""
    probs = predict_proba(model, images, batch_size)
    labels = np.asarray(labels)
    return cross_entropy(probs, labels), float(np.mean(probs.argmax(axis=1) == labels))
