"""Finite-difference verification of the analytic backward pass."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (FLATTEN, MAXPOOL, RELU, SOFTMAX, build_network, backward, conv,
                      cross_entropy, dense, dropout, forward)
from .rng import Rng

STEP = 1e-4
TOLERANCE = 1e-5
# probe batches whose nearest ReLU kink or pooling tie is closer than this are redrawn
KINK_MARGIN = 1e-3
MAX_DRAWS = 64


@dataclass(frozen=True)
class NetSpec:
    layers: tuple
    input_shape: tuple
    n_classes: int
    batch: int = 4


def coverage_spec() -> NetSpec:
    """Small net exercising every layer kind: 12x12x3 -> conv/relu/pool x2 ->
    dropout -> flatten -> dense/relu -> dropout -> dense -> softmax."""
    layers = (
        conv(3, 4), RELU, MAXPOOL,
        conv(3, 6), RELU, MAXPOOL,
        dropout(0.25), FLATTEN,
        dense(8), RELU, dropout(0.5),
        dense(3), SOFTMAX,
    )
    return NetSpec(layers, (12, 12, 3), 3)


def linear_spec() -> NetSpec:
    """Flatten -> dense -> softmax: no kinks anywhere."""
    return NetSpec((FLATTEN, dense(3), SOFTMAX), (4, 4, 2), 3)


def _window_top2(v: np.ndarray):
    b, h, w, c = v.shape
    ho, wo = h // 2, w // 2
    blocks = v[:, :2 * ho, :2 * wo].reshape(b, ho, 2, wo, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, ho, wo, c, 4)
    srt = np.sort(blocks, axis=-1)
    return blocks, srt[..., -1], srt[..., -2]


def kink_distance(model, x, cache) -> float:
    """Smallest distance from the probe point to a place where the loss is not
    differentiable: a ReLU input at zero that can reach the output, or two
    tied positive candidates in a pooling window."""
    outs = cache.outputs
    layers = model.layers
    nearest = np.inf
    for i, layer in enumerate(layers):
        inp = x if i == 0 else outs[i - 1]
        nxt = layers[i + 1].kind if i + 1 < len(layers) else None
        if layer.kind == "relu":
            dist = np.abs(inp)
            if nxt == "maxpool":
                blocks_z, _, _ = _window_top2(inp)
                _, top, _ = _window_top2(outs[i])
                # only units in windows whose winner is itself near zero can flip the pool output
                live = top[..., None] < KINK_MARGIN
                cand = np.abs(blocks_z)[np.broadcast_to(live, blocks_z.shape)]
                dist = cand if cand.size else np.array([np.inf])
            elif nxt == "dropout" and (i + 1) in cache.masks:
                dist = dist[cache.masks[i + 1] != 0]
            if dist.size:
                nearest = min(nearest, float(dist.min()))
        elif layer.kind == "maxpool":
            _, top, second = _window_top2(inp)
            gap = (top - second)[top > 0]
            if gap.size:
                nearest = min(nearest, float(gap.min()))
    return nearest


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_tensor: list[float]
    n_checked: int
    draws: int = 1

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)


def gradient_check(spec: NetSpec | None = None, seed: int = 0, corrupt: bool = False,
                   step: float = STEP) -> GradCheckResult:
    """Compare backward() with central differences on every parameter.

    Runs in float64 with dropout masks drawn once and then frozen.  The
    probe batch is redrawn until no ReLU kink or pooling tie lies within
    ``KINK_MARGIN`` of it, since a central difference straddling a kink
    measures a different one-sided slope on each side.  With ``corrupt`` the
    analytic gradients are negated, which must drive the error to 2 (a
    self-test of the checker).
    """
    spec = spec or coverage_spec()
    names = [f"c{i}" for i in range(spec.n_classes)]
    model = build_network(list(spec.layers), spec.input_shape, names, seed, dtype=np.float64)
    rng = Rng(seed ^ 0xC0FFEE)
    for draws in range(1, MAX_DRAWS + 1):
        x = rng.uniform(spec.batch * int(np.prod(spec.input_shape))).reshape(spec.batch, *spec.input_shape)
        y = rng.integers(spec.n_classes, spec.batch)
        _, cache = forward(model, x, "train", rng, keep_outputs=True)
        if kink_distance(model, x, cache) >= KINK_MARGIN:
            break
    masks = cache.masks
    grads = backward(model, cache, y)
    if corrupt:
        grads = [-g for g in grads]

    def loss(params):
        probs, _ = forward(model.with_params(params), x, "train", masks=masks)
        return cross_entropy(probs, y)

    params = [p.copy() for p in model.params]
    per_tensor = []
    n = 0
    for t, p in enumerate(params):
        numeric = np.zeros_like(p)
        flat, nflat = p.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss(params)
            flat[i] = orig - step
            down = loss(params)
            flat[i] = orig
            nflat[i] = (up - down) / (2 * step)
        per_tensor.append(float(relative_error(grads[t], numeric).max()))
        n += p.size
    return GradCheckResult(max(per_tensor), per_tensor, n, draws)
