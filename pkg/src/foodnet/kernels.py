"""Raw numerical kernels: valid stride-1 convolution, 2x2 max pooling, matmul.

Tensors are C-ordered numpy arrays laid out channels-last, so element
(y, x, c) of an (H, W, C) image sits at flat index (y*W + x)*C + c.  Every
kernel accepts either a single image (H, W, C) or a batch (B, H, W, C) and
keeps the dtype of its inputs (float32 for training, float64 for gradient
checks).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError


def _as_batch(x: np.ndarray, name: str) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"{name} must be (H,W,C) or (B,H,W,C), got shape {x.shape}")


def _check_conv(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray | None):
    if kernels.ndim != 4 or kernels.shape[0] != kernels.shape[1]:
        raise ShapeError(f"kernels must be (K,K,Cin,Cout), got shape {kernels.shape}")
    if x.shape[-1] != kernels.shape[2]:
        raise ShapeError(
            f"input channels do not match kernels: input shape {x.shape}, kernel shape {kernels.shape}"
        )
    k = kernels.shape[0]
    if x.shape[-3] < k or x.shape[-2] < k:
        raise ShapeError(f"input shape {x.shape} smaller than {k}x{k} kernel")
    if bias is not None and bias.shape != (kernels.shape[3],):
        raise ShapeError(f"bias shape {bias.shape} does not match kernel shape {kernels.shape}")


def im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(B,H,W,C) -> (B*Ho*Wo, K*K*C) patch matrix, rows ordered (dy, dx, c)."""
    b, h, w, c = x.shape
    windows = sliding_window_view(x, (k, k), axis=(1, 2))  # B,Ho,Wo,C,K,K
    windows = windows.transpose(0, 1, 2, 4, 5, 3)
    return windows.reshape(b * (h - k + 1) * (w - k + 1), k * k * c)


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid cross-correlation, stride 1.

    out(y, x, co) = bias(co) + sum over (dy, dx, ci) of
    x(y+dy, x+dx, ci) * kernels(dy, dx, ci, co).
    """
    xb, single = _as_batch(x, "input")
    _check_conv(xb, kernels, bias)
    k, cout = kernels.shape[0], kernels.shape[3]
    b, h, w, _ = xb.shape
    ho, wo = h - k + 1, w - k + 1
    out = im2col(xb, k) @ kernels.reshape(-1, cout)
    out += bias
    out = out.reshape(b, ho, wo, cout)
    return out[0] if single else out


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, kernels: np.ndarray, need_input_grad: bool = True):
    """Gradients of :func:`conv2d_forward` w.r.t. input, kernels and bias.

    Returns ``(grad_input, grad_kernels, grad_bias)``; ``grad_input`` is None
    when ``need_input_grad`` is false (first layer of a network).
    """
    xb, single = _as_batch(x, "input")
    gb, _ = _as_batch(grad_out, "grad_out")
    _check_conv(xb, kernels, None)
    k, cout = kernels.shape[0], kernels.shape[3]
    b, h, w, _ = xb.shape
    ho, wo = h - k + 1, w - k + 1
    if gb.shape != (b, ho, wo, cout):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} inconsistent with input {x.shape} and kernels {kernels.shape}"
        )
    g2 = gb.reshape(-1, cout)
    grad_bias = g2.sum(axis=0)
    grad_kernels = (im2col(xb, k).T @ g2).reshape(kernels.shape)

    grad_input = None
    if need_input_grad:
        grad_input = np.zeros_like(xb)
        # scatter each kernel tap back in fixed (dy, dx) order
        for dy in range(k):
            for dx in range(k):
                grad_input[:, dy:dy + ho, dx:dx + wo, :] += gb @ kernels[dy, dx].T
        if single:
            grad_input = grad_input[0]
    return grad_input, grad_kernels, grad_bias


def maxpool2d_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pool, stride 2, trailing odd row/column dropped.

    Returns the pooled tensor and an int64 map (same shape as the output)
    holding the flat index into ``x`` of each window's winner.  Ties go to
    the smallest flat index.
    """
    xb, single = _as_batch(x, "input")
    b, h, w, c = xb.shape
    if h < 2 or w < 2:
        raise ShapeError(f"max pooling needs H >= 2 and W >= 2, got shape {x.shape}")
    ho, wo = h // 2, w // 2
    blocks = xb[:, :2 * ho, :2 * wo, :].reshape(b, ho, 2, wo, 2, c)
    # window order (0,0),(0,1),(1,0),(1,1) is increasing flat index, so argmax's
    # first-occurrence rule gives the smallest-index tie break
    blocks = blocks.transpose(0, 1, 3, 5, 2, 4).reshape(b, ho, wo, c, 4)
    win = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, win[..., None], axis=-1)[..., 0]

    bi = np.arange(b)[:, None, None, None]
    yi = 2 * np.arange(ho)[None, :, None, None] + win // 2
    xi = 2 * np.arange(wo)[None, None, :, None] + win % 2
    ci = np.arange(c)[None, None, None, :]
    argmax = ((bi * h + yi) * w + xi) * c + ci
    if single:
        return out[0], argmax[0]
    return out, argmax


def maxpool2d_backward(grad_out: np.ndarray, argmax: np.ndarray, input_shape) -> np.ndarray:
    """Route ``grad_out`` to the argmax positions of an input of ``input_shape``."""
    input_shape = tuple(int(s) for s in input_shape)
    if grad_out.shape != argmax.shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match argmax shape {argmax.shape}")
    size = int(np.prod(input_shape))
    if argmax.size and (argmax.min() < 0 or argmax.max() >= size):
        raise ShapeError(f"argmax index out of range for input shape {input_shape}")
    grad = np.zeros(size, dtype=grad_out.dtype)
    # winners of distinct windows are distinct cells, so plain assignment is exact
    grad[argmax.ravel()] = grad_out.ravel()
    return grad.reshape(input_shape)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b
