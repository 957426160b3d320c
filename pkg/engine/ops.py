"""Differentiable operation set used by the fractal attention stack."""

import logging
import math
from typing import Optional, Sequence

import numpy as np

from engine import profiler
from engine.tensor import DimensionError, Tensor

# Configure logging
logger = logging.getLogger(__name__)

GELU_COEFF = math.sqrt(2.0 / math.pi)
SUPPORTED_KERNELS = {1, 3}
SUPPORTED_STRIDES = {1, 2}
LAYER_NORM_EPS = 1e-6


# Custom Exceptions
class ConvConfigError(ValueError):
    """Raised when a convolution is configured outside the supported set."""
    pass


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Batched matrix product ``a[..., m, k] @ b[..., k, n]``.

    Args:
        a: Left operand
        b: Right operand with identical leading batch dims

    Returns:
        Tensor of shape ``[..., m, n]``

    Raises:
        DimensionError: If trailing dims do not conform or batch dims differ
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        logger.error(f"matmul shape mismatch: {a.shape} x {b.shape}")
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    data = np.matmul(a.data, b.data)
    batch = int(np.prod(a.shape[:-2], dtype=np.int64))
    profiler.record('matmul', profiler.MAC_FLOPS * batch * a.shape[-2] * a.shape[-1] * b.shape[-1])

    def _backward(grad: np.ndarray) -> tuple:
        return (
            np.matmul(grad, np.swapaxes(b.data, -1, -2)),
            np.matmul(np.swapaxes(a.data, -1, -2), grad),
        )

    return Tensor.from_op(data, (a, b), _backward, 'matmul')


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Apply a dense projection over the last axis: ``x @ weight + bias``.

    Args:
        x: Input of shape ``[..., c_in]``
        weight: Matrix of shape ``[c_in, c_out]``
        bias: Optional vector of shape ``[c_out]``

    Returns:
        Tensor of shape ``[..., c_out]``
    """
    c_in, c_out = weight.shape
    if x.shape[-1] != c_in:
        logger.error(f"linear shape mismatch: {x.shape} x {weight.shape}")
        raise DimensionError(f"linear shape mismatch: {x.shape} x {weight.shape}")

    lead = x.shape[:-1]
    flat = x.data.reshape(-1, c_in)
    out = flat @ weight.data
    profiler.record('matmul', profiler.MAC_FLOPS * flat.shape[0] * c_in * c_out)
    parents = [x, weight]
    if bias is not None:
        out = out + bias.data
        profiler.record('elementwise', out.size)
        parents.append(bias)

    def _backward(grad: np.ndarray) -> tuple:
        grad2 = grad.reshape(-1, c_out)
        grads = [
            (grad2 @ weight.data.T).reshape(x.shape),
            flat.T @ grad2,
        ]
        if bias is not None:
            grads.append(grad2.sum(axis=0))
        return tuple(grads)

    return Tensor.from_op(out.reshape(lead + (c_out,)), parents, _backward, 'linear')


def softmax_last(x: Tensor) -> Tensor:
    """Softmax over the last axis with max-subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=-1, keepdims=True)
    profiler.record('softmax', profiler.SOFTMAX_FLOPS_PER_ELEMENT * x.size)

    def _backward(grad: np.ndarray) -> tuple:
        return (probs * (grad - (grad * probs).sum(axis=-1, keepdims=True)),)

    return Tensor.from_op(probs, (x,), _backward, 'softmax')


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """
    Normalize each position over channels, then apply the affine map.

    Args:
        x: Input of shape ``[..., C]``
        gain: Per-channel scale ``[C]``
        bias: Per-channel shift ``[C]``
        eps: Variance floor, must be positive

    Returns:
        Tensor shaped like ``x``
    """
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be positive, got {eps}")
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise DimensionError(f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match {x.shape}")

    centred = x.data - x.data.mean(axis=-1, keepdims=True)
    variance = (centred * centred).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(variance + eps)
    normed = centred * inv_std
    out = normed * gain.data + bias.data
    positions = x.size // x.shape[-1]
    profiler.record('norm', profiler.NORM_FLOPS_PER_ELEMENT * x.size + profiler.NORM_FLOPS_PER_POSITION * positions)

    def _backward(grad: np.ndarray) -> tuple:
        grad_normed = grad * gain.data
        grad_x = inv_std * (
            grad_normed
            - grad_normed.mean(axis=-1, keepdims=True)
            - normed * (grad_normed * normed).mean(axis=-1, keepdims=True)
        )
        reduce_axes = tuple(range(x.ndim - 1))
        return grad_x, (grad * normed).sum(axis=reduce_axes), grad.sum(axis=reduce_axes)

    return Tensor.from_op(out, (x, gain, bias), _backward, 'layer_norm')


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    a = x.data
    inner = GELU_COEFF * (a + 0.044715 * a ** 3)
    t = np.tanh(inner)
    out = 0.5 * a * (1.0 + t)
    profiler.record('activation', profiler.GELU_FLOPS_PER_ELEMENT * x.size)

    def _backward(grad: np.ndarray) -> tuple:
        d_inner = GELU_COEFF * (1.0 + 3 * 0.044715 * a * a)
        return (grad * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * d_inner),)

    return Tensor.from_op(out, (x,), _backward, 'gelu')


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale each last-axis row to unit L2 norm (norm floored at ``eps``)."""
    norm = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))
    safe = np.maximum(norm, eps)
    out = x.data / safe
    profiler.record('elementwise', 3 * x.size)

    def _backward(grad: np.ndarray) -> tuple:
        radial = (grad * out).sum(axis=-1, keepdims=True)
        return (np.where(norm > eps, (grad - out * radial) / safe, grad / safe),)

    return Tensor.from_op(out, (x,), _backward, 'l2_normalize')


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate tensors along ``axis``."""
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(grad: np.ndarray) -> tuple:
        return tuple(np.split(grad, bounds, axis=axis))

    return Tensor.from_op(data, tuple(tensors), _backward, 'concat')


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    pad: str = 'same',
) -> Tensor:
    """
    2D cross-correlation over a channel-last batch.

    Args:
        x: Input ``[B, H, W, C_in]``
        weight: Kernel ``[k, k, C_in, C_out]`` with k in {1, 3}
        bias: Optional ``[C_out]``
        stride: 1 or 2
        pad: ``'same'`` (zero padding of (k-1)/2) or ``'none'``

    Returns:
        Tensor ``[B, H_out, W_out, C_out]``

    Raises:
        ConvConfigError: For unsupported kernel size, stride or padding mode
        DimensionError: If channel counts do not match
    """
    k = weight.shape[0]
    if weight.ndim != 4 or weight.shape[1] != k or k not in SUPPORTED_KERNELS:
        logger.error(f"Unsupported conv kernel shape {weight.shape}")
        raise ConvConfigError(f"Kernel must be [k, k, C_in, C_out] with k in {sorted(SUPPORTED_KERNELS)}, got {weight.shape}")
    if stride not in SUPPORTED_STRIDES:
        logger.error(f"Unsupported conv stride {stride}")
        raise ConvConfigError(f"Stride must be one of {sorted(SUPPORTED_STRIDES)}, got {stride}")
    if pad not in ('same', 'none'):
        raise ConvConfigError(f"Padding must be 'same' or 'none', got {pad!r}")
    if x.ndim != 4 or x.shape[-1] != weight.shape[2]:
        logger.error(f"conv2d channel mismatch: {x.shape} with kernel {weight.shape}")
        raise DimensionError(f"conv2d channel mismatch: {x.shape} with kernel {weight.shape}")

    batch, height, width, c_in = x.shape
    c_out = weight.shape[3]
    margin = (k - 1) // 2 if pad == 'same' else 0
    padded = np.pad(x.data, ((0, 0), (margin, margin), (margin, margin), (0, 0)))
    out_h = (height + 2 * margin - k) // stride + 1
    out_w = (width + 2 * margin - k) // stride + 1
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"conv2d input {x.shape} too small for kernel {k} without padding")

    def _tap(di: int, dj: int) -> tuple:
        return (
            slice(None),
            slice(di, di + stride * (out_h - 1) + 1, stride),
            slice(dj, dj + stride * (out_w - 1) + 1, stride),
        )

    out = np.zeros((batch, out_h, out_w, c_out), dtype=np.result_type(x.data, weight.data))
    for di in range(k):
        for dj in range(k):
            out += np.matmul(padded[_tap(di, dj)], weight.data[di, dj])
    profiler.record('conv', profiler.MAC_FLOPS * batch * out_h * out_w * k * k * c_in * c_out)

    parents = [x, weight]
    if bias is not None:
        out = out + bias.data
        profiler.record('elementwise', out.size)
        parents.append(bias)

    def _backward(grad: np.ndarray) -> tuple:
        grad_padded = np.zeros_like(padded)
        grad_weight = np.zeros_like(weight.data)
        grad_rows = grad.reshape(-1, c_out)
        for di in range(k):
            for dj in range(k):
                index = _tap(di, dj)
                grad_padded[index] += np.matmul(grad, weight.data[di, dj].T)
                grad_weight[di, dj] = padded[index].reshape(-1, c_in).T @ grad_rows
        grad_x = grad_padded[:, margin:margin + height, margin:margin + width, :]
        grads = [grad_x, grad_weight]
        if bias is not None:
            grads.append(grad_rows.sum(axis=0))
        return tuple(grads)

    return Tensor.from_op(out, parents, _backward, f'conv{k}x{k}')


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """
    Rearrange ``[B, H, W, C*r*r]`` into ``[B, rH, rW, C]``.

    Channel ``c*r*r + dr*r + dc`` lands at sub-pixel ``(dr, dc)`` (row-major).
    """
    batch, height, width, channels = x.shape
    if channels % (r * r) != 0:
        logger.error(f"pixel_shuffle: {channels} channels not divisible by r^2={r * r}")
        raise DimensionError(f"Channel count {channels} not divisible by r^2={r * r}")
    c = channels // (r * r)
    return (
        x.reshape(batch, height, width, c, r, r)
        .permute(0, 1, 4, 2, 5, 3)
        .reshape(batch, height * r, width * r, c)
    )


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Exact inverse of :func:`pixel_shuffle`."""
    batch, height, width, c = x.shape
    if height % r or width % r:
        raise DimensionError(f"Spatial dims {height}x{width} not divisible by r={r}")
    return (
        x.reshape(batch, height // r, r, width // r, r, c)
        .permute(0, 1, 3, 5, 2, 4)
        .reshape(batch, height // r, width // r, c * r * r)
    )


def crop_spatial(x: Tensor, height: int, width: int) -> Tensor:
    """Top-left ``height`` x ``width`` crop of ``x[B, H, W, C]``; the backward pass zero-fills the rest."""
    if x.ndim != 4 or height > x.shape[1] or width > x.shape[2]:
        raise DimensionError(f"Cannot crop {x.shape} to {height}x{width}")
    data = x.data[:, :height, :width, :].copy()

    def _backward(grad: np.ndarray) -> tuple:
        full = np.zeros_like(x.data)
        full[:, :height, :width, :] = grad
        return (full,)

    return Tensor.from_op(data, (x,), _backward, 'crop')
