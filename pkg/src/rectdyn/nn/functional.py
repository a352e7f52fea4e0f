"""Forward and backward kernels on (n, c, h, w) arrays.

Convolution is a stride-1, zero-padded ("same") cross-correlation computed
by im2col + one matrix product per batch chunk, with activations moved to
channel-major layout so each of the f*f tap copies is a plain slice. For a given chunk size and
BLAS thread count the accumulation order is fixed, so results are
run-to-run deterministic. Gradient w.r.t. the input is the same kernel
applied to the output gradient with spatially flipped, channel-transposed
weights.
"""

from __future__ import annotations

import numpy as np

# cap on im2col buffer size (elements) per chunk
COL_BUDGET = 1 << 24


class ShapeError(ValueError):
    pass


def _chunks(n: int, per_sample: int):
    step = max(1, COL_BUDGET // max(per_sample, 1))
    for i in range(0, n, step):
        yield slice(i, min(i + step, n))


def _im2col(xt: np.ndarray, f: int, h: int, w: int) -> np.ndarray:
    """Channel-major padded input (c, n, h+f-1, w+f-1) -> columns (c*f*f, n*h*w)."""
    c, n = xt.shape[:2]
    cols = np.empty((c, f, f, n, h, w), dtype=xt.dtype)
    for u in range(f):
        for v in range(f):
            cols[:, u, v] = xt[:, :, u:u + h, v:v + w]
    return cols.reshape(c * f * f, n * h * w)


def _padded_channel_major(x: np.ndarray, p: int) -> np.ndarray:
    n, c, h, w = x.shape
    xt = np.zeros((c, n, h + 2 * p, w + 2 * p), dtype=x.dtype)
    xt[:, :, p:p + h, p:p + w] = x.transpose(1, 0, 2, 3)
    return xt


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    n, c, h, w = x.shape
    c_out, c_in, f, f2 = weight.shape
    if c != c_in:
        raise ShapeError(f"conv expects {c_in} input channels, got {c}")
    if f != f2 or f % 2 == 0:
        raise ShapeError(f"filters must be square with odd size, got {f}x{f2}")
    xt = _padded_channel_major(x, (f - 1) // 2)
    wmat = weight.reshape(c_out, -1)
    out = np.empty((c_out, n, h, w), dtype=np.result_type(x, weight))
    for sl in _chunks(n, h * w * c * f * f):
        cols = _im2col(xt[:, sl], f, h, w)
        out[:, sl] = (wmat @ cols).reshape(c_out, -1, h, w)
    if bias is not None:
        out += bias[:, None, None, None]
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


def conv2d_backward(x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray):
    """Returns (grad_x, grad_weight, grad_bias)."""
    n, c, h, w = x.shape
    c_out, _, f, _ = weight.shape
    if grad_out.shape != (n, c_out, h, w):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match {(n, c_out, h, w)}")
    xt = _padded_channel_major(x, (f - 1) // 2)
    go = np.ascontiguousarray(grad_out.transpose(1, 0, 2, 3))
    grad_w = np.zeros((c_out, c * f * f), dtype=np.result_type(x, weight))
    for sl in _chunks(n, h * w * c * f * f):
        cols = _im2col(xt[:, sl], f, h, w)
        grad_w += go[:, sl].reshape(c_out, -1) @ cols.T
    grad_b = grad_out.sum(axis=(0, 2, 3))
    flipped = np.ascontiguousarray(weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    grad_x = conv2d(grad_out, flipped)
    return grad_x, grad_w.reshape(weight.shape), grad_b


def conv2d_reference(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Direct nested-loop convolution; slow, used as a test oracle."""
    n, c, h, w = x.shape
    c_out, _, f, _ = weight.shape
    p = (f - 1) // 2
    out = np.zeros((n, c_out, h, w), dtype=np.float64)
    for b in range(n):
        for o in range(c_out):
            for i in range(h):
                for j in range(w):
                    acc = 0.0 if bias is None else float(bias[o])
                    for k in range(c):
                        for u in range(f):
                            for v in range(f):
                                ii, jj = i + u - p, j + v - p
                                if 0 <= ii < h and 0 <= jj < w:
                                    acc += weight[o, k, u, v] * x[b, k, ii, jj]
                    out[b, o, i, j] = acc
    return out


def batchnorm_train(x, gamma, beta, eps):
    """Per-channel normalization over (n, h, w) with the biased variance.

    Returns (out, cache) where cache feeds :func:`batchnorm_backward`.
    """
    n, c, h, w = x.shape
    if n * h * w < 2:
        raise ShapeError("batch norm in train mode needs at least 2 values per channel")
    mean = x.mean(axis=(0, 2, 3))
    xc = x - mean[None, :, None, None]
    var = (xc * xc).mean(axis=(0, 2, 3))
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std[None, :, None, None]
    out = xhat * gamma[None, :, None, None] + beta[None, :, None, None]
    return out, (xhat, inv_std, mean, var)


def batchnorm_eval(x, gamma, beta, running_mean, running_var, eps):
    scale = gamma / np.sqrt(running_var + eps)
    shift = beta - running_mean * scale
    return x * scale[None, :, None, None] + shift[None, :, None, None]


def batchnorm_backward(grad_out, gamma, cache):
    """Returns (grad_x, grad_gamma, grad_beta) for train-mode batch norm."""
    xhat, inv_std, _, _ = cache
    m = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2, 3))
    k = (gamma * inv_std / m)[None, :, None, None]
    grad_x = k * (m * grad_out - grad_beta[None, :, None, None] - xhat * grad_gamma[None, :, None, None])
    return grad_x, grad_gamma, grad_beta


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    return grad_out * (x > 0)


def residual_add(branch, identity):
    if branch.shape != identity.shape:
        raise ShapeError(f"residual shapes differ: {branch.shape} vs {identity.shape}")
    return branch + identity


def residual_add_backward(grad_out):
    return grad_out, grad_out


def quadratic_loss(pred, target):
    """Sum of squared differences over every element; returns (loss, grad_pred)."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match target {target.shape}")
    diff = pred - target
    return float(np.sum(diff.astype(np.float64) ** 2)), 2.0 * diff


def per_example_mse(pred, target) -> np.ndarray:
    """Per-sample mean squared error over pixels (and channels)."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match target {target.shape}")
    diff = (pred - target).astype(np.float64)
    return (diff * diff).reshape(diff.shape[0], -1).mean(axis=1)
