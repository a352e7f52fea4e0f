"""Initialization and plain SGD."""

from __future__ import annotations

import math

import numpy as np

from .layers import BatchNorm2d, Conv2d, Layer, walk


def init_params(net: Layer, rng: np.random.Generator) -> None:
    """Torch-style default initialization.

    Convolution weights and biases ~ U[-a, a] with a = 1/sqrt(f*f*c_in);
    batch-norm gamma ~ U[0, 1], beta = 0, running statistics cleared.
    """
    for layer in walk(net):
        if isinstance(layer, Conv2d):
            a = 1.0 / math.sqrt(layer.fan_in)
            for name in ("weight", "bias"):
                p = layer.params[name]
                p[...] = rng.uniform(-a, a, size=p.shape)
        elif isinstance(layer, BatchNorm2d):
            layer.params["gamma"][...] = rng.uniform(0.0, 1.0, size=layer.c)
            layer.params["beta"][...] = 0.0
            layer.reset_running_stats()


def sgd_step(net: Layer, lr: float, batch_count: int = 1) -> None:
    """w <- w - lr * grad / batch_count, then zero the gradients."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    scale = lr / batch_count
    for p, g in net.parameters():
        if scale != 0.0:
            p -= (scale * g).astype(p.dtype, copy=False)
        g[...] = 0
