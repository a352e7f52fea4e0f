"""Stateful layers: each caches what its backward pass needs.

Parameter gradients accumulate across backward calls until
:func:`rectdyn.nn.optim.sgd_step` (or :meth:`Layer.zero_grad`) clears them.
"""

from __future__ import annotations

import numpy as np

from . import functional as F


class UninitializedStatsError(RuntimeError):
    pass


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.training = True

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)

    def train(self, mode: bool = True):
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def children(self) -> list[Layer]:
        return []

    def kinds(self) -> list[str]:
        return [self.kind]

    def parameters(self):
        """Yields (param, grad) pairs in a fixed order."""
        for name in self.params:
            yield self.params[name], self.grads[name]
        for child in self.children():
            yield from child.parameters()

    def zero_grad(self):
        for _, g in self.parameters():
            g[...] = 0

    def astype(self, dtype):
        for name in list(self.params):
            self.params[name] = self.params[name].astype(dtype)
            self.grads[name] = self.grads[name].astype(dtype)
        for child in self.children():
            child.astype(dtype)
        return self


def walk(layer: Layer):
    """Depth-first iteration over a layer and all its descendants."""
    yield layer
    for child in layer.children():
        yield from walk(child)


class Conv2d(Layer):
    kind = "conv"

    def __init__(self, c_in: int, c_out: int, f: int, dtype=np.float32):
        super().__init__()
        if f % 2 == 0:
            raise ValueError(f"filter size must be odd, got {f}")
        self.c_in, self.c_out, self.f = c_in, c_out, f
        self.params = {
            "weight": np.zeros((c_out, c_in, f, f), dtype=dtype),
            "bias": np.zeros(c_out, dtype=dtype),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._x = None

    @property
    def fan_in(self) -> int:
        return self.f * self.f * self.c_in

    def forward(self, x):
        self._x = x
        return F.conv2d(x, self.params["weight"], self.params["bias"])

    def backward(self, grad_out):
        gx, gw, gb = F.conv2d_backward(self._x, self.params["weight"], grad_out)
        self.grads["weight"] += gw
        self.grads["bias"] += gb
        return gx

    def __repr__(self):
        return f"Conv2d({self.c_in} -> {self.c_out}, {self.f}x{self.f})"


class BatchNorm2d(Layer):
    """Batch normalization with running statistics for eval mode.

    Running variance is tracked with the unbiased estimate; normalization in
    train mode uses the biased one.
    """

    kind = "bn"

    def __init__(self, c: int, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float32):
        super().__init__()
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.c, self.eps, self.momentum = c, eps, momentum
        self.params = {"gamma": np.ones(c, dtype=dtype), "beta": np.zeros(c, dtype=dtype)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.reset_running_stats()
        self._cache = None

    def reset_running_stats(self):
        dtype = self.params["gamma"].dtype
        self.running_mean = np.zeros(self.c, dtype=dtype)
        self.running_var = np.ones(self.c, dtype=dtype)
        self.stats_ready = False

    def astype(self, dtype):
        super().astype(dtype)
        self.running_mean = self.running_mean.astype(dtype)
        self.running_var = self.running_var.astype(dtype)
        return self

    def forward(self, x):
        gamma, beta = self.params["gamma"], self.params["beta"]
        if not self.training:
            if not self.stats_ready:
                raise UninitializedStatsError("batch norm used in eval mode before any train step")
            return F.batchnorm_eval(x, gamma, beta, self.running_mean, self.running_var, self.eps)
        out, self._cache = F.batchnorm_train(x, gamma, beta, self.eps)
        _, _, mean, var = self._cache
        m = x.shape[0] * x.shape[2] * x.shape[3]
        unbiased = var * (m / (m - 1))
        mom = self.momentum
        self.running_mean = ((1 - mom) * self.running_mean + mom * mean).astype(self.running_mean.dtype)
        self.running_var = ((1 - mom) * self.running_var + mom * unbiased).astype(self.running_var.dtype)
        self.stats_ready = True
        return out

    def backward(self, grad_out):
        if self._cache is None:
            raise RuntimeError("backward called without a train-mode forward")
        gx, gg, gb = F.batchnorm_backward(grad_out, self.params["gamma"], self._cache)
        self.grads["gamma"] += gg
        self.grads["beta"] += gb
        return gx


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self._x = x
        return F.relu(x)

    def backward(self, grad_out):
        return F.relu_backward(self._x, grad_out)


class ResidualModule(Layer):
    """(conv > bn > relu > conv) + identity, then bn > relu."""

    kind = "module"

    def __init__(self, q: int, f: int, dtype=np.float32):
        super().__init__()
        self.branch = [Conv2d(q, q, f, dtype), BatchNorm2d(q, dtype=dtype), ReLU(), Conv2d(q, q, f, dtype)]
        self.bn = BatchNorm2d(q, dtype=dtype)
        self.relu = ReLU()

    def children(self):
        return [*self.branch, self.bn, self.relu]

    def kinds(self):
        return [layer.kind for layer in self.branch] + ["add", "bn", "relu"]

    def forward(self, x):
        y = x
        for layer in self.branch:
            y = layer.forward(y)
        y = F.residual_add(y, x)
        return self.relu.forward(self.bn.forward(y))

    def backward(self, grad_out):
        g = self.bn.backward(self.relu.backward(grad_out))
        g_branch, g_identity = F.residual_add_backward(g)
        for layer in reversed(self.branch):
            g_branch = layer.backward(g_branch)
        return g_branch + g_identity


class Sequential(Layer):
    kind = "seq"

    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    def children(self):
        return self.layers

    def kinds(self):
        return [k for layer in self.layers for k in layer.kinds()]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out


class ResidualAdd(Layer):
    """Sum of two equal-shaped inputs, for standalone gradient checks.

    ``forward`` takes a pair ``(branch, identity)``; ``backward`` returns a pair.
    """

    kind = "add"

    def forward(self, x):
        branch, identity = x
        return F.residual_add(branch, identity)

    def backward(self, grad_out):
        return F.residual_add_backward(grad_out)
