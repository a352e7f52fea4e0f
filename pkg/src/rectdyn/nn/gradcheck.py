"""Central finite-difference checks of analytic gradients (64-bit)."""

from __future__ import annotations

import numpy as np

from . import functional as F
from .layers import Layer, ReLU, walk


class QuadraticLoss(Layer):
    """Quadratic loss against a fixed target, wrapped as a layer for checking."""

    kind = "loss"

    def __init__(self, target: np.ndarray):
        super().__init__()
        self.target = target

    def forward(self, x):
        loss, self._grad = F.quadratic_loss(x, self.target)
        return np.asarray(loss)

    def backward(self, grad_out):
        return self._grad * grad_out


def relative_error(a: np.ndarray, n: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def kink_free_input(layer: Layer, shape, rng, margin: float = 1e-4, tries: int = 100) -> np.ndarray:
    """Standard-normal input whose every ReLU input lies at least ``margin`` from 0.

    Finite differences straddling a ReLU kink measure a one-sided slope, so
    gradient checks of networks are only meaningful away from the kinks.
    """
    relus = [r for r in walk(layer) if isinstance(r, ReLU)]
    for _ in range(tries):
        x = rng.standard_normal(shape)
        layer.train().forward(x.astype(layer_dtype(layer)))
        if all(np.min(np.abs(r._x)) >= margin for r in relus):
            return x
    raise RuntimeError(f"no input with all ReLU inputs {margin:g} away from 0 in {tries} draws")


def layer_dtype(layer: Layer):
    for p, _ in layer.parameters():
        return p.dtype
    return np.float64


def grad_check(layer: Layer, input_shape, tolerance: float | None = None, rng=None,
               step: float = 1e-5, min_abs: float = 0.0, inputs=None,
               dtype=np.float64) -> float:
    """Max relative error between analytic and finite-difference gradients.

    The scalar objective is ``sum(layer(x) * R)`` for a fixed random ``R``,
    so every output element contributes. ``input_shape`` may be a list of
    shapes for layers taking a tuple of inputs. Inputs are drawn from a
    standard normal with magnitudes pushed to at least ``min_abs``.
    Raises ``AssertionError`` when ``tolerance`` is given and exceeded.

    ``dtype=np.longdouble`` lowers the rounding floor of the finite
    differences; needed when a gradient is structurally zero (a conv bias
    feeding batch norm), where float64 noise alone is ~1e-11.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    layer.astype(dtype).train()
    multi = isinstance(input_shape, list)
    shapes = input_shape if multi else [input_shape]
    if inputs is None:
        inputs = []
        for shape in shapes:
            x = rng.standard_normal(shape)
            if min_abs:
                x = np.where(x >= 0, 1.0, -1.0) * np.maximum(np.abs(x), min_abs)
            inputs.append(x)
    inputs = [np.asarray(x, dtype=dtype) for x in inputs]

    def run():
        return layer.forward(tuple(inputs) if multi else inputs[0])

    out = run()
    proj = rng.standard_normal(np.shape(out)).astype(dtype)

    def objective():
        return np.sum(run() * proj)

    layer.zero_grad()
    run()
    g = layer.backward(proj)
    analytic_inputs = list(g) if multi else [g]
    analytic_params = [gr.copy() for _, gr in layer.parameters()]

    worst = 0.0
    targets = list(zip(inputs, analytic_inputs))
    targets += [(p, ga) for (p, _), ga in zip(layer.parameters(), analytic_params)]
    for arr, analytic in targets:
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = objective()
            flat[i] = orig - step
            down = objective()
            flat[i] = orig
            nflat[i] = (up - down) / (2 * step)
        worst = max(worst, relative_error(np.asarray(analytic), numeric))
    if tolerance is not None and worst > tolerance:
        raise AssertionError(f"gradient check failed: max relative error {worst:.3g} > {tolerance:g}")
    return worst
