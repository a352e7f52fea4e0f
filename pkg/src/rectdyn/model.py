"""The residual network, its parameter count, and checkpoint files.

Layer order (also the checkpoint order)::

    conv(2->q) bn relu  [conv(q->q) bn relu conv(q->q) add bn relu] x d  conv(q->1)

Input channel 0 is the start image S, channel 1 the grasp image G.

Checkpoint layout, little-endian: magic b"DYNW", u32 version, u32 f, q, d,
in_channels, out_channels, u32 epoch, then per layer in order: conv weight
and bias as f32; batch norm as u32 stats flag followed by gamma, beta,
running mean and running variance as f32.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .nn import BatchNorm2d, Conv2d, ReLU, ResidualModule, Sequential, init_params
from .nn.layers import walk

MAGIC = b"DYNW"
VERSION = 1
HEADER = struct.Struct("<4s7I")


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    f: int = 5
    q: int = 16
    d: int = 8
    in_channels: int = 2
    out_channels: int = 1

    def __post_init__(self):
        if self.f % 2 == 0 or self.f < 1:
            raise ValueError(f"filter size must be odd, got {self.f}")
        if self.q < 1 or self.d < 1:
            raise ValueError("q and d must be >= 1")


class Network(Sequential):
    def __init__(self, cfg: NetworkConfig, dtype=np.float32):
        self.cfg = cfg
        layers = [Conv2d(cfg.in_channels, cfg.q, cfg.f, dtype), BatchNorm2d(cfg.q, dtype=dtype), ReLU()]
        layers += [ResidualModule(cfg.q, cfg.f, dtype) for _ in range(cfg.d)]
        layers.append(Conv2d(cfg.q, cfg.out_channels, cfg.f, dtype))
        super().__init__(layers)
        self.epoch = 0

    @property
    def dtype(self):
        return self.layers[0].params["weight"].dtype

    def forward(self, x, capture: bool = False):
        """Forward pass; with ``capture`` also returns the activation maps
        [input, relu after the first conv, relu closing each module, output]."""
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ValueError(f"expected (n, {self.cfg.in_channels}, h, w) input, got {x.shape}")
        acts = [x] if capture else None
        for layer in self.layers:
            x = layer.forward(x)
            if capture and isinstance(layer, (ReLU, ResidualModule)):
                acts.append(x)
        if capture:
            acts.append(x)
            return x, acts
        return x

    def predict(self, s: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Prediction from batches of start and grasp images, (n, h, w) each."""
        if s.shape != g.shape:
            raise ValueError(f"start and grasp batches differ in shape: {s.shape} vs {g.shape}")
        x = np.stack([s, g], axis=1).astype(self.dtype)
        return self.forward(x)[:, 0]

    def convs(self) -> list[Conv2d]:
        return [layer for layer in walk(self) if isinstance(layer, Conv2d)]

    def stateful_layers(self) -> list:
        return [layer for layer in walk(self) if isinstance(layer, (Conv2d, BatchNorm2d))]


def build_network(cfg: NetworkConfig = NetworkConfig(), rng=None, dtype=np.float32) -> Network:
    net = Network(cfg, dtype)
    init_params(net, np.random.default_rng(0) if rng is None else rng)
    return net


def param_count(net) -> int:
    """Weights, biases, gammas and betas; running statistics excluded."""
    return sum(p.size for p, _ in net.parameters())


def save_checkpoint(net: Network, path) -> None:
    cfg = net.cfg
    chunks = [HEADER.pack(MAGIC, VERSION, cfg.f, cfg.q, cfg.d, cfg.in_channels,
                          cfg.out_channels, net.epoch)]
    for layer in net.stateful_layers():
        if isinstance(layer, Conv2d):
            arrays = [layer.params["weight"], layer.params["bias"]]
        else:
            chunks.append(struct.pack("<I", int(layer.stats_ready)))
            arrays = [layer.params["gamma"], layer.params["beta"], layer.running_mean, layer.running_var]
        chunks += [np.asarray(a, dtype="<f4").tobytes() for a in arrays]
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


def load_checkpoint(path, expect: NetworkConfig | None = None) -> Network:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, f, q, d, cin, cout, epoch = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    cfg = NetworkConfig(f=f, q=q, d=d, in_channels=cin, out_channels=cout)
    if expect is not None and expect != cfg:
        raise CheckpointError(f"{path}: size mismatch, file holds {cfg}, expected {expect}")
    net = Network(cfg)
    net.epoch = epoch
    pos = HEADER.size

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape)) * 4
        if pos + n > len(raw):
            raise CheckpointError(f"{path}: truncated at offset {len(raw)}, parameters for {cfg} need more")
        a = np.frombuffer(raw, dtype="<f4", count=n // 4, offset=pos).reshape(shape).astype(np.float32)
        pos += n
        return a

    for layer in net.stateful_layers():
        if isinstance(layer, Conv2d):
            layer.params["weight"] = take(layer.params["weight"].shape)
            layer.params["bias"] = take(layer.params["bias"].shape)
        else:
            if pos + 4 > len(raw):
                raise CheckpointError(f"{path}: truncated at offset {len(raw)}")
            (flag,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            c = layer.c
            layer.params["gamma"] = take((c,))
            layer.params["beta"] = take((c,))
            layer.running_mean = take((c,))
            layer.running_var = take((c,))
            layer.stats_ready = bool(flag)
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes, size mismatch with {cfg}")
    return net
