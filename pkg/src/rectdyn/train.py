"""Minibatch SGD training with per-epoch validation, logging and checkpoints."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import Dataset, epoch_batches, read_dataset
from .model import Network, NetworkConfig, build_network, load_checkpoint, save_checkpoint
from .nn import per_example_mse, quadratic_loss, sgd_step

log = logging.getLogger(__name__)

GRAD_NORMS = ("pixel", "batch")


class NumericError(FloatingPointError):
    """Non-finite loss during training."""


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters and file locations.

    ``grad_norm`` selects the divisor applied to the summed gradient before
    each step: "pixel" divides by the number of target pixels in the batch,
    "batch" by the number of samples.
    """

    lr: float = 0.1
    batch_size: int = 128
    epochs: int = 2000
    train_path: str | None = None
    val_path: str | None = None
    seed: int = 0
    checkpoint_out: str | None = None
    log_out: str | None = None
    checkpoint_every: int = 50
    crop: int | None = None
    grad_norm: str = "pixel"
    resume: bool = False

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError(f"learning rate must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.grad_norm not in GRAD_NORMS:
            raise ValueError(f"grad_norm must be one of {GRAD_NORMS}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train: float
    val: float | None = None

    def line(self) -> str:
        cols = [str(self.epoch), f"{self.train:.9g}"]
        if self.val is not None:
            cols.append(f"{self.val:.9g}")
        return "\t".join(cols)


class LossLog:
    """Per-epoch mean losses, one ``epoch<TAB>train[<TAB>val]`` line each."""

    def __init__(self, records=()):
        self.records: list[EpochRecord] = list(records)

    def append(self, rec: EpochRecord) -> None:
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise ValueError(f"epoch {rec.epoch} does not follow {self.records[-1].epoch}")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def epochs(self) -> list[int]:
        return [r.epoch for r in self.records]

    @property
    def train(self) -> list[float]:
        return [r.train for r in self.records]

    @property
    def val(self) -> list[float | None]:
        return [r.val for r in self.records]

    def to_text(self) -> str:
        return "".join(r.line() + "\n" for r in self.records)

    def write(self, path) -> None:
        _atomic_write(path, self.to_text().encode())

    @classmethod
    def from_text(cls, text: str) -> LossLog:
        out = cls()
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) not in (2, 3):
                raise ValueError(f"line {n}: expected 2 or 3 tab-separated columns")
            val = float(cols[2]) if len(cols) == 3 else None
            out.append(EpochRecord(int(cols[0]), float(cols[1]), val))
        return out

    @classmethod
    def read(cls, path) -> LossLog:
        return cls.from_text(Path(path).read_text())


def _atomic_write(path, data: bytes) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=int(seed), spawn_key=key)))


def init_rng(seed: int) -> np.random.Generator:
    return _rng(seed, 0)


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    """Shuffling stream of ``epoch``; depends only on (seed, epoch), so resumed runs match."""
    return _rng(seed, 1, epoch)


def predict_batches(net: Network, data: Dataset, batch_size: int = 128) -> np.ndarray:
    """Eval-mode predictions (n, 1, H, W) for the whole dataset."""
    net.eval()
    out = []
    for i in range(0, len(data), batch_size):
        x, _ = data.batch(np.arange(i, min(i + batch_size, len(data))), net.dtype)
        out.append(net.forward(x))
    return np.concatenate(out) if out else np.empty((0, 1, *data.shape), dtype=net.dtype)


def per_example_losses(net: Network, data: Dataset, batch_size: int = 128) -> np.ndarray:
    """Eval-mode per-pixel MSE of every example."""
    net.eval()
    out = []
    for i in range(0, len(data), batch_size):
        x, y = data.batch(np.arange(i, min(i + batch_size, len(data))), net.dtype)
        out.append(per_example_mse(net.forward(x), y))
    return np.concatenate(out) if out else np.empty(0)


def train_step(net: Network, x: np.ndarray, y: np.ndarray, lr: float, grad_norm: str = "pixel") -> float:
    """One forward/backward/update in train mode; returns the summed quadratic loss."""
    net.train()
    pred = net.forward(x)
    loss, grad = quadratic_loss(pred, y)
    if not math.isfinite(loss):
        return loss
    net.backward(grad)
    sgd_step(net, lr, y.size if grad_norm == "pixel" else y.shape[0])
    return loss


def fit(
    net: Network,
    train_data: Dataset,
    cfg: TrainConfig,
    val_data: Dataset | None = None,
    history: LossLog | None = None,
    on_epoch: Callable[[Network, LossLog], None] | None = None,
) -> LossLog:
    """Train ``net`` in place from epoch ``net.epoch + 1`` to ``cfg.epochs``.

    Each epoch draws a fresh permutation from ``epoch_rng(cfg.seed, epoch)``.
    Logged losses are per-pixel mean squared errors: the training figure
    averages the batch losses seen during the epoch, the validation figure
    is a full eval-mode pass. Raises :class:`NumericError` on a non-finite
    loss.
    """
    history = LossLog() if history is None else history
    pixels = int(np.prod(train_data.shape))
    for epoch in range(net.epoch + 1, cfg.epochs + 1):
        total = 0.0
        batches = epoch_batches(len(train_data), cfg.batch_size, epoch_rng(cfg.seed, epoch))
        for b, idx in enumerate(batches):
            x, y = train_data.batch(idx, net.dtype)
            loss = train_step(net, x, y, cfg.lr, cfg.grad_norm)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b} (samples {idx[:8].tolist()}...)")
            total += loss
        train_loss = total / (len(train_data) * pixels)
        val_loss = None
        if val_data is not None:
            val_loss = float(np.mean(per_example_losses(net, val_data, cfg.batch_size)))
            if not math.isfinite(val_loss):
                raise NumericError(f"non-finite validation loss at epoch {epoch}")
        net.epoch = epoch
        history.append(EpochRecord(epoch, train_loss, val_loss))
        log.info("epoch %d train %.6g val %s", epoch, train_loss, "-" if val_loss is None else f"{val_loss:.6g}")
        if on_epoch is not None:
            on_epoch(net, history)
    return history


def _load(path, crop):
    data = read_dataset(path)
    return data.crop(crop) if crop else data


def train(cfg: TrainConfig, net_cfg: NetworkConfig = NetworkConfig()) -> tuple[Network, LossLog]:
    """File-based training run.

    Writes the checkpoint every ``cfg.checkpoint_every`` epochs and at the
    end, and rewrites the loss log after every epoch. With ``cfg.resume`` and
    an existing checkpoint, continues from its epoch; since shuffling depends
    only on (seed, epoch) and SGD keeps no other state, the result matches an
    uninterrupted run bit for bit.
    """
    if cfg.train_path is None:
        raise ValueError("train_path is required")
    train_data = _load(cfg.train_path, cfg.crop)
    if len(train_data) == 0:
        raise ValueError(f"{cfg.train_path}: empty training set")
    val_data = _load(cfg.val_path, cfg.crop) if cfg.val_path else None

    history = LossLog()
    if cfg.resume and cfg.checkpoint_out and Path(cfg.checkpoint_out).exists():
        net = load_checkpoint(cfg.checkpoint_out, expect=net_cfg)
        if cfg.log_out and Path(cfg.log_out).exists():
            history = LossLog(r for r in LossLog.read(cfg.log_out) if r.epoch <= net.epoch)
        log.info("resuming from epoch %d", net.epoch)
    else:
        net = build_network(net_cfg, init_rng(cfg.seed))

    def on_epoch(net, history):
        if cfg.log_out:
            history.write(cfg.log_out)
        if cfg.checkpoint_out and cfg.checkpoint_every and net.epoch % cfg.checkpoint_every == 0:
            save_checkpoint(net, cfg.checkpoint_out)

    fit(net, train_data, cfg, val_data, history, on_epoch)
    if cfg.checkpoint_out:
        save_checkpoint(net, cfg.checkpoint_out)
    if cfg.log_out:
        history.write(cfg.log_out)
    return net, history
