"""Ranked evaluation, prediction composites and activation grids."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .model import Network
from .raster import SampleTriple, write_png
from .train import per_example_losses, predict_batches

GUTTER = 2
GUTTER_VALUE = 0.5


@dataclass(frozen=True)
class Ranked:
    rank: int  # 1 is the worst example
    index: int
    loss: float


def rank_losses(losses: np.ndarray) -> list[Ranked]:
    """Examples sorted by decreasing loss; ties keep index order."""
    order = np.argsort(-np.asarray(losses), kind="stable")
    return [Ranked(r + 1, int(i), float(losses[i])) for r, i in enumerate(order)]


def worst_and_median(ranked: list[Ranked], k: int = 6) -> tuple[list[Ranked], list[Ranked]]:
    """The ``k`` highest-loss examples and the ``k`` ranked around the median."""
    n = len(ranked)
    k = min(k, n)
    start = max(0, min(n // 2 - k // 2, n - k))
    return ranked[:k], ranked[start:start + k]


def format_table(ranked: list[Ranked]) -> str:
    lines = ["rank\tindex\tloss"]
    lines += [f"{r.rank}\t{r.index}\t{r.loss:.9g}" for r in ranked]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Evaluation:
    losses: np.ndarray
    ranked: list[Ranked]

    @property
    def mean(self) -> float:
        return float(np.mean(self.losses))


def evaluate(net: Network, data: Dataset, batch_size: int = 128) -> Evaluation:
    """Eval-mode per-example per-pixel MSE and its ranking."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    losses = per_example_losses(net, data, batch_size)
    return Evaluation(losses, rank_losses(losses))


def highlight(img: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Shade each pixel's darkness by its difference from the start image."""
    return 1.0 - np.abs(np.clip(img, 0.0, 1.0) - start)


def _stack(tiles, axis: int, gutter: int) -> np.ndarray:
    parts = []
    for i, t in enumerate(tiles):
        if i and gutter:
            shape = list(t.shape)
            shape[axis] = gutter
            parts.append(np.full(shape, GUTTER_VALUE))
        parts.append(t)
    return np.concatenate(parts, axis=axis)


def report_composite(sample: SampleTriple, prediction: np.ndarray, gutter: int = GUTTER) -> np.ndarray:
    """Column of four images G, S, R, prediction; the last two difference-highlighted."""
    rows = [sample.g, sample.s, highlight(sample.r, sample.s), highlight(prediction, sample.s)]
    return _stack(rows, 0, gutter)


def render_report(sample: SampleTriple, prediction: np.ndarray, out_path, gutter: int = GUTTER) -> np.ndarray:
    img = report_composite(sample, prediction, gutter)
    write_png(img, out_path)
    return img


def report_strip(data: Dataset, predictions: np.ndarray, picks: list[Ranked], gutter: int = GUTTER) -> np.ndarray:
    """Side-by-side composites of the picked examples."""
    cols = [report_composite(data[p.index], predictions[p.index, 0], gutter) for p in picks]
    return _stack(cols, 1, 2 * gutter)


def write_report(net: Network, data: Dataset, out_dir, k: int = 6, batch_size: int = 128) -> Evaluation:
    """Write ``losses.tsv`` plus ``worst.png`` and ``median.png`` strips into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ev = evaluate(net, data, batch_size)
    (out / "losses.tsv").write_text(format_table(ev.ranked))
    preds = predict_batches(net, data, batch_size)
    worst, median = worst_and_median(ev.ranked, k)
    write_png(report_strip(data, preds, worst), out / "worst.png")
    write_png(report_strip(data, preds, median), out / "median.png")
    return ev


def normalize_map(m: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; constant maps become 0."""
    lo, hi = float(np.min(m)), float(np.max(m))
    if hi == lo:
        return np.zeros_like(m, dtype=np.float64)
    return (m - lo) / (hi - lo)


def activation_maps(net: Network, s: np.ndarray, g: np.ndarray) -> list[list[np.ndarray]]:
    """Rows of eval-mode activation maps for one sample.

    Row 0 holds the inputs (S, G), then the ReLU after the first convolution,
    then the ReLU closing each residual module, and finally the output.
    """
    net.eval()
    x = np.stack([s, g])[None].astype(net.dtype)
    _, acts = net.forward(x, capture=True)
    return [[a[0, c] for c in range(a.shape[1])] for a in acts]


def activation_grid(rows: list[list[np.ndarray]], gutter: int = 1) -> np.ndarray:
    """Per-map normalized maps laid out one layer per row, left aligned."""
    h, w = rows[0][0].shape
    cols = max(len(r) for r in rows)
    blank = np.full((h, w), GUTTER_VALUE)
    lines = []
    for r in rows:
        tiles = [normalize_map(m) for m in r] + [blank] * (cols - len(r))
        lines.append(_stack(tiles, 1, gutter))
    return _stack(lines, 0, gutter)


def dump_activations(net: Network, sample: SampleTriple, out_path=None, gutter: int = 1):
    """Activation grid of ``sample``; returns (grid image, rows of maps)."""
    rows = activation_maps(net, sample.s, sample.g)
    grid = activation_grid(rows, gutter)
    if out_path is not None:
        write_png(grid, out_path)
    return grid, rows


def plot_losses(history, out_path) -> None:
    """Line chart of train (and validation) loss per epoch."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(history.epochs, history.train, label="train")
    if history.records and all(v is not None for v in history.val):
        ax.plot(history.epochs, history.val, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("per-pixel MSE")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
