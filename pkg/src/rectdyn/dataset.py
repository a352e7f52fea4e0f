"""Deterministic generation, storage and batching of (G, S, R) triples.

File layout, little-endian::

    magic   4s   b"DYNP"
    version u32  1
    seed    u64
    count   u32
    height  u16
    width   u16
    count x (G, S, R) planes, each height*width u8 (0 black, 255 white)
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from .physics import PhysicsParams
from .raster import SIZE, SampleTriple, render_triple, to_u8
from .scene import PlacementError, simulate

MAGIC = b"DYNP"
VERSION = 1
HEADER = struct.Struct("<4sIQIHH")


class DatasetFormatError(ValueError):
    pass


class Dataset:
    """Immutable in-memory dataset of quantized triples.

    ``planes`` has shape (count, 3, H, W), dtype uint8, plane order G, S, R.
    """

    def __init__(self, planes: np.ndarray, seed: int = 0):
        if planes.ndim != 4 or planes.shape[1] != 3:
            raise ValueError(f"expected (count, 3, H, W) planes, got {planes.shape}")
        self.planes = planes
        self.planes.setflags(write=False)
        self.seed = seed

    def __len__(self):
        return self.planes.shape[0]

    def __getitem__(self, i) -> SampleTriple:
        g, s, r = (p / 255.0 for p in self.planes[i])
        return SampleTriple(g=g, s=s, r=r)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[2], self.planes.shape[3]

    def batch(self, indices, dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
        """Network inputs (n, 2, H, W) with channels (S, G) and targets (n, 1, H, W)."""
        dtype = np.dtype(dtype)
        p = self.planes[np.asarray(indices)].astype(dtype) / dtype.type(255.0)
        x = p[:, [1, 0]]
        y = p[:, 2:3]
        return np.ascontiguousarray(x), np.ascontiguousarray(y)

    def crop(self, size: int) -> Dataset:
        """Centered spatial crop, used for small sanity runs."""
        h, w = self.shape
        r0, c0 = (h - size) // 2, (w - size) // 2
        return Dataset(np.ascontiguousarray(self.planes[:, :, r0:r0 + size, c0:c0 + size]), self.seed)

    def subset(self, indices) -> Dataset:
        return Dataset(np.ascontiguousarray(self.planes[np.asarray(indices)]), self.seed)


def sample_planes(seed: int, index: int, params: PhysicsParams) -> np.ndarray:
    """Quantized (3, 64, 64) planes of sequence ``index``."""
    try:
        triple = render_triple(simulate(seed, index, params))
    except PlacementError as e:
        raise PlacementError(f"sample {index}: {e}") from e
    return np.stack([to_u8(triple.g), to_u8(triple.s), to_u8(triple.r)])


def generate_planes(seed: int, count: int, params: PhysicsParams, workers: int = 1) -> np.ndarray:
    if count < 0:
        raise ValueError("count must be >= 0")
    work = partial(sample_planes, seed, params=params)
    out = np.empty((count, 3, SIZE, SIZE), dtype=np.uint8)
    if workers <= 1:
        for i in range(count):
            out[i] = work(i)
    else:
        chunk = max(1, count // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, planes in enumerate(pool.map(work, range(count), chunksize=chunk)):
                out[i] = planes
    return out


def write_dataset(planes: np.ndarray, seed: int, path) -> None:
    count, three, h, w = planes.shape
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, seed, count, h, w))
        fh.write(np.ascontiguousarray(planes, dtype=np.uint8).tobytes())
    os.replace(tmp, path)


def generate_dataset(seed: int, count: int, params: PhysicsParams, out_path, workers: int = 1) -> Dataset:
    """Generate ``count`` sequences from ``stream(seed, i)`` and write them to ``out_path``.

    The output is byte-identical for any number of workers.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    planes = generate_planes(seed, count, params, workers)
    write_dataset(planes, seed, out_path)
    return Dataset(planes, seed)


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header ({len(raw)} of {HEADER.size} bytes)")
    magic, version, seed, count, h, w = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version} at offset 4")
    if h != SIZE or w != SIZE:
        raise DatasetFormatError(f"{path}: image size {h}x{w} at offset 20, expected {SIZE}x{SIZE}")
    expected = HEADER.size + count * 3 * h * w
    if len(raw) != expected:
        raise DatasetFormatError(
            f"{path}: expected {expected} bytes for {count} samples, data ends at offset {len(raw)}"
        )
    planes = np.frombuffer(raw, dtype=np.uint8, offset=HEADER.size).reshape(count, 3, h, w)
    return Dataset(planes.copy(), seed)


def epoch_batches(n, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Fresh uniform permutation of range(n), chunked; the last batch may be short.

    ``n`` is a sample count or anything with a length (e.g. a :class:`Dataset`).
    """
    if not isinstance(n, (int, np.integer)):
        n = len(n)
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]
