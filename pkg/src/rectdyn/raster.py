"""Rendering of scenes and grasp points to 64x64 grayscale images.

Images are float arrays of shape (64, 64) with values in [0, 1]: white
background, dark shapes. Row 0 is the top of the image and maps to world
y = 1, so upward motion in the world moves content toward row 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIZE = 64
SUPERSAMPLE = 4
DOT_RADIUS = 1.5


@dataclass(frozen=True)
class SampleTriple:
    g: np.ndarray
    s: np.ndarray
    r: np.ndarray


def sample_offsets(ss: int) -> tuple[np.ndarray, np.ndarray]:
    """Sub-pixel sample offsets in [0, 1) on a regular ss x ss grid."""
    u = (np.arange(ss) + 0.5) / ss
    ox, oy = np.meshgrid(u, u, indexing="ij")
    return ox.ravel(), oy.ravel()


def body_coverage(body, size: int = SIZE, ss: int = SUPERSAMPLE) -> np.ndarray:
    """Fraction of each pixel covered by ``body``, estimated with ss*ss samples."""
    cover = np.zeros((size, size))
    xs, ys = zip(*body.corners())
    c0 = max(int(math.floor(min(xs) * size)), 0)
    c1 = min(int(math.floor(max(xs) * size)) + 1, size)
    r0 = max(int(math.floor((1.0 - max(ys)) * size)), 0)
    r1 = min(int(math.floor((1.0 - min(ys)) * size)) + 1, size)
    if c0 >= c1 or r0 >= r1:
        return cover
    ox, oy = sample_offsets(ss)
    px = (np.arange(c0, c1)[None, :, None] + ox) / size
    py = 1.0 - (np.arange(r0, r1)[:, None, None] + oy) / size
    dx = px - body.center[0]
    dy = py - body.center[1]
    c, s = math.cos(body.angle), math.sin(body.angle)
    bx = c * dx + s * dy
    by = -s * dx + c * dy
    inside = (np.abs(bx) < body.half_extents[0]) & (np.abs(by) < body.half_extents[1])
    cover[r0:r1, c0:c1] = inside.mean(axis=2)
    return cover


def render_state(scene, size: int = SIZE, ss: int = SUPERSAMPLE) -> np.ndarray:
    """Dark rectangles on white; overlapping paint keeps the darkest value."""
    img = np.ones((size, size))
    for body in scene.bodies:
        np.minimum(img, 1.0 - body_coverage(body, size, ss), out=img)
    return img


def render_grasp(anchor_world, size: int = SIZE, ss: int = SUPERSAMPLE,
                 radius: float = DOT_RADIUS) -> np.ndarray:
    """White image with an anti-aliased dark disc of ``radius`` pixels at the anchor."""
    x, y = anchor_world
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ValueError(f"anchor {anchor_world} outside the unit square")
    col, row = x * size, (1.0 - y) * size
    ox, oy = sample_offsets(ss)
    px = np.arange(size)[None, :, None] + ox
    py = np.arange(size)[:, None, None] + oy
    inside = ((px - col) ** 2 + (py - row) ** 2) < radius * radius
    return 1.0 - inside.mean(axis=2)


def render_triple(record) -> SampleTriple:
    return SampleTriple(
        g=render_grasp(record.grasp.anchor_world_initial),
        s=render_state(record.scene_initial),
        r=render_state(record.frames[-1]),
    )


def to_u8(img: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(img: np.ndarray, path) -> None:
    """Binary 8-bit PGM (P5, maxval 255)."""
    data = to_u8(img)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    data = np.frombuffer(raw[pos + 1:pos + 1 + w * h], dtype=np.uint8)
    return data.reshape(h, w) / 255.0


def write_png(img: np.ndarray, path) -> None:
    from PIL import Image

    Image.fromarray(to_u8(img), mode="L").save(path)
