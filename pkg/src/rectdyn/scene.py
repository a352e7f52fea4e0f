"""Random scenes, grasp sampling and 5-frame rollouts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .collision import sat_contact, step_world
from .physics import PhysicsParams, RigidBody, Vec2, make_body

N_BODIES = 10
MAX_REJECTIONS = 10_000


class PlacementError(RuntimeError):
    """Raised when a body cannot be placed without overlap."""


@dataclass(frozen=True)
class Scene:
    bodies: tuple[RigidBody, ...]

    def __len__(self):
        return len(self.bodies)


@dataclass(frozen=True)
class GraspSpec:
    body_index: int
    anchor_body: Vec2
    anchor_world_initial: Vec2


@dataclass(frozen=True)
class SequenceRecord:
    scene_initial: Scene
    grasp: GraspSpec
    frames: tuple[Scene, ...]


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent counter-based generator for sequence ``index`` of run ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def sample_scene(
    rng: np.random.Generator,
    params: PhysicsParams = PhysicsParams(),
    n_bodies: int = N_BODIES,
    stats: list | None = None,
) -> Scene:
    """Place ``n_bodies`` equal rectangles by rejection sampling.

    If ``stats`` is a list, the number of attempts used for each body is
    appended to it.
    """
    hx, hy = params.half_extents
    inset = math.hypot(hx, hy)
    if inset >= 0.5:
        raise PlacementError(f"rectangles with half extents {params.half_extents} do not fit")
    bodies: list[RigidBody] = []
    while len(bodies) < n_bodies:
        for attempt in range(1, MAX_REJECTIONS + 1):
            cx, cy = rng.uniform(inset, 1.0 - inset, size=2)
            angle = rng.uniform(0.0, math.pi)
            cand = make_body((cx, cy), angle, params.half_extents, params.mass)
            if all(sat_contact(b, cand) is None for b in bodies):
                bodies.append(cand)
                if stats is not None:
                    stats.append(attempt)
                break
        else:
            raise PlacementError(
                f"could not place body {len(bodies)} after {MAX_REJECTIONS} attempts"
            )
    return Scene(bodies=tuple(bodies))


def sample_grasp(rng: np.random.Generator, scene: Scene) -> GraspSpec:
    """Uniform point in the union of the body interiors."""
    while True:
        p = tuple(float(v) for v in rng.uniform(0.0, 1.0, size=2))
        for i, body in enumerate(scene.bodies):
            if body.contains(p):
                return GraspSpec(body_index=i, anchor_body=body.to_body(p), anchor_world_initial=p)


def rollout(scene: Scene, grasp: GraspSpec, params: PhysicsParams) -> SequenceRecord:
    frames = []
    current = scene
    for _ in range(params.frames):
        for _ in range(params.substeps_per_frame):
            current = step_world(current, grasp, params)
        frames.append(current)
    return SequenceRecord(scene_initial=scene, grasp=grasp, frames=tuple(frames))


def simulate(seed: int, index: int, params: PhysicsParams) -> SequenceRecord:
    """Scene, grasp and rollout for sequence ``index`` drawn from ``stream(seed, index)``."""
    rng = stream(seed, index)
    scene = sample_scene(rng, params)
    grasp = sample_grasp(rng, scene)
    return rollout(scene, grasp, params)
