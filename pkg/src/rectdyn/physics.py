"""Rigid-body state, applied wrenches and time integration.

Bodies are rectangles living in the unit square. All operations are pure:
they take a :class:`RigidBody` and return a new one.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

Vec2 = tuple[float, float]


def moment_of_inertia(mass: float, half_extents: Vec2) -> float:
    """Moment of inertia of a uniform-density rectangle about its center."""
    hx, hy = half_extents
    if mass <= 0 or hx <= 0 or hy <= 0:
        raise ValueError(f"mass and half extents must be positive, got {mass}, {half_extents}")
    return mass * ((2 * hx) ** 2 + (2 * hy) ** 2) / 12.0


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if -math.pi < a <= math.pi:
        return a
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


def cross(a: Vec2, b: Vec2) -> float:
    return a[0] * b[1] - a[1] * b[0]


def rotate(v: Vec2, angle: float) -> Vec2:
    c, s = math.cos(angle), math.sin(angle)
    return (c * v[0] - s * v[1], s * v[0] + c * v[1])


@dataclass(frozen=True, slots=True)
class RigidBody:
    center: Vec2
    angle: float
    half_extents: Vec2
    lin_vel: Vec2 = (0.0, 0.0)
    ang_vel: float = 0.0
    mass: float = 1.0
    inv_inertia: float = 0.0

    def __post_init__(self):
        if self.half_extents[0] <= 0 or self.half_extents[1] <= 0:
            raise ValueError(f"half extents must be positive, got {self.half_extents}")
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        if self.inv_inertia <= 0:
            raise ValueError("inv_inertia must be positive; build bodies with make_body()")

    @property
    def inertia(self) -> float:
        return 1.0 / self.inv_inertia

    @property
    def inv_mass(self) -> float:
        return 1.0 / self.mass

    def axes(self) -> tuple[Vec2, Vec2]:
        """World-frame unit vectors of the body's local x and y axes."""
        c, s = math.cos(self.angle), math.sin(self.angle)
        return (c, s), (-s, c)

    def to_world(self, p: Vec2) -> Vec2:
        ox, oy = rotate(p, self.angle)
        return (self.center[0] + ox, self.center[1] + oy)

    def to_body(self, p: Vec2) -> Vec2:
        return rotate((p[0] - self.center[0], p[1] - self.center[1]), -self.angle)

    def corners(self) -> list[Vec2]:
        """Corners in counter-clockwise order, world frame."""
        hx, hy = self.half_extents
        return [self.to_world(p) for p in ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy))]

    def contains(self, p: Vec2) -> bool:
        """Strict point-in-rectangle test."""
        bx, by = self.to_body(p)
        return abs(bx) < self.half_extents[0] and abs(by) < self.half_extents[1]

    def point_velocity(self, p: Vec2) -> Vec2:
        rx, ry = p[0] - self.center[0], p[1] - self.center[1]
        return (self.lin_vel[0] - self.ang_vel * ry, self.lin_vel[1] + self.ang_vel * rx)

    def replace(self, **changes) -> RigidBody:
        return dataclasses.replace(self, **changes)


def make_body(
    center: Vec2,
    angle: float = 0.0,
    half_extents: Vec2 = (0.08, 0.04),
    mass: float = 1.0,
    lin_vel: Vec2 = (0.0, 0.0),
    ang_vel: float = 0.0,
) -> RigidBody:
    """Build a body with a consistent inverse inertia."""
    return RigidBody(
        center=(float(center[0]), float(center[1])),
        angle=float(angle),
        half_extents=(float(half_extents[0]), float(half_extents[1])),
        lin_vel=(float(lin_vel[0]), float(lin_vel[1])),
        ang_vel=float(ang_vel),
        mass=float(mass),
        inv_inertia=1.0 / moment_of_inertia(mass, half_extents),
    )


@dataclass(frozen=True)
class PhysicsParams:
    """Simulation constants shared by every sequence.

    ``pull_force`` is an absolute force; the default equals 3 times the
    default body mass.
    """

    dt: float = 1.0 / 80.0
    substeps_per_frame: int = 16
    frames: int = 5
    lin_drag: float = 10.0
    ang_drag: float = 10.0
    restitution: float = 0.5
    pull_force: float = 3.0
    pen_tol: float = 1e-3
    correction_factor: float = 0.8
    solver_iters: int = 4
    mass: float = 1.0
    half_extents: Vec2 = field(default=(0.08, 0.04))

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.frames != 5:
            raise ValueError("sequences have exactly 5 frames")
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must lie in [0, 1]")
        if not 0.0 < self.correction_factor <= 1.0:
            raise ValueError("correction_factor must lie in (0, 1]")
        if self.substeps_per_frame < 1 or self.solver_iters < 1:
            raise ValueError("substeps_per_frame and solver_iters must be >= 1")
        if self.mass <= 0 or min(self.half_extents) <= 0:
            raise ValueError("mass and half extents must be positive")

    def replace(self, **changes) -> PhysicsParams:
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(float(x)) for x in v)
            else:
                v = repr(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> PhysicsParams:
        """Parse a flat ``key=value`` file; ``#`` starts a comment."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"line {lineno}: unknown parameter {key!r}")
            if key == "half_extents":
                parts = [float(s) for s in value.split(",")]
                if len(parts) != 2:
                    raise ValueError(f"line {lineno}: half_extents needs two values")
                kwargs[key] = (parts[0], parts[1])
            elif types[key] in ("int", int):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> PhysicsParams:
        with open(path) as fh:
            return cls.from_text(fh.read())


def grasp_wrench(body: RigidBody, anchor_body: Vec2, pull_force: float) -> tuple[Vec2, float]:
    """Upward pull applied at a body-fixed anchor; returns (force, torque about the center)."""
    hx, hy = body.half_extents
    if abs(anchor_body[0]) > hx * (1 + 1e-9) or abs(anchor_body[1]) > hy * (1 + 1e-9):
        raise ValueError(f"anchor {anchor_body} lies outside the body extents {body.half_extents}")
    force = (0.0, float(pull_force))
    r = rotate(anchor_body, body.angle)
    return force, cross(r, force)


def drag_wrench(body: RigidBody, params: PhysicsParams) -> tuple[Vec2, float]:
    """Linear fluid friction; rates are per unit mass / inertia."""
    k = params.lin_drag * body.mass
    force = (-k * body.lin_vel[0], -k * body.lin_vel[1])
    torque = -params.ang_drag * body.inertia * body.ang_vel
    return force, torque


def integrate_step(body: RigidBody, force: Vec2, torque: float, dt: float) -> RigidBody:
    """Semi-implicit Euler: velocities first, then positions with the new velocities."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    im = 1.0 / body.mass
    vx = body.lin_vel[0] + force[0] * im * dt
    vy = body.lin_vel[1] + force[1] * im * dt
    w = body.ang_vel + torque * body.inv_inertia * dt
    return dataclasses.replace(
        body,
        center=(body.center[0] + vx * dt, body.center[1] + vy * dt),
        angle=wrap_angle(body.angle + w * dt),
        lin_vel=(vx, vy),
        ang_vel=w,
    )
