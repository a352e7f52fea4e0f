"""Contact detection (separating axes) and impulse-based resolution.

Either body argument of :func:`resolve_contact` and
:func:`positional_correction` may be ``None``, which stands for the
immovable border of the unit square. Contact normals always point from
the first body toward the second; wall contacts produced by
:func:`wall_contacts` point inward, so they are resolved with the wall in
first position.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

from .physics import RigidBody, Vec2, cross, drag_wrench, grasp_wrench, integrate_step

if TYPE_CHECKING:
    from .scene import GraspSpec, Scene

WALL = -1
CLAMP_SLACK = 1e-12


@dataclass(frozen=True, slots=True)
class Contact:
    normal: Vec2
    depth: float
    point: Vec2
    body_a: int = 0
    body_b: int = 1

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("contact depth must be >= 0")
        n = math.hypot(*self.normal)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"contact normal must be unit length, got |n|={n}")


def _dot(a: Vec2, b: Vec2) -> float:
    return a[0] * b[0] + a[1] * b[1]


def _extent(body: RigidBody, u: Vec2) -> float:
    ax, ay = body.axes()
    return body.half_extents[0] * abs(_dot(ax, u)) + body.half_extents[1] * abs(_dot(ay, u))


def _face(body: RigidBody, normal: Vec2) -> tuple[Vec2, Vec2, float]:
    """Face of ``body`` whose outward normal is closest to ``normal``.

    Returns (face center, face tangent, half length).
    """
    ax, ay = body.axes()
    hx, hy = body.half_extents
    best = None
    for axis, h, other_axis, other_h in ((ax, hx, ay, hy), (ay, hy, ax, hx)):
        for sign in (1.0, -1.0):
            d = sign * _dot(axis, normal)
            if best is None or d > best[0]:
                c = (body.center[0] + sign * h * axis[0], body.center[1] + sign * h * axis[1])
                best = (d, c, other_axis, other_h)
    return best[1], best[2], best[3]


def _contact_point(ref: RigidBody, inc: RigidBody, ref_normal: Vec2) -> Vec2:
    """Midpoint of the incident face clipped to the reference face's side planes."""
    rc, rt, rh = _face(ref, ref_normal)
    ic, it, ih = _face(inc, (-ref_normal[0], -ref_normal[1]))
    p0 = (ic[0] - ih * it[0], ic[1] - ih * it[1])
    p1 = (ic[0] + ih * it[0], ic[1] + ih * it[1])
    s0 = _dot((p0[0] - rc[0], p0[1] - rc[1]), rt)
    s1 = _dot((p1[0] - rc[0], p1[1] - rc[1]), rt)
    lo, hi = max(min(s0, s1), -rh), min(max(s0, s1), rh)
    if lo > hi or s0 == s1:
        pts = [p0, p1]
    else:
        pts = []
        for s in (lo, hi):
            t = (s - s0) / (s1 - s0)
            pts.append((p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])))
    inside = [p for p in pts if _dot((p[0] - rc[0], p[1] - rc[1]), ref_normal) <= 0.0]
    if inside:
        pts = inside
    return (sum(p[0] for p in pts) / len(pts), sum(p[1] for p in pts) / len(pts))


def sat_contact(a: RigidBody, b: RigidBody, ia: int = 0, ib: int = 1) -> Optional[Contact]:
    """Separating-axis test between two oriented rectangles.

    Returns ``None`` when some face axis separates the projections,
    otherwise the contact along the axis of minimum overlap.
    """
    dx, dy = b.center[0] - a.center[0], b.center[1] - a.center[1]
    ra = math.hypot(*a.half_extents)
    rb = math.hypot(*b.half_extents)
    if dx * dx + dy * dy > (ra + rb) ** 2:
        return None
    best_depth = math.inf
    best_axis = None
    from_a = True
    for owner_is_a, axes in ((True, a.axes()), (False, b.axes())):
        for u in axes:
            d = dx * u[0] + dy * u[1]
            overlap = _extent(a, u) + _extent(b, u) - abs(d)
            if overlap < 0:
                return None
            if overlap < best_depth:
                best_depth = overlap
                best_axis = u if d >= 0 else (-u[0], -u[1])
                from_a = owner_is_a
    n = best_axis
    if from_a:
        point = _contact_point(a, b, n)
    else:
        point = _contact_point(b, a, (-n[0], -n[1]))
    return Contact(normal=n, depth=best_depth, point=point, body_a=ia, body_b=ib)


def wall_contacts(body: RigidBody, index: int = 0) -> list[Contact]:
    """One contact per corner (and per violated wall) outside the unit square."""
    out = []
    for cx, cy in body.corners():
        for depth, normal in ((-cx, (1.0, 0.0)), (cx - 1.0, (-1.0, 0.0)),
                              (-cy, (0.0, 1.0)), (cy - 1.0, (0.0, -1.0))):
            if depth > 0:
                out.append(Contact(normal=normal, depth=depth, point=(cx, cy),
                                   body_a=index, body_b=WALL))
    return out


def resolve_contact(
    a: Optional[RigidBody], b: Optional[RigidBody], c: Contact, restitution: float
) -> tuple[Optional[RigidBody], Optional[RigidBody]]:
    """Frictionless normal impulse with angular coupling. ``None`` is the wall."""
    n = c.normal
    p = c.point
    va = a.point_velocity(p) if a is not None else (0.0, 0.0)
    vb = b.point_velocity(p) if b is not None else (0.0, 0.0)
    vn = (vb[0] - va[0]) * n[0] + (vb[1] - va[1]) * n[1]
    if vn > 0:
        return a, b
    denom = 0.0
    if a is not None:
        ra = (p[0] - a.center[0], p[1] - a.center[1])
        rna = cross(ra, n)
        denom += 1.0 / a.mass + a.inv_inertia * rna * rna
    if b is not None:
        rb = (p[0] - b.center[0], p[1] - b.center[1])
        rnb = cross(rb, n)
        denom += 1.0 / b.mass + b.inv_inertia * rnb * rnb
    if denom == 0.0:
        return a, b
    j = -(1.0 + restitution) * vn / denom
    if a is not None:
        im = 1.0 / a.mass
        a = dataclasses.replace(
            a,
            lin_vel=(a.lin_vel[0] - j * n[0] * im, a.lin_vel[1] - j * n[1] * im),
            ang_vel=a.ang_vel - a.inv_inertia * rna * j,
        )
    if b is not None:
        im = 1.0 / b.mass
        b = dataclasses.replace(
            b,
            lin_vel=(b.lin_vel[0] + j * n[0] * im, b.lin_vel[1] + j * n[1] * im),
            ang_vel=b.ang_vel + b.inv_inertia * rnb * j,
        )
    return a, b


def positional_correction(
    a: Optional[RigidBody], b: Optional[RigidBody], c: Contact, params
) -> tuple[Optional[RigidBody], Optional[RigidBody]]:
    """Push penetrating bodies apart along the normal, split by inverse mass."""
    amount = params.correction_factor * max(c.depth - params.pen_tol, 0.0)
    if amount == 0.0:
        return a, b
    ima = 1.0 / a.mass if a is not None else 0.0
    imb = 1.0 / b.mass if b is not None else 0.0
    total = ima + imb
    if total == 0.0:
        return a, b
    n = c.normal
    if a is not None:
        s = amount * ima / total
        a = dataclasses.replace(a, center=(a.center[0] - s * n[0], a.center[1] - s * n[1]))
    if b is not None:
        s = amount * imb / total
        b = dataclasses.replace(b, center=(b.center[0] + s * n[0], b.center[1] + s * n[1]))
    return a, b


def clamp_to_walls(body: RigidBody, pen_tol: float) -> RigidBody:
    """Translate ``body`` so no corner lies more than ``pen_tol`` outside the square."""
    # aim slightly inside the limit so recomputed corners stay within it
    lim = pen_tol - CLAMP_SLACK
    xs, ys = zip(*body.corners())
    if min(xs) >= -pen_tol and max(xs) <= 1.0 + pen_tol and min(ys) >= -pen_tol and max(ys) <= 1.0 + pen_tol:
        return body
    sx = max(-lim - min(xs), 0.0) - max(max(xs) - 1.0 - lim, 0.0)
    sy = max(-lim - min(ys), 0.0) - max(max(ys) - 1.0 - lim, 0.0)
    if sx == 0.0 and sy == 0.0:
        return body
    return dataclasses.replace(body, center=(body.center[0] + sx, body.center[1] + sy))


def detect_contacts(bodies) -> list[Contact]:
    """All pair contacts (index order) followed by all wall contacts."""
    contacts = []
    nb = len(bodies)
    for i in range(nb):
        for j in range(i + 1, nb):
            c = sat_contact(bodies[i], bodies[j], i, j)
            if c is not None:
                contacts.append(c)
    for i, body in enumerate(bodies):
        contacts.extend(wall_contacts(body, i))
    return contacts


def _pair(bodies: list, c: Contact):
    if c.body_b == WALL:
        return None, bodies[c.body_a]
    return bodies[c.body_a], bodies[c.body_b]


def _store(bodies: list, c: Contact, a, b) -> None:
    if c.body_b == WALL:
        bodies[c.body_a] = b
    else:
        bodies[c.body_a] = a
        bodies[c.body_b] = b


def step_world(scene: Scene, grasp: Optional[GraspSpec], params) -> Scene:
    """Advance a scene by one substep of ``params.dt``.

    Applies the grasp pull (if any) and drag, integrates every body, then
    runs ``params.solver_iters`` rounds of detection, impulse resolution
    and positional correction. A final clamp keeps every corner within
    ``pen_tol`` of the square.
    """
    bodies = list(scene.bodies)
    for i, body in enumerate(bodies):
        f, t = drag_wrench(body, params)
        if grasp is not None and i == grasp.body_index:
            gf, gt = grasp_wrench(body, grasp.anchor_body, params.pull_force)
            f = (f[0] + gf[0], f[1] + gf[1])
            t += gt
        bodies[i] = integrate_step(body, f, t, params.dt)

    for _ in range(params.solver_iters):
        contacts = detect_contacts(bodies)
        if not contacts:
            break
        for c in contacts:
            a, b = _pair(bodies, c)
            a, b = resolve_contact(a, b, c, params.restitution)
            _store(bodies, c, a, b)
        for c in contacts:
            a, b = _pair(bodies, c)
            a, b = positional_correction(a, b, c, params)
            _store(bodies, c, a, b)
    bodies = [clamp_to_walls(b, params.pen_tol) for b in bodies]
    return dataclasses.replace(scene, bodies=tuple(bodies))
