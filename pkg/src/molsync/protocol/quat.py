"""Orientation quaternions.

Quaternions are (w, x, y, z) tuples. Orientations travel on the wire with at
most 9 significant decimal digits per component, so `canonical` both
renormalizes and snaps components to that grid; everything downstream works
on canonical values and wire encoding is then exact.
"""
from __future__ import annotations

import math

Quat = tuple[float, float, float, float]

IDENTITY: Quat = (1.0, 0.0, 0.0, 0.0)

# Allowed deviation of w^2+x^2+y^2+z^2 from 1.
UNIT_TOL = 1e-9

# Wire grid: 9 decimal places. For components of a unit quaternion (|c| <= 1)
# this is also at most 9 significant digits.
_GRID = 1e-9
_DECIMALS = 9


def norm2(q: Quat) -> float:
    w, x, y, z = q
    return w * w + x * x + y * y + z * z


def is_unit(q: Quat, tol: float = UNIT_TOL) -> bool:
    return abs(norm2(q) - 1.0) <= tol


def normalize(q: Quat) -> Quat:
    n2 = norm2(q)
    if n2 == 0.0 or not math.isfinite(n2):
        raise ValueError(f"cannot normalize quaternion {q!r}")
    s = 1.0 / math.sqrt(n2)
    return (q[0] * s, q[1] * s, q[2] * s, q[3] * s)


def canonical(w: float, x: float, y: float, z: float) -> Quat:
    """Return the wire-canonical unit quaternion for the given components.

    Renormalizes when outside UNIT_TOL, then rounds each component onto the
    wire grid. Rounding can push the squared norm just past tolerance; one
    grid step on the largest component always brings it back (the largest
    component of a near-unit quaternion is >= 0.5, so a step moves the
    squared norm by 1e-9..2e-9, the full width of the tolerance band).
    """
    q = (float(w), float(x), float(y), float(z))
    if not all(math.isfinite(c) for c in q):
        raise ValueError(f"non-finite quaternion {q!r}")
    if not is_unit(q):
        q = normalize(q)
    q = tuple(round(c, _DECIMALS) for c in q)
    drift = norm2(q) - 1.0
    if abs(drift) > UNIT_TOL:
        i = max(range(4), key=lambda k: abs(q[k]))
        nudged = round(q[i] - math.copysign(_GRID, q[i] * drift), _DECIMALS)
        q = q[:i] + (nudged,) + q[i + 1 :]
    if not is_unit(q):
        raise ValueError(f"could not canonicalize quaternion {q!r}")
    return q


def compose_rotation(q1: Quat, q2: Quat) -> Quat:
    """Rotation that applies *q1* first, then *q2* (Hamilton product q2*q1)."""
    for q in (q1, q2):
        if not is_unit(q):
            raise ValueError(f"non-unit quaternion {q!r}")
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    prod = (
        w2 * w1 - x2 * x1 - y2 * y1 - z2 * z1,
        w2 * x1 + x2 * w1 + y2 * z1 - z2 * y1,
        w2 * y1 - x2 * z1 + y2 * w1 + z2 * x1,
        w2 * z1 + x2 * y1 - y2 * x1 + z2 * w1,
    )
    return normalize(prod)


def conjugate(q: Quat) -> Quat:
    w, x, y, z = q
    return (w, -x, -y, -z)


def from_axis_angle(axis: tuple[float, float, float], angle_rad: float) -> Quat:
    ax, ay, az = axis
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        raise ValueError("zero rotation axis")
    s = math.sin(angle_rad / 2.0) / n
    return normalize((math.cos(angle_rad / 2.0), ax * s, ay * s, az * s))
