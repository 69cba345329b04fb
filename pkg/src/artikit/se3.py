"""Rigid transforms, connector frames and mirror planes.

Rotations are unit quaternions ``(w, x, y, z)``; matrices are only built at
API edges (point application, serialization for external formats).  Lengths
are millimeters unless a caller says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NonOrthogonal, SchemaError, ZeroAxis

Vec3 = tuple[float, float, float]

ORTHO_TOL = 1e-3
AXIS_EPS = 1e-9


def as_vec3(v: Iterable[float], name: str = "vector") -> Vec3:
    vals = tuple(float(c) for c in v)
    if len(vals) != 3 or not all(math.isfinite(c) for c in vals):
        raise SchemaError(name, f"expected 3 finite numbers, got {list(vals)!r}")
    return vals  # type: ignore[return-value]


def _norm(v: Sequence[float]) -> float:
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def _cross(a: Sequence[float], b: Sequence[float]) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _dot(a: Sequence[float], b: Sequence[float]) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@dataclass(frozen=True)
class Rotation:
    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self) -> None:
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("quaternion must be finite and non-zero")
        w, x, y, z = self.w / n, self.x / n, self.y / n, self.z / n
        # keep the hemisphere w >= 0 so equal rotations serialize identically
        if w < 0.0:
            w, x, y, z = -w, -x, -y, -z
        object.__setattr__(self, "w", float(w))
        object.__setattr__(self, "x", float(x))
        object.__setattr__(self, "y", float(y))
        object.__setattr__(self, "z", float(z))

    @classmethod
    def identity(cls) -> Rotation:
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, axis: Sequence[float], angle: float) -> Rotation:
        n = _norm(axis)
        if n < AXIS_EPS:
            raise ZeroAxis("rotation axis is near zero")
        s = math.sin(angle / 2.0) / n
        return cls(math.cos(angle / 2.0), axis[0] * s, axis[1] * s, axis[2] * s)

    @classmethod
    def from_rotvec(cls, omega: Sequence[float]) -> Rotation:
        """Exponential map of a rotation vector (axis times angle, radians)."""
        theta = _norm(omega)
        if theta < 1e-8:
            k = 0.5 - theta * theta / 48.0
        else:
            k = math.sin(theta / 2.0) / theta
        return cls(math.cos(theta / 2.0), omega[0] * k, omega[1] * k, omega[2] * k)

    @classmethod
    def from_matrix(cls, m: np.ndarray | Sequence[Sequence[float]]) -> Rotation:
        r = np.asarray(m, dtype=float)
        tr = r[0, 0] + r[1, 1] + r[2, 2]
        if tr > 0.0:
            s = math.sqrt(tr + 1.0) * 2.0
            return cls(
                0.25 * s,
                (r[2, 1] - r[1, 2]) / s,
                (r[0, 2] - r[2, 0]) / s,
                (r[1, 0] - r[0, 1]) / s,
            )
        if r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
            s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
            return cls(
                (r[2, 1] - r[1, 2]) / s,
                0.25 * s,
                (r[0, 1] + r[1, 0]) / s,
                (r[0, 2] + r[2, 0]) / s,
            )
        if r[1, 1] > r[2, 2]:
            s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
            return cls(
                (r[0, 2] - r[2, 0]) / s,
                (r[0, 1] + r[1, 0]) / s,
                0.25 * s,
                (r[1, 2] + r[2, 1]) / s,
            )
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        return cls(
            (r[1, 0] - r[0, 1]) / s,
            (r[0, 2] + r[2, 0]) / s,
            (r[1, 2] + r[2, 1]) / s,
            0.25 * s,
        )

    @property
    def quat(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)

    def __mul__(self, other: Rotation) -> Rotation:
        a, b = self, other
        return Rotation(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )

    def inverse(self) -> Rotation:
        return Rotation(self.w, -self.x, -self.y, -self.z)

    def rotate(self, v: Sequence[float]) -> Vec3:
        # v' = v + 2w(u x v) + 2 u x (u x v)
        u = (self.x, self.y, self.z)
        t = _cross(u, v)
        t = (2.0 * t[0], 2.0 * t[1], 2.0 * t[2])
        c = _cross(u, t)
        return (
            v[0] + self.w * t[0] + c[0],
            v[1] + self.w * t[1] + c[1],
            v[2] + self.w * t[2] + c[2],
        )

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.quat
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def as_rotvec(self) -> Vec3:
        v = (self.x, self.y, self.z)
        s = _norm(v)
        if s < 1e-12:
            k = 2.0 / self.w
        else:
            k = 2.0 * math.atan2(s, self.w) / s
        return (v[0] * k, v[1] * k, v[2] * k)

    def angle(self) -> float:
        return 2.0 * math.atan2(_norm((self.x, self.y, self.z)), self.w)


def geodesic_distance(a: Rotation, b: Rotation) -> float:
    """Rotation angle of ``a^-1 b`` in ``[0, pi]``, insensitive to quaternion sign.

    Uses the half-chord form so that angles near zero keep full precision,
    which ``2*acos(|<a,b>|)`` does not.
    """
    qa, qb = a.quat, b.quat
    d = sum(p * q for p, q in zip(qa, qb))
    s = 1.0 if d >= 0.0 else -1.0
    diff = math.sqrt(sum((p - s * q) ** 2 for p, q in zip(qa, qb)))
    summ = math.sqrt(sum((p + s * q) ** 2 for p, q in zip(qa, qb)))
    return 4.0 * math.atan2(diff, summ)


@dataclass(frozen=True)
class Pose:
    rotation: Rotation = Rotation()
    translation: Vec3 = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        t = self.translation
        if len(t) != 3:
            raise ValueError("translation must have 3 components")
        object.__setattr__(self, "translation", (float(t[0]), float(t[1]), float(t[2])))

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_translation(cls, t: Sequence[float]) -> Pose:
        return cls(Rotation.identity(), as_vec3(t))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> Pose:
        m = np.asarray(m, dtype=float)
        return cls(Rotation.from_matrix(m[:3, :3]), as_vec3(m[:3, 3]))

    def compose(self, other: Pose) -> Pose:
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        r = self.rotation.rotate(other.translation)
        t = self.translation
        return Pose(self.rotation * other.rotation, (r[0] + t[0], r[1] + t[1], r[2] + t[2]))

    __matmul__ = compose

    def inverse(self) -> Pose:
        inv = self.rotation.inverse()
        t = inv.rotate(self.translation)
        return Pose(inv, (-t[0], -t[1], -t[2]))

    def apply(self, points: np.ndarray | Sequence[float]) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.as_matrix().T + np.asarray(self.translation)

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return (p - np.asarray(self.translation)) @ self.rotation.as_matrix()

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.as_matrix()
        m[:3, 3] = self.translation
        return m

    def axis(self, i: int) -> Vec3:
        e = [0.0, 0.0, 0.0]
        e[i] = 1.0
        return self.rotation.rotate(e)

    def to_json(self) -> dict:
        return {"rotation": list(self.rotation.quat), "translation": list(self.translation)}

    @classmethod
    def from_json(cls, data: dict, field: str = "pose") -> Pose:
        if not isinstance(data, dict) or set(data) - {"rotation", "translation"}:
            raise SchemaError(field, "expected {rotation:[w,x,y,z], translation:[x,y,z]}")
        rot = data.get("rotation", [1.0, 0.0, 0.0, 0.0])
        if not isinstance(rot, list) or len(rot) != 4:
            raise SchemaError(f"{field}.rotation", "expected [w, x, y, z]")
        try:
            rotation = Rotation(*(float(c) for c in rot))
        except ValueError as exc:
            raise SchemaError(f"{field}.rotation", str(exc)) from None
        return cls(rotation, as_vec3(data.get("translation", [0, 0, 0]), f"{field}.translation"))

    def to_pair(self) -> list[list[float]]:
        return [list(self.rotation.quat), list(self.translation)]

    @classmethod
    def from_pair(cls, pair: Sequence[Sequence[float]]) -> Pose:
        return cls(Rotation(*pair[0]), as_vec3(pair[1]))


def rot_x(angle: float) -> Pose:
    return Pose(Rotation.from_axis_angle((1.0, 0.0, 0.0), angle))


def rot_z(angle: float) -> Pose:
    return Pose(Rotation.from_axis_angle((0.0, 0.0, 1.0), angle))


def trans_z(d: float) -> Pose:
    return Pose(translation=(0.0, 0.0, float(d)))


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def invert(p: Pose) -> Pose:
    return p.inverse()


def frame_from_zx(origin: Sequence[float], z_axis: Sequence[float], x_axis: Sequence[float]) -> Pose:
    """Right-handed frame with columns ``(x, z × x, z)`` located at ``origin``.

    ``x_axis`` is Gram-Schmidt projected when it is almost orthogonal to
    ``z_axis`` (``|z·x| <= 1e-3``); larger skew raises :class:`NonOrthogonal`.
    """
    o = as_vec3(origin, "origin")
    zn, xn = _norm(z_axis), _norm(x_axis)
    if zn < AXIS_EPS or xn < AXIS_EPS:
        raise ZeroAxis("connector axis is near zero")
    z = (z_axis[0] / zn, z_axis[1] / zn, z_axis[2] / zn)
    x = (x_axis[0] / xn, x_axis[1] / xn, x_axis[2] / xn)
    d = _dot(z, x)
    if abs(d) > ORTHO_TOL:
        raise NonOrthogonal(f"|z·x| = {abs(d):.3g} exceeds {ORTHO_TOL}")
    x = (x[0] - d * z[0], x[1] - d * z[1], x[2] - d * z[2])
    n = _norm(x)
    x = (x[0] / n, x[1] / n, x[2] / n)
    y = _cross(z, x)
    m = np.array([x, y, z], dtype=float).T
    return Pose(Rotation.from_matrix(m), o)


@dataclass(frozen=True)
class Plane:
    point: Vec3
    normal: Vec3

    def __post_init__(self) -> None:
        n = _norm(self.normal)
        if n < AXIS_EPS:
            raise ZeroAxis("plane normal is near zero")
        object.__setattr__(self, "point", as_vec3(self.point, "plane.point"))
        object.__setattr__(self, "normal", tuple(c / n for c in self.normal))

    def householder(self) -> np.ndarray:
        n = np.asarray(self.normal)
        return np.eye(3) - 2.0 * np.outer(n, n)

    def reflect_point(self, p: Sequence[float]) -> Vec3:
        n = self.normal
        d = _dot((p[0] - self.point[0], p[1] - self.point[1], p[2] - self.point[2]), n)
        return (p[0] - 2 * d * n[0], p[1] - 2 * d * n[1], p[2] - 2 * d * n[2])

    def reflect_vector(self, v: Sequence[float]) -> Vec3:
        n = self.normal
        d = _dot(v, n)
        return (v[0] - 2 * d * n[0], v[1] - 2 * d * n[1], v[2] - 2 * d * n[2])

    def to_json(self) -> dict:
        return {"point": list(self.point), "normal": list(self.normal)}


def reflect_frame(f: Pose, m: Plane) -> Pose:
    """Mirror a frame across ``m`` while keeping it right-handed.

    Origin, z and y are reflected; x is reflected and negated.  Applying it
    twice with the same plane returns the original frame.
    """
    x = m.reflect_vector(f.axis(0))
    y = m.reflect_vector(f.axis(1))
    z = m.reflect_vector(f.axis(2))
    r = np.array([(-x[0], -x[1], -x[2]), y, z], dtype=float).T
    return Pose(Rotation.from_matrix(r), m.reflect_point(f.translation))
