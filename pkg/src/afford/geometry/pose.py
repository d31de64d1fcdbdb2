"""Rigid transforms as (unit quaternion, translation) pairs.

Quaternions are stored scalar-first, ``(w, x, y, z)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from afford.errors import InvalidInputError


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.flags.writeable = False
    return arr


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise InvalidInputError("cannot normalize a zero or non-finite quaternion")
    q = q / n
    # canonical hemisphere keeps serialized poses stable
    if q[0] < 0.0 or (q[0] == 0.0 and next((c for c in q[1:] if c != 0.0), 0.0) < 0.0):
        q = -q
    return q


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return quat_normalize(q)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = axis / n
    h = 0.5 * angle
    return np.concatenate([[np.cos(h)], np.sin(h) * axis])


def quat_angle(a, b) -> float:
    """Angle in radians of the rotation taking ``a`` to ``b``."""
    d = abs(float(np.dot(a, b)))
    return 2.0 * np.arccos(min(1.0, d))


def quat_between(u, v) -> np.ndarray:
    """Shortest-arc rotation mapping direction ``u`` onto direction ``v``."""
    u = np.asarray(u, float) / np.linalg.norm(u)
    v = np.asarray(v, float) / np.linalg.norm(v)
    d = float(np.dot(u, v))
    if d < -1.0 + 1e-12:
        # antiparallel: rotate by pi about any axis orthogonal to u
        ortho = np.cross(u, [1.0, 0.0, 0.0])
        if np.linalg.norm(ortho) < 1e-6:
            ortho = np.cross(u, [0.0, 1.0, 0.0])
        return quat_from_axis_angle(ortho, np.pi)
    axis = np.cross(u, v)
    q = np.array([1.0 + d, *axis])
    return q / np.linalg.norm(q)


def slerp(a, b, t: float) -> np.ndarray:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    d = float(np.dot(a, b))
    if d < 0.0:
        b = -b
        d = -d
    if d > 1.0 - 1e-12:
        q = a + t * (b - a)
        return q / np.linalg.norm(q)
    theta = np.arccos(d)
    s = np.sin(theta)
    q = (np.sin((1 - t) * theta) * a + np.sin(t * theta) * b) / s
    return q / np.linalg.norm(q)


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``x -> R x + p``."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        q = np.asarray(self.rotation, dtype=float).reshape(-1)
        p = np.asarray(self.position, dtype=float).reshape(-1)
        if q.shape != (4,) or p.shape != (3,):
            raise InvalidInputError("pose needs a 4-quaternion and a 3-position")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise InvalidInputError("pose components must be finite")
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-9:
            q = q / n
        object.__setattr__(self, "rotation", _frozen(q))
        object.__setattr__(self, "position", _frozen(p))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, rot, position=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(matrix_to_quat(rot), position)

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def homogeneous(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.matrix
        out[:3, 3] = self.position
        return out

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.matrix.T + self.position

    def rotate(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.matrix.T

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first."""
        return Pose(quat_mul(self.rotation, other.rotation), self.apply(other.position))

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        qi = quat_conj(self.rotation)
        return Pose(qi, -(quat_to_matrix(qi) @ self.position))

    def to_dict(self) -> dict:
        return {"pos": [float(v) for v in self.position], "quat": [float(v) for v in self.rotation]}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(d.get("quat", (1.0, 0.0, 0.0, 0.0)), d["pos"])

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        same_q = np.allclose(self.rotation, other.rotation, atol=atol) or np.allclose(
            self.rotation, -other.rotation, atol=atol
        )
        return bool(same_q and np.allclose(self.position, other.position, atol=atol))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.rotation, other.rotation) and np.array_equal(self.position, other.position))

    def __hash__(self) -> int:
        return hash((tuple(self.rotation), tuple(self.position)))


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed unit quaternion (Shoemake)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1 - u1), np.sqrt(u1)
    q = np.array([
        a * np.sin(2 * np.pi * u2), a * np.cos(2 * np.pi * u2),
        b * np.sin(2 * np.pi * u3), b * np.cos(2 * np.pi * u3),
    ])
    return quat_normalize(q)


# root of psi**4 = psi + 4
_SF_PSI = 1.533751168755204288118041
_SF_PHI = np.sqrt(2.0)


def super_fibonacci(n: int) -> np.ndarray:
    """Quasi-uniform set of ``n`` unit quaternions (super-Fibonacci spiral)."""
    if n < 1:
        raise InvalidInputError("need at least one orientation")
    s = np.arange(n) + 0.5
    r = np.sqrt(s / n)
    big_r = np.sqrt(1.0 - s / n)
    alpha = 2.0 * np.pi * s / _SF_PHI
    beta = 2.0 * np.pi * s / _SF_PSI
    q = np.stack([r * np.sin(alpha), r * np.cos(alpha), big_r * np.sin(beta), big_r * np.cos(beta)], axis=1)
    return np.array([quat_normalize(x) for x in q])
