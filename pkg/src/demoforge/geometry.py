"""Rigid-body math: unit quaternions, poses, interpolation.

Conventions
-----------
- Quaternions are stored (w, x, y, z), unit norm, canonical sign w >= 0.
  Two canonical quaternions describe the same rotation iff they are equal
  (up to the double cover collapsed by the sign rule).
- Poses map local coordinates to parent coordinates: p_parent = R p + t.
- Serialized poses are 7 float64 values [w, x, y, z, tx, ty, tz].
- Rotation vectors (log map) use the axis * angle convention in radians.
"""

import numpy as np

EPS = 1e-12
SLERP_ANGLE_EPS = 1e-7  # below this quaternion angle slerp degrades to nlerp


class Quat:
    """Unit quaternion, canonicalized to w >= 0 at construction."""

    __slots__ = ("wxyz",)

    def __init__(self, w: float, x: float, y: float, z: float):
        q = np.array([w, x, y, z], dtype=np.float64)
        n = np.linalg.norm(q)
        if n < EPS:
            raise ValueError("zero-norm quaternion")
        q /= n
        if q[0] < 0.0:
            q = -q
        self.wxyz = q

    @classmethod
    def identity(cls) -> "Quat":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_wxyz(cls, arr) -> "Quat":
        a = np.asarray(arr, dtype=np.float64).reshape(4)
        return cls(a[0], a[1], a[2], a[3])

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Quat":
        ax = np.asarray(axis, dtype=np.float64).reshape(3)
        n = np.linalg.norm(ax)
        if n < EPS:
            raise ValueError("zero-norm rotation axis")
        ax = ax / n
        h = 0.5 * float(angle)
        s = np.sin(h)
        return cls(np.cos(h), ax[0] * s, ax[1] * s, ax[2] * s)

    @classmethod
    def from_rotvec(cls, rv) -> "Quat":
        v = np.asarray(rv, dtype=np.float64).reshape(3)
        angle = np.linalg.norm(v)
        if angle < EPS:
            # first-order expansion keeps the map smooth through zero
            return cls(1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2])
        return cls.from_axis_angle(v / angle, angle)

    @classmethod
    def from_matrix(cls, m) -> "Quat":
        """Shepperd's method; m must be a proper rotation matrix."""
        m = np.asarray(m, dtype=np.float64)
        t = np.trace(m)
        if t > 0.0:
            s = np.sqrt(t + 1.0) * 2.0
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] >= m[2, 2]:
            s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        return cls(w, x, y, z)

    @property
    def w(self) -> float:
        return float(self.wxyz[0])

    @property
    def vec(self) -> np.ndarray:
        return self.wxyz[1:]

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.wxyz
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=np.float64,
        )

    def multiply(self, other: "Quat") -> "Quat":
        w1, x1, y1, z1 = self.wxyz
        w2, x2, y2, z2 = other.wxyz
        return Quat(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def inverse(self) -> "Quat":
        w, x, y, z = self.wxyz
        return Quat(w, -x, -y, -z)

    def rotate(self, points) -> np.ndarray:
        """Rotate one (3,) point or a batch (N, 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.as_matrix().T

    def to_rotvec(self) -> np.ndarray:
        n = np.linalg.norm(self.vec)
        if n < EPS:
            return 2.0 * self.vec.copy()
        angle = 2.0 * np.arctan2(n, self.wxyz[0])
        return (angle / n) * self.vec

    def angle_to(self, other: "Quat") -> float:
        """Rotation angle (radians) separating two orientations.

        atan2-based so it stays accurate for very small angles where
        acos of the dot product saturates.
        """
        rel = self.inverse().multiply(other)
        return 2.0 * float(np.arctan2(np.linalg.norm(rel.vec), abs(rel.w)))

    def dot(self, other: "Quat") -> float:
        return float(self.wxyz @ other.wxyz)

    def __repr__(self) -> str:
        w, x, y, z = self.wxyz
        return f"Quat({w:.6g}, {x:.6g}, {y:.6g}, {z:.6g})"


def rot_x(angle: float) -> Quat:
    return Quat.from_axis_angle((1.0, 0.0, 0.0), angle)


def rot_y(angle: float) -> Quat:
    return Quat.from_axis_angle((0.0, 1.0, 0.0), angle)


def rot_z(angle: float) -> Quat:
    return Quat.from_axis_angle((0.0, 0.0, 1.0), angle)


def slerp(q0: Quat, q1: Quat, t: float) -> Quat:
    """Shortest-path spherical interpolation.

    The sign of q1 is flipped when the dot product is negative so the path
    never takes the long way around; below SLERP_ANGLE_EPS of quaternion
    angle the spherical weights are ill-conditioned and a normalized lerp
    is exact to working precision.
    """
    a = q0.wxyz
    b = q1.wxyz.copy()
    d = float(a @ b)
    if d < 0.0:
        b = -b
        d = -d
    d = min(d, 1.0)
    angle = np.arccos(d)
    if angle < SLERP_ANGLE_EPS:
        out = (1.0 - t) * a + t * b
    else:
        s = np.sin(angle)
        out = (np.sin((1.0 - t) * angle) / s) * a + (np.sin(t * angle) / s) * b
    return Quat(out[0], out[1], out[2], out[3])


class Pose:
    """Rigid transform: rotation Quat + translation (3,)."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: Quat, translation):
        self.rotation = rotation
        self.translation = np.asarray(translation, dtype=np.float64).reshape(3).copy()

    @classmethod
    def identity(cls) -> "Pose":
        return cls(Quat.identity(), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> "Pose":
        return cls(Quat.identity(), t)

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return cls(Quat.from_matrix(m[:3, :3]), m[:3, 3])

    @classmethod
    def from_array(cls, arr) -> "Pose":
        a = np.asarray(arr, dtype=np.float64).reshape(7)
        return cls(Quat(a[0], a[1], a[2], a[3]), a[4:7])

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.rotation.wxyz, self.translation])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.as_matrix()
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Pose") -> "Pose":
        """self then other, i.e. (self * other).apply(p) == self.apply(other.apply(p))."""
        return Pose(
            self.rotation.multiply(other.rotation),
            self.rotation.rotate(other.translation) + self.translation,
        )

    def inverse(self) -> "Pose":
        rinv = self.rotation.inverse()
        return Pose(rinv, -rinv.rotate(self.translation))

    def apply(self, points) -> np.ndarray:
        """Transform one (3,) point or a batch (N, 3) into the parent frame."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.as_matrix().T + self.translation

    def __repr__(self) -> str:
        t = self.translation
        return f"Pose({self.rotation!r}, [{t[0]:.6g}, {t[1]:.6g}, {t[2]:.6g}])"


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def apply_point(pose: Pose, point) -> np.ndarray:
    return pose.apply(point)


def pose_lerp(a: Pose, b: Pose, t: float) -> Pose:
    """Linear translation, slerped rotation. Endpoints are exact."""
    return Pose(
        slerp(a.rotation, b.rotation, t),
        (1.0 - t) * a.translation + t * b.translation,
    )


def pose_distance(a: Pose, b: Pose) -> tuple[float, float]:
    """(translation distance, rotation angle) between two poses."""
    return (
        float(np.linalg.norm(a.translation - b.translation)),
        a.rotation.angle_to(b.rotation),
    )
