"""Pinhole cameras, rigid and similarity transforms, 6D rotations.

Conventions: extrinsics are camera-from-world (``x_cam = R @ x_world + t``),
right-handed, camera +z forward, +x right, +y down.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegenerateInput,
    InputError,
    NonPositiveDepth,
)

TOL = 1e-9
DEPTH_EPS = 1e-12


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise InputError(f"expected shape {shape}, got {arr.shape}")
    arr.flags.writeable = False
    return arr


def is_rotation(R: np.ndarray, tol: float = TOL) -> bool:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return (
        np.linalg.norm(R.T @ R - np.eye(3)) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputError("principal point outside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(
            float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
            int(d["width"]), int(d["height"]),
        )


@dataclass(frozen=True)
class RigidPose:
    """Camera-from-world rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _frozen(self.rotation, (3, 3))
        t = _frozen(self.translation, (3,))
        if not is_rotation(R):
            raise InputError("rotation is not in SO(3)")
        if not np.all(np.isfinite(t)):
            raise InputError("translation must be finite")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def look_at(cls, center, target, up=(0.0, 1.0, 0.0)) -> "RigidPose":
        """Pose of a camera at ``center`` looking at ``target``.

        ``up`` is the world up direction; the image +y axis points opposite to it.
        """
        center = np.asarray(center, dtype=np.float64)
        z = np.asarray(target, dtype=np.float64) - center
        z /= np.linalg.norm(z)
        up = np.asarray(up, dtype=np.float64)
        x = np.cross(z, up)
        if np.linalg.norm(x) < TOL:
            raise DegenerateConfiguration("viewing direction parallel to up")
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])  # rows: camera axes in world coordinates
        return cls(R, -R @ center)

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, x_world) -> np.ndarray:
        """World point(s) -> camera frame. Accepts (3,) or (N, 3)."""
        return np.asarray(x_world, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse_apply(self, x_cam) -> np.ndarray:
        """Camera-frame point(s) -> world frame."""
        return (np.asarray(x_cam, dtype=np.float64) - self.translation) @ self.rotation

    def inverse(self) -> "RigidPose":
        return RigidPose(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, other: "RigidPose") -> "RigidPose":
        """``self ∘ other``: apply ``other`` first."""
        return RigidPose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def to_dict(self) -> dict:
        return {
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RigidPose":
        return cls(np.reshape(d["rotation"], (3, 3)), d["translation"])


@dataclass(frozen=True)
class CameraView:
    id: str
    intrinsics: CameraIntrinsics
    pose: RigidPose
    projection: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "projection", compose_projection(self.intrinsics, self.pose)
        )

    def project(self, x_world) -> np.ndarray:
        return project_points(self.projection, x_world)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "intrinsics": self.intrinsics.to_dict(),
            "pose": self.pose.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraView":
        try:
            return cls(
                str(d["id"]),
                CameraIntrinsics.from_dict(d["intrinsics"]),
                RigidPose.from_dict(d["pose"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed camera record: {exc}") from exc


def compose_projection(k: CameraIntrinsics, pose: RigidPose) -> np.ndarray:
    """P = K [R | t]."""
    P = k.K @ np.hstack([pose.rotation, pose.translation[:, None]])
    P.flags.writeable = False
    return P


def project(P: np.ndarray, x) -> np.ndarray:
    """Project one world point through a 3x4 matrix."""
    h = np.asarray(P, dtype=np.float64) @ np.append(np.asarray(x, dtype=np.float64), 1.0)
    if h[2] <= DEPTH_EPS:
        raise NonPositiveDepth(f"point has non-positive depth (w={h[2]:.3g})")
    return h[:2] / h[2]


def project_points(P: np.ndarray, X) -> np.ndarray:
    """Vectorised :func:`project` for (N, 3) arrays; raises if any depth <= 0."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        return project(P, X)
    h = X @ P[:, :3].T + P[:, 3]
    if np.any(h[..., 2] <= DEPTH_EPS):
        raise NonPositiveDepth("at least one point has non-positive depth")
    return h[..., :2] / h[..., 2:3]


def project_points_unchecked(P: np.ndarray, X) -> tuple[np.ndarray, np.ndarray]:
    """Project without raising; returns (uv, w). uv is nan where w <= 0."""
    X = np.asarray(X, dtype=np.float64)
    h = X @ P[:, :3].T + P[:, 3]
    w = h[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = h[..., :2] / w[..., None]
    uv[w <= DEPTH_EPS] = np.nan
    return uv, w


def backproject(k: CameraIntrinsics, pose: RigidPose, uv, depth: float) -> np.ndarray:
    """World point on the ray through pixel ``uv`` at camera-frame depth ``depth``."""
    u, v = uv
    p_cam = depth * np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0])
    return pose.inverse_apply(p_cam)


@dataclass(frozen=True)
class SimilarityTransform:
    """x -> scale * rotation @ x + translation."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise InputError("scale must be positive")
        R = _frozen(self.rotation, (3, 3))
        if not is_rotation(R, 1e-8):
            raise InputError("rotation is not in SO(3)")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.scale * x @ self.rotation.T + self.translation

    def inverse(self) -> "SimilarityTransform":
        Rt = self.rotation.T
        return SimilarityTransform(
            1.0 / self.scale, Rt, -(Rt @ self.translation) / self.scale
        )

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """``self ∘ other``."""
        return SimilarityTransform(
            self.scale * other.scale,
            self.rotation @ other.rotation,
            self.scale * self.rotation @ other.translation + self.translation,
        )

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.scale * self.rotation
        T[:3, 3] = self.translation
        return T


def umeyama_align(src, dst, with_scale: bool = True) -> tuple[SimilarityTransform, float]:
    """Least-squares similarity transform mapping ``src`` onto ``dst``.

    Returns the transform and the residual sum of squared distances
    ``sum_i ||dst_i - (s R src_i + t)||^2``.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 3 or src.shape != dst.shape:
        raise InputError(f"expected matching (N, 3) arrays, got {src.shape} and {dst.shape}")
    n = len(src)
    if n < 3:
        raise DegenerateConfiguration("need at least 3 correspondences")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    var_s = (xs**2).sum() / n
    # second singular value of the centred cloud vanishes iff points are collinear
    sv = np.linalg.svd(xs, compute_uv=False)
    if var_s <= 0 or sv[1] <= TOL * max(sv[0], 1.0):
        raise DegenerateConfiguration("source points are collinear or coincident")

    cov = xd.T @ xs / n
    U, d, Vt = np.linalg.svd(cov)
    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2] = -1.0
    R = U @ np.diag(S) @ Vt
    s = float((d * S).sum() / var_s) if with_scale else 1.0
    t = mu_d - s * R @ mu_s
    tf = SimilarityTransform(s, R, t)
    residual = float(((dst - tf.apply(src)) ** 2).sum())
    return tf, residual


def rot6d_to_matrix(r) -> np.ndarray:
    """6D rotation -> 3x3 matrix; accepts (..., 6).

    The first three entries are the first column direction, the last three
    pick the plane of the second column (Gram-Schmidt).
    """
    r = np.asarray(r, dtype=np.float64)
    a1 = r[..., :3]
    a2 = r[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    n2a = np.linalg.norm(a2, axis=-1, keepdims=True)
    if np.any(n1 <= TOL) or np.any(n2a <= TOL):
        raise DegenerateInput("6D rotation has a zero column")
    b1 = a1 / n1
    u = a2 - (b1 * a2).sum(-1, keepdims=True) * b1
    n2 = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(n2 <= TOL * n2a):
        raise DegenerateInput("6D rotation columns are parallel")
    b2 = u / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def rot6d_vjp(r, grad_R) -> np.ndarray:
    """Pull a gradient wrt rotation matrices back onto their 6D parameters."""
    r = np.asarray(r, dtype=np.float64)
    grad_R = np.asarray(grad_R, dtype=np.float64)
    a1, a2 = r[..., :3], r[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    b1 = a1 / n1
    u = a2 - (b1 * a2).sum(-1, keepdims=True) * b1
    n2 = np.linalg.norm(u, axis=-1, keepdims=True)
    b2 = u / n2
    g1, g2, g3 = grad_R[..., 0], grad_R[..., 1], grad_R[..., 2]

    dot = lambda a, b: (a * b).sum(-1, keepdims=True)  # noqa: E731
    gb1 = g1 + np.cross(b2, g3)
    gb2 = g2 + np.cross(g3, b1)
    gu = (gb2 - b2 * dot(b2, gb2)) / n2
    ga2 = gu - b1 * dot(b1, gu)
    gb1 = gb1 - a2 * dot(b1, gu) - dot(b1, a2) * gu
    ga1 = (gb1 - b1 * dot(b1, gb1)) / n1
    return np.concatenate([ga1, ga2], axis=-1)


def matrix_to_rot6d(R) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    Kx = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + np.sin(angle) * Kx + (1 - np.cos(angle)) * Kx @ Kx


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
