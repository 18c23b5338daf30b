"""Log-polar bird's-eye-view root heatmaps and cylinder bbox proposals."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptyHeatmap, OutOfRange
from .geometry import CameraView, RigidPose

# Level camera in an OpenCV-style frame: world up is camera -y.
CAMERA_UP = np.array([0.0, -1.0, 0.0])


@dataclass(frozen=True)
class BevConfig:
    bins_rho: int = 64
    bins_phi: int = 64
    rho_min: float = 0.3
    rho_max: float = 10.0
    gaussian_sigma: float = 1.0

    def __post_init__(self):
        if self.bins_rho < 2 or self.bins_phi < 2:
            raise ValueError("need at least 2 bins per axis")
        if not 0 < self.rho_min < self.rho_max:
            raise ValueError("require 0 < rho_min < rho_max")

    @property
    def log_rho_width(self) -> float:
        return (np.log(self.rho_max) - np.log(self.rho_min)) / self.bins_rho

    @property
    def phi_width(self) -> float:
        return 2 * np.pi / self.bins_phi

    def rho_center(self, i: int) -> float:
        return float(np.exp(np.log(self.rho_min) + (i + 0.5) * self.log_rho_width))

    def phi_center(self, j: int) -> float:
        """Column j is centred on phi = j * width, wrapped to (-pi, pi]."""
        phi = j * self.phi_width
        return float(phi - 2 * np.pi if phi > np.pi else phi)


def ground_plane(root_cam, up=None) -> tuple[float, float]:
    """(lateral, forward) coordinates of a camera-frame point on the horizontal plane.

    ``up`` is the world up direction expressed in the camera frame; by default
    the camera is assumed level (up = -y).
    """
    p = np.asarray(root_cam, dtype=np.float64)
    u = CAMERA_UP if up is None else np.asarray(up, dtype=np.float64)
    u = u / np.linalg.norm(u)
    fwd = np.array([0.0, 0.0, 1.0]) - u[2] * u
    n = np.linalg.norm(fwd)
    if n < 1e-9:
        raise OutOfRange("camera looks straight up or down; heading undefined")
    fwd /= n
    right = np.cross(fwd, u)
    return float(p @ right), float(p @ fwd)


def polar(root_cam, up=None) -> tuple[float, float]:
    x, z = ground_plane(root_cam, up)
    return float(np.hypot(x, z)), float(np.arctan2(x, z))


def bev_bin(rho: float, phi: float, cfg: BevConfig) -> tuple[int, int]:
    if not cfg.rho_min <= rho <= cfg.rho_max:
        raise OutOfRange(f"range {rho:.3f} m outside [{cfg.rho_min}, {cfg.rho_max}]")
    i = int(np.floor((np.log(rho) - np.log(cfg.rho_min)) / cfg.log_rho_width))
    i = min(max(i, 0), cfg.bins_rho - 1)
    j = int(np.round(phi / cfg.phi_width)) % cfg.bins_phi
    return i, j


def encode_bev(root_cam, cfg: BevConfig = BevConfig(), up=None) -> np.ndarray:
    """Unit-peak Gaussian blob at the root's (log rho, phi) bin; phi wraps."""
    rho, phi = polar(root_cam, up)
    i, j = bev_bin(rho, phi, cfg)
    di = np.arange(cfg.bins_rho) - i
    dj = np.arange(cfg.bins_phi) - j
    dj = (dj + cfg.bins_phi // 2) % cfg.bins_phi - cfg.bins_phi // 2  # circular
    s2 = 2.0 * cfg.gaussian_sigma**2
    return np.exp(-(di[:, None] ** 2) / s2) * np.exp(-(dj[None, :] ** 2) / s2)


@dataclass(frozen=True)
class BevDecoding:
    rho: float
    phi: float
    ground: np.ndarray  # (lateral, forward)
    bin: tuple[int, int]


def decode_bev(h, cfg: BevConfig = BevConfig()) -> BevDecoding:
    """Argmax bin centre; ties go to the lowest row-major index."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (cfg.bins_rho, cfg.bins_phi):
        raise ValueError(f"heatmap must be {(cfg.bins_rho, cfg.bins_phi)}, got {h.shape}")
    if not np.isfinite(h).all() or h.max() <= 0:
        raise EmptyHeatmap("heatmap has no positive entry")
    i, j = np.unravel_index(int(np.argmax(h)), h.shape)
    rho, phi = cfg.rho_center(i), cfg.phi_center(j)
    return BevDecoding(rho, phi, np.array([rho * np.sin(phi), rho * np.cos(phi)]), (int(i), int(j)))


def heatmap_to_json(h: np.ndarray) -> str:
    P, Q = h.shape
    return json.dumps({"P": P, "Q": Q, "values": [float(v) for v in h.ravel()]})


def heatmap_from_json(text: str) -> np.ndarray:
    d = json.loads(text)
    return np.asarray(d["values"], dtype=np.float64).reshape(d["P"], d["Q"])


def write_pgm(h: np.ndarray, path) -> None:
    """8-bit binary PGM, scaled to the heatmap maximum."""
    h = np.asarray(h, dtype=np.float64)
    top = h.max() if h.max() > 0 else 1.0
    img = np.clip(np.round(255 * h / top), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


@dataclass(frozen=True)
class Cylinder3D:
    center: np.ndarray  # world metres; axis along world up
    radius: float
    height: float

    def __post_init__(self):
        if not (self.radius > 0 and self.height > 0):
            raise ValueError("cylinder radius and height must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))


WORLD_UP = np.array([0.0, 1.0, 0.0])


def cylinder_points(c: Cylinder3D, k: int = 16, up=WORLD_UP) -> np.ndarray:
    """K points on each of the bottom and top rims, (2K, 3)."""
    up = np.asarray(up, dtype=np.float64)
    a = np.cross(up, [1.0, 0.0, 0.0])
    if np.linalg.norm(a) < 1e-9:
        a = np.cross(up, [0.0, 0.0, 1.0])
    a /= np.linalg.norm(a)
    b = np.cross(up, a)
    ang = 2 * np.pi * np.arange(k) / k
    ring = c.radius * (np.cos(ang)[:, None] * a + np.sin(ang)[:, None] * b)
    half = 0.5 * c.height * up
    return np.concatenate([c.center - half + ring, c.center + half + ring])


def cylinder_to_bbox(c: Cylinder3D, cam: CameraView, k: int = 16):
    """Clipped (x1, y1, x2, y2) bbox of the projected cylinder rims, or None."""
    pts = cam.pose.apply(cylinder_points(c, k))
    front = pts[:, 2] > 1e-12
    if not front.any():
        return None
    K = cam.intrinsics
    p = pts[front]
    u = K.fx * p[:, 0] / p[:, 2] + K.cx
    v = K.fy * p[:, 1] / p[:, 2] + K.cy
    x1, x2 = max(u.min(), 0.0), min(u.max(), float(K.width))
    y1, y2 = max(v.min(), 0.0), min(v.max(), float(K.height))
    if x2 <= x1 or y2 <= y1:
        return None
    return np.array([x1, y1, x2, y2])


def head_pose_to_cylinder(
    ego_cam_pose: RigidPose, radius: float = 0.4, margin: float = 0.15, up=WORLD_UP
) -> Cylinder3D:
    """Ground-standing proposal cylinder under a head-mounted camera.

    The ground is the plane through the world origin orthogonal to ``up``;
    the cylinder reaches ``margin`` above the camera.
    """
    up = np.asarray(up, dtype=np.float64)
    c = ego_cam_pose.center
    cam_height = max(float(c @ up), 0.0)
    height = cam_height + margin
    foot = c - (c @ up) * up
    return Cylinder3D(foot + 0.5 * height * up, radius, height)
