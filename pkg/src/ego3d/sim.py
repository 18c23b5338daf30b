"""Deterministic synthetic multi-camera capture of walking subjects.

Subjects are animated kinematic bodies (root path + walk cycle + head
sway).  Every subject wears a head-mounted camera; stationary cameras sit on
a ring around the arena looking at its centre.  World frame: +y up, ground
plane y = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bev import Cylinder3D, cylinder_to_bbox
from .body_fit import BodyParams, KinematicModel, forward_kinematics
from .errors import InvalidConfig
from .geometry import (
    CameraIntrinsics,
    CameraView,
    RigidPose,
    matrix_to_rot6d,
    project_points_unchecked,
    rot6d_to_matrix,
    rotation_about,
)
from .tracker import DetectionInput

PATHS = ("circle", "figure-eight", "linear-bounce")
EGO_MOUNT = np.array([0.0, 0.10, 0.0])  # head frame, metres
# head frame (+x left, +y up, +z forward) -> camera frame (+x right, +y down, +z forward)
HEAD_TO_CAM = np.diag([-1.0, -1.0, 1.0])
BODY_RADIUS = 0.25  # occluder / bbox cylinder radius
EGO_INTRINSICS = CameraIntrinsics(450.0, 450.0, 704.0, 704.0, 1408, 1408)
STATIC_INTRINSICS = CameraIntrinsics(1000.0, 1000.0, 960.0, 540.0, 1920, 1080)


@dataclass(frozen=True)
class MotionSpec:
    path: str = "circle"
    speed: float = 1.0  # m/s

    def __post_init__(self):
        if self.path not in PATHS + ("static",):
            raise InvalidConfig(f"unknown path type {self.path!r}")
        if self.speed < 0:
            raise InvalidConfig("speed must be non-negative")


@dataclass(frozen=True)
class SceneConfig:
    n_subjects: int = 3
    n_static_cams: int = 8
    duration_s: float = 10.0
    fps: float = 20.0
    arena: tuple[float, float] = (4.0, 4.0)  # half extents along x and z
    motion: tuple[MotionSpec, ...] | None = None
    seed: int = 0
    ring_radius: float = 10.0
    static_height: float = 3.0
    shape_std: float = 0.5
    head_sway_deg: float = 25.0
    min_separation: float = 0.6  # metres between any two root axes, at every frame

    def __post_init__(self):
        if self.n_subjects < 1:
            raise InvalidConfig("n_subjects must be >= 1")
        if self.n_static_cams < 0:
            raise InvalidConfig("n_static_cams must be >= 0")
        if not (self.fps > 0 and self.duration_s > 0):
            raise InvalidConfig("fps and duration must be positive")
        if min(self.arena) <= 0:
            raise InvalidConfig("arena extents must be positive")
        if self.motion is not None and len(self.motion) != self.n_subjects:
            raise InvalidConfig("need one motion spec per subject")
        if self.n_frames < 1:
            raise InvalidConfig("scene has no frames")
        if self.min_separation < 0:
            raise InvalidConfig("min_separation must be non-negative")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.fps))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["arena"] = list(self.arena)
        d["motion"] = None if self.motion is None else [m.__dict__ for m in self.motion]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        if d.get("motion") is not None:
            d["motion"] = tuple(MotionSpec(**m) for m in d["motion"])
        if "arena" in d:
            d["arena"] = tuple(d["arena"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc


@dataclass(frozen=True)
class NoiseConfig:
    keypoint_sigma_px: float = 0.0
    detection_drop_rate: float = 0.0
    false_positive_rate: float = 0.0
    bbox_jitter_px: float = 0.0
    outlier_view_rate: float = 0.0
    occlusion: bool = False
    root_sigma_m: float = 0.0
    depth_scale_error: float = 0.0
    outlier_min_px: float = 50.0
    min_visible_fraction: float = 0.3

    def __post_init__(self):
        for name in ("detection_drop_rate", "false_positive_rate", "outlier_view_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1]")
        for name in ("keypoint_sigma_px", "bbox_jitter_px", "root_sigma_m", "depth_scale_error"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseConfig":
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc


@dataclass
class Subject:
    id: int
    params: BodyParams  # T frames
    keypoints: np.ndarray  # (T, 17, 3)
    joints: np.ndarray  # (T, 24, 3)
    head_rotation: np.ndarray  # (T, 3, 3) world-from-head
    height: float

    @property
    def root(self) -> np.ndarray:
        return self.joints[:, 0]

    def cylinder(self, t: int, radius: float = BODY_RADIUS) -> Cylinder3D:
        r = self.root[t]
        return Cylinder3D(np.array([r[0], 0.5 * self.height, r[2]]), radius, self.height)


@dataclass
class CameraStream:
    id: str
    kind: str  # "ego" | "static"
    intrinsics: CameraIntrinsics
    poses: list[RigidPose]
    wearer: int | None = None

    def view(self, t: int) -> CameraView:
        return CameraView(self.id, self.intrinsics, self.poses[t])


@dataclass
class Scene:
    config: SceneConfig
    model: KinematicModel
    subjects: list[Subject]
    cameras: list[CameraStream]
    kp2d: np.ndarray  # (C, S, T, 17, 2), nan behind the camera
    kp_depth: np.ndarray  # (C, S, T, 17)
    in_view: np.ndarray  # (C, S, T, 17) in front, inside the image, not the wearer
    occluded: np.ndarray  # (C, S, T, 17) line of sight blocked by another subject
    bboxes: np.ndarray  # (C, S, T, 4), nan when not visible
    root_cam: np.ndarray  # (C, S, T, 3)

    @property
    def fps(self) -> float:
        return self.config.fps

    @property
    def n_frames(self) -> int:
        return self.kp2d.shape[2]

    def camera_index(self, cam_id: str) -> int:
        return [c.id for c in self.cameras].index(cam_id)

    def visible(self, occlusion: bool) -> np.ndarray:
        return self.in_view & ~self.occluded if occlusion else self.in_view.copy()

    def detectable(self, occlusion: bool, min_fraction: float = 0.3) -> np.ndarray:
        """(C, S, T) subjects whose box exists and enough keypoints are visible."""
        frac = self.visible(occlusion).mean(axis=-1)
        return np.isfinite(self.bboxes).all(axis=-1) & (frac >= min_fraction)

    def gt_frames(self, cam: int, occlusion: bool = False, min_fraction: float = 0.3):
        """Per frame ``(subject_ids, boxes)`` of ground-truth detections in camera ``cam``."""
        det = self.detectable(occlusion, min_fraction)[cam]
        out = []
        for t in range(self.n_frames):
            ids = [s for s in range(len(self.subjects)) if det[s, t]]
            out.append((ids, self.bboxes[cam, ids, t].reshape(-1, 4)))
        return out


# --------------------------------------------------------------------------
# motion


def _root_path(spec: MotionSpec, T: int, fps: float, arena, rng) -> np.ndarray:
    """(T, 2) ground positions (x, z) inside the arena."""
    ax, az = arena
    margin = BODY_RADIUS + 0.1
    hx, hz = ax - margin, az - margin
    t = np.arange(T) / fps
    if spec.path == "static" or spec.speed == 0:
        p = np.array([rng.uniform(-hx, hx), rng.uniform(-hz, hz)])
        return np.tile(p, (T, 1))
    if spec.path == "circle":
        r = rng.uniform(0.4, 0.8) * min(hx, hz)
        c = np.array([rng.uniform(-hx + r, hx - r), rng.uniform(-hz + r, hz - r)])
        w = spec.speed / r * rng.choice([-1.0, 1.0])
        ph = rng.uniform(0, 2 * np.pi)
        return c + r * np.stack([np.cos(w * t + ph), np.sin(w * t + ph)], axis=1)
    if spec.path == "figure-eight":
        A = rng.uniform(0.6, 0.9) * min(hx, hz)
        # x = A sin(u), z = A sin(u) cos(u); |dp/du| averages about 1.22 A
        w = spec.speed / (1.22 * A)
        ph = rng.uniform(0, 2 * np.pi)
        u = w * t + ph
        return np.stack([A * np.sin(u), A * np.sin(u) * np.cos(u)], axis=1)
    # linear-bounce: reflect at the arena walls
    p0 = np.array([rng.uniform(-hx, hx), rng.uniform(-hz, hz)])
    ang = rng.uniform(0, 2 * np.pi)
    v = spec.speed * np.array([np.cos(ang), np.sin(ang)])
    raw = p0 + t[:, None] * v
    out = np.empty_like(raw)
    for k, h in enumerate((hx, hz)):
        q = np.mod(raw[:, k] + h, 4 * h)
        out[:, k] = np.where(q <= 2 * h, q, 4 * h - q) - h
    return out


def _heading(path: np.ndarray, fps: float, initial: float) -> np.ndarray:
    v = np.gradient(path, 1.0 / fps, axis=0) if len(path) > 1 else np.zeros_like(path)
    speed = np.linalg.norm(v, axis=1)
    yaw = np.arctan2(v[:, 0], v[:, 1])
    out = np.empty(len(path))
    last = initial
    for i in range(len(path)):
        if speed[i] > 1e-6:
            last = yaw[i]
        out[i] = last
    return np.unwrap(out)


def animate(model: KinematicModel, ground: np.ndarray, yaw: np.ndarray, shape,
            fps: float, speed: float, phase: float, head_sway_deg: float = 25.0) -> BodyParams:
    """Walk-cycle body parameters following a ground path."""
    T = len(ground)
    t = np.arange(T) / fps
    names = model.joint_names
    theta = BodyParams.rest(T, model.num_joints, model.shape_basis.shape[0], shape=shape)
    stride = 2 * np.pi * (speed / 1.4) * t + phase
    amp = min(speed, 1.5) / 1.5
    x_axis, y_axis = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])

    def set_rot(name, axis, angles):
        k = names.index(name) - 1
        theta.pose[:, k] = np.array([matrix_to_rot6d(rotation_about(axis, a)) for a in angles])

    set_rot("left_hip", x_axis, -0.45 * amp * np.sin(stride))
    set_rot("right_hip", x_axis, 0.45 * amp * np.sin(stride))
    set_rot("left_knee", x_axis, 0.6 * amp * np.clip(np.sin(stride + 1.2), 0, None))
    set_rot("right_knee", x_axis, 0.6 * amp * np.clip(-np.sin(stride + 1.2), 0, None))
    set_rot("left_shoulder", x_axis, 0.35 * amp * np.sin(stride))
    set_rot("right_shoulder", x_axis, -0.35 * amp * np.sin(stride))
    set_rot("left_elbow", x_axis, -0.3 - 0.2 * amp * np.sin(stride) ** 2)
    set_rot("right_elbow", x_axis, -0.3 - 0.2 * amp * np.sin(stride) ** 2)
    sway = np.deg2rad(head_sway_deg) * np.sin(2 * np.pi * 0.15 * t + 2 * phase)
    set_rot("head", y_axis, sway)

    theta.global_orient = np.array([matrix_to_rot6d(rotation_about(y_axis, a)) for a in yaw])
    off = model.offsets(np.asarray(shape, dtype=np.float64))
    # standing height of the pelvis: ankles 8 cm above the ground at rest
    rest = forward_kinematics(model, BodyParams.rest(1, model.num_joints, len(shape), shape=shape), True)[1][0]
    pelvis_h = -rest[:, 1].min() + 0.08 - off[0, 1]
    bob = 0.015 * amp * np.cos(2 * stride)
    theta.transl = np.stack([ground[:, 0], pelvis_h + bob, ground[:, 1]], axis=1)
    return theta


# --------------------------------------------------------------------------
# cameras and visibility


def static_ring(n: int, radius: float, height: float, intrinsics=STATIC_INTRINSICS,
                target=(0.0, 1.0, 0.0)) -> list[CameraView]:
    cams = []
    for i in range(n):
        a = 2 * np.pi * i / n
        c = np.array([radius * np.sin(a), height, radius * np.cos(a)])
        cams.append(CameraView(f"static{i:02d}", intrinsics, RigidPose.look_at(c, target)))
    return cams


def ego_pose(head_pos: np.ndarray, head_rot: np.ndarray) -> RigidPose:
    """Camera mounted above the head joint, looking along the head's forward axis."""
    center = head_pos + head_rot @ EGO_MOUNT
    R_wc = head_rot @ HEAD_TO_CAM
    return RigidPose(R_wc.T, -R_wc.T @ center)


def segment_hits_cylinder(p0: np.ndarray, p1: np.ndarray, cxz: np.ndarray,
                          radius: float, height: float) -> np.ndarray:
    """Whether open segments p0->p1 pass through a vertical cylinder on the ground.

    p0, p1: (..., 3); cxz: (..., 2) cylinder axis position broadcastable.
    The far endpoint itself is excluded.
    """
    d = p1 - p0
    oxz = p0[..., [0, 2]] - cxz
    dxz = d[..., [0, 2]]
    a = (dxz**2).sum(-1)
    b = 2 * (oxz * dxz).sum(-1)
    c = (oxz**2).sum(-1) - radius**2
    disc = b * b - 4 * a * c
    hit = np.zeros(np.broadcast(a, disc).shape, dtype=bool)
    vertical = a < 1e-18
    with np.errstate(invalid="ignore", divide="ignore"):
        sq = np.sqrt(np.maximum(disc, 0))
        t1 = np.where(vertical, 0.0, (-b - sq) / (2 * a))
        t2 = np.where(vertical, 1.0, (-b + sq) / (2 * a))
    t1 = np.maximum(t1, 0.0)
    t2 = np.minimum(t2, 1.0 - 1e-9)
    inside_xz = np.where(vertical, c <= 0, disc >= 0)
    ok = inside_xz & (t2 > t1)
    y1 = p0[..., 1] + t1 * d[..., 1]
    y2 = p0[..., 1] + t2 * d[..., 1]
    lo, hi = np.minimum(y1, y2), np.maximum(y1, y2)
    hit = ok & (hi >= 0.0) & (lo <= height)
    return hit


def build_scene(cfg: SceneConfig, model: KinematicModel, params: Sequence[BodyParams],
                static_cams: Sequence[CameraView]) -> Scene:
    """Assemble ground truth for given subject parameters and stationary cameras."""
    T = cfg.n_frames
    subjects = []
    for s, th in enumerate(params):
        kp, joints = forward_kinematics(model, th, return_joints=True)
        R_root = rot6d_to_matrix(th.global_orient)
        R_local = rot6d_to_matrix(th.pose)
        head = model.joint_names.index("head")
        chain = []
        k = head
        while k > 0:
            chain.append(k)
            k = model.parents[k]
        G = R_root.copy()
        for k in reversed(chain):
            G = G @ R_local[:, k - 1]
        height = float(joints[:, :, 1].max() + 0.12)
        subjects.append(Subject(s, th, kp, joints, G, height))

    cams: list[CameraStream] = []
    head = model.joint_names.index("head")
    for s in subjects:
        poses = [ego_pose(s.joints[t, head], s.head_rotation[t]) for t in range(T)]
        cams.append(CameraStream(f"ego{s.id:02d}", "ego", EGO_INTRINSICS, poses, s.id))
    for cv in static_cams:
        cams.append(CameraStream(cv.id, "static", cv.intrinsics, [cv.pose] * T))

    C, S, J = len(cams), len(subjects), model.num_keypoints
    kp2d = np.full((C, S, T, J, 2), np.nan)
    depth = np.zeros((C, S, T, J))
    in_view = np.zeros((C, S, T, J), dtype=bool)
    occluded = np.zeros((C, S, T, J), dtype=bool)
    bboxes = np.full((C, S, T, 4), np.nan)
    root_cam = np.zeros((C, S, T, 3))
    centers = np.array([[c.poses[t].center for t in range(T)] for c in cams])  # (C, T, 3)

    for ci, cam in enumerate(cams):
        K = cam.intrinsics
        for si, subj in enumerate(subjects):
            for t in range(T):
                view = cam.view(t)
                uv, w = project_points_unchecked(view.projection, subj.keypoints[t])
                kp2d[ci, si, t] = uv
                depth[ci, si, t] = w
                root_cam[ci, si, t] = view.pose.apply(subj.root[t])
                if cam.wearer == si:
                    continue
                inside = (
                    (w > 1e-9) & (uv[:, 0] >= 0) & (uv[:, 0] < K.width)
                    & (uv[:, 1] >= 0) & (uv[:, 1] < K.height)
                )
                in_view[ci, si, t] = inside
                box = cylinder_to_bbox(subj.cylinder(t), view)
                if box is not None and inside.any():
                    bboxes[ci, si, t] = box
            for oi, other in enumerate(subjects):
                if oi == si or cam.wearer == oi:
                    continue
                p0 = np.broadcast_to(centers[ci][:, None, :], subj.keypoints.shape)
                cxz = other.root[:, [0, 2]][:, None, :]
                occluded[ci, si] |= segment_hits_cylinder(p0, subj.keypoints, cxz, BODY_RADIUS, other.height)
        if cam.wearer is not None:
            occluded[ci, cam.wearer] = False
    return Scene(cfg, model, subjects, cams, kp2d, depth, in_view, occluded, bboxes, root_cam)


MAX_LAYOUT_ATTEMPTS = 500


def _separated(paths: Sequence[np.ndarray], min_dist: float) -> bool:
    for i in range(len(paths)):
        for j in range(i + 1, len(paths)):
            if np.linalg.norm(paths[i] - paths[j], axis=1).min() < min_dist:
                return False
    return True


def generate_scene(cfg: SceneConfig, model: KinematicModel | None = None) -> Scene:
    """Random but seed-deterministic scene.

    Subject paths are redrawn until every pair stays ``cfg.min_separation``
    apart for the whole clip, so bodies never interpenetrate.
    """
    model = model or KinematicModel.canonical()
    rng = np.random.default_rng(cfg.seed)
    T = cfg.n_frames
    motions = cfg.motion or tuple(
        MotionSpec(PATHS[s % len(PATHS)], float(rng.uniform(0.8, 1.5))) for s in range(cfg.n_subjects)
    )
    n_shape = model.shape_basis.shape[0]
    for _ in range(MAX_LAYOUT_ATTEMPTS):
        draws = []
        for spec in motions:
            shape = rng.normal(0.0, cfg.shape_std, n_shape)
            ground = _root_path(spec, T, cfg.fps, cfg.arena, rng)
            draws.append((spec, shape, ground, rng.uniform(-np.pi, np.pi), rng.uniform(0, 2 * np.pi)))
        if _separated([d[2] for d in draws], cfg.min_separation):
            break
    else:
        raise InvalidConfig(
            f"could not keep {len(motions)} subjects {cfg.min_separation} m apart in the arena "
            f"after {MAX_LAYOUT_ATTEMPTS} attempts"
        )
    params = [
        animate(model, ground, _heading(ground, cfg.fps, yaw0), shape, cfg.fps, spec.speed, phase,
                cfg.head_sway_deg)
        for spec, shape, ground, yaw0, phase in draws
    ]
    cams = static_ring(cfg.n_static_cams, cfg.ring_radius, cfg.static_height)
    return build_scene(cfg, model, params, cams)


# --------------------------------------------------------------------------
# observations


@dataclass(frozen=True)
class SimDetection:
    subject: int  # -1 for a false positive
    det: DetectionInput


@dataclass
class RenderedObservations:
    keypoints: np.ndarray  # (C, S, T, 17, 3) [u, v, conf]; conf 0 when unobserved
    outlier_view: np.ndarray  # (C, S, T)
    detections: list[list[list[SimDetection]]] = field(default_factory=list)  # [C][T]
    depth_scale: np.ndarray | None = None  # (C, T) true multiplier applied to depth maps


def render_detections(scene: Scene, noise: NoiseConfig = NoiseConfig(), seed: int = 0) -> RenderedObservations:
    """Noisy keypoints and detections for every camera and frame."""
    rng = np.random.default_rng(seed)
    C, S, T, J = scene.kp_depth.shape
    vis = scene.visible(noise.occlusion)

    kp = np.zeros((C, S, T, J, 3))
    kp[..., :2] = np.nan_to_num(scene.kp2d, nan=0.0)
    noise_px = rng.normal(0.0, 1.0, size=(C, S, T, J, 2)) * noise.keypoint_sigma_px
    kp[..., :2] += noise_px
    outlier = rng.random((C, S, T)) < noise.outlier_view_rate
    mag = max(20.0 * noise.keypoint_sigma_px, noise.outlier_min_px) * rng.uniform(1.0, 2.0, size=(C, S, T))
    ang = rng.uniform(0, 2 * np.pi, size=(C, S, T))
    shift = np.stack([np.cos(ang), np.sin(ang)], axis=-1) * mag[..., None]
    kp[..., :2] += np.where(outlier[..., None, None], shift[:, :, :, None, :], 0.0)
    kp[..., 2] = vis.astype(float)
    kp[~vis, :2] = 0.0
    outlier &= vis.any(axis=-1)

    detectable = scene.detectable(noise.occlusion, noise.min_visible_fraction)
    drop = rng.random((C, S, T)) < noise.detection_drop_rate
    jitter = rng.normal(0.0, 1.0, size=(C, S, T, 4)) * noise.bbox_jitter_px
    root_noise = rng.normal(0.0, 1.0, size=(C, S, T, 3)) * noise.root_sigma_m
    fp_draw = rng.random((C, T)) < noise.false_positive_rate
    fp_u = rng.random((C, T, 6))
    depth_scale = 1.0 + noise.depth_scale_error * rng.uniform(-1, 1, size=(C, T))

    detections = []
    for c, cam in enumerate(scene.cameras):
        K = cam.intrinsics
        per_frame = []
        for t in range(T):
            dets = []
            for s in range(S):
                if not detectable[c, s, t] or drop[c, s, t]:
                    continue
                b = scene.bboxes[c, s, t] + jitter[c, s, t]
                b = np.array([max(b[0], 0.0), max(b[1], 0.0), min(b[2], K.width), min(b[3], K.height)])
                if b[2] - b[0] < 1.0 or b[3] - b[1] < 1.0:
                    continue
                root = scene.root_cam[c, s, t] + root_noise[c, s, t]
                dets.append(SimDetection(s, DetectionInput(tuple(b), 1.0, tuple(root))))
            if fp_draw[c, t]:
                u = fp_u[c, t]
                w, h = 40 + 160 * u[0], 80 + 320 * u[1]
                x1, y1 = u[2] * (K.width - w), u[3] * (K.height - h)
                root = (4 * (u[4] - 0.5), 0.0, 2 + 6 * u[5])
                dets.append(SimDetection(-1, DetectionInput((x1, y1, x1 + w, y1 + h), 0.6, root)))
            per_frame.append(dets)
        detections.append(per_frame)
    return RenderedObservations(kp, outlier, detections, depth_scale)


def render_depth_map(scene: Scene, cam: int, t: int, scale: float = 1.0,
                     background: float = 30.0, occlusion: bool = False) -> np.ndarray:
    """Depth image with each visible subject painted as its bbox at its root depth.

    Nearer subjects overwrite farther ones.  ``scale`` multiplies every value,
    modelling the unknown scale of a monocular depth estimate.
    """
    K = scene.cameras[cam].intrinsics
    img = np.full((K.height, K.width), background)
    boxes = scene.bboxes[cam, :, t]
    z = scene.root_cam[cam, :, t, 2]
    det = scene.detectable(occlusion)[cam, :, t]
    for s in sorted(np.nonzero(det)[0], key=lambda s: -z[s]):
        x1, y1, x2, y2 = boxes[s]
        c0, c1 = int(np.ceil(x1 - 0.5)), int(np.ceil(x2 - 0.5))
        r0, r1 = int(np.ceil(y1 - 0.5)), int(np.ceil(y2 - 0.5))
        img[max(r0, 0):max(r1, 0), max(c0, 0):max(c1, 0)] = z[s]
    return img * scale


# --------------------------------------------------------------------------
# two-subject crossing used for association studies


def crossing_scene(seed: int, depth_gap: float = 2.0, duration_s: float = 6.0,
                   fps: float = 20.0, occlusion_frames: int = 10,
                   model: KinematicModel | None = None) -> Scene:
    """Two subjects walk toward each other, meet in front of a static camera and turn back.

    They move parallel to the image plane at different distances and mirror
    each other in the image, so their boxes overlap at the meeting point while
    their roots stay ``depth_gap`` metres apart.  The farther subject is hidden
    for ``occlusion_frames`` frames around the meeting, on top of whatever the
    geometry already blocks.
    """
    model = model or KinematicModel.canonical()
    rng = np.random.default_rng(seed)
    cfg = SceneConfig(n_subjects=2, n_static_cams=1, duration_s=duration_s, fps=fps,
                      arena=(8.0, 12.0), seed=seed, head_sway_deg=0.0)
    T = cfg.n_frames
    t = np.arange(T) / fps
    near_z = rng.uniform(3.0, 4.0)
    far_z = near_z + depth_gap
    speed = rng.uniform(0.9, 1.3)
    meet = 0.5 * duration_s + rng.uniform(-0.3, 0.3)
    lateral = speed * np.abs(t - meet)
    near = np.stack([-lateral, np.full(T, near_z)], axis=1)
    far = np.stack([lateral * far_z / near_z, np.full(T, far_z)], axis=1)
    params = []
    for ground, sign in ((near, 1.0), (far, -1.0)):
        yaw = np.where(t < meet, sign * np.pi / 2, -sign * np.pi / 2)
        shape = rng.normal(0.0, 0.3, model.shape_basis.shape[0])
        params.append(animate(model, ground, yaw, shape, fps, speed, rng.uniform(0, 2 * np.pi), 0.0))
    cam = CameraView("static00", STATIC_INTRINSICS, RigidPose.look_at([0.0, 1.5, -2.0], [0.0, 1.0, 4.0]))
    scene = build_scene(cfg, model, params, [cam])
    k = int(round(meet * fps))
    lo = max(k - occlusion_frames // 2, 0)
    scene.occluded[:, 1, lo:lo + occlusion_frames] = True
    return scene
