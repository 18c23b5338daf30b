"""World-frame tracking by detection with paired 2D-box and 3D-root Kalman filters.

Each track carries a SORT-style box filter over ``[u, v, s, r, du, dv, ds]``
and a constant-velocity filter over the world root ``[x, y, z, dx, dy, dz]``.
Detections are matched to track predictions by one Hungarian assignment on

    alpha * (1 - IoU) + (1 - alpha) * min(dist / dist_scale, 1)
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyBbox, SingularInnovation
from .geometry import CameraIntrinsics, RigidPose


# --------------------------------------------------------------------------
# Kalman filtering


@dataclass
class KalmanState:
    x: np.ndarray
    P: np.ndarray

    def copy(self) -> "KalmanState":
        return KalmanState(self.x.copy(), self.P.copy())


@dataclass(frozen=True)
class LinearModel:
    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R: np.ndarray


def kf_predict(state: KalmanState, model: LinearModel) -> KalmanState:
    x = model.F @ state.x
    P = model.F @ state.P @ model.F.T + model.Q
    return KalmanState(x, 0.5 * (P + P.T))


def kf_update(state: KalmanState, z, model: LinearModel) -> KalmanState:
    z = np.asarray(z, dtype=np.float64)
    H = model.H
    y = z - H @ state.x
    S = H @ state.P @ H.T + model.R
    S = 0.5 * (S + S.T)
    try:
        c = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise SingularInnovation("innovation covariance is not positive definite") from exc
    if np.min(np.diag(c)) <= 1e-12 * max(1.0, np.max(np.diag(c))):
        raise SingularInnovation("innovation covariance is numerically singular")
    # K = P H^T S^-1 via two triangular solves
    PHt = state.P @ H.T
    K = np.linalg.solve(c.T, np.linalg.solve(c, PHt.T)).T
    x = state.x + K @ y
    I_KH = np.eye(len(state.x)) - K @ H
    P = I_KH @ state.P @ I_KH.T + K @ model.R @ K.T  # Joseph form
    return KalmanState(x, 0.5 * (P + P.T))


def kf_step(state: KalmanState, model: LinearModel, z=None) -> KalmanState:
    """Predict, then update when a measurement is supplied."""
    pred = kf_predict(state, model)
    return pred if z is None else kf_update(pred, z, model)


def box_model() -> LinearModel:
    """SORT constant-velocity box model; one step per frame."""
    F = np.eye(7)
    F[0, 4] = F[1, 5] = F[2, 6] = 1.0
    H = np.eye(4, 7)
    R = np.eye(4)
    R[2:, 2:] *= 10.0
    Q = np.eye(7)
    Q[-1, -1] *= 0.01
    Q[4:, 4:] *= 0.01
    return LinearModel(F, Q, H, R)


def box_init(bbox) -> KalmanState:
    P = np.eye(7) * 10.0
    P[4:, 4:] *= 1000.0
    x = np.zeros(7)
    x[:4] = bbox_to_z(bbox)
    return KalmanState(x, P)


def root_model(dt: float, accel_std: float = 1.0, meas_std: float = 0.25) -> LinearModel:
    """Constant velocity with white-noise acceleration, per axis."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    F = np.eye(6)
    F[:3, 3:] = dt * np.eye(3)
    q = accel_std**2
    Q = np.zeros((6, 6))
    Q[:3, :3] = q * dt**4 / 4 * np.eye(3)
    Q[:3, 3:] = Q[3:, :3] = q * dt**3 / 2 * np.eye(3)
    Q[3:, 3:] = q * dt**2 * np.eye(3)
    return LinearModel(F, Q, np.eye(3, 6), meas_std**2 * np.eye(3))


def root_init(root, pos_std: float = 0.25, vel_std: float = 2.0) -> KalmanState:
    x = np.zeros(6)
    x[:3] = root
    return KalmanState(x, np.diag([pos_std**2] * 3 + [vel_std**2] * 3))


def bbox_to_z(bbox) -> np.ndarray:
    x1, y1, x2, y2 = bbox
    w, h = x2 - x1, y2 - y1
    return np.array([x1 + w / 2.0, y1 + h / 2.0, w * h, w / float(h)])


def z_to_bbox(x) -> np.ndarray:
    s = max(float(x[2]), 1e-9)
    r = max(float(x[3]), 1e-9)
    w = np.sqrt(s * r)
    h = s / w
    return np.array([x[0] - w / 2.0, x[1] - h / 2.0, x[0] + w / 2.0, x[1] + h / 2.0])


def iou(a, b) -> float:
    xx1, yy1 = max(a[0], b[0]), max(a[1], b[1])
    xx2, yy2 = min(a[2], b[2]), min(a[3], b[3])
    inter = max(0.0, xx2 - xx1) * max(0.0, yy2 - yy1)
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union) if union > 0 else 0.0


# --------------------------------------------------------------------------
# Tracks and association


@dataclass(frozen=True)
class DetectionInput:
    bbox: tuple[float, float, float, float]
    score: float = 1.0
    root_cam: tuple[float, float, float] | None = None

    def __post_init__(self):
        x1, y1, x2, y2 = self.bbox
        if not (x2 > x1 and y2 > y1):
            raise ValueError(f"degenerate bbox {self.bbox}")


@dataclass(frozen=True)
class AssociationConfig:
    alpha: float = 0.3
    dist_scale: float = 2.0
    gate_iou: float = 0.1
    gate_dist: float = 3.0
    max_age: int = 30
    min_hits: int = 3
    score_threshold: float = 0.5
    accel_std: float = 1.0
    root_meas_std: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.dist_scale > 0:
            raise ValueError("dist_scale must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class TrackStatus(str, Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DEAD = "dead"


@dataclass
class Track:
    id: int
    kf2d: KalmanState
    kf3d: KalmanState | None
    hits: int = 1
    age: int = 1
    time_since_update: int = 0
    status: TrackStatus = TrackStatus.TENTATIVE
    last_bbox: np.ndarray | None = None

    @property
    def predicted_bbox(self) -> np.ndarray:
        return z_to_bbox(self.kf2d.x)

    @property
    def root(self) -> np.ndarray | None:
        return None if self.kf3d is None else self.kf3d.x[:3].copy()


def to_world(root_cam, cam_pose: RigidPose) -> np.ndarray:
    """Camera-frame point to world frame (inverse of the camera-from-world pose)."""
    return cam_pose.inverse_apply(np.asarray(root_cam, dtype=np.float64))


def association_cost(
    track: Track,
    det: DetectionInput,
    det_world_root,
    cfg: AssociationConfig = AssociationConfig(),
) -> float:
    """Combined 2D/3D cost, ``inf`` for gated-out pairs.

    With no 3D evidence on either side (or alpha = 1) this is ``1 - IoU`` with
    an IoU gate.  Otherwise a pair is rejected only when both the IoU is below
    ``gate_iou`` and the root distance exceeds ``gate_dist``.
    """
    ov = iou(track.predicted_bbox, det.bbox)
    use_3d = cfg.alpha < 1.0 and det_world_root is not None and track.kf3d is not None
    if not use_3d:
        return 1.0 - ov if ov >= cfg.gate_iou else np.inf
    d = float(np.linalg.norm(track.kf3d.x[:3] - np.asarray(det_world_root)))
    if ov < cfg.gate_iou and d > cfg.gate_dist:
        return np.inf
    return cfg.alpha * (1.0 - ov) + (1.0 - cfg.alpha) * min(d / cfg.dist_scale, 1.0)


def cost_matrix(tracks, dets, det_roots, cfg) -> np.ndarray:
    C = np.full((len(tracks), len(dets)), np.inf)
    for i, t in enumerate(tracks):
        for j, d in enumerate(dets):
            C[i, j] = association_cost(t, d, det_roots[j], cfg)
    return C


def assignment_cost(C: np.ndarray, pairs) -> float:
    """Total of ``c - 1`` over matched pairs.

    Costs lie in [0, 1], so this is the plain matched cost with every
    unmatched track/detection pairing charged the maximal cost 1.
    """
    return float(sum(C[r, c] - 1.0 for r, c in pairs))


def hungarian(C: np.ndarray) -> list[tuple[int, int]]:
    """Optimal assignment under :func:`assignment_cost`, finite entries only."""
    if C.size == 0:
        return []
    finite = np.isfinite(C)
    if not finite.any():
        return []
    rows, cols = linear_sum_assignment(np.where(finite, C - 1.0, 0.0))
    return [(int(r), int(c)) for r, c in zip(rows, cols) if finite[r, c]]


def greedy_assignment(C: np.ndarray) -> list[tuple[int, int]]:
    """Repeatedly take the cheapest remaining finite pair."""
    pairs = []
    used_r, used_c = set(), set()
    order = sorted(
        ((C[r, c], r, c) for r, c in itertools.product(*map(range, C.shape)) if np.isfinite(C[r, c]))
    )
    for _, r, c in order:
        if r not in used_r and c not in used_c:
            pairs.append((r, c))
            used_r.add(r)
            used_c.add(c)
    return pairs


@dataclass(frozen=True)
class TrackOutput:
    track_id: int
    bbox: np.ndarray
    score: float
    world_root: np.ndarray | None


@dataclass
class Tracker:
    """Single-stream tracker; mutate only through :meth:`step`."""

    cfg: AssociationConfig = field(default_factory=AssociationConfig)
    tracks: list[Track] = field(default_factory=list)
    frame_count: int = 0
    next_id: int = 1
    last_costs: np.ndarray | None = field(default=None, repr=False)
    last_pairs: list = field(default_factory=list, repr=False)

    def step(self, detections: Sequence[DetectionInput], cam_pose: RigidPose | None, dt: float) -> list[TrackOutput]:
        if not dt > 0:
            raise ValueError("dt must be positive")
        cfg = self.cfg
        self.frame_count += 1
        bm = box_model()
        rm = root_model(dt, cfg.accel_std, cfg.root_meas_std)

        for t in self.tracks:
            if t.kf2d.x[2] + t.kf2d.x[6] <= 0:
                t.kf2d.x[6] = 0.0
            t.kf2d = kf_predict(t.kf2d, bm)
            if t.kf3d is not None:
                t.kf3d = kf_predict(t.kf3d, rm)
            t.age += 1
            t.time_since_update += 1

        roots = [
            to_world(d.root_cam, cam_pose) if (d.root_cam is not None and cam_pose is not None) else None
            for d in detections
        ]
        C = cost_matrix(self.tracks, detections, roots, cfg)
        pairs = hungarian(C)
        self.last_costs, self.last_pairs = C, pairs

        matched_dets = set()
        emitted = {}
        for ti, di in pairs:
            t, d = self.tracks[ti], detections[di]
            t.kf2d = kf_update(t.kf2d, bbox_to_z(d.bbox), bm)
            if roots[di] is not None:
                t.kf3d = root_init(roots[di], cfg.root_meas_std) if t.kf3d is None else kf_update(t.kf3d, roots[di], rm)
            t.hits += 1
            t.time_since_update = 0
            t.last_bbox = np.asarray(d.bbox, dtype=np.float64)
            if t.status is TrackStatus.TENTATIVE and t.hits >= cfg.min_hits:
                t.status = TrackStatus.CONFIRMED
            matched_dets.add(di)
            emitted[t.id] = d.score

        for di, d in enumerate(detections):
            if di in matched_dets or d.score < cfg.score_threshold:
                continue
            t = Track(
                id=self.next_id,
                kf2d=box_init(d.bbox),
                kf3d=None if roots[di] is None else root_init(roots[di], cfg.root_meas_std),
                last_bbox=np.asarray(d.bbox, dtype=np.float64),
            )
            if cfg.min_hits <= 1:
                t.status = TrackStatus.CONFIRMED
            self.next_id += 1
            self.tracks.append(t)
            emitted[t.id] = d.score

        for t in self.tracks:
            if t.time_since_update > 0 and t.status is TrackStatus.TENTATIVE:
                t.status = TrackStatus.DEAD
            elif t.time_since_update > cfg.max_age:
                t.status = TrackStatus.DEAD
        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.DEAD]

        out = []
        for t in self.tracks:
            if t.time_since_update != 0:
                continue
            warmup = self.frame_count <= cfg.min_hits
            if t.status is TrackStatus.CONFIRMED or warmup:
                out.append(TrackOutput(t.id, t.last_bbox.copy(), emitted[t.id], t.root))
        return sorted(out, key=lambda o: o.track_id)


def tracker_step(tracker: Tracker, detections, cam_pose, dt: float) -> list[TrackOutput]:
    return tracker.step(detections, cam_pose, dt)


# --------------------------------------------------------------------------
# SimpleBaseline root


def simple_baseline_root(bbox, depth_map, depth_scale: float, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Camera-frame root from the mean depth inside ``bbox``.

    Pixel (col, row) covers [col, col+1) x [row, row+1); a pixel counts as
    inside when its centre lies in the box.
    """
    depth_map = np.asarray(depth_map, dtype=np.float64)
    H, W = depth_map.shape
    x1, y1, x2, y2 = bbox
    c0, c1 = int(np.ceil(x1 - 0.5)), int(np.ceil(x2 - 0.5))
    r0, r1 = int(np.ceil(y1 - 0.5)), int(np.ceil(y2 - 0.5))
    c0, r0 = max(c0, 0), max(r0, 0)
    c1, r1 = min(c1, W), min(r1, H)
    if c1 <= c0 or r1 <= r0:
        raise EmptyBbox(f"bbox {tuple(bbox)} covers no depth pixels")
    patch = depth_map[r0:r1, c0:c1]
    patch = patch[np.isfinite(patch)]
    if patch.size == 0:
        raise EmptyBbox("bbox covers only invalid depth")
    d = float(patch.mean()) * depth_scale
    u, v = 0.5 * (x1 + x2), 0.5 * (y1 + y2)
    K = intrinsics
    return np.array([d * (u - K.cx) / K.fx, d * (v - K.cy) / K.fy, d])
