"""Multi-view DLT triangulation with RANSAC camera-inlier selection."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateGeometry, InsufficientViews, NoConsensus, NumericError
from .geometry import CameraView

MIN_CONFIDENCE = 0.1
RANK_TOL = 1e-9
W_EPS = 1e-12


@dataclass(frozen=True)
class Observation2D:
    camera_id: str
    point: tuple[float, float]
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class TriangulationResult:
    point: np.ndarray
    inliers: tuple[str, ...]
    mean_reprojection_error: float


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 100
    inlier_threshold: float = 10.0
    min_inliers: int = 2
    rng_seed: int = 0
    min_confidence: float = MIN_CONFIDENCE

    def __post_init__(self):
        if self.min_inliers < 2:
            raise ValueError("min_inliers must be >= 2")
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be positive")


def _projection(cam) -> np.ndarray:
    if isinstance(cam, CameraView):
        return cam.projection
    return np.asarray(cam, dtype=np.float64)


def _design_matrix(obs: Sequence[Observation2D], cams: Mapping) -> np.ndarray:
    rows = []
    for o in obs:
        P = _projection(cams[o.camera_id])
        P = P / np.linalg.norm(P)
        u, v = o.point
        rows.append(u * P[2] - P[0])
        rows.append(v * P[2] - P[1])
    A = np.asarray(rows)
    return A / np.linalg.norm(A, axis=1, keepdims=True)


def dlt_triangulate(obs: Sequence[Observation2D], cams: Mapping) -> np.ndarray:
    """Solve A y = 0 for the homogeneous point and dehomogenise.

    Each camera matrix is scaled to unit Frobenius norm and each row of A to
    unit length, so the result does not depend on the scale of any P_c.
    """
    if len({o.camera_id for o in obs}) < 2:
        raise InsufficientViews("need observations from at least 2 distinct cameras")
    A = _design_matrix(obs, cams)
    _, s, Vt = np.linalg.svd(A)
    if s[2] <= RANK_TOL * s[0]:
        raise DegenerateGeometry("DLT system is rank deficient")
    X = Vt[-1]
    if abs(X[3]) < W_EPS:
        raise DegenerateGeometry("triangulated point is at infinity")
    return X[:3] / X[3]


def reprojection_errors(X: np.ndarray, obs: Sequence[Observation2D], cams: Mapping) -> np.ndarray:
    """Pixel error per observation; inf when the point is behind that camera."""
    out = np.empty(len(obs))
    Xh = np.append(X, 1.0)
    for i, o in enumerate(obs):
        h = _projection(cams[o.camera_id]) @ Xh
        if h[2] <= W_EPS:
            out[i] = np.inf
        else:
            out[i] = np.hypot(h[0] / h[2] - o.point[0], h[1] / h[2] - o.point[1])
    return out



def _pair_points(P: np.ndarray, uv: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """Two-view DLT for many camera pairs at once; nan rows for degenerate pairs."""
    Pn = P / np.linalg.norm(P, axis=(1, 2), keepdims=True)
    rows = np.concatenate(
        [uv[:, 0, None] * Pn[:, 2] - Pn[:, 0], uv[:, 1, None] * Pn[:, 2] - Pn[:, 1]], axis=1
    ).reshape(-1, 2, 4)
    rows = rows / np.linalg.norm(rows, axis=2, keepdims=True)
    A = np.concatenate([rows[pairs[:, 0]], rows[pairs[:, 1]]], axis=1)
    if len(A) == 0:
        return np.zeros((0, 3))
    _, s, Vt = np.linalg.svd(A)
    Xh = Vt[:, -1]
    bad = (s[:, 2] <= RANK_TOL * s[:, 0]) | (np.abs(Xh[:, 3]) < W_EPS)
    with np.errstate(divide="ignore", invalid="ignore"):
        X = Xh[:, :3] / Xh[:, 3:]
    X[bad] = np.nan
    return X


def _batched_errors(X: np.ndarray, P: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """(hypotheses, observations) pixel errors; inf behind the camera."""
    Xh = np.concatenate([np.nan_to_num(X), np.ones((len(X), 1))], axis=1)
    h = np.einsum("cij,nj->nci", P, Xh)
    front = h[..., 2] > W_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.hypot(h[..., 0] / h[..., 2] - uv[:, 0], h[..., 1] / h[..., 2] - uv[:, 1])
    return np.where(front, e, np.inf)

def _candidate_pairs(n: int, cfg: RansacConfig) -> list[tuple[int, int]]:
    pairs = list(itertools.combinations(range(n), 2))
    if len(pairs) <= cfg.max_iterations:
        return pairs
    rng = np.random.default_rng(cfg.rng_seed)
    picked = rng.choice(len(pairs), size=cfg.max_iterations, replace=False)
    return [pairs[i] for i in sorted(picked)]


def ransac_triangulate(
    obs: Sequence[Observation2D], cams: Mapping, cfg: RansacConfig = RansacConfig()
) -> TriangulationResult:
    """Robust triangulation: 2-view hypotheses scored by inlier count.

    When all camera pairs fit in ``max_iterations`` they are enumerated
    exhaustively; otherwise pairs are drawn without replacement from an RNG
    seeded with ``cfg.rng_seed``.
    """
    obs = [o for o in obs if o.confidence >= cfg.min_confidence]
    obs.sort(key=lambda o: o.camera_id)
    if len({o.camera_id for o in obs}) < max(2, cfg.min_inliers):
        raise InsufficientViews(f"only {len(obs)} usable observations")

    pairs = [(i, j) for i, j in _candidate_pairs(len(obs), cfg) if obs[i].camera_id != obs[j].camera_id]
    P = np.stack([_projection(cams[o.camera_id]) for o in obs])
    uv = np.array([o.point for o in obs], dtype=np.float64)
    X = _pair_points(P, uv, np.array(pairs, dtype=int).reshape(-1, 2))
    ok = np.isfinite(X).all(axis=1)
    if not ok.any():
        raise NoConsensus("every camera pair was degenerate")
    err = _batched_errors(X, P, uv)
    mask = (err <= cfg.inlier_threshold) & ok[:, None]
    count = mask.sum(axis=1)
    with np.errstate(invalid="ignore"):
        mean_err = np.where(count > 0, np.where(mask, err, 0.0).sum(axis=1) / np.maximum(count, 1), np.inf)
    # rank: most inliers, then lowest mean error, then the lexicographic camera pair
    # (pairs are enumerated in that order because observations are sorted by id)
    order = np.lexsort((np.arange(len(pairs)), mean_err, -count))
    best = int(order[0])
    if count[best] < max(2, cfg.min_inliers):
        raise NoConsensus("no camera pair reached the minimum inlier count")
    best_inliers = mask[best]

    inlier_obs = [o for o, m in zip(obs, best_inliers) if m]
    X = dlt_triangulate(inlier_obs, cams)
    err = reprojection_errors(X, inlier_obs, cams)
    return TriangulationResult(
        point=X,
        inliers=tuple(o.camera_id for o in inlier_obs),
        mean_reprojection_error=float(err.mean()),
    )


@dataclass(frozen=True)
class PoseTriangulation:
    points: np.ndarray  # (J, 3), nan where invalid
    valid: np.ndarray  # (J,) bool
    results: tuple  # TriangulationResult or None per joint


def triangulate_pose(
    per_camera_keypoints: Mapping[str, np.ndarray],
    cams: Mapping,
    cfg: RansacConfig = RansacConfig(),
) -> PoseTriangulation:
    """Triangulate each joint independently from ``{camera_id: (J, 3) [u, v, conf]}``.

    Joints that cannot be triangulated are flagged invalid; the call only
    fails when no joint at all could be recovered.
    """
    items = sorted(per_camera_keypoints.items())
    if not items:
        raise InsufficientViews("no camera keypoints supplied")
    arrays = [np.asarray(kp, dtype=np.float64) for _, kp in items]
    J = arrays[0].shape[0]
    if any(a.shape != (J, 3) for a in arrays):
        raise ValueError("keypoint arrays must all be (J, 3)")

    points = np.full((J, 3), np.nan)
    valid = np.zeros(J, dtype=bool)
    results = []
    for j in range(J):
        obs = [
            Observation2D(cid, (a[j, 0], a[j, 1]), float(np.clip(a[j, 2], 0.0, 1.0)))
            for (cid, _), a in zip(items, arrays)
            if np.isfinite(a[j]).all()
        ]
        joint_cfg = RansacConfig(
            cfg.max_iterations, cfg.inlier_threshold, cfg.min_inliers,
            cfg.rng_seed * 1000003 + j, cfg.min_confidence,
        )
        try:
            res = ransac_triangulate(obs, cams, joint_cfg)
        except (InsufficientViews, NoConsensus, DegenerateGeometry):
            results.append(None)
            continue
        points[j] = res.point
        valid[j] = True
        results.append(res)
    if not valid.any():
        raise InsufficientViews("no joint could be triangulated")
    return PoseTriangulation(points, valid, tuple(results))
