"""File formats shared by the simulator, the pipeline stages and the CLI.

All structured files are JSON (one object per file, or JSON Lines with one
frame per line).  Tracking results use MOT-Challenge style text.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import MissingInput, ParseError, ShapeMismatch
from .geometry import CameraView, RigidPose
from .metrics import Frame
from .pose_refine import PoseTrajectory3D
from .tracker import DetectionInput, TrackOutput


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed separators, trailing newline)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise MissingInput(f"{path} does not exist")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def write_jsonl(path, records: Iterable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(dumps(r) for r in records))
    return path


def read_jsonl(path) -> list:
    path = Path(path)
    if not path.exists():
        raise MissingInput(f"{path} does not exist")
    out = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{n}: {exc}") from exc
    return out


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _floats(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


# cameras ----------------------------------------------------------------


def camera_to_json(cam: CameraView) -> dict:
    return cam.to_dict()


def camera_from_json(d: Mapping) -> CameraView:
    try:
        return CameraView.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad camera record: {exc}") from exc


def read_camera_frames(path) -> list[dict[str, CameraView]]:
    """``cameras.json``: ``{"frames": [[camera, ...] per frame]}``."""
    d = read_json(path)
    try:
        return [{c["id"]: camera_from_json(c) for c in frame} for frame in d["frames"]]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc


# keypoints --------------------------------------------------------------


def keypoint_frame(frame: int, per_camera: Mapping[str, np.ndarray]) -> dict:
    return {
        "frame": int(frame),
        "cameras": {cid: {"keypoints": _floats(kp)} for cid, kp in sorted(per_camera.items())},
    }


def parse_keypoint_frame(d: Mapping) -> tuple[int, dict[str, np.ndarray]]:
    try:
        cams = {
            cid: np.asarray(v["keypoints"], dtype=np.float64).reshape(-1, 3)
            for cid, v in d["cameras"].items()
        }
        return int(d["frame"]), cams
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad keypoint record: {exc}") from exc


# trajectories -----------------------------------------------------------


def trajectory_to_json(traj: PoseTrajectory3D, fps: float) -> dict:
    vals = np.where(traj.valid[..., None], traj.values, 0.0)
    return {
        "fps": float(fps),
        "joints": int(traj.J),
        "frames": _floats(vals),
        "valid": traj.valid.astype(bool).tolist(),
    }


def trajectory_from_json(d: Mapping) -> tuple[PoseTrajectory3D, float]:
    try:
        J = int(d["joints"])
        vals = np.asarray(d["frames"], dtype=np.float64).reshape(-1, J, 3)
        valid = np.asarray(d["valid"], dtype=bool).reshape(-1, J)
        fps = float(d["fps"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad trajectory record: {exc}") from exc
    if valid.shape != vals.shape[:2]:
        raise ShapeMismatch("valid mask does not match frames")
    return PoseTrajectory3D(vals, valid), fps


# detections -------------------------------------------------------------


def detection_frame(frame: int, cam_pose: RigidPose | None, dets: Iterable[DetectionInput]) -> dict:
    rows = []
    for d in dets:
        r = {"bbox": [float(v) for v in d.bbox], "score": float(d.score)}
        if d.root_cam is not None:
            r["root_cam"] = [float(v) for v in d.root_cam]
        rows.append(r)
    return {
        "frame": int(frame),
        "camera_pose": None if cam_pose is None else cam_pose.to_dict(),
        "detections": rows,
    }


def parse_detection_frame(d: Mapping) -> tuple[int, RigidPose | None, list[DetectionInput]]:
    try:
        pose = None if d.get("camera_pose") is None else RigidPose.from_dict(d["camera_pose"])
        dets = [
            DetectionInput(
                tuple(float(v) for v in r["bbox"]),
                float(r.get("score", 1.0)),
                None if r.get("root_cam") is None else tuple(float(v) for v in r["root_cam"]),
            )
            for r in d["detections"]
        ]
        return int(d["frame"]), pose, dets
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad detection record: {exc}") from exc


# MOT text ---------------------------------------------------------------
# frame numbers in MOT files are 1-based; JSON frame indices are 0-based.


def _fmt(v) -> str:
    v = float(v)
    return "nan" if math.isnan(v) else f"{v:.6f}"


def mot_row(frame: int, track_id: int, bbox, score: float, root=None) -> str:
    x1, y1, x2, y2 = (float(v) for v in bbox)
    root = (math.nan,) * 3 if root is None else root
    vals = [x1, y1, x2 - x1, y2 - y1, score, *root]
    return f"{int(frame) + 1},{int(track_id)}," + ",".join(_fmt(v) for v in vals)


def write_mot(path, n_frames: int, rows: Iterable[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(f"# frames={int(n_frames)}\n" + "".join(r + "\n" for r in rows))
    return path


def tracks_to_rows(frame: int, outputs: Iterable[TrackOutput]) -> list[str]:
    return [mot_row(frame, o.track_id, o.bbox, o.score, o.world_root) for o in outputs]


def read_mot(path) -> tuple[int | None, dict[int, list[tuple[int, np.ndarray]]]]:
    """Returns (declared frame count or None, {0-based frame: [(id, xyxy box)]})."""
    path = Path(path)
    if not path.exists():
        raise MissingInput(f"{path} does not exist")
    n_frames = None
    rows: dict[int, list] = {}
    for n, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().startswith("frames="):
                try:
                    n_frames = int(line.split("=", 1)[1])
                except ValueError as exc:
                    raise ParseError(f"{path}:{n}: bad frame header") from exc
            continue
        parts = line.split(",")
        if len(parts) < 6:
            raise ParseError(f"{path}:{n}: expected at least 6 comma-separated fields")
        try:
            frame, tid = int(parts[0]), int(parts[1])
            x, y, w, h = (float(v) for v in parts[2:6])
        except ValueError as exc:
            raise ParseError(f"{path}:{n}: {exc}") from exc
        if frame < 1:
            raise ParseError(f"{path}:{n}: frame numbers start at 1")
        rows.setdefault(frame - 1, []).append((tid, np.array([x, y, x + w, y + h])))
    return n_frames, rows


def mot_sequence(gt_path, pred_path) -> list[Frame]:
    """Pair GT and predictions frame by frame, refusing inconsistent frame ranges."""
    n_gt, gt = read_mot(gt_path)
    n_pr, pr = read_mot(pred_path)
    n_gt = n_gt if n_gt is not None else (max(gt) + 1 if gt else 0)
    n_pr = n_pr if n_pr is not None else n_gt
    problems = []
    if n_pr != n_gt:
        problems.append(f"ground truth covers {n_gt} frames but predictions declare {n_pr}")
    extra_gt = sorted(f + 1 for f in gt if f >= n_gt)
    extra_pr = sorted(f + 1 for f in pr if f >= n_gt)
    if extra_gt:
        problems.append(f"ground-truth rows beyond the declared range in frames {extra_gt[:10]}")
    if extra_pr:
        problems.append(f"prediction rows for frames missing from the ground truth: {extra_pr[:10]}")
    if problems:
        raise MissingInput("; ".join(problems))
    seq = []
    for f in range(n_gt):
        g, p = gt.get(f, []), pr.get(f, [])
        try:
            seq.append(Frame([i for i, _ in g], [b for _, b in g], [i for i, _ in p], [b for _, b in p]))
        except ValueError as exc:
            raise ParseError(f"frame {f + 1}: {exc}") from exc
    return seq
