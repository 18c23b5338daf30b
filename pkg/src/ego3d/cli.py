"""Command-line front end: ``ego3d {simulate,triangulate,refine,fit,track,eval}``.

Every run writes ``manifest.json`` into the output directory.  Failures print
a one-line JSON error record on stderr (also saved as ``error.json``) and
exit with 2 (usage), 3 (input) or 4 (numeric).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .body_fit import KinematicModel, MeshFitWeights, default_init, fit_three_stage
from .errors import Ego3DError, InputError, InvalidConfig, MissingInput, NumericError, ParseError
from .metrics import evaluate_mot
from .optim import OptConfig
from .pose_refine import COCO_TOPOLOGY, PoseTrajectory3D, RefineWeights, refine
from .sim import NoiseConfig, SceneConfig, generate_scene, render_detections
from .tracker import AssociationConfig, Tracker
from .triangulation import RansacConfig, triangulate_pose

log = logging.getLogger("ego3d")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4

SECTIONS = ("scene", "noise", "ransac", "triangulate", "refine", "optimizer", "fit", "fit_optimizer",
            "association", "track", "eval")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# configuration


def _build(cls, d: dict, what: str):
    try:
        return cls(**d)
    except TypeError as exc:
        raise InvalidConfig(f"[{what}] {exc}") from exc
    except ValueError as exc:
        raise InvalidConfig(f"[{what}] {exc}") from exc


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    cfg = io.read_json(path)
    if not isinstance(cfg, dict):
        raise InvalidConfig("config must be a JSON object")
    unknown = sorted(set(cfg) - set(SECTIONS) - {"noise_seed"})
    if unknown:
        raise InvalidConfig(f"unknown config sections: {unknown}")
    return cfg


def resolve(raw: dict, seed: int | None) -> dict:
    """Every section as a fully-populated dict, with ``--seed`` applied."""
    scene = SceneConfig.from_dict(raw.get("scene", {}))
    noise = NoiseConfig.from_dict(raw.get("noise", {}))
    ransac = _build(RansacConfig, raw.get("ransac", {}), "ransac")
    refine_w = _build(RefineWeights, raw.get("refine", {}), "refine")
    opt = _build(OptConfig, raw.get("optimizer", {}), "optimizer")
    fit_w = _build(MeshFitWeights, raw.get("fit", {}), "fit")
    fit_opt = _build(OptConfig, {"max_iterations": 300, **raw.get("fit_optimizer", {})}, "fit_optimizer")
    assoc = _build(AssociationConfig, raw.get("association", {}), "association")
    tri = {"cameras": "all", **raw.get("triangulate", {})}
    if tri["cameras"] not in ("all", "static", "ego"):
        raise InvalidConfig("[triangulate] cameras must be all, static or ego")
    track = {"fps": 20.0, **raw.get("track", {})}
    if not float(track["fps"]) > 0:
        raise InvalidConfig("[track] fps must be positive")
    ev = {"iou_threshold": 0.5, **raw.get("eval", {})}
    noise_seed = int(raw.get("noise_seed", scene.seed))
    if seed is not None:
        scene = replace(scene, seed=seed)
        ransac = replace(ransac, rng_seed=seed)
        noise_seed = seed
    return {
        "scene": scene.to_dict(),
        "noise": noise.to_dict(),
        "noise_seed": noise_seed,
        "ransac": dict(ransac.__dict__),
        "triangulate": tri,
        "refine": dict(refine_w.__dict__),
        "optimizer": opt.to_dict(),
        "fit": fit_w.to_dict(),
        "fit_optimizer": fit_opt.to_dict(),
        "association": assoc.to_dict(),
        "track": track,
        "eval": ev,
    }


# --------------------------------------------------------------------------
# subcommands; each returns the list of files it wrote


def cmd_simulate(args, cfg, out: Path) -> list[Path]:
    scene = generate_scene(SceneConfig.from_dict(cfg["scene"]))
    noise = NoiseConfig.from_dict(cfg["noise"])
    obs = render_detections(scene, noise, cfg["noise_seed"])
    T, fps = scene.n_frames, scene.fps
    files = [io.write_json(out / "scene.json", {"scene": cfg["scene"], "noise": cfg["noise"],
                                                 "noise_seed": cfg["noise_seed"]})]
    files.append(io.write_json(out / "model.json", scene.model.to_dict()))
    frames = [[io.camera_to_json(c.view(t)) for c in scene.cameras] for t in range(T)]
    files.append(io.write_json(out / "cameras.json", {"fps": fps, "frames": frames}))
    for s, subj in enumerate(scene.subjects):
        recs = [
            io.keypoint_frame(t, {c.id: obs.keypoints[ci, s, t] for ci, c in enumerate(scene.cameras)})
            for t in range(T)
        ]
        files.append(io.write_jsonl(out / "keypoints" / f"s{s}.jsonl", recs))
        traj = PoseTrajectory3D(subj.keypoints)
        files.append(io.write_json(out / "gt" / f"trajectory_s{s}.json", io.trajectory_to_json(traj, fps)))
        files.append(io.write_json(out / "gt" / f"body_s{s}.json", subj.params.to_dict()))
    for ci, cam in enumerate(scene.cameras):
        recs = [
            io.detection_frame(t, cam.poses[t], [d.det for d in obs.detections[ci][t]]) for t in range(T)
        ]
        files.append(io.write_jsonl(out / "detections" / f"{cam.id}.jsonl", recs))
        rows = []
        for t, (ids, boxes) in enumerate(scene.gt_frames(ci, noise.occlusion, noise.min_visible_fraction)):
            rows += [io.mot_row(t, s + 1, b, 1.0, scene.subjects[s].root[t]) for s, b in zip(ids, boxes)]
        files.append(io.write_mot(out / "gt" / f"mot_{cam.id}.txt", T, rows))
    return files


def _camera_filter(kind: str, cid: str) -> bool:
    return kind == "all" or cid.startswith(kind)


def cmd_triangulate(args, cfg, out: Path) -> list[Path]:
    src = Path(args.inputs[0])
    cam_frames = io.read_camera_frames(src / "cameras.json")
    fps = float(io.read_json(src / "cameras.json").get("fps", 20.0))
    ransac = RansacConfig(**cfg["ransac"])
    kind = cfg["triangulate"]["cameras"]
    kp_files = sorted((src / "keypoints").glob("*.jsonl"))
    if not kp_files:
        raise MissingInput(f"no keypoint files under {src / 'keypoints'}")
    files = []
    for path in kp_files:
        records = [io.parse_keypoint_frame(r) for r in io.read_jsonl(path)]
        if len(records) != len(cam_frames):
            raise MissingInput(
                f"{path.name} has {len(records)} frames but cameras.json has {len(cam_frames)}"
            )

        def one(rec):
            t, kps = rec
            kps = {c: k for c, k in kps.items() if _camera_filter(kind, c)}
            missing = sorted(set(kps) - set(cam_frames[t]))
            if missing:
                raise MissingInput(f"frame {t}: no calibration for cameras {missing}")
            try:
                r = triangulate_pose(kps, cam_frames[t], ransac)
            except InputError as exc:
                log.info("frame %d: %s", t, exc)
                return np.full((len(next(iter(kps.values()))), 3), np.nan), None
            return r.points, r.valid

        with ThreadPoolExecutor(args.threads) as pool:
            results = list(pool.map(one, records))
        J = results[0][0].shape[0]
        vals = np.stack([p for p, _ in results])
        valid = np.stack([v if v is not None else np.zeros(J, bool) for _, v in results])
        traj = PoseTrajectory3D(np.where(valid[..., None], vals, 0.0), valid)
        files.append(io.write_json(out / f"trajectory_{path.stem}.json", io.trajectory_to_json(traj, fps)))
    return files


def cmd_refine(args, cfg, out: Path) -> list[Path]:
    w = RefineWeights(**cfg["refine"])
    opt = OptConfig(**cfg["optimizer"])
    loaded = [(Path(p), *io.trajectory_from_json(io.read_json(p))) for p in args.inputs]

    def one(item):
        path, traj, fps = item
        res = refine(traj, COCO_TOPOLOGY, w, opt)
        log.info("%s: loss %.6g -> %.6g in %d iterations", path.name, res.initial.total, res.final.total,
                 res.iterations)
        doc = io.trajectory_to_json(res.trajectory, fps)
        doc["valid"] = traj.valid.astype(bool).tolist()
        doc["loss"] = {"initial": res.initial.total, "final": res.final.total, "iterations": res.iterations}
        return io.write_json(out / path.name, doc)

    with ThreadPoolExecutor(args.threads) as pool:
        return list(pool.map(one, loaded))


def cmd_fit(args, cfg, out: Path) -> list[Path]:
    model = KinematicModel.load(args.model) if args.model else KinematicModel.canonical()
    w = MeshFitWeights(**cfg["fit"])
    opt = OptConfig(**cfg["fit_optimizer"])
    loaded = [(Path(p), *io.trajectory_from_json(io.read_json(p))) for p in args.inputs]

    def one(item):
        path, traj, fps = item
        init = default_init(model, traj)
        res = fit_three_stage(model, init, traj, w, opt)
        doc = res.params.to_dict()
        doc["fps"] = fps
        doc["loss"] = res.loss.total
        doc["stage_losses"] = list(res.stage_losses)
        return io.write_json(out / f"body_{path.stem}.json", doc)

    with ThreadPoolExecutor(args.threads) as pool:
        return list(pool.map(one, loaded))


def cmd_track(args, cfg, out: Path) -> list[Path]:
    assoc = AssociationConfig(**cfg["association"])
    dt = 1.0 / float(cfg["track"]["fps"])
    files = []
    for p in args.inputs:
        path = Path(p)
        records = sorted((io.parse_detection_frame(r) for r in io.read_jsonl(path)), key=lambda r: r[0])
        frames = [r[0] for r in records]
        if len(set(frames)) != len(frames):
            raise ParseError(f"{path.name}: duplicate frame indices")
        n = (frames[-1] + 1) if frames else 0
        by_frame = {f: (pose, dets) for f, pose, dets in records}
        tracker = Tracker(assoc)
        rows = []
        for t in range(n):
            pose, dets = by_frame.get(t, (None, []))
            rows += io.tracks_to_rows(t, tracker.step(dets, pose, dt))
        files.append(io.write_mot(out / f"{path.stem}.txt", n, rows))
    return files


def cmd_eval(args, cfg, out: Path) -> list[Path]:
    seq = io.mot_sequence(args.gt, args.pred)
    rep = evaluate_mot(seq, float(cfg["eval"]["iou_threshold"]))
    doc = {"metrics": rep.to_dict(), "config": cfg["eval"], "frames": len(seq)}
    return [io.write_json(out / "metrics.json", doc)]


COMMANDS = {
    "simulate": cmd_simulate,
    "triangulate": cmd_triangulate,
    "refine": cmd_refine,
    "fit": cmd_fit,
    "track": cmd_track,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads (1 = serial)")
    common.add_argument("--output", required=True, help="output directory")

    parser = _Parser(prog="ego3d", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="generate a synthetic scene")
    p = sub.add_parser("triangulate", parents=[common], help="RANSAC triangulation of a scene directory")
    p.add_argument("inputs", nargs=1, metavar="SCENE_DIR")
    p = sub.add_parser("refine", parents=[common], help="refine 3D pose trajectories")
    p.add_argument("inputs", nargs="+", metavar="TRAJECTORY")
    p = sub.add_parser("fit", parents=[common], help="fit body parameters to trajectories")
    p.add_argument("inputs", nargs="+", metavar="TRAJECTORY")
    p.add_argument("--model", help="kinematic model JSON (default: canonical skeleton)")
    p = sub.add_parser("track", parents=[common], help="track detections of one camera stream")
    p.add_argument("inputs", nargs="+", metavar="DETECTIONS")
    p = sub.add_parser("eval", parents=[common], help="MOT metrics of predictions against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    return parser


def _input_paths(args) -> list[str]:
    paths = list(getattr(args, "inputs", []) or [])
    for name in ("gt", "pred", "model", "config"):
        v = getattr(args, name, None)
        if v:
            paths.append(v)
    return paths


def _digest(p: str):
    path = Path(p)
    return io.sha256(path) if path.is_file() else None


def _error_record(exc: BaseException, code: int) -> dict:
    return {"error": type(exc).__name__, "message": str(exc), "exit_code": code}


def main(argv=None) -> int:
    logging.basicConfig(
        level=LOG_LEVELS.get(os.environ.get("EGO3D_LOG", "warn").lower(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    started = time.perf_counter()
    out = None
    args = None
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        cfg = resolve(load_config(args.config), args.seed)
        files = COMMANDS[args.command](args, cfg, out)
        code, record = EXIT_OK, None
    except UsageError as exc:
        code, record = EXIT_USAGE, _error_record(exc, EXIT_USAGE)
    except (InputError, OSError) as exc:
        code, record = EXIT_INPUT, _error_record(exc, EXIT_INPUT)
    except NumericError as exc:
        code, record = EXIT_NUMERIC, _error_record(exc, EXIT_NUMERIC)
    except Ego3DError as exc:
        code, record = EXIT_INPUT, _error_record(exc, EXIT_INPUT)

    if record is not None:
        sys.stderr.write(json.dumps(record, sort_keys=True) + "\n")
        if out is not None and out.is_dir():
            io.write_json(out / "error.json", record)
        if out is None:
            return code
        files, cfg = [], locals().get("cfg")

    manifest = {
        "command": args.command,
        "config": cfg,
        "seed": args.seed,
        "threads": args.threads,
        "inputs": {p: _digest(p) for p in _input_paths(args)},
        "outputs": {str(f.relative_to(out)): io.sha256(f) for f in sorted(files)},
        "status": "ok" if code == EXIT_OK else "error",
        "error": record,
        "version": __version__,
        "duration_s": round(time.perf_counter() - started, 6),
    }
    io.write_json(out / "manifest.json", manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())
