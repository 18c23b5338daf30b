"""From noisy 2D keypoints to a fitted body, for one simulated subject.

Run with ``python demos/annotate_subject.py``.  Each step prints what it
recovered and how far that is from the simulator's ground truth.
"""

import numpy as np

from ego3d import (
    COCO_TOPOLOGY, BodyParams, KinematicModel, MeshFitWeights, NoiseConfig, PoseTrajectory3D, RansacConfig,
    SceneConfig, fit_three_stage, forward_kinematics, generate_scene, pose_metrics, refine, render_detections,
    triangulate_pose,
)
from ego3d.optim import OptConfig
from ego3d.pose_refine import limb_lengths


def limb_std(values: np.ndarray) -> float:
    return float(limb_lengths(values, COCO_TOPOLOGY).std(axis=0).mean())


def main() -> None:
    scene = generate_scene(SceneConfig(n_subjects=2, n_static_cams=6, duration_s=3.0, seed=3))
    noise = NoiseConfig(keypoint_sigma_px=2.0, outlier_view_rate=0.1, occlusion=True)
    obs = render_detections(scene, noise, seed=3)
    subject = 0
    gt = scene.subjects[subject].keypoints
    T, J = gt.shape[:2]
    print(f"scene: {len(scene.subjects)} subjects, {len(scene.cameras)} cameras, {T} frames")

    # 1. RANSAC triangulation frame by frame, static cameras only
    static = [c for c, cam in enumerate(scene.cameras) if cam.kind == "static"]
    points = np.zeros((T, J, 3))
    valid = np.zeros((T, J), dtype=bool)
    for t in range(T):
        kps = {}
        for c in static:
            kp = obs.keypoints[c, subject, t].copy()
            kp[kp[:, 2] == 0] = np.nan
            kps[scene.cameras[c].id] = kp
        views = {scene.cameras[c].id: scene.cameras[c].view(t) for c in static}
        r = triangulate_pose(kps, views, RansacConfig(inlier_threshold=8.0))
        points[t], valid[t] = np.nan_to_num(r.points), r.valid
    raw = PoseTrajectory3D(points, valid)
    err = pose_metrics(points.reshape(-1, 3), gt.reshape(-1, 3), valid.ravel())
    print(f"triangulated: {valid.mean():.1%} of joints, MPJPE {err.mpjpe * 1000:.1f} mm")

    # 2. temporal and skeletal refinement
    res = refine(raw, COCO_TOPOLOGY, opt_config=OptConfig(max_iterations=1000))
    Y = res.trajectory.values
    err = pose_metrics(Y.reshape(-1, 3), gt.reshape(-1, 3))
    print(f"refined in {res.iterations} iterations: loss {res.initial.total:.3f} -> {res.final.total:.3f}, "
          f"MPJPE {err.mpjpe * 1000:.1f} mm")
    print(f"limb length std: {limb_std(np.where(valid[..., None], points, np.nan)) * 1000:.1f} mm raw, "
          f"{limb_std(Y) * 1000:.1f} mm refined, {limb_std(gt) * 1000:.1f} mm truth")

    # 3. body model fit in three stages
    model = KinematicModel.canonical()
    fit = fit_three_stage(model, None, res.trajectory, MeshFitWeights(), OptConfig(max_iterations=300))
    kp = forward_kinematics(model, fit.params)
    err = pose_metrics(kp.reshape(-1, 3), gt.reshape(-1, 3))
    print("stage losses: " + " -> ".join(f"{v:.3f}" for v in fit.stage_losses))
    truth: BodyParams = scene.subjects[subject].params
    print(f"fitted height {model.height(fit.params.shape):.3f} m vs true {model.height(truth.shape):.3f} m, "
          f"keypoint MPJPE {err.mpjpe * 1000:.1f} mm")


if __name__ == "__main__":
    main()
