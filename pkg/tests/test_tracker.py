import itertools

import numpy as np
import pytest

from _support import track_stream
from ego3d.errors import EmptyBbox, SingularInnovation
from ego3d.geometry import RigidPose, random_rotation
from ego3d.sim import NoiseConfig, SceneConfig, crossing_scene, generate_scene, render_depth_map, render_detections
from ego3d.tracker import (
    AssociationConfig,
    DetectionInput,
    KalmanState,
    LinearModel,
    Track,
    Tracker,
    assignment_cost,
    association_cost,
    box_init,
    cost_matrix,
    greedy_assignment,
    hungarian,
    iou,
    kf_step,
    kf_update,
    root_init,
    root_model,
    simple_baseline_root,
    to_world,
)
from ego3d.geometry import CameraIntrinsics

# Kalman filtering ------------------------------------------------------


def test_noiseless_measurement_at_prediction_leaves_state():
    m = root_model(0.1)
    exact = LinearModel(m.F, np.zeros((6, 6)), m.H, np.zeros((3, 3)))
    s = KalmanState(np.array([1.0, 2.0, 3.0, 0.5, 0.0, -0.5]), np.eye(6))
    pred = m.F @ s.x
    out = kf_step(s, exact, m.H @ pred)
    np.testing.assert_allclose(out.x, pred, atol=1e-12)


def test_pure_predict_advances_position():
    s = KalmanState(np.array([0.0, 0, 0, 1.0, 0, 0]), np.eye(6))
    assert kf_step(s, root_model(1.0)).x[0] == 1.0


def test_filter_beats_raw_measurements():
    rng = np.random.default_rng(0)
    dt, sigma = 0.05, 0.25
    m = root_model(dt, accel_std=0.5, meas_std=sigma)
    pos, vel = np.zeros(3), np.array([1.0, 0.0, -0.5])
    truth, meas = [], []
    for _ in range(50):
        pos = pos + dt * vel
        truth.append(pos)
        meas.append(pos + rng.normal(0, sigma, 3))
    s = root_init(meas[0], sigma)
    est = [s.x[:3]]
    for z in meas[1:]:
        s = kf_step(s, m, z)
        est.append(s.x[:3])
    truth, meas, est = map(np.array, (truth, meas, est))
    raw = np.sqrt(((meas - truth) ** 2).sum(-1).mean())
    post = np.sqrt(((est - truth) ** 2).sum(-1).mean())
    assert post < raw


def test_singular_innovation():
    m = LinearModel(np.eye(2), np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)))
    with pytest.raises(SingularInnovation):
        kf_update(KalmanState(np.zeros(2), np.zeros((2, 2))), [1.0, 1.0], m)


def test_to_world_round_trip():
    rng = np.random.default_rng(1)
    p = rng.normal(size=3)
    np.testing.assert_array_equal(to_world(p, RigidPose.identity()), p)
    np.testing.assert_allclose(to_world(p, RigidPose(np.eye(3), [1.0, 2.0, 3.0])), p - [1, 2, 3])
    pose = RigidPose(random_rotation(rng), rng.normal(size=3))
    assert np.abs(pose.apply(to_world(p, pose)) - p).max() < 1e-12


# association ----------------------------------------------------------


def make_track(bbox, root=None):
    return Track(1, box_init(bbox), None if root is None else root_init(root))


def test_identical_box_and_root_cost_zero():
    t = make_track((0, 0, 10, 20), (1.0, 0.0, 2.0))
    assert association_cost(t, DetectionInput((0, 0, 10, 20)), (1.0, 0.0, 2.0)) == pytest.approx(0.0, abs=1e-12)


def test_disjoint_boxes():
    t = make_track((0, 0, 10, 20), (0.0, 0.0, 0.0))
    d = DetectionInput((100, 0, 110, 20))
    assert association_cost(t, d, (2.5, 0.0, 0.0)) == pytest.approx(1.0)
    assert association_cost(t, d, (5.0, 0.0, 0.0)) == np.inf


def test_hand_arithmetic_half_half():
    t = make_track((0, 0, 3, 1), (0.0, 0.0, 0.0))
    d = DetectionInput((1, 0, 4, 1))
    assert iou((0, 0, 3, 1), d.bbox) == 0.5
    cfg = AssociationConfig(alpha=0.5)
    assert association_cost(t, d, (1.0, 0.0, 0.0), cfg) == pytest.approx(0.5, abs=1e-12)


def test_no_root_falls_back_to_iou():
    t = make_track((0, 0, 3, 1), (0.0, 0.0, 0.0))
    d = DetectionInput((1, 0, 4, 1))
    assert association_cost(t, d, None) == pytest.approx(0.5, abs=1e-12)


def random_boxes(rng, n):
    xy = rng.uniform(0, 200, (n, 2))
    wh = rng.uniform(20, 80, (n, 2))
    return [tuple(b) for b in np.hstack([xy, xy + wh])]


def test_alpha_one_reduces_to_iou_tracking():
    rng = np.random.default_rng(2)
    cfg = AssociationConfig(alpha=1.0, gate_dist=np.inf)
    for _ in range(20):
        tracks = [make_track(b, rng.normal(size=3)) for b in random_boxes(rng, 5)]
        dets = [DetectionInput(b) for b in random_boxes(rng, 6)]
        roots = [rng.normal(size=3) for _ in dets]
        C = cost_matrix(tracks, dets, roots, cfg)
        plain = np.array([[1 - iou(t.predicted_bbox, d.bbox) for d in dets] for t in tracks])
        plain[plain > 1 - cfg.gate_iou] = np.inf
        np.testing.assert_array_equal(np.isinf(C), np.isinf(plain))
        np.testing.assert_allclose(C[np.isfinite(C)], plain[np.isfinite(plain)], atol=1e-12)


def brute_force_assignment(C):
    """Minimum total of (c - 1) over every partial matching of finite entries."""
    n, m = C.shape
    best = 0.0
    for k in range(1, min(n, m) + 1):
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.permutations(range(m), k):
                vals = [C[r, c] for r, c in zip(rows, cols)]
                if all(np.isfinite(vals)):
                    best = min(best, sum(v - 1 for v in vals))
    return best


def test_hungarian_optimal_and_never_worse_than_greedy():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n, m = rng.integers(1, 5, 2)
        C = rng.uniform(0, 1, (n, m))
        C[rng.random((n, m)) < 0.3] = np.inf
        h = assignment_cost(C, hungarian(C))
        assert h <= assignment_cost(C, greedy_assignment(C)) + 1e-12
        assert h == pytest.approx(brute_force_assignment(C), abs=1e-12)


def test_greedy_can_be_strictly_worse():
    C = np.array([[0.1, 0.2], [0.15, 0.9]])
    assert assignment_cost(C, hungarian(C)) < assignment_cost(C, greedy_assignment(C))


# lifecycle ------------------------------------------------------------


def walk(n, start=100.0, step=3.0):
    return [DetectionInput((start + step * k, 50, start + step * k + 40, 150), 1.0) for k in range(n)]


def test_single_subject_single_track():
    tr = Tracker()
    seen = set()
    for d in walk(100):
        out = tr.step([d], None, 0.05)
        assert len(out) == 1
        np.testing.assert_array_equal(out[0].bbox, d.bbox)
        seen.add(out[0].track_id)
    assert seen == {1}
    assert len(tr.tracks) == 1 and tr.tracks[0].status.value == "confirmed"


@pytest.mark.parametrize("gap, same", [(29, True), (31, False)])
def test_gap_relative_to_max_age(gap, same):
    cfg = AssociationConfig(max_age=30)
    tr = Tracker(cfg)
    dets = walk(20 + gap + 5, step=0.5)
    ids = []
    for k, d in enumerate(dets):
        out = tr.step([] if 20 <= k < 20 + gap else [d], None, 0.05)
        ids += [o.track_id for o in out]
    assert (set(ids) == {1}) is same


def test_tentative_track_dies_on_first_miss():
    tr = Tracker()
    tr.step(walk(10)[:1], None, 0.05)
    tr.step(walk(10)[1:2], None, 0.05)
    for _ in range(3):
        tr.step([], None, 0.05)
    assert tr.tracks == []


def test_low_score_does_not_spawn():
    tr = Tracker()
    out = tr.step([DetectionInput((0, 0, 10, 10), 0.3)], None, 0.05)
    assert out == [] and tr.tracks == []


def test_ids_unique_and_sorted():
    tr = Tracker()
    rng = np.random.default_rng(4)
    for _ in range(30):
        out = tr.step([DetectionInput(b) for b in random_boxes(rng, 4)], None, 0.05)
        ids = [o.track_id for o in out]
        assert ids == sorted(set(ids))


def test_invalid_dt():
    with pytest.raises(ValueError):
        Tracker().step([], None, 0.0)


def test_crossing_alpha_study_small():
    """3D association keeps identities through a mutual occlusion where IoU alone swaps them."""
    noise = NoiseConfig(occlusion=True, bbox_jitter_px=2.0, root_sigma_m=0.1)
    sw = {0.3: 0, 1.0: 0}
    for seed in range(4):
        scene = crossing_scene(seed)
        obs = render_detections(scene, noise, seed)
        c = scene.camera_index("static00")
        for a in sw:
            sw[a] += track_stream(scene, obs, c, AssociationConfig(alpha=a)).IDSW
    assert sw[0.3] == 0
    assert sw[1.0] >= 1


# SimpleBaseline root ----------------------------------------------------

K = CameraIntrinsics(500, 500, 320, 240, 640, 480)


def test_constant_depth():
    r = simple_baseline_root((100, 100, 200, 300), np.full((480, 640), 4.0), 0.5, K)
    assert r[2] == 2.0
    np.testing.assert_allclose(r[:2], [2.0 * (150 - 320) / 500, 2.0 * (200 - 240) / 500])


def test_half_planes_average():
    d = np.full((480, 640), 2.0)
    d[:, 150:] = 6.0
    r = simple_baseline_root((100, 100, 200, 300), d, 1.0, K)
    assert r[2] == pytest.approx(4.0, abs=1e-12)


def test_empty_bbox():
    with pytest.raises(EmptyBbox):
        simple_baseline_root((700, 10, 800, 20), np.ones((480, 640)), 1.0, K)


def test_root_from_rendered_depth():
    scene = generate_scene(SceneConfig(n_subjects=2, n_static_cams=4, duration_s=2.0, seed=3))
    det = scene.detectable(occlusion=True)
    checked = 0
    for c in range(len(scene.cameras)):
        for t in range(0, scene.n_frames, 4):
            depth = render_depth_map(scene, c, t, occlusion=True)
            for s in np.nonzero(det[c, :, t])[0]:
                if scene.occluded[c, s, t].any():
                    continue
                r = simple_baseline_root(scene.bboxes[c, s, t], depth, 1.0, scene.cameras[c].intrinsics)
                # overlapping boxes paint the nearer subject; skip those
                others = [o for o in np.nonzero(det[c, :, t])[0] if o != s]
                if any(iou(scene.bboxes[c, s, t], scene.bboxes[c, o, t]) > 0 for o in others):
                    continue
                assert np.linalg.norm(r - scene.root_cam[c, s, t]) < 0.3
                checked += 1
    assert checked >= 50
