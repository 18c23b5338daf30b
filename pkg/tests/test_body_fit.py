import math

import numpy as np
import pytest

from ego3d.body_fit import (
    IDENTITY_6D,
    STAGES,
    BodyParams,
    KinematicModel,
    MeshFitWeights,
    fit_three_stage,
    fk_vjp,
    forward_kinematics,
    loss_mesh,
    perturb,
)
from ego3d.errors import DegenerateRotation, NonFiniteLoss
from ego3d.geometry import matrix_to_rot6d, random_rotation, rot6d_to_matrix, rotation_about
from ego3d.optim import OptConfig
from ego3d.pose_refine import COCO_TOPOLOGY, PoseTrajectory3D

MODEL = KinematicModel.canonical()


def random_params(rng, T=2, spread=0.3):
    th = BodyParams.rest(T)
    th.pose = th.pose + rng.normal(0, spread, th.pose.shape)
    th.shape = rng.normal(0, 0.5, th.shape.shape)
    th.global_orient = th.global_orient + rng.normal(0, spread, th.global_orient.shape)
    th.transl = rng.normal(size=(T, 3))
    return th


def test_model_invariants():
    assert MODEL.num_joints == 24 and MODEL.num_keypoints == 17
    assert MODEL.parents[0] < 0
    assert all(MODEL.parents[k] < k for k in range(1, 24))
    np.testing.assert_array_equal(MODEL.offsets(np.zeros(10)), MODEL.rest_offsets)


def test_model_json_round_trip(tmp_path):
    MODEL.save(tmp_path / "m.json")
    back = KinematicModel.load(tmp_path / "m.json")
    th = random_params(np.random.default_rng(0))
    np.testing.assert_array_equal(forward_kinematics(back, th), forward_kinematics(MODEL, th))


def test_rest_pose_keypoints():
    kp, joints = forward_kinematics(MODEL, BodyParams.rest(1), return_joints=True)
    expected = np.zeros((24, 3))
    for k in range(24):
        p = MODEL.parents[k]
        expected[k] = MODEL.rest_offsets[k] + (expected[p] if p >= 0 else 0)
    np.testing.assert_allclose(joints[0], expected, atol=1e-15)
    np.testing.assert_allclose(kp[0], MODEL.keypoint_regressor @ expected, atol=1e-15)


def test_translation_moves_every_keypoint():
    th = random_params(np.random.default_rng(1))
    moved = th.copy()
    t = np.array([0.3, -1.2, 2.0])
    moved.transl = moved.transl + t
    np.testing.assert_allclose(forward_kinematics(MODEL, moved), forward_kinematics(MODEL, th) + t, atol=1e-12)


def test_root_rotation_about_z():
    rest = forward_kinematics(MODEL, BodyParams.rest(1))[0]
    Rz = rotation_about([0, 0, 1], np.pi / 2)
    th = BodyParams.rest(1)
    th.global_orient = matrix_to_rot6d(Rz)[None]
    np.testing.assert_allclose(forward_kinematics(MODEL, th)[0], rest @ Rz.T, atol=1e-9)


def test_degenerate_rotation_propagates():
    th = BodyParams.rest(1)
    th.pose[0, 3] = [1, 0, 0, 2, 0, 0]
    with pytest.raises(DegenerateRotation):
        forward_kinematics(MODEL, th)


def test_axis_angle_global_is_accepted():
    d = BodyParams.rest(2).to_dict()
    d["global"] = [[0, 0, np.pi / 2, 1, 2, 3]] * 2
    th = BodyParams.from_dict(d)
    np.testing.assert_allclose(th.global_orient[0], matrix_to_rot6d(rotation_about([0, 0, 1], np.pi / 2)), atol=1e-12)
    np.testing.assert_array_equal(th.transl[1], [1, 2, 3])
    again = BodyParams.from_dict(th.to_dict())
    np.testing.assert_array_equal(again.global_orient, th.global_orient)


# loss -----------------------------------------------------------------


def test_exact_target_leaves_only_prior_terms():
    th = BodyParams.rest(3)
    th.transl = np.array([[0.0, 1.0, 0.0]] * 3)
    target = forward_kinematics(MODEL, th)
    L = loss_mesh(th, target, MeshFitWeights(1, 0, 1, 1, 1, 0), model=MODEL)
    assert L.data == 0 and L.temporal == 0
    assert L.total == pytest.approx(0.0, abs=1e-12)


def test_weights_enter_linearly():
    rng = np.random.default_rng(2)
    th = random_params(rng)
    target = forward_kinematics(MODEL, th) + rng.normal(0, 0.05, (2, 17, 3))
    a = loss_mesh(th, target, MeshFitWeights(1, 0, 0, 0, 0, 0), model=MODEL)
    b = loss_mesh(th, target, MeshFitWeights(2, 0, 0, 0, 0, 0), model=MODEL)
    assert b.total == pytest.approx(2 * a.total, rel=1e-15)
    assert b.data == a.data


def _gs(r):
    a, b = list(r[:3]), list(r[3:])
    na = math.sqrt(sum(x * x for x in a))
    e1 = [x / na for x in a]
    d = sum(x * y for x, y in zip(e1, b))
    u = [y - d * x for x, y in zip(e1, b)]
    nu = math.sqrt(sum(x * x for x in u))
    e2 = [x / nu for x in u]
    e3 = [e1[1] * e2[2] - e1[2] * e2[1], e1[2] * e2[0] - e1[0] * e2[2], e1[0] * e2[1] - e1[1] * e2[0]]
    return [[e1[i], e2[i], e3[i]] for i in range(3)]


def _matmul(A, B):
    return [[sum(A[i][k] * B[k][j] for k in range(3)) for j in range(3)] for i in range(3)]


def _matvec(A, v):
    return [sum(A[i][k] * v[k] for k in range(3)) for i in range(3)]


def scalar_mesh_loss(model, th, target, w):
    parents = list(model.parents)
    basis = model.shape_basis.tolist()
    rest = model.rest_offsets.tolist()
    reg = model.keypoint_regressor.tolist()
    shape = th.shape.tolist()
    off = [[rest[k][c] + sum(shape[s] * basis[s][k][c] for s in range(len(shape))) for c in range(3)]
           for k in range(24)]
    kps = []
    for t in range(th.T):
        Rr = _gs(th.global_orient[t].tolist())
        G = [None] * 24
        P = [None] * 24
        G[0] = Rr
        P[0] = [a + b for a, b in zip(th.transl[t].tolist(), _matvec(Rr, off[0]))]
        for k in range(1, 24):
            p = parents[k]
            P[k] = [a + b for a, b in zip(P[p], _matvec(G[p], off[k]))]
            G[k] = _matmul(G[p], _gs(th.pose[t, k - 1].tolist()))
        kps.append([[sum(reg[i][k] * P[k][c] for k in range(24)) for c in range(3)] for i in range(17)])

    def norm(v):
        return math.sqrt(sum(x * x for x in v))

    data = sum(norm([target[t][i][c] - kps[t][i][c] for i in range(17) for c in range(3)]) for t in range(th.T))
    prior = sum(norm([th.pose[t, k, c] - IDENTITY_6D[c] for k in range(23) for c in range(6)]) for t in range(th.T))
    lam = [[math.dist(kps[t][a], kps[t][b]) for a, b in COCO_TOPOLOGY.limbs] for t in range(th.T)]
    limb = sum(norm([lam[t + 1][k] - lam[t][k] for k in range(12)]) for t in range(th.T - 1))
    symm = sum(norm([lam[t][l] - lam[t][r] for l, r in COCO_TOPOLOGY.left_right_pairs]) for t in range(th.T))
    temporal = sum(
        norm([kps[t + 1][i][c] - kps[t][i][c] for i in range(17) for c in range(3)]) for t in range(th.T - 1)
    )
    beta = 0.5 * sum(x * x for x in shape)
    return w.w1 * data + w.w2 * prior + w.w3 * limb + w.w4 * symm + w.w5 * temporal + w.w6 * beta


def test_loss_matches_scalar_oracle():
    rng = np.random.default_rng(3)
    th = random_params(rng, T=3)
    target = rng.normal(size=(3, 17, 3))
    w = MeshFitWeights(1.0, 0.2, 0.3, 0.4, 0.5, 0.6)
    L = loss_mesh(th, target, w, model=MODEL)
    assert abs(L.total - scalar_mesh_loss(MODEL, th, target.tolist(), w)) < 1e-12


@pytest.mark.parametrize("block", ["pose", "shape", "global_orient", "transl"])
def test_gradients_match_finite_differences(block):
    rng = np.random.default_rng(4)
    th = random_params(rng, T=3)
    target = forward_kinematics(MODEL, th) + rng.normal(0, 0.1, (3, 17, 3))
    w = MeshFitWeights(1.0, 0.1, 0.3, 0.3, 0.3, 0.1)
    g = getattr(loss_mesh(th, target, w, model=MODEL, with_grad=True).grad, block)
    x = getattr(th, block)
    fd = np.zeros_like(x)
    h = 1e-6
    for idx in np.ndindex(*x.shape):
        plus, minus = th.copy(), th.copy()
        getattr(plus, block)[idx] += h
        getattr(minus, block)[idx] -= h
        fd[idx] = (loss_mesh(plus, target, w, model=MODEL).total - loss_mesh(minus, target, w, model=MODEL).total) / (2 * h)
    assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-4


def test_fk_vjp_matches_finite_differences():
    rng = np.random.default_rng(5)
    th = random_params(rng, T=1)
    G = rng.normal(size=(1, 17, 3))
    g = fk_vjp(MODEL, th, G)
    h = 1e-6
    for block in ("shape", "transl"):
        x = getattr(th, block)
        for idx in list(np.ndindex(*x.shape))[:5]:
            p, m = th.copy(), th.copy()
            getattr(p, block)[idx] += h
            getattr(m, block)[idx] -= h
            fd = ((forward_kinematics(MODEL, p) - forward_kinematics(MODEL, m)) * G).sum() / (2 * h)
            assert abs(getattr(g, block)[idx] - fd) < 1e-6


def test_data_term_invariant_under_rigid_transform():
    rng = np.random.default_rng(6)
    th = random_params(rng)
    target = forward_kinematics(MODEL, th) + rng.normal(0, 0.05, (2, 17, 3))
    R, t = random_rotation(rng), rng.normal(size=3)
    moved = th.copy()
    moved.global_orient = matrix_to_rot6d(R @ rot6d_to_matrix(th.global_orient))
    moved.transl = th.transl @ R.T + t
    a = loss_mesh(th, target, model=MODEL).data
    b = loss_mesh(moved, target @ R.T + t, model=MODEL).data
    assert abs(a - b) < 1e-9


# fitting --------------------------------------------------------------


@pytest.fixture(scope="module")
def recovery():
    rng = np.random.default_rng(7)
    truth = random_params(rng, T=4, spread=0.15)
    truth.transl[:] = [0.0, 1.0, 0.0]
    target = PoseTrajectory3D(forward_kinematics(MODEL, truth))
    init = perturb(truth, rng)
    res = fit_three_stage(MODEL, init, target, MeshFitWeights(), OptConfig(max_iterations=300))
    return truth, init, target, res


def test_three_stage_recovers_keypoints(recovery):
    truth, _, target, res = recovery
    err = np.linalg.norm(forward_kinematics(MODEL, res.params) - target.values, axis=-1).mean()
    assert err < 0.01 * MODEL.height(truth.shape)


def test_stage_isolation(recovery):
    _, init, _, res = recovery
    s1, s2, s3 = res.stage_params
    assert np.array_equal(s1.pose, init.pose) and np.array_equal(s1.shape, init.shape)
    assert np.array_equal(s2.pose, s1.pose)
    assert np.array_equal(s2.global_orient, s1.global_orient) and np.array_equal(s2.transl, s1.transl)
    assert np.array_equal(s3.shape, s2.shape)
    assert STAGES == (("global_orient", "transl"), ("shape",), ("pose", "global_orient", "transl"))


def test_losses_non_increasing(recovery):
    res = recovery[3]
    assert all(b <= a for a, b in zip(res.stage_losses, res.stage_losses[1:]))
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_prior_only_limit_returns_to_rest():
    rng = np.random.default_rng(8)
    th = random_params(rng, T=1, spread=0.1)
    target = PoseTrajectory3D(forward_kinematics(MODEL, th))
    res = fit_three_stage(MODEL, th, target, MeshFitWeights(0, 1, 0, 0, 0, 0), OptConfig(max_iterations=500))
    before = np.linalg.norm(th.pose - IDENTITY_6D)
    after = np.linalg.norm(res.params.pose - IDENTITY_6D)
    assert after < 1e-3 * before


def test_non_finite_target_rejected():
    th = BodyParams.rest(1)
    target = PoseTrajectory3D(np.full((1, 17, 3), 1e308))
    with pytest.raises(NonFiniteLoss):
        fit_three_stage(MODEL, th, target)
