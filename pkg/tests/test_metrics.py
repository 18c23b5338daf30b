import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import chamfer_loop, clear_oracle, hota_oracle, idf1_oracle, random_sequence
from ego3d.errors import EmptySequence, EmptySet, ShapeMismatch
from ego3d.geometry import random_rotation
from ego3d.metrics import (
    Frame,
    chamfer_bidirectional,
    clear_mot,
    evaluate_mot,
    hota,
    id_scores,
    idf1,
    pose_metrics,
)

BOXES = np.array([[0, 0, 10, 20], [50, 0, 60, 20], [100, 0, 110, 20]], dtype=float)


def perfect(n_frames=6):
    return [Frame([1, 2, 3], BOXES + t, [7, 8, 9], BOXES + t) for t in range(n_frames)]


def test_perfect_tracking():
    r = evaluate_mot(perfect())
    assert (r.MOTA, r.IDF1, r.HOTA, r.DetA, r.AssA) == (1.0, 1.0, 1.0, 1.0, 1.0)
    assert r.FP == r.FN == r.IDSW == 0 and r.GT == 18


def test_no_predictions():
    seq = [Frame([1, 2, 3], BOXES) for _ in range(4)]
    r = evaluate_mot(seq)
    assert r.MOTA == 0.0 and r.FN == r.GT == 12
    assert r.IDF1 == 0.0 and r.HOTA == 0.0


def test_mid_sequence_swap_counts_two_switches():
    g = BOXES[:2]
    seq = [Frame([1, 2], g, [1, 2], g), Frame([1, 2], g, [1, 2], g),
           Frame([1, 2], g, [2, 1], g), Frame([1, 2], g, [2, 1], g)]
    c = clear_mot(seq)
    assert c.idsw == 2 and c.fp == c.fn == 0
    assert c.mota == pytest.approx(1 - 2 / 8)
    assert (c.mota, c.fp, c.fn, c.idsw) == clear_oracle(seq)


def test_fresh_id_every_frame():
    n = 7
    seq = [Frame([1], BOXES[:1], [100 + t], BOXES[:1]) for t in range(n)]
    r = id_scores(seq)
    assert r.idtp == 1
    assert r.idf1 == pytest.approx(1 / n)
    assert r.idf1 == pytest.approx(idf1_oracle(seq))


def test_switch_charged_only_once_after_gap():
    g = BOXES[:1]
    seq = [Frame([1], g, [5], g), Frame([1], g), Frame([1], g, [6], g), Frame([1], g, [6], g)]
    c = clear_mot(seq)
    assert c.idsw == 1 and c.fn == 1


def test_carry_over_beats_better_iou():
    # track 9 keeps gt 1 while IoU stays above threshold even though 8 fits better
    g = np.array([[0, 0, 10, 10]], float)
    near = np.array([[0, 0, 10, 12]], float)
    seq = [Frame([1], g, [9], g), Frame([1], g, [8, 9], np.vstack([g, near]))]
    c = clear_mot(seq)
    assert c.idsw == 0 and c.fp == 1


@pytest.mark.parametrize("seed", range(60))
def test_metrics_match_exhaustive_oracles(seed):
    seq = random_sequence(np.random.default_rng(seed))
    c = clear_mot(seq)
    mota, fp, fn, sw = clear_oracle(seq)
    assert (c.fp, c.fn, c.idsw) == (fp, fn, sw)
    assert abs(c.mota - mota) < 1e-9
    assert abs(idf1(seq) - idf1_oracle(seq)) < 1e-9
    h, d, a = hota_oracle(seq)
    rep = hota(seq)
    assert abs(rep.hota - h) < 1e-9 and abs(rep.deta - d) < 1e-9 and abs(rep.assa - a) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_mota_identity_and_ranges(seed):
    r = evaluate_mot(random_sequence(np.random.default_rng(seed), max_frames=8))
    assert r.MOTA == 1 - (r.FP + r.FN + r.IDSW) / r.GT
    for v in (r.IDF1, r.HOTA, r.DetA, r.AssA):
        assert 0.0 <= v <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_relabelling_predictions_changes_nothing(seed):
    rng = np.random.default_rng(seed)
    seq = random_sequence(rng, max_frames=8)
    ids = sorted({p for fr in seq for p in fr.pred_ids})
    perm = dict(zip(ids, rng.permutation(len(ids)) + 1000))
    moved = [Frame(fr.gt_ids, fr.gt_boxes, [perm[p] for p in fr.pred_ids], fr.pred_boxes) for fr in seq]
    a, b = evaluate_mot(seq), evaluate_mot(moved)
    assert a.IDF1 == pytest.approx(b.IDF1, abs=1e-12)
    assert a.HOTA == pytest.approx(b.HOTA, abs=1e-12)
    assert a.IDSW == b.IDSW and a.MOTA == b.MOTA


def test_empty_and_malformed():
    with pytest.raises(EmptySequence):
        clear_mot([])
    with pytest.raises(EmptySequence):
        hota([])
    with pytest.raises(ShapeMismatch):
        Frame([1, 2], BOXES[:1])
    with pytest.raises(ValueError):
        Frame([1, 1], BOXES[:2])


# pose metrics ---------------------------------------------------------


def test_pose_identity_and_offset():
    gt = np.random.default_rng(0).normal(size=(17, 3))
    assert pose_metrics(gt, gt).mpjpe == 0
    d = np.array([0.3, -0.4, 0.0])
    e = pose_metrics(gt + d, gt)
    assert e.mpjpe == pytest.approx(0.5)
    assert e.pa_mpjpe < 1e-12


def stationary_noise(y, n):
    """Remove from n every component a similarity of y could absorb."""
    yc = y - y.mean(0)
    basis = [np.tile(e, (len(y), 1)) for e in np.eye(3)]
    basis.append(yc)
    basis += [np.cross(e, yc) for e in np.eye(3)]
    B = np.stack([b.ravel() for b in basis], axis=1)
    v = n.ravel()
    return (v - B @ np.linalg.lstsq(B, v, rcond=None)[0]).reshape(n.shape)


def test_pa_mpjpe_recovers_noise_level():
    rng = np.random.default_rng(1)
    for _ in range(10):
        y = rng.normal(size=(17, 3))
        n = stationary_noise(y, rng.normal(0, 0.01, (17, 3)))
        gt = y - n
        s, R, t = rng.uniform(0.5, 2), random_rotation(rng), rng.normal(size=3)
        pred = s * y @ R.T + t
        e = pose_metrics(pred, gt)
        assert abs(e.pa_mpjpe - np.linalg.norm(n, axis=1).mean()) < 1e-6


def test_pose_valid_mask_and_shapes():
    rng = np.random.default_rng(2)
    gt = rng.normal(size=(17, 3))
    pred = gt.copy()
    pred[3] += 100
    valid = np.ones(17, bool)
    valid[3] = False
    assert pose_metrics(pred, gt, valid).mpjpe == 0
    with pytest.raises(ShapeMismatch):
        pose_metrics(gt[:5], gt)
    assert pose_metrics(gt, gt).to_mm().pve == 0


# Chamfer --------------------------------------------------------------


def test_chamfer_trivial():
    assert chamfer_bidirectional([[0, 0, 0]], [[1, 0, 0]]) == 1.0
    a = np.random.default_rng(3).normal(size=(20, 3))
    assert chamfer_bidirectional(a, a) == 0.0
    with pytest.raises(EmptySet):
        chamfer_bidirectional(np.zeros((0, 3)), a)


def test_chamfer_matches_double_loop():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(500, 3)), rng.normal(size=(700, 3))
    assert abs(chamfer_bidirectional(a, b) - chamfer_loop(a, b)) < 1e-12


def test_chamfer_rigid_invariant():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(50, 3)), rng.normal(size=(60, 3))
    R, t = random_rotation(rng), rng.normal(size=3)
    assert chamfer_bidirectional(a @ R.T + t, b @ R.T + t) == pytest.approx(chamfer_bidirectional(a, b), abs=1e-12)
