"""Tracking metrics (CLEAR MOT, IDF1, HOTA), pose errors and Chamfer distance."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import EmptySequence, EmptySet, ShapeMismatch
from .geometry import umeyama_align

HOTA_ALPHAS = np.arange(1, 20) * 0.05
_EPS = np.finfo(float).eps


@dataclass
class Frame:
    """Ground-truth and predicted boxes of one frame, boxes as (x1, y1, x2, y2)."""

    gt_ids: list = field(default_factory=list)
    gt_boxes: np.ndarray = None
    pred_ids: list = field(default_factory=list)
    pred_boxes: np.ndarray = None

    def __post_init__(self):
        self.gt_ids = list(self.gt_ids)
        self.pred_ids = list(self.pred_ids)
        self.gt_boxes = np.asarray(self.gt_boxes if self.gt_boxes is not None else [], dtype=np.float64).reshape(-1, 4)
        self.pred_boxes = np.asarray(self.pred_boxes if self.pred_boxes is not None else [], dtype=np.float64).reshape(-1, 4)
        if len(self.gt_ids) != len(self.gt_boxes) or len(self.pred_ids) != len(self.pred_boxes):
            raise ShapeMismatch("ids and boxes differ in length")
        if len(set(self.gt_ids)) != len(self.gt_ids) or len(set(self.pred_ids)) != len(self.pred_ids):
            raise ValueError("ids must be unique within a frame")


def box_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    x1 = np.maximum(a[:, None, 0], b[None, :, 0])
    y1 = np.maximum(a[:, None, 1], b[None, :, 1])
    x2 = np.minimum(a[:, None, 2], b[None, :, 2])
    y2 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(x2 - x1, 0, None) * np.clip(y2 - y1, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return out


def _check(seq: Sequence[Frame]) -> None:
    if len(seq) == 0:
        raise EmptySequence("sequence has no frames")


def _max_weight_matching(S: np.ndarray, valid: np.ndarray) -> list[tuple[int, int]]:
    if S.size == 0 or not valid.any():
        return []
    rows, cols = linear_sum_assignment(-np.where(valid, S, 0.0))
    return [(r, c) for r, c in zip(rows, cols) if valid[r, c]]


@dataclass
class ClearReport:
    mota: float
    fp: int
    fn: int
    idsw: int
    gt: int
    tp: int


def clear_mot(seq: Sequence[Frame], iou_threshold: float = 0.5) -> ClearReport:
    """CLEAR MOT counts with previous-frame correspondence carry-over.

    A pair counts as a match when IoU >= ``iou_threshold``.  An identity
    switch is a GT object matched to a different prediction than the one it
    was last matched to.
    """
    _check(seq)
    if not 0 < iou_threshold < 1:
        raise ValueError("iou_threshold must lie in (0, 1)")
    prev: dict = {}
    last: dict = {}
    tp = fp = fn = idsw = n_gt = 0
    for fr in seq:
        S = box_iou(fr.gt_boxes, fr.pred_boxes)
        valid = S >= iou_threshold
        gi = {g: i for i, g in enumerate(fr.gt_ids)}
        pi = {p: j for j, p in enumerate(fr.pred_ids)}
        matches = []
        for g, p in prev.items():
            if g in gi and p in pi and valid[gi[g], pi[p]]:
                matches.append((gi[g], pi[p]))
        used_r = {r for r, _ in matches}
        used_c = {c for _, c in matches}
        rr = [i for i in range(len(fr.gt_ids)) if i not in used_r]
        cc = [j for j in range(len(fr.pred_ids)) if j not in used_c]
        sub = _max_weight_matching(S[np.ix_(rr, cc)], valid[np.ix_(rr, cc)])
        matches += [(rr[r], cc[c]) for r, c in sub]

        cur = {}
        for r, c in matches:
            g, p = fr.gt_ids[r], fr.pred_ids[c]
            if g in last and last[g] != p:
                idsw += 1
            last[g] = p
            cur[g] = p
        prev = cur
        tp += len(matches)
        fn += len(fr.gt_ids) - len(matches)
        fp += len(fr.pred_ids) - len(matches)
        n_gt += len(fr.gt_ids)
    if n_gt == 0:
        raise EmptySequence("sequence has no ground-truth boxes")
    mota = 1.0 - (fn + fp + idsw) / n_gt
    return ClearReport(mota, fp, fn, idsw, n_gt, tp)


@dataclass
class IdReport:
    idf1: float
    idtp: int
    idfp: int
    idfn: int


def id_scores(seq: Sequence[Frame], iou_threshold: float = 0.5) -> IdReport:
    """Identity measures from a global GT-trajectory to predicted-trajectory matching."""
    _check(seq)
    gt_ids = sorted({g for fr in seq for g in fr.gt_ids}, key=str)
    pr_ids = sorted({p for fr in seq for p in fr.pred_ids}, key=str)
    gidx = {g: i for i, g in enumerate(gt_ids)}
    pidx = {p: i for i, p in enumerate(pr_ids)}
    overlap = np.zeros((len(gt_ids), len(pr_ids)))
    n_gt = n_pr = 0
    for fr in seq:
        n_gt += len(fr.gt_ids)
        n_pr += len(fr.pred_ids)
        ok = box_iou(fr.gt_boxes, fr.pred_boxes) >= iou_threshold
        for r, c in zip(*np.nonzero(ok)):
            overlap[gidx[fr.gt_ids[r]], pidx[fr.pred_ids[c]]] += 1
    if n_gt + n_pr == 0:
        raise EmptySequence("sequence has no boxes")
    idtp = 0
    if overlap.size:
        rows, cols = linear_sum_assignment(-overlap)
        idtp = int(overlap[rows, cols].sum())
    idfn, idfp = n_gt - idtp, n_pr - idtp
    return IdReport(2 * idtp / (n_gt + n_pr), idtp, idfp, idfn)


def idf1(seq: Sequence[Frame], iou_threshold: float = 0.5) -> float:
    return id_scores(seq, iou_threshold).idf1


@dataclass
class HotaReport:
    hota: float
    deta: float
    assa: float
    hota_alpha: np.ndarray
    deta_alpha: np.ndarray
    assa_alpha: np.ndarray


def hota(seq: Sequence[Frame], alphas=HOTA_ALPHAS) -> HotaReport:
    """Higher-order tracking accuracy with IoU as localisation similarity.

    Per frame, one matching maximises (global alignment score x IoU); for
    each threshold alpha, matched pairs with IoU >= alpha count as TPs.
    """
    _check(seq)
    alphas = np.asarray(alphas, dtype=np.float64)
    gt_ids = sorted({g for fr in seq for g in fr.gt_ids}, key=str)
    pr_ids = sorted({p for fr in seq for p in fr.pred_ids}, key=str)
    gidx = {g: i for i, g in enumerate(gt_ids)}
    pidx = {p: i for i, p in enumerate(pr_ids)}
    nG, nP = len(gt_ids), len(pr_ids)

    sims, gts, prs = [], [], []
    potential = np.zeros((nG, nP))
    gt_count = np.zeros(nG)
    pr_count = np.zeros(nP)
    for fr in seq:
        S = box_iou(fr.gt_boxes, fr.pred_boxes)
        g = np.array([gidx[x] for x in fr.gt_ids], dtype=int)
        p = np.array([pidx[x] for x in fr.pred_ids], dtype=int)
        sims.append(S)
        gts.append(g)
        prs.append(p)
        gt_count[g] += 1
        pr_count[p] += 1
        if S.size:
            denom = S.sum(0)[None, :] + S.sum(1)[:, None] - S
            frac = np.where(denom > _EPS, S / np.where(denom > _EPS, denom, 1.0), 0.0)
            potential[np.ix_(g, p)] += frac
    with np.errstate(divide="ignore", invalid="ignore"):
        gas_denom = gt_count[:, None] + pr_count[None, :] - potential
        global_score = np.where(gas_denom > 0, potential / gas_denom, 0.0)

    A = len(alphas)
    tp = np.zeros(A)
    fn = np.zeros(A)
    fp = np.zeros(A)
    match_counts = np.zeros((A, nG, nP))
    for S, g, p in zip(sims, gts, prs):
        if S.size == 0:
            fn += len(g)
            fp += len(p)
            continue
        score = global_score[np.ix_(g, p)] * S
        rows, cols = linear_sum_assignment(-score)
        pos = score[rows, cols] > 0
        rows, cols = rows[pos], cols[pos]
        msim = S[rows, cols]
        for a, alpha in enumerate(alphas):
            ok = msim >= alpha - _EPS
            n = int(ok.sum())
            tp[a] += n
            fn[a] += len(g) - n
            fp[a] += len(p) - n
            np.add.at(match_counts[a], (g[rows[ok]], p[cols[ok]]), 1)

    assa = np.zeros(A)
    for a in range(A):
        mc = match_counts[a]
        denom = gt_count[:, None] + pr_count[None, :] - mc
        ass = np.where(denom > 0, mc / np.where(denom > 0, denom, 1.0), 0.0)
        assa[a] = (mc * ass).sum() / max(1.0, tp[a])
    deta = tp / np.maximum(1.0, tp + fn + fp)
    h = np.sqrt(deta * assa)
    return HotaReport(float(h.mean()), float(deta.mean()), float(assa.mean()), h, deta, assa)


@dataclass
class MotReport:
    MOTA: float
    IDF1: float
    HOTA: float
    FP: int
    FN: int
    IDSW: int
    GT: int
    DetA: float
    AssA: float
    IDTP: int
    IDFP: int
    IDFN: int

    def to_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, float) else int(v)) for k, v in asdict(self).items()}


def evaluate_mot(seq: Sequence[Frame], iou_threshold: float = 0.5) -> MotReport:
    c = clear_mot(seq, iou_threshold)
    i = id_scores(seq, iou_threshold)
    h = hota(seq)
    return MotReport(c.mota, i.idf1, h.hota, c.fp, c.fn, c.idsw, c.gt, h.deta, h.assa, i.idtp, i.idfp, i.idfn)


@dataclass
class PoseErrors:
    mpjpe: float
    pa_mpjpe: float
    pve: float
    pa_pve: float

    def to_mm(self) -> "PoseErrors":
        return PoseErrors(*(1000.0 * v for v in (self.mpjpe, self.pa_mpjpe, self.pve, self.pa_pve)))


def _aligned_error(pred, gt):
    tf, _ = umeyama_align(pred, gt)
    return float(np.linalg.norm(tf.apply(pred) - gt, axis=1).mean())


def pose_metrics(pred, gt, valid=None, pred_vertices=None, gt_vertices=None) -> PoseErrors:
    """MPJPE / PA-MPJPE and PVE / PA-PVE in the input length unit.

    Without vertex sets, PVE is computed over the keypoints themselves.
    Procrustes alignment is the least-squares similarity of pred onto gt.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        pred, gt = pred[valid], gt[valid]
    mpjpe = float(np.linalg.norm(pred - gt, axis=1).mean())
    pa = _aligned_error(pred, gt)
    if pred_vertices is None:
        return PoseErrors(mpjpe, pa, mpjpe, pa)
    pv = np.asarray(pred_vertices, dtype=np.float64)
    gv = np.asarray(gt_vertices, dtype=np.float64)
    if pv.shape != gv.shape:
        raise ShapeMismatch("vertex sets differ in shape")
    return PoseErrors(mpjpe, pa, float(np.linalg.norm(pv - gv, axis=1).mean()), _aligned_error(pv, gv))


def chamfer_bidirectional(a, b) -> float:
    """Symmetric mean of Euclidean nearest-neighbour distances."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise EmptySet("both point sets must be non-empty")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))
