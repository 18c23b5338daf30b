"""Exhaustive reference implementations of the tracking metrics for tiny sequences.

Everything here is written with plain loops and enumerates matchings outright,
so it shares no code path with ``ego3d.metrics``.
"""

import itertools
import math

import numpy as np

from ego3d.metrics import Frame

EPS = np.finfo(float).eps


def iou(a, b):
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def matchings(n, m, allowed):
    """Every partial one-to-one matching restricted to allowed (i, j) pairs."""
    pairs = [(i, j) for i in range(n) for j in range(m) if allowed(i, j)]

    def rec(k, used_i, used_j, cur):
        if k == len(pairs):
            yield list(cur)
            return
        yield from rec(k + 1, used_i, used_j, cur)
        i, j = pairs[k]
        if i not in used_i and j not in used_j:
            cur.append((i, j))
            yield from rec(k + 1, used_i | {i}, used_j | {j}, cur)
            cur.pop()

    yield from rec(0, frozenset(), frozenset(), [])


def best_matching(n, m, allowed, weight):
    best, best_w = [], -math.inf
    for mt in matchings(n, m, allowed):
        w = sum(weight(i, j) for i, j in mt)
        if w > best_w + 1e-12:
            best, best_w = mt, w
    return best


def clear_oracle(seq, thr=0.5):
    prev, last = {}, {}
    tp = fp = fn = sw = n_gt = 0
    for fr in seq:
        g, p = list(fr.gt_ids), list(fr.pred_ids)
        S = [[iou(a, b) for b in fr.pred_boxes] for a in fr.gt_boxes]
        keep = [(i, p.index(prev[gid])) for i, gid in enumerate(g)
                if gid in prev and prev[gid] in p and S[i][p.index(prev[gid])] >= thr]
        ui, uj = {i for i, _ in keep}, {j for _, j in keep}
        rest = best_matching(len(g), len(p), lambda i, j: i not in ui and j not in uj and S[i][j] >= thr,
                             lambda i, j: S[i][j])
        cur = {}
        for i, j in keep + rest:
            if g[i] in last and last[g[i]] != p[j]:
                sw += 1
            last[g[i]] = p[j]
            cur[g[i]] = p[j]
        prev = cur
        k = len(keep) + len(rest)
        tp += k
        fn += len(g) - k
        fp += len(p) - k
        n_gt += len(g)
    return 1 - (fn + fp + sw) / n_gt, fp, fn, sw


def idf1_oracle(seq, thr=0.5):
    gts = sorted({x for fr in seq for x in fr.gt_ids})
    prs = sorted({x for fr in seq for x in fr.pred_ids})
    n_gt = sum(len(fr.gt_ids) for fr in seq)
    n_pr = sum(len(fr.pred_ids) for fr in seq)

    def overlap(gid, pid):
        c = 0
        for fr in seq:
            if gid in fr.gt_ids and pid in fr.pred_ids:
                a = fr.gt_boxes[list(fr.gt_ids).index(gid)]
                b = fr.pred_boxes[list(fr.pred_ids).index(pid)]
                c += iou(a, b) >= thr
        return c

    best = 0
    for mt in matchings(len(gts), len(prs), lambda i, j: True):
        best = max(best, sum(overlap(gts[i], prs[j]) for i, j in mt))
    return 2 * best / (n_gt + n_pr)


def hota_oracle(seq, alphas=np.arange(1, 20) * 0.05):
    gts = sorted({x for fr in seq for x in fr.gt_ids})
    prs = sorted({x for fr in seq for x in fr.pred_ids})
    gcount = {g: 0 for g in gts}
    pcount = {p: 0 for p in prs}
    potential = {(g, p): 0.0 for g in gts for p in prs}
    sims = []
    for fr in seq:
        S = [[iou(a, b) for b in fr.pred_boxes] for a in fr.gt_boxes]
        sims.append(S)
        for g in fr.gt_ids:
            gcount[g] += 1
        for p in fr.pred_ids:
            pcount[p] += 1
        for i, g in enumerate(fr.gt_ids):
            for j, p in enumerate(fr.pred_ids):
                d = sum(S[i]) + sum(S[k][j] for k in range(len(S))) - S[i][j]
                potential[g, p] += S[i][j] / d if d > EPS else 0.0
    gas = {}
    for (g, p), v in potential.items():
        d = gcount[g] + pcount[p] - v
        gas[g, p] = v / d if d > 0 else 0.0

    frames = []
    for fr, S in zip(seq, sims):
        g, p = list(fr.gt_ids), list(fr.pred_ids)
        score = lambda i, j: gas[g[i], p[j]] * S[i][j]  # noqa: E731
        mt = best_matching(len(g), len(p), lambda i, j: score(i, j) > 0, score)
        frames.append((g, p, [(g[i], p[j], S[i][j]) for i, j in mt]))

    hs, ds, as_ = [], [], []
    for alpha in alphas:
        tps = [(gi, pi) for g, p, mt in frames for gi, pi, s in mt if s >= alpha - EPS]
        n_tp = len(tps)
        n_fn = sum(len(g) for g, _, _ in frames) - n_tp
        n_fp = sum(len(p) for _, p, _ in frames) - n_tp
        det = n_tp / max(1, n_tp + n_fn + n_fp)
        scores = []
        for c in tps:
            tpa = tps.count(c)
            scores.append(tpa / (gcount[c[0]] + pcount[c[1]] - tpa))
        ass = sum(scores) / max(1, n_tp)
        hs.append(math.sqrt(det * ass))
        ds.append(det)
        as_.append(ass)
    return float(np.mean(hs)), float(np.mean(ds)), float(np.mean(as_))


def random_sequence(rng, max_frames=5, max_objects=3, max_pred_ids=4):
    """Tiny GT/prediction sequence with near-duplicate boxes, drops, extras and id mix-ups."""
    n_obj = int(rng.integers(1, max_objects + 1))
    base = rng.uniform(0, 60, (n_obj, 2))
    size = rng.uniform(20, 40, (n_obj, 2))
    vel = rng.normal(0, 4, (n_obj, 2))
    frames = []
    for t in range(int(rng.integers(1, max_frames + 1))):
        present = [k for k in range(n_obj) if rng.random() < 0.85]
        gt_boxes = [np.concatenate([base[k] + t * vel[k], base[k] + t * vel[k] + size[k]]) for k in present]
        pred_ids, pred_boxes = [], []
        pool = list(rng.permutation(max_pred_ids) + 1)
        for k, b in zip(present, gt_boxes):
            if rng.random() < 0.8:
                pid = int(pool.pop(0)) if rng.random() < 0.3 else k + 1
                if pid in pred_ids:
                    continue
                pred_ids.append(pid)
                pred_boxes.append(b + rng.normal(0, 4, 4))
        if rng.random() < 0.3:
            pid = int(rng.integers(1, max_pred_ids + 3))
            if pid not in pred_ids:
                xy = rng.uniform(0, 80, 2)
                pred_ids.append(pid)
                pred_boxes.append(np.concatenate([xy, xy + rng.uniform(15, 40, 2)]))
        pred_boxes = [np.array([b[0], b[1], max(b[2], b[0] + 1), max(b[3], b[1] + 1)]) for b in pred_boxes]
        frames.append(Frame([k + 1 for k in present], np.array(gt_boxes).reshape(-1, 4),
                            pred_ids, np.array(pred_boxes).reshape(-1, 4)))
    if not any(len(fr.gt_ids) for fr in frames):
        return random_sequence(rng, max_frames, max_objects, max_pred_ids)
    return frames


def chamfer_naive(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return 0.5 * (d.min(1).mean() + d.min(0).mean())


def chamfer_loop(a, b):
    def side(x, y):
        total = 0.0
        for p in x:
            total += min(math.dist(p, q) for q in y)
        return total / len(x)

    return 0.5 * (side(a.tolist(), b.tolist()) + side(b.tolist(), a.tolist()))
