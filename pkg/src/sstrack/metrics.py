"""Tracking evaluation: CLEAR (MOTA, switches), identity F1, HOTA.

Inputs are per-frame dicts: frame -> list of (id, box). Boxes match when
their IoU reaches the threshold (default 0.5). The CLEAR matcher keeps the
previous frame's correspondence when it is still valid and solves the rest
with a Hungarian pass; identity switches count whenever a ground-truth
identity re-matches to a different tracker id than its last known one.

HOTA follows the two-pass scheme: accumulate potential match counts to get a
global alignment score, match each frame once on alignment * similarity, then
threshold that single matching at 19 alphas (0.05..0.95). At every alpha,
HOTA_a = sqrt(DetA_a * AssA_a) holds exactly; scalar scores are means over
alpha.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import iou_matrix

__all__ = ["EvalReport", "evaluate", "evaluate_sequences", "ALPHAS"]

ALPHAS = np.round(np.arange(1, 20) * 0.05, 2)

_BIG = 1e9


@dataclass
class EvalReport:
    mota: float
    idf1: float
    idp: float
    idr: float
    hota: float
    deta: float
    assa: float
    idsw: int
    fp: int
    fn: int
    tp: int
    num_gt: int
    num_pred: int
    hota_alpha: np.ndarray = field(repr=False, default=None)
    deta_alpha: np.ndarray = field(repr=False, default=None)
    assa_alpha: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "mota": self.mota,
            "idf1": self.idf1,
            "idp": self.idp,
            "idr": self.idr,
            "hota": self.hota,
            "deta": self.deta,
            "assa": self.assa,
            "idsw": self.idsw,
            "fp": self.fp,
            "fn": self.fn,
            "tp": self.tp,
            "num_gt": self.num_gt,
            "num_pred": self.num_pred,
        }


@dataclass
class _SeqCounts:
    gt_dets: int = 0
    pred_dets: int = 0
    clear_tp: int = 0
    fp: int = 0
    fn: int = 0
    idsw: int = 0
    idtp: int = 0
    tp_a: np.ndarray = None
    fn_a: np.ndarray = None
    fp_a: np.ndarray = None
    ass_sum_a: np.ndarray = None  # sum of matches * association score, per alpha


def _frame_tables(frames, data):
    """Per frame: (ids array, boxes array) with dense global id indexing."""
    id_index: dict = {}
    tables = {}
    for f in frames:
        items = data.get(f, [])
        ids = np.empty(len(items), dtype=np.int64)
        boxes = np.zeros((len(items), 4), dtype=np.float64)
        for i, (rid, box) in enumerate(items):
            if rid not in id_index:
                id_index[rid] = len(id_index)
            ids[i] = id_index[rid]
            boxes[i] = box
        tables[f] = (ids, boxes)
    return id_index, tables


def _evaluate_counts(pred, gt, iou_threshold: float) -> _SeqCounts:
    if not gt or all(len(v) == 0 for v in gt.values()):
        raise ValueError("ground truth is empty; nothing to evaluate against")
    frames = sorted(set(gt) | set(pred))
    gt_index, gt_tables = _frame_tables(frames, gt)
    pr_index, pr_tables = _frame_tables(frames, pred)
    n_gt_ids, n_pr_ids = len(gt_index), len(pr_index)

    c = _SeqCounts()
    c.tp_a = np.zeros(len(ALPHAS))
    c.fn_a = np.zeros(len(ALPHAS))
    c.fp_a = np.zeros(len(ALPHAS))
    c.ass_sum_a = np.zeros(len(ALPHAS))

    sims = {}
    for f in frames:
        gids, gboxes = gt_tables[f]
        pids, pboxes = pr_tables[f]
        sims[f] = iou_matrix(gboxes, pboxes) if len(gids) and len(pids) else np.zeros(
            (len(gids), len(pids))
        )
        c.gt_dets += len(gids)
        c.pred_dets += len(pids)

    # ---- CLEAR with correspondence persistence
    last_match: dict[int, int] = {}
    id_pair_counts = np.zeros((n_gt_ids, n_pr_ids))
    for f in frames:
        gids, _ = gt_tables[f]
        pids, _ = pr_tables[f]
        sim = sims[f]
        pid_pos = {int(p): j for j, p in enumerate(pids)}
        matched: dict[int, int] = {}
        used: set[int] = set()
        for gi, gid in enumerate(gids):
            pj = pid_pos.get(last_match.get(int(gid), -1))
            if pj is not None and pj not in used and sim[gi, pj] >= iou_threshold:
                matched[gi] = pj
                used.add(pj)
        rem_g = [gi for gi in range(len(gids)) if gi not in matched]
        rem_p = [pj for pj in range(len(pids)) if pj not in used]
        if rem_g and rem_p:
            sub = sim[np.ix_(rem_g, rem_p)]
            gate = sub >= iou_threshold
            if gate.any():
                cost = np.where(gate, 1.0 - sub, _BIG)
                rows, cols = linear_sum_assignment(cost)
                for r, col in zip(rows, cols):
                    if gate[r, col]:
                        matched[rem_g[r]] = rem_p[col]
        c.clear_tp += len(matched)
        c.fn += len(gids) - len(matched)
        c.fp += len(pids) - len(matched)
        for gi, pj in matched.items():
            gid, pid = int(gids[gi]), int(pids[pj])
            prev = last_match.get(gid)
            if prev is not None and prev != pid:
                c.idsw += 1
            last_match[gid] = pid

        # identity metric counts share the frame loop
        if len(gids) and len(pids):
            hit = sim >= iou_threshold
            if hit.any():
                np.add.at(id_pair_counts, (gids[:, None], pids[None, :]), hit.astype(float))

    # ---- IDF1: best global bijection between identities
    if n_gt_ids and n_pr_ids and id_pair_counts.any():
        rows, cols = linear_sum_assignment(-id_pair_counts)
        c.idtp = int(id_pair_counts[rows, cols].sum())
    else:
        c.idtp = 0

    # ---- HOTA
    pmc = np.zeros((n_gt_ids, n_pr_ids))
    gt_id_count = np.zeros(n_gt_ids)
    pr_id_count = np.zeros(n_pr_ids)
    for f in frames:
        gids, _ = gt_tables[f]
        pids, _ = pr_tables[f]
        if len(gids):
            gt_id_count[gids] += 1
        if len(pids):
            pr_id_count[pids] += 1
        if not len(gids) or not len(pids):
            continue
        sim = sims[f]
        denom = sim.sum(axis=0)[None, :] + sim.sum(axis=1)[:, None] - sim
        sim_iou = np.where(denom > 1e-12, sim / np.where(denom > 1e-12, denom, 1.0), 0.0)
        np.add.at(pmc, (gids[:, None], pids[None, :]), sim_iou)

    if n_gt_ids and n_pr_ids:
        gas = pmc / np.maximum(gt_id_count[:, None] + pr_id_count[None, :] - pmc, 1e-12)
    else:
        gas = np.zeros((n_gt_ids, n_pr_ids))

    mc_a = np.zeros((len(ALPHAS), n_gt_ids, n_pr_ids))
    for f in frames:
        gids, _ = gt_tables[f]
        pids, _ = pr_tables[f]
        sim = sims[f]
        if len(gids) and len(pids):
            score = gas[np.ix_(gids, pids)] * sim
            rows, cols = linear_sum_assignment(-score)
            sim_rc = sim[rows, cols]
            for ai, alpha in enumerate(ALPHAS):
                keep = sim_rc >= alpha - 1e-12
                n_match = int(keep.sum())
                c.tp_a[ai] += n_match
                c.fn_a[ai] += len(gids) - n_match
                c.fp_a[ai] += len(pids) - n_match
                if n_match:
                    mc_a[ai, gids[rows[keep]], pids[cols[keep]]] += 1.0
        else:
            c.fn_a += len(gids)
            c.fp_a += len(pids)

    for ai in range(len(ALPHAS)):
        if c.tp_a[ai] > 0:
            denom = np.maximum(gt_id_count[:, None] + pr_id_count[None, :] - mc_a[ai], 1e-12)
            ass_scores = mc_a[ai] / denom
            c.ass_sum_a[ai] = float((mc_a[ai] * ass_scores).sum())
    return c


def _report_from_counts(c: _SeqCounts) -> EvalReport:
    mota = 1.0 - (c.fn + c.fp + c.idsw) / c.gt_dets
    idf1 = 2.0 * c.idtp / (c.gt_dets + c.pred_dets) if (c.gt_dets + c.pred_dets) else 0.0
    idp = c.idtp / c.pred_dets if c.pred_dets else 0.0
    idr = c.idtp / c.gt_dets if c.gt_dets else 0.0

    with np.errstate(divide="ignore", invalid="ignore"):
        det_denom = c.tp_a + c.fn_a + c.fp_a
        deta_a = np.where(det_denom > 0, c.tp_a / np.where(det_denom > 0, det_denom, 1.0), 0.0)
        assa_a = np.where(c.tp_a > 0, c.ass_sum_a / np.where(c.tp_a > 0, c.tp_a, 1.0), 0.0)
    hota_a = np.sqrt(deta_a * assa_a)

    return EvalReport(
        mota=float(mota),
        idf1=float(idf1),
        idp=float(idp),
        idr=float(idr),
        hota=float(hota_a.mean()),
        deta=float(deta_a.mean()),
        assa=float(assa_a.mean()),
        idsw=int(c.idsw),
        fp=int(c.fp),
        fn=int(c.fn),
        tp=int(c.clear_tp),
        num_gt=int(c.gt_dets),
        num_pred=int(c.pred_dets),
        hota_alpha=hota_a,
        deta_alpha=deta_a,
        assa_alpha=assa_a,
    )


def evaluate(pred, gt, iou_threshold: float = 0.5) -> EvalReport:
    """Score tracker output against ground truth for one sequence.

    pred, gt: dict frame -> list of (id, box). Raises ValueError when the
    ground truth is empty. Tracker output rows may also carry a trailing
    confidence; only (id, box) are read.
    """
    pred = {f: [(i, b) for i, b, *_ in items] for f, items in pred.items()}
    return _report_from_counts(_evaluate_counts(pred, gt, iou_threshold))


def evaluate_sequences(pairs, iou_threshold: float = 0.5) -> EvalReport:
    """Pooled evaluation over (pred, gt) pairs: CLEAR and identity counts
    add up; per-alpha association is TP-weighted across sequences."""
    if not pairs:
        raise ValueError("no sequences to evaluate")
    total = _SeqCounts()
    total.tp_a = np.zeros(len(ALPHAS))
    total.fn_a = np.zeros(len(ALPHAS))
    total.fp_a = np.zeros(len(ALPHAS))
    total.ass_sum_a = np.zeros(len(ALPHAS))
    for pred, gt in pairs:
        pred = {f: [(i, b) for i, b, *_ in items] for f, items in pred.items()}
        c = _evaluate_counts(pred, gt, iou_threshold)
        total.gt_dets += c.gt_dets
        total.pred_dets += c.pred_dets
        total.clear_tp += c.clear_tp
        total.fp += c.fp
        total.fn += c.fn
        total.idsw += c.idsw
        total.idtp += c.idtp
        total.tp_a += c.tp_a
        total.fn_a += c.fn_a
        total.fp_a += c.fp_a
        total.ass_sum_a += c.ass_sum_a
    return _report_from_counts(total)
