"""Independent reference implementations used to check the real ones.

Everything here trades speed for obviousness: overlap is counted on a
rasterized grid, assignments are found by trying every permutation, tracking
metrics are recomputed from first principles with permutation matching, and
attention is re-derived with explicit loops. None of it shares code with the
package.
"""

import itertools
import math

import numpy as np


# ---------------------------------------------------------------------------
# rasterized overlap

def grid_iou(box1, box2, scale: int = 1):
    """IoU by counting covered grid cells.

    Boxes are (x, y, w, h). With scale s, each unit square is split into s*s
    cells, so any box whose scaled corners are integers is rasterized exactly.
    """
    cells1 = _cells(box1, scale)
    cells2 = _cells(box2, scale)
    if not cells1 and not cells2:
        return 0.0
    inter = len(cells1 & cells2)
    union = len(cells1 | cells2)
    if union == 0:
        return 0.0
    return inter / union


def _cells(box, scale):
    x, y, w, h = box
    x0 = round(x * scale)
    y0 = round(y * scale)
    x1 = round((x + w) * scale)
    y1 = round((y + h) * scale)
    return {(i, j) for i in range(x0, x1) for j in range(y0, y1)}


def grid_expand(box, b):
    x, y, w, h = box
    return (x - 0.5 * b * w, y - 0.5 * b * h, w * (1.0 + b), h * (1.0 + b))


def grid_eiou(box1, box2, b, scale: int = 1):
    return grid_iou(grid_expand(box1, b), grid_expand(box2, b), scale)


def interval_hiou(box1, box2):
    """Vertical overlap over vertical span, counted on 1-D segments."""
    y1a, y1b = box1[1], box1[1] + box1[3]
    y2a, y2b = box2[1], box2[1] + box2[3]
    overlap = max(0.0, min(y1b, y2b) - max(y1a, y2a))
    span = max(y1b, y2b) - min(y1a, y2a)
    if span <= 0:
        return 0.0
    return overlap / span


def naive_ciou(pred, gt):
    """Scalar CIoU loss from the published formula, no shared code."""
    xp, yp, wp, hp = (float(v) for v in pred)
    xg, yg, wg, hg = (float(v) for v in gt)
    iw = max(0.0, min(xp + wp, xg + wg) - max(xp, xg))
    ih = max(0.0, min(yp + hp, yg + hg) - max(yp, yg))
    inter = iw * ih
    union = wp * hp + wg * hg - inter
    iou_v = inter / union if union > 0 else 0.0
    dcx = (xp + wp / 2) - (xg + wg / 2)
    dcy = (yp + hp / 2) - (yg + hg / 2)
    cw = max(xp + wp, xg + wg) - min(xp, xg)
    ch = max(yp + hp, yg + hg) - min(yp, yg)
    c2 = cw * cw + ch * ch
    rho_term = (dcx * dcx + dcy * dcy) / c2 if c2 > 0 else 0.0
    diff = math.atan2(wg, hg) - math.atan2(wp, hp)
    v = 4.0 / math.pi ** 2 * diff * diff
    alpha = v / ((1.0 - iou_v) + v) if (1.0 - iou_v) + v > 0 else 0.0
    return (1.0 - iou_v) + rho_term + alpha * v


# ---------------------------------------------------------------------------
# exhaustive assignment

def brute_force_assignment(costs):
    """Minimum-total-cost full assignment by enumerating permutations.

    costs: (n, m) array. Returns (best_cost, set of (row, col) pairs) over
    all assignments of size min(n, m). Feasible only for tiny matrices.
    """
    costs = np.asarray(costs, dtype=np.float64)
    n, m = costs.shape
    if n == 0 or m == 0:
        return 0.0, set()
    best = (math.inf, set())
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            total = sum(costs[i, c] for i, c in enumerate(cols))
            if total < best[0]:
                best = (total, {(i, c) for i, c in enumerate(cols)})
    else:
        for rows in itertools.permutations(range(n), m):
            total = sum(costs[r, j] for j, r in enumerate(rows))
            if total < best[0]:
                best = (total, {(r, j) for j, r in enumerate(rows)})
    return best


def best_matching_value(weights):
    """Maximum-total-weight matching size min(n, m), by permutations."""
    weights = np.asarray(weights, dtype=np.float64)
    n, m = weights.shape
    if n == 0 or m == 0:
        return 0.0
    if n > m:
        return best_matching_value(weights.T)
    best = -math.inf
    for cols in itertools.permutations(range(m), n):
        best = max(best, sum(weights[i, c] for i, c in enumerate(cols)))
    return best


# ---------------------------------------------------------------------------
# naive attention

def naive_attention_block(x, wq, bq, wk, bk, wv, bv, wo, bo,
                          g_in, b_in, g_out, b_out, heads, mask=None):
    """Pre/post-norm causal MHSA with residual, spelled out with loops."""
    x = np.asarray(x, dtype=np.float64)
    T, d = x.shape
    dh = d // heads

    def ln(v, g, b):
        mu = sum(v) / len(v)
        var = sum((u - mu) ** 2 for u in v) / len(v)
        return [(u - mu) / math.sqrt(var + 1e-5) * gi + bi
                for u, gi, bi in zip(v, g, b)]

    xln = np.array([ln(x[t], g_in, b_in) for t in range(T)])
    q = xln @ wq + bq
    k = xln @ wk + bk
    v = xln @ wv + bv
    ctx = np.zeros((T, d))
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        for i in range(T):
            scores = []
            for j in range(T):
                ok = j <= i and (mask is None or bool(mask[j]))
                s = float(q[i, sl] @ k[j, sl]) / math.sqrt(dh) if ok else -1e30
                scores.append(s)
            mx = max(scores)
            e = [math.exp(s - mx) for s in scores]
            z = sum(e)
            for j in range(T):
                ctx[i, sl] += (e[j] / z) * v[j, sl]
    proj = ctx @ wo + bo
    z2 = proj + xln
    return np.array([ln(z2[t], g_out, b_out) for t in range(T)])


# ---------------------------------------------------------------------------
# naive tracking metrics

def _box_iou(a, b):
    ax2, ay2 = a[0] + a[2], a[1] + a[3]
    bx2, by2 = b[0] + b[2], b[1] + b[3]
    iw = max(0.0, min(ax2, bx2) - max(a[0], b[0]))
    ih = max(0.0, min(ay2, by2) - max(a[1], b[1]))
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    if union <= 0:
        return 0.0
    return inter / union


def _frame_pairs(gt_items, pr_items):
    """IoU lookup keyed by (gt_id, pred_id) for one frame."""
    return {
        (g_id, p_id): _box_iou(g_box, p_box)
        for g_id, g_box in gt_items
        for p_id, p_box in pr_items
    }


def _match_frame(gt_items, pr_items, sims, prev, thresh=0.5):
    """CLEAR per-frame matching: persist each identity's last known pair,
    then extend with the best (max total IoU) permutation matching over the
    rest."""
    matches = {}
    used_p = set()
    for g_id, _ in gt_items:
        p_id = prev.get(g_id)
        if p_id is None or p_id in used_p:
            continue
        if sims.get((g_id, p_id), 0.0) >= thresh:
            matches[g_id] = p_id
            used_p.add(p_id)
    rest_g = [g for g, _ in gt_items if g not in matches]
    rest_p = [p for p, _ in pr_items if p not in used_p]
    if rest_g and rest_p:
        k = min(len(rest_g), len(rest_p))
        # count first, similarity second: mirrors a Hungarian solve where a
        # forbidden pair costs more than any number of allowed ones
        best = (0, 0.0, ())
        pool = rest_p if len(rest_g) <= len(rest_p) else rest_g
        for combo in itertools.permutations(pool, k):
            if len(rest_g) <= len(rest_p):
                pairs = list(zip(rest_g, combo))
            else:
                pairs = list(zip(combo, rest_p))
            pairs = [(g, p) for g, p in pairs if sims.get((g, p), 0.0) >= thresh]
            total = sum(sims[(g, p)] for g, p in pairs)
            if (len(pairs), total) > (best[0], best[1]):
                best = (len(pairs), total, tuple(pairs))
        for g, p in best[2]:
            matches[g] = p
    return matches


def naive_clear(gt, pred, thresh=0.5):
    """MOTA / IDSW / precision-recall counts, recomputed naively."""
    frames = sorted(set(gt) | set(pred))
    last_match = {}
    tp = fp = fn = idsw = 0
    n_gt = 0
    for f in frames:
        gt_items = gt.get(f, [])
        pr_items = pred.get(f, [])
        sims = _frame_pairs(gt_items, pr_items)
        matches = _match_frame(gt_items, pr_items, sims, last_match, thresh)
        n_gt += len(gt_items)
        tp += len(matches)
        fn += len(gt_items) - len(matches)
        fp += len(pr_items) - len(matches)
        for g, p in matches.items():
            if g in last_match and last_match[g] != p:
                idsw += 1
            last_match[g] = p
    mota = 1.0 - (fn + fp + idsw) / n_gt if n_gt else 0.0
    return {"tp": tp, "fp": fp, "fn": fn, "idsw": idsw, "n_gt": n_gt, "mota": mota}


def naive_idf1(gt, pred, thresh=0.5):
    """IDF1 by enumerating all injective gt-id -> pred-id mappings."""
    frames = sorted(set(gt) | set(pred))
    gt_ids = sorted({i for f in gt.values() for i, _ in f})
    pr_ids = sorted({i for f in pred.values() for i, _ in f})
    counts = {}
    for f in frames:
        sims = _frame_pairs(gt.get(f, []), pred.get(f, []))
        for (g, p), s in sims.items():
            if s >= thresh:
                counts[(g, p)] = counts.get((g, p), 0) + 1
    n_gt = sum(len(v) for v in gt.values())
    n_pr = sum(len(v) for v in pred.values())
    idtp = 0
    k = min(len(gt_ids), len(pr_ids))
    if k:
        if len(gt_ids) <= len(pr_ids):
            for combo in itertools.permutations(pr_ids, len(gt_ids)):
                idtp = max(idtp, sum(counts.get((g, p), 0)
                                     for g, p in zip(gt_ids, combo)))
        else:
            for combo in itertools.permutations(gt_ids, len(pr_ids)):
                idtp = max(idtp, sum(counts.get((g, p), 0)
                                     for g, p in zip(combo, pr_ids)))
    idp = idtp / n_pr if n_pr else 0.0
    idr = idtp / n_gt if n_gt else 0.0
    idf1 = 2 * idtp / (n_gt + n_pr) if (n_gt + n_pr) else 0.0
    return {"idtp": idtp, "idp": idp, "idr": idr, "idf1": idf1}


def naive_hota(gt, pred, alphas):
    """HOTA over the alpha grid, one permutation matching per frame.

    Follows the published evaluation procedure: global alignment scores from
    potential-match counts, a single matching on gas-weighted similarity,
    then per-alpha thresholding of the matched pairs.
    """
    frames = sorted(set(gt) | set(pred))
    gt_ids = sorted({i for f in gt.values() for i, _ in f})
    pr_ids = sorted({i for f in pred.values() for i, _ in f})
    n_gt = sum(len(v) for v in gt.values())
    n_pr = sum(len(v) for v in pred.values())

    gt_count = {g: 0 for g in gt_ids}
    pr_count = {p: 0 for p in pr_ids}
    per_frame = []
    for f in frames:
        gt_items = gt.get(f, [])
        pr_items = pred.get(f, [])
        sims = _frame_pairs(gt_items, pr_items)
        per_frame.append((gt_items, pr_items, sims))
        for g, _ in gt_items:
            gt_count[g] += 1
        for p, _ in pr_items:
            pr_count[p] += 1

    # potential match counts: sim / (rowsum + colsum - sim) accumulated per frame
    pmc = {}
    for gt_items, pr_items, sims in per_frame:
        if not gt_items or not pr_items:
            continue
        row = {g: sum(sims[(g, p)] for p, _ in pr_items) for g, _ in gt_items}
        col = {p: sum(sims[(g, p)] for g, _ in gt_items) for p, _ in pr_items}
        for g, _ in gt_items:
            for p, _ in pr_items:
                s = sims[(g, p)]
                denom = max(row[g] + col[p] - s, 1e-12)
                pmc[(g, p)] = pmc.get((g, p), 0.0) + s / denom

    def gas(g, p):
        num = pmc.get((g, p), 0.0)
        return num / max(gt_count[g] + pr_count[p] - num, 1e-12)

    results = []
    tpa = {a: {} for a in alphas}   # per-alpha matched (g,p) -> count
    tp_a = {a: 0 for a in alphas}
    for gt_items, pr_items, sims in per_frame:
        if gt_items and pr_items:
            gl = [g for g, _ in gt_items]
            pl = [p for p, _ in pr_items]
            w = np.array([[gas(g, p) * sims[(g, p)] for p in pl] for g in gl])
            best = (-math.inf, ())
            if len(gl) <= len(pl):
                for combo in itertools.permutations(range(len(pl)), len(gl)):
                    tot = sum(w[i, c] for i, c in enumerate(combo))
                    if tot > best[0]:
                        best = (tot, tuple((gl[i], pl[c]) for i, c in enumerate(combo)))
            else:
                for combo in itertools.permutations(range(len(gl)), len(pl)):
                    tot = sum(w[r, j] for j, r in enumerate(combo))
                    if tot > best[0]:
                        best = (tot, tuple((gl[r], pl[j]) for j, r in enumerate(combo)))
            for g, p in best[1]:
                s = sims[(g, p)]
                for a in alphas:
                    if s >= a - 1e-12:
                        tp_a[a] += 1
                        tpa[a][(g, p)] = tpa[a].get((g, p), 0) + 1
    for a in alphas:
        tp = tp_a[a]
        fn = n_gt - tp
        fp = n_pr - tp
        deta = tp / max(tp + fn + fp, 1e-12)
        ass = 0.0
        for (g, p), c in tpa[a].items():
            union = gt_count[g] + pr_count[p] - c
            ass += c * (c / max(union, 1e-12))
        assa = ass / max(tp, 1e-12)
        results.append({"alpha": a, "deta": deta, "assa": assa,
                        "hota": math.sqrt(deta * assa)})
    return results
