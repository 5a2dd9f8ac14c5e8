"""Box geometry: IoU family, buffered expansion, height overlap, CIoU loss.

All boxes are axis-aligned in (x, y, w, h) form with (x, y) the top-left
corner and y growing downward. Scalar functions take anything box-like
(a BoundingBox or a length-4 sequence); matrix functions take (N, 4)
float arrays and return dense pairwise results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoundingBox",
    "iou",
    "expand",
    "eiou",
    "hiou",
    "ha_eiou",
    "iou_matrix",
    "expand_boxes",
    "eiou_matrix",
    "hiou_matrix",
    "ha_eiou_matrix",
    "ciou_loss",
    "ciou_grad",
]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, top-left anchored, sizes non-negative."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"box sizes must be non-negative, got w={self.w} h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + 0.5 * self.w, self.y + 0.5 * self.h)

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "BoundingBox":
        x, y, w, h = (float(v) for v in arr)
        return cls(x, y, w, h)


def _as_xywh(box) -> tuple[float, float, float, float]:
    if isinstance(box, BoundingBox):
        return box.x, box.y, box.w, box.h
    x, y, w, h = (float(v) for v in box)
    return x, y, w, h


def iou(a, b) -> float:
    """Intersection over union. 0 when disjoint or when either box is degenerate."""
    ax, ay, aw, ah = _as_xywh(a)
    bx, by, bw, bh = _as_xywh(b)
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    if union <= 0:
        return 0.0
    return min(inter / union, 1.0)


def expand(box, buffer: float):
    """Grow a box by ``buffer`` in relative units, keeping its center fixed.

    The result is (x - 0.5*buffer*w, y - 0.5*buffer*h, w*(1+buffer), h*(1+buffer)).
    buffer=0 returns the input unchanged. Negative buffers are rejected;
    configuration load additionally restricts buffers to [0, 1].
    """
    if buffer < 0:
        raise ValueError(f"buffer must be non-negative, got {buffer}")
    x, y, w, h = _as_xywh(box)
    out = BoundingBox(x - 0.5 * buffer * w, y - 0.5 * buffer * h, w + buffer * w, h + buffer * h)
    if isinstance(box, BoundingBox):
        return out
    return out.to_array()


def eiou(a, b, buffer: float) -> float:
    """IoU computed after expanding both boxes by ``buffer``.

    With buffer=0 this is arithmetic-identical to plain iou. Expansion adds
    slack for fast movers: boxes that barely miss each other still overlap
    once grown.
    """
    return iou(expand(a, buffer), expand(b, buffer))


def hiou(a, b, absolute: bool = False) -> float:
    """Height overlap ratio of two boxes: shared vertical extent over combined extent.

    Defined as (min(y2a, y2b) - max(ya, yb)) / (max(y2a, y2b) - min(ya, yb)).
    By default a negative numerator (vertically disjoint boxes) clamps to 0;
    ``absolute=True`` keeps the magnitude instead, matching the formulation
    with absolute-value bars. A zero denominator (both boxes degenerate at
    the same y) returns 1.
    """
    ax, ay, aw, ah = _as_xywh(a)
    bx, by, bw, bh = _as_xywh(b)
    num = min(ay + ah, by + bh) - max(ay, by)
    den = max(ay + ah, by + bh) - min(ay, by)
    if den <= 0:
        return 1.0
    if absolute:
        num = abs(num)
    elif num < 0:
        num = 0.0
    return min(num / den, 1.0)


def ha_eiou(a, b, buffer: float, absolute: bool = False, expanded_height: bool = False) -> float:
    """Height-adaptive expanded IoU: hiou(a, b) * eiou(a, b, buffer).

    The product is formed from the two component calls directly so the
    factorization is exact. ``expanded_height=True`` evaluates the height
    term on the expanded boxes instead of the originals.
    """
    if expanded_height:
        h = hiou(expand(a, buffer), expand(b, buffer), absolute=absolute)
    else:
        h = hiou(a, b, absolute=absolute)
    return h * eiou(a, b, buffer)


# ---------------------------------------------------------------------------
# pairwise matrix forms


def _split(boxes: np.ndarray):
    boxes = np.asarray(boxes, dtype=np.float64)
    if boxes.ndim != 2 or boxes.shape[1] != 4:
        raise ValueError(f"expected (N, 4) boxes, got shape {boxes.shape}")
    return boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]


def expand_boxes(boxes: np.ndarray, buffer: float) -> np.ndarray:
    if buffer < 0:
        raise ValueError(f"buffer must be non-negative, got {buffer}")
    boxes = np.asarray(boxes, dtype=np.float64)
    out = boxes.copy()
    out[:, 0] -= 0.5 * buffer * boxes[:, 2]
    out[:, 1] -= 0.5 * buffer * boxes[:, 3]
    out[:, 2] += buffer * boxes[:, 2]
    out[:, 3] += buffer * boxes[:, 3]
    return out


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (N, 4) and (M, 4) boxes, result (N, M)."""
    ax, ay, aw, ah = _split(a)
    bx, by, bw, bh = _split(b)
    iw = np.minimum(ax[:, None] + aw[:, None], bx[None, :] + bw[None, :]) - np.maximum(
        ax[:, None], bx[None, :]
    )
    ih = np.minimum(ay[:, None] + ah[:, None], by[None, :] + bh[None, :]) - np.maximum(
        ay[:, None], by[None, :]
    )
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    union = (aw * ah)[:, None] + (bw * bh)[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return np.minimum(out, 1.0)


def eiou_matrix(a: np.ndarray, b: np.ndarray, buffer: float) -> np.ndarray:
    return iou_matrix(expand_boxes(a, buffer), expand_boxes(b, buffer))


def hiou_matrix(a: np.ndarray, b: np.ndarray, absolute: bool = False) -> np.ndarray:
    _, ay, _, ah = _split(a)
    _, by, _, bh = _split(b)
    num = np.minimum(ay[:, None] + ah[:, None], by[None, :] + bh[None, :]) - np.maximum(
        ay[:, None], by[None, :]
    )
    den = np.maximum(ay[:, None] + ah[:, None], by[None, :] + bh[None, :]) - np.minimum(
        ay[:, None], by[None, :]
    )
    num = np.abs(num) if absolute else np.clip(num, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / den, 1.0)
    return np.minimum(out, 1.0)


def ha_eiou_matrix(
    a: np.ndarray,
    b: np.ndarray,
    buffer: float,
    absolute: bool = False,
    expanded_height: bool = False,
) -> np.ndarray:
    if expanded_height:
        h = hiou_matrix(expand_boxes(a, buffer), expand_boxes(b, buffer), absolute=absolute)
    else:
        h = hiou_matrix(a, b, absolute=absolute)
    return h * eiou_matrix(a, b, buffer)


# ---------------------------------------------------------------------------
# CIoU regression loss


def _ciou_terms(pred: np.ndarray, gt: np.ndarray):
    """Shared forward quantities for the batched CIoU loss and its gradient."""
    xp, yp, wp, hp = pred[:, 0], pred[:, 1], pred[:, 2], pred[:, 3]
    xg, yg, wg, hg = gt[:, 0], gt[:, 1], gt[:, 2], gt[:, 3]

    ix1 = np.maximum(xp, xg)
    iy1 = np.maximum(yp, yg)
    ix2 = np.minimum(xp + wp, xg + wg)
    iy2 = np.minimum(yp + hp, yg + hg)
    iw = np.clip(ix2 - ix1, 0.0, None)
    ih = np.clip(iy2 - iy1, 0.0, None)
    inter = iw * ih
    union = wp * hp + wg * hg - inter
    iou_v = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)

    dx = (xp + 0.5 * wp) - (xg + 0.5 * wg)
    dy = (yp + 0.5 * hp) - (yg + 0.5 * hg)
    rho2 = dx * dx + dy * dy

    ex1 = np.minimum(xp, xg)
    ey1 = np.minimum(yp, yg)
    ex2 = np.maximum(xp + wp, xg + wg)
    ey2 = np.maximum(yp + hp, yg + hg)
    cw = ex2 - ex1
    ch = ey2 - ey1
    c2 = cw * cw + ch * ch

    t = np.arctan2(wg, hg) - np.arctan2(wp, hp)
    v = (4.0 / math.pi**2) * t * t
    denom = (1.0 - iou_v) + v
    alpha = np.where(denom > 0, v / np.where(denom > 0, denom, 1.0), 0.0)
    return xp, yp, wp, hp, xg, yg, wg, hg, iou_v, inter, union, iw, ih, dx, dy, rho2, cw, ch, c2, t, v, alpha, denom


def ciou_loss(pred, gt) -> float:
    """Complete-IoU loss: 1 - IoU + center distance penalty + aspect penalty.

    ``pred`` and ``gt`` may be single boxes or (B, 4) batches; the return is a
    scalar or a (B,) array accordingly. The ground-truth box must have
    positive area.
    """
    pred_arr = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    gt_arr = np.atleast_2d(np.asarray(gt, dtype=np.float64))
    if np.any(gt_arr[:, 2] * gt_arr[:, 3] <= 0):
        raise ValueError("ciou_loss requires ground-truth boxes with positive area")
    terms = _ciou_terms(pred_arr, gt_arr)
    iou_v, rho2, c2, v, alpha = terms[8], terms[15], terms[18], terms[20], terms[21]
    # c2 > 0 is guaranteed: the enclosing box contains the positive-area gt.
    loss = 1.0 - iou_v + rho2 / c2 + alpha * v
    if np.ndim(pred) == 1:
        return float(loss[0])
    return loss


def ciou_grad(pred, gt):
    """Gradient of ciou_loss with respect to ``pred``, including the alpha path.

    Matches central finite differences of ciou_loss away from the kink points
    (box edges exactly aligned, or pred == gt).
    """
    pred_arr = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    gt_arr = np.atleast_2d(np.asarray(gt, dtype=np.float64))
    if np.any(gt_arr[:, 2] * gt_arr[:, 3] <= 0):
        raise ValueError("ciou_grad requires ground-truth boxes with positive area")
    (xp, yp, wp, hp, xg, yg, wg, hg, iou_v, inter, union, iw, ih,
     dx, dy, rho2, cw, ch, c2, t, v, alpha, denom) = _ciou_terms(pred_arr, gt_arr)

    B = pred_arr.shape[0]
    live_w = iw > 0
    live_h = ih > 0
    live = live_w & live_h

    # d(inter)/d(pred): each clip edge contributes only on its active branch.
    dix1 = (xp > xg).astype(np.float64)          # d ix1 / d xp
    dix2_x = (xp + wp < xg + wg).astype(np.float64)  # d ix2 / d xp (and / d wp)
    diy1 = (yp > yg).astype(np.float64)
    diy2_y = (yp + hp < yg + hg).astype(np.float64)

    diw_dx = np.where(live_w, dix2_x - dix1, 0.0)
    diw_dw = np.where(live_w, dix2_x, 0.0)
    dih_dy = np.where(live_h, diy2_y - diy1, 0.0)
    dih_dh = np.where(live_h, diy2_y, 0.0)

    dinter = np.zeros((B, 4))
    dinter[:, 0] = diw_dx * ih
    dinter[:, 1] = dih_dy * iw
    dinter[:, 2] = diw_dw * ih
    dinter[:, 3] = dih_dh * iw

    dunion = np.zeros((B, 4))
    dunion[:, 2] = hp
    dunion[:, 3] = wp
    dunion -= dinter

    safe_union = np.where(union > 0, union, 1.0)
    diou = np.where(
        (union > 0)[:, None] & live[:, None],
        (dinter * safe_union[:, None] - inter[:, None] * dunion) / (safe_union**2)[:, None],
        0.0,
    )
    # disjoint boxes: iou is identically 0 in a neighborhood, gradient 0
    diou = np.where(live[:, None], diou, 0.0)

    drho2 = np.zeros((B, 4))
    drho2[:, 0] = 2.0 * dx
    drho2[:, 1] = 2.0 * dy
    drho2[:, 2] = dx
    drho2[:, 3] = dy

    dex1 = (xp < xg).astype(np.float64)
    dey1 = (yp < yg).astype(np.float64)
    dex2 = (xp + wp > xg + wg).astype(np.float64)
    dey2 = (yp + hp > yg + hg).astype(np.float64)
    dc2 = np.zeros((B, 4))
    dc2[:, 0] = 2.0 * cw * (dex2 - dex1)
    dc2[:, 1] = 2.0 * ch * (dey2 - dey1)
    dc2[:, 2] = 2.0 * cw * dex2
    dc2[:, 3] = 2.0 * ch * dey2

    ddist = (drho2 * c2[:, None] - rho2[:, None] * dc2) / (c2**2)[:, None]

    # v = (4/pi^2) * (arctan2(wg, hg) - arctan2(wp, hp))^2
    szp = wp * wp + hp * hp
    safe_szp = np.where(szp > 0, szp, 1.0)
    dv = np.zeros((B, 4))
    coef = (4.0 / math.pi**2) * 2.0 * t
    dv[:, 2] = np.where(szp > 0, coef * (-hp / safe_szp), 0.0)
    dv[:, 3] = np.where(szp > 0, coef * (wp / safe_szp), 0.0)

    # loss = 1 - iou + rho2/c2 + v^2/((1-iou)+v); differentiate alpha*v as a whole
    safe_denom = np.where(denom > 0, denom, 1.0)
    g_v = np.where(denom > 0, v * (2.0 * (1.0 - iou_v) + v) / (safe_denom**2), 0.0)
    g_iou = np.where(denom > 0, (alpha * alpha) - 1.0, -1.0)

    grad = g_iou[:, None] * diou + ddist + g_v[:, None] * dv
    if np.ndim(pred) == 1:
        return grad[0]
    return grad
