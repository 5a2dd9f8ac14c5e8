"""Detection-to-tracklet association.

Two stages per frame, ByteTrack style. High-confidence detections (score >=
high_conf) are matched first against all remembered tracklets with a hybrid
appearance + spatial cost on buffer b1. Low-confidence detections (score in
[low_conf, high_conf)) then get a spatial-only pass against the leftovers
with the stricter buffer b2. Detections below low_conf are discarded.

Pairs whose spatial similarity falls at or below gate_threshold are
inadmissible regardless of appearance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .appearance import cosine_similarity_matrix
from .geometry import eiou_matrix, ha_eiou_matrix, hiou_matrix, iou_matrix

__all__ = [
    "AssociationConfig",
    "CostMatrix",
    "FrameAssociation",
    "METRIC_VARIANTS",
    "spatial_similarity_matrix",
    "hybrid_cost",
    "solve_assignment",
    "associate_frame",
]

METRIC_VARIANTS = ("iou", "eiou", "hiou", "ha-eiou")

_GATED_COST = 1e9


@dataclass
class AssociationConfig:
    b1: float = 0.4
    b2: float = 0.3
    lambda_reid: float = 0.5
    lambda_ssim: float = 0.5
    high_conf: float = 0.6
    low_conf: float = 0.1
    gate_threshold: float = 0.0
    metric: str = "ha-eiou"
    hiou_abs: bool = False
    hiou_expanded: bool = False

    def validate(self) -> "AssociationConfig":
        for nm in ("b1", "b2"):
            v = getattr(self, nm)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{nm} must be in [0, 1], got {v}")
        if self.b2 > self.b1:
            raise ValueError(f"second-stage buffer must not exceed the first: b2={self.b2} > b1={self.b1}")
        if self.lambda_reid < 0 or self.lambda_ssim < 0:
            raise ValueError("cost weights must be non-negative")
        if self.lambda_reid + self.lambda_ssim <= 0:
            raise ValueError("at least one cost weight must be positive")
        for nm in ("high_conf", "low_conf", "gate_threshold"):
            v = getattr(self, nm)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{nm} must be in [0, 1], got {v}")
        if self.low_conf > self.high_conf:
            raise ValueError(
                f"low_conf ({self.low_conf}) must not exceed high_conf ({self.high_conf})"
            )
        if self.metric not in METRIC_VARIANTS:
            raise ValueError(f"metric must be one of {METRIC_VARIANTS}, got {self.metric!r}")
        return self


@dataclass
class CostMatrix:
    """Dense costs plus an admissibility mask; gated pairs can never match."""

    values: np.ndarray  # (N, M)
    gate: np.ndarray  # (N, M) bool, True = admissible


@dataclass
class FrameAssociation:
    """Outcome of one frame: matches are (tracklet_index, detection_index)
    pairs into the lists handed to associate_frame."""

    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_tracklets: list[int] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)  # high-conf leftovers
    discarded_detections: list[int] = field(default_factory=list)  # below low_conf


def spatial_similarity_matrix(
    track_boxes: np.ndarray,
    det_boxes: np.ndarray,
    metric: str,
    buffer: float,
    hiou_abs: bool = False,
    hiou_expanded: bool = False,
) -> np.ndarray:
    """Pairwise spatial similarity under the chosen variant.

    iou ignores the buffer; eiou expands by it; hiou is the height-overlap
    ratio times plain iou; ha-eiou is the height ratio times the buffered
    eiou.
    """
    if metric == "iou":
        return iou_matrix(track_boxes, det_boxes)
    if metric == "eiou":
        return eiou_matrix(track_boxes, det_boxes, buffer)
    if metric == "hiou":
        return hiou_matrix(track_boxes, det_boxes, absolute=hiou_abs) * iou_matrix(
            track_boxes, det_boxes
        )
    if metric == "ha-eiou":
        return ha_eiou_matrix(
            track_boxes,
            det_boxes,
            buffer,
            absolute=hiou_abs,
            expanded_height=hiou_expanded,
        )
    raise ValueError(f"unknown metric variant: {metric!r}")


def hybrid_cost(
    track_boxes: np.ndarray,
    track_embeddings,
    det_boxes: np.ndarray,
    det_embeddings,
    cfg: AssociationConfig,
) -> CostMatrix:
    """First-stage cost: lambda_reid * (1 - cosine) + lambda_ssim * (1 - spatial).

    track_embeddings / det_embeddings are sequences aligned with the box rows;
    entries may be None. Pairs with a missing embedding on either side put the
    combined weight on the spatial term. The gate marks pairs with spatial
    similarity <= gate_threshold inadmissible.
    """
    n, m = len(track_boxes), len(det_boxes)
    spatial = spatial_similarity_matrix(
        track_boxes, det_boxes, cfg.metric, cfg.b1, cfg.hiou_abs, cfg.hiou_expanded
    )
    wsum = cfg.lambda_reid + cfg.lambda_ssim
    values = wsum * (1.0 - spatial)

    t_valid = np.array([e is not None for e in track_embeddings], dtype=bool)
    d_valid = np.array([e is not None for e in det_embeddings], dtype=bool)
    if t_valid.any() and d_valid.any():
        dim = len(next(e for e in track_embeddings if e is not None))
        t_emb = np.zeros((n, dim))
        for i, e in enumerate(track_embeddings):
            if e is not None:
                t_emb[i] = e
        d_emb = np.zeros((m, dim))
        for j, e in enumerate(det_embeddings):
            if e is not None:
                d_emb[j] = e
        reid = cosine_similarity_matrix(t_emb, d_emb)
        both = t_valid[:, None] & d_valid[None, :]
        hybrid = cfg.lambda_reid * (1.0 - reid) + cfg.lambda_ssim * (1.0 - spatial)
        values = np.where(both, hybrid, values)

    gate = spatial > cfg.gate_threshold
    return CostMatrix(values=values, gate=gate)


def solve_assignment(cost: CostMatrix):
    """Minimum-cost assignment honoring the gate.

    Returns (matches, unmatched_rows, unmatched_cols); matches are (row, col)
    sorted by row. Gated pairs never appear in the result even if that leaves
    rows unmatched.
    """
    values, gate = cost.values, cost.gate
    n, m = values.shape
    if n == 0 or m == 0 or not gate.any():
        return [], list(range(n)), list(range(m))
    work = np.where(gate, values, _GATED_COST)
    rows, cols = linear_sum_assignment(work)
    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if gate[r, c]]
    matches.sort()
    mr = {r for r, _ in matches}
    mc = {c for _, c in matches}
    return (
        matches,
        [r for r in range(n) if r not in mr],
        [c for c in range(m) if c not in mc],
    )


def associate_frame(track_boxes, track_embeddings, detections, cfg: AssociationConfig) -> FrameAssociation:
    """Run both association stages for one frame.

    track_boxes: (N, 4) predicted boxes for the remembered tracklets;
    track_embeddings: aligned list of EMA embeddings (None allowed);
    detections: list of Detection. Indices in the result refer to positions
    in these inputs.
    """
    cfg.validate()
    n = len(track_boxes)
    scores = np.array([d.score for d in detections], dtype=np.float64)
    high = [i for i, s in enumerate(scores) if s >= cfg.high_conf]
    low = [i for i, s in enumerate(scores) if cfg.low_conf <= s < cfg.high_conf]
    discarded = [i for i, s in enumerate(scores) if s < cfg.low_conf]

    out = FrameAssociation(discarded_detections=discarded)
    track_boxes = np.asarray(track_boxes, dtype=np.float64).reshape(n, 4)

    # stage 1: hybrid cost on high-confidence detections, buffer b1
    if n and high:
        det_boxes = np.stack([detections[i].box for i in high])
        det_embs = [detections[i].embedding for i in high]
        cm = hybrid_cost(track_boxes, track_embeddings, det_boxes, det_embs, cfg)
        matches, un_rows, un_cols = solve_assignment(cm)
        out.matches = [(r, high[c]) for r, c in matches]
        remaining_tracks = un_rows
        out.unmatched_detections = [high[c] for c in un_cols]
    else:
        remaining_tracks = list(range(n))
        out.unmatched_detections = list(high)

    # stage 2: spatial-only on low-confidence detections, stricter buffer b2
    if remaining_tracks and low:
        t_boxes = track_boxes[remaining_tracks]
        det_boxes = np.stack([detections[i].box for i in low])
        spatial = spatial_similarity_matrix(
            t_boxes, det_boxes, cfg.metric, cfg.b2, cfg.hiou_abs, cfg.hiou_expanded
        )
        cm = CostMatrix(values=1.0 - spatial, gate=spatial > cfg.gate_threshold)
        matches, un_rows, _ = solve_assignment(cm)
        out.matches.extend((remaining_tracks[r], low[c]) for r, c in matches)
        out.unmatched_tracklets = [remaining_tracks[r] for r in un_rows]
    else:
        out.unmatched_tracklets = list(remaining_tracks)

    out.matches.sort()
    return out
