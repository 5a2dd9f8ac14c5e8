"""Tracklet lifecycle and appearance maintenance.

States: Active (matched recently), Lost (unmatched but remembered, still
eligible for matching), Deleted (past the max_lost horizon, dropped).
Identities are never reused. Appearance templates evolve by a
confidence-modulated EMA: a full-confidence detection updates the template
at just under the nominal rate, and the update weight shrinks to zero as
the score falls toward the noise floor, so occluded or blurry detections
cannot wash out a clean template.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .appearance import normalize
from .association import FrameAssociation
from .mot_io import Detection

__all__ = [
    "TrackState",
    "TrackManagerConfig",
    "Tracklet",
    "TrackManager",
    "ema_weight",
    "dynamic_ema",
]


class TrackState(IntEnum):
    ACTIVE = 1
    LOST = 2
    DELETED = 3


@dataclass
class TrackManagerConfig:
    max_lost: int = 30
    min_hits: int = 1
    ema_alpha: float = 0.9
    ema_sigma: float = 0.1
    ema_convex: bool = False
    window: int = 10

    def validate(self) -> "TrackManagerConfig":
        if self.max_lost < 0:
            raise ValueError(f"max_lost must be >= 0, got {self.max_lost}")
        if self.min_hits < 1:
            raise ValueError(f"min_hits must be >= 1, got {self.min_hits}")
        if not 0.0 < self.ema_alpha < 1.0:
            raise ValueError(f"ema_alpha must be in (0, 1), got {self.ema_alpha}")
        if not 0.0 <= self.ema_sigma < 1.0:
            raise ValueError(f"ema_sigma must be in [0, 1), got {self.ema_sigma}")
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        return self


def ema_weight(score: float, alpha: float, sigma: float) -> float:
    """Dynamic retention weight alpha_d = alpha + (1 - alpha) *
    (1 - (score - sigma)) / (1 - sigma), clamped to [alpha, 1].

    Decreasing in the score: a score of 1 gives the smallest retention
    (largest update), and any score at or below sigma clamps to 1, freezing
    the template.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if not 0.0 <= sigma < 1.0:
        raise ValueError(f"sigma must be in [0, 1), got {sigma}")
    alpha_d = alpha + (1.0 - alpha) * (1.0 - (score - sigma)) / (1.0 - sigma)
    return min(1.0, max(alpha, alpha_d))


def dynamic_ema(e_old, f_new, score: float, alpha: float, sigma: float, convex: bool = False):
    """Confidence-modulated EMA update of an appearance template.

    With alpha_d = ema_weight(score, alpha, sigma): a detection at score 1
    contributes with weight 1 - alpha_d, slightly under 1 - alpha; one at or
    below sigma gets weight 0 and leaves the template unchanged (up to
    renormalization). The default form keeps the mixture alpha * e_old +
    (1 - alpha_d) * f_new; convex=True uses alpha_d * e_old instead. The
    result is L2-normalized either way.
    """
    e_old = np.asarray(e_old, dtype=np.float64)
    f_new = np.asarray(f_new, dtype=np.float64)
    alpha_d = ema_weight(score, alpha, sigma)
    base = alpha_d if convex else alpha
    return normalize(base * e_old + (1.0 - alpha_d) * f_new)


class Tracklet:
    """One tracked identity: recent box history, EMA appearance, lifecycle."""

    def __init__(self, track_id: int, frame_idx: int, det: Detection, window: int):
        self.track_id = track_id
        self.state = TrackState.ACTIVE
        self.history: deque = deque(maxlen=window)
        self.history.append(det.box.copy())
        self.embedding = None if det.embedding is None else normalize(det.embedding)
        self.predicted_box = det.box.copy()
        self.last_box = det.box.copy()
        self.last_score = det.score
        self.start_frame = frame_idx
        self.last_seen = frame_idx
        self.hits = 1

    def mark_matched(self, frame_idx: int, det: Detection, cfg: TrackManagerConfig):
        self.history.append(det.box.copy())
        self.last_box = det.box.copy()
        self.last_score = det.score
        self.last_seen = frame_idx
        self.hits += 1
        self.state = TrackState.ACTIVE
        if det.embedding is not None:
            if self.embedding is None:
                self.embedding = normalize(det.embedding)
            else:
                self.embedding = dynamic_ema(
                    self.embedding,
                    det.embedding,
                    det.score,
                    cfg.ema_alpha,
                    cfg.ema_sigma,
                    cfg.ema_convex,
                )

    def lost_duration(self, frame_idx: int) -> int:
        return frame_idx - self.last_seen


class TrackManager:
    """Applies a frame's association outcome to the tracklet population."""

    def __init__(self, cfg: TrackManagerConfig):
        self.cfg = cfg.validate()
        self.tracklets: list[Tracklet] = []
        self._next_id = 1
        self.deleted_count = 0

    def remembered(self) -> list[Tracklet]:
        """Active + Lost tracklets, the matching pool for the next frame."""
        return list(self.tracklets)

    def step(self, frame_idx: int, assoc: FrameAssociation, detections: list[Detection]):
        """Advance the population by one frame.

        Matched tracklets update their history and template. Unmatched ones
        go Lost; once a tracklet has been unseen for more than max_lost
        frames it is Deleted (so deletion lands at last_seen + max_lost + 1).
        Unmatched high-confidence detections spawn fresh identities. Returns
        the tracklets confirmed for output at this frame.
        """
        for t_idx, d_idx in assoc.matches:
            self.tracklets[t_idx].mark_matched(frame_idx, detections[d_idx], self.cfg)

        survivors: list[Tracklet] = []
        for t in self.tracklets:
            if t.last_seen == frame_idx:
                survivors.append(t)
                continue
            if t.lost_duration(frame_idx) > self.cfg.max_lost:
                t.state = TrackState.DELETED
                self.deleted_count += 1
                continue
            t.state = TrackState.LOST
            survivors.append(t)
        self.tracklets = survivors

        for d_idx in assoc.unmatched_detections:
            det = detections[d_idx]
            self.tracklets.append(Tracklet(self._next_id, frame_idx, det, self.cfg.window))
            self._next_id += 1

        return [
            t
            for t in self.tracklets
            if t.state == TrackState.ACTIVE and t.last_seen == frame_idx and t.hits >= self.cfg.min_hits
        ]
