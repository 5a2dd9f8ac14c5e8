"""MOT-challenge-style file I/O.

Detections, ground truth and tracker output all share the CSV row layout
``frame, id, x, y, w, h, conf, ...`` with 1-based frame numbers. Extra
trailing columns are ignored on read; writes emit exactly ten columns with
-1 placeholders, rows sorted by (frame, id), coordinates rounded to two
decimals.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Detection",
    "SequenceData",
    "DataFileError",
    "read_mot_file",
    "write_mot_file",
    "read_detections",
    "read_ground_truth",
    "write_results",
    "read_embeddings",
    "write_embeddings",
    "read_seqinfo",
    "write_seqinfo",
    "load_sequence_dir",
]


class DataFileError(Exception):
    """Raised for missing or malformed data files; the CLI maps this to exit code 2."""


@dataclass
class Detection:
    """One detector output: a box in pixels, a confidence in [0, 1], and
    optionally an appearance embedding."""

    box: np.ndarray  # (4,) x, y, w, h
    score: float
    embedding: np.ndarray | None = None

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=np.float64)
        if self.box.shape != (4,):
            raise ValueError(f"detection box must have shape (4,), got {self.box.shape}")
        if self.embedding is not None:
            self.embedding = np.asarray(self.embedding, dtype=np.float64)


@dataclass
class SequenceData:
    """A loaded sequence: per-frame detections, optional ground truth, image size."""

    detections: dict[int, list[Detection]]
    image_size: tuple[int, int]
    ground_truth: dict[int, list[tuple[int, np.ndarray]]] | None = None
    name: str = "seq"
    det_identity: dict[int, list[int]] | None = None

    @property
    def frames(self) -> list[int]:
        keys = set(self.detections)
        if self.ground_truth:
            keys |= set(self.ground_truth)
        return sorted(keys)


def read_mot_file(path) -> np.ndarray:
    """Read a MOT CSV into a float array (rows, >=7 cols). Raises DataFileError.

    Rows with negative width or height are dropped; one warning reports how
    many were dropped.
    """
    if not os.path.exists(path):
        raise DataFileError(f"file not found: {path}")
    rows = []
    rejected = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 7:
                raise DataFileError(f"{path}:{lineno}: expected at least 7 fields, got {len(parts)}")
            try:
                row = [float(p) for p in parts[:7]]
            except ValueError as exc:
                raise DataFileError(f"{path}:{lineno}: {exc}") from None
            if row[4] < 0 or row[5] < 0:
                rejected += 1
                continue
            rows.append(row)
    if rejected:
        warnings.warn(f"{path}: rejected {rejected} rows with negative width/height")
    if not rows:
        return np.zeros((0, 7), dtype=np.float64)
    return np.asarray(rows, dtype=np.float64)


def write_mot_file(path, rows) -> None:
    """Write rows of (frame, id, x, y, w, h, conf) sorted by (frame, id)."""
    rows = sorted(rows, key=lambda r: (int(r[0]), int(r[1])))
    with open(path, "w") as fh:
        for r in rows:
            frame, tid = int(r[0]), int(r[1])
            x, y, w, h, conf = (float(v) for v in r[2:7])
            fh.write(f"{frame},{tid},{x:.2f},{y:.2f},{w:.2f},{h:.2f},{conf:.2f},-1,-1,-1\n")


def read_detections(path) -> dict[int, list[Detection]]:
    data = read_mot_file(path)
    out: dict[int, list[Detection]] = {}
    for row in data:
        frame = int(row[0])
        out.setdefault(frame, []).append(Detection(box=row[2:6].copy(), score=float(row[6])))
    return out


def read_ground_truth(path) -> dict[int, list[tuple[int, np.ndarray]]]:
    data = read_mot_file(path)
    out: dict[int, list[tuple[int, np.ndarray]]] = {}
    for row in data:
        frame, tid = int(row[0]), int(row[1])
        out.setdefault(frame, []).append((tid, row[2:6].copy()))
    return out


def write_results(path, results: dict[int, list[tuple[int, np.ndarray, float]]]) -> None:
    """Tracker output: dict frame -> [(track_id, box, conf)]."""
    rows = []
    for frame, items in results.items():
        for tid, box, conf in items:
            rows.append((frame, tid, box[0], box[1], box[2], box[3], conf))
    write_mot_file(path, rows)


def write_embeddings(path, emb: dict[int, list[np.ndarray | None]]) -> None:
    """Embedding sidecar: one row per detection, ``frame, det_index, v0, v1, ...``.

    Detections without an embedding are skipped; det_index is the position of
    the detection within its frame's detection list.
    """
    with open(path, "w") as fh:
        for frame in sorted(emb):
            for idx, vec in enumerate(emb[frame]):
                if vec is None:
                    continue
                vals = ",".join(f"{v:.6f}" for v in vec)
                fh.write(f"{frame},{idx},{vals}\n")


def read_embeddings(path) -> dict[int, dict[int, np.ndarray]]:
    if not os.path.exists(path):
        raise DataFileError(f"file not found: {path}")
    out: dict[int, dict[int, np.ndarray]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 3:
                raise DataFileError(f"{path}:{lineno}: embedding rows need frame, index, values")
            try:
                frame, idx = int(float(parts[0])), int(float(parts[1]))
                vec = np.array([float(p) for p in parts[2:]], dtype=np.float64)
            except ValueError as exc:
                raise DataFileError(f"{path}:{lineno}: {exc}") from None
            out.setdefault(frame, {})[idx] = vec
    return out


def write_seqinfo(path, name: str, image_size: tuple[int, int], n_frames: int) -> None:
    with open(path, "w") as fh:
        fh.write("[Sequence]\n")
        fh.write(f"name={name}\n")
        fh.write(f"imWidth={image_size[0]}\n")
        fh.write(f"imHeight={image_size[1]}\n")
        fh.write(f"seqLength={n_frames}\n")


def read_seqinfo(path) -> dict:
    import configparser

    if not os.path.exists(path):
        raise DataFileError(f"file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
        sec = cp["Sequence"]
        return {
            "name": sec.get("name", "seq"),
            "image_size": (sec.getint("imWidth"), sec.getint("imHeight")),
            "n_frames": sec.getint("seqLength"),
        }
    except (configparser.Error, KeyError, ValueError) as exc:
        raise DataFileError(f"bad seqinfo file {path}: {exc}") from None


def _read_det_identity(path) -> dict[int, list[int]]:
    if not os.path.exists(path):
        raise DataFileError(f"file not found: {path}")
    with open(path) as fh:
        raw = json.load(fh)
    return {int(k): [int(v) for v in vals] for k, vals in raw.items()}


def load_sequence_dir(seq_dir, with_embeddings: bool = True) -> SequenceData:
    """Load a simulator-layout directory: det.txt, gt.txt, seqinfo.ini,
    embeddings.csv (optional), det_identity.json (optional)."""
    seq_dir = os.fspath(seq_dir)
    if not os.path.isdir(seq_dir):
        raise DataFileError(f"not a directory: {seq_dir}")
    info = read_seqinfo(os.path.join(seq_dir, "seqinfo.ini"))
    detections = read_detections(os.path.join(seq_dir, "det.txt"))
    gt_path = os.path.join(seq_dir, "gt.txt")
    gt = read_ground_truth(gt_path) if os.path.exists(gt_path) else None

    emb_path = os.path.join(seq_dir, "embeddings.csv")
    if with_embeddings and os.path.exists(emb_path):
        emb = read_embeddings(emb_path)
        for frame, by_idx in emb.items():
            dets = detections.get(frame)
            if dets is None:
                continue
            for idx, vec in by_idx.items():
                if idx >= len(dets):
                    raise DataFileError(
                        f"embedding index {idx} out of range for frame {frame} in {emb_path}"
                    )
                dets[idx].embedding = vec

    ident_path = os.path.join(seq_dir, "det_identity.json")
    det_identity = _read_det_identity(ident_path) if os.path.exists(ident_path) else None

    return SequenceData(
        detections=detections,
        image_size=info["image_size"],
        ground_truth=gt,
        name=info["name"],
        det_identity=det_identity,
    )
