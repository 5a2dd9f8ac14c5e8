"""Appearance embeddings: cosine similarity and embedding providers.

The tracker never computes visual features itself; it consumes embeddings
from a provider. FileProvider replays per-detection vectors from a sidecar
file, SyntheticProvider draws identity-conditioned vectors (used by the
simulator and in tests).
"""

from __future__ import annotations

import numpy as np

from .mot_io import read_embeddings

__all__ = [
    "cosine_similarity",
    "cosine_similarity_matrix",
    "normalize",
    "SyntheticProvider",
    "FileProvider",
]


def normalize(v: np.ndarray) -> np.ndarray:
    """L2-normalize; zero vectors come back unchanged."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0:
        return v.copy()
    return v / n


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; 0 if either vector is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"embedding dims differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def cosine_similarity_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity between (N, d) and (M, d); zero rows give 0."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"embedding dims differ: {a.shape[1]} vs {b.shape[1]}")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = na[:, None] * nb[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom > 0, a @ b.T / np.where(denom > 0, denom, 1.0), 0.0)
    return out


class SyntheticProvider:
    """Identity-keyed gaussian embeddings with optional per-query noise.

    Every identity gets a fixed unit base vector drawn once from the seeded
    generator; ``get(identity, noise_sigma)`` returns the base vector plus
    isotropic gaussian noise. noise_sigma=0 reproduces the base vector
    exactly, so two queries for the same identity agree.
    """

    def __init__(self, dim: int = 128, seed: int = 0):
        if dim <= 0:
            raise ValueError(f"embedding dim must be positive, got {dim}")
        self.dim = dim
        self._rng = np.random.default_rng(seed)
        self._base: dict[int, np.ndarray] = {}

    def base(self, identity: int) -> np.ndarray:
        vec = self._base.get(identity)
        if vec is None:
            vec = normalize(self._rng.standard_normal(self.dim))
            self._base[identity] = vec
        return vec

    def get(self, identity: int, noise_sigma: float = 0.0, rng=None) -> np.ndarray:
        vec = self.base(identity)
        if noise_sigma > 0:
            gen = rng if rng is not None else self._rng
            vec = vec + noise_sigma * gen.standard_normal(self.dim)
        return vec


class FileProvider:
    """Replays embeddings stored as ``frame, det_index, values...`` rows."""

    def __init__(self, path):
        self._table = read_embeddings(path)

    def get(self, frame: int, det_index: int) -> np.ndarray | None:
        return self._table.get(frame, {}).get(det_index)
