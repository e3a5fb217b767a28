"""Centroids, codebooks and assignments shared by every clustering algorithm."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AssignmentError, DimensionError
from .patterns import BinarySupportMatrix


@dataclass(frozen=True, eq=False)
class Centroid:
    """One representative pattern: its active features and their intensities.

    Intensities are kept as float32, the on-disk precision, so codebooks
    survive a write/read cycle unchanged.
    """

    active_set: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.active_set, dtype=np.int64).reshape(-1)
        val = np.asarray(self.intensities, dtype=np.float32).reshape(-1)
        if idx.shape != val.shape:
            raise DimensionError("active_set and intensities differ in length")
        if idx.size and (idx[0] < 0 or np.any(np.diff(idx) <= 0)):
            raise ValueError("active_set must be strictly ascending non-negative indices")
        if val.size and not (np.all(np.isfinite(val)) and np.all(val > 0)):
            raise ValueError("intensities must be finite and positive")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "active_set", idx)
        object.__setattr__(self, "intensities", val)

    @classmethod
    def from_indices(cls, indices, intensity=1.0) -> "Centroid":
        idx = np.asarray(indices, dtype=np.int64)
        return cls(idx, np.full(idx.shape, intensity, dtype=np.float32))

    @property
    def size(self) -> int:
        return int(self.active_set.size)

    def __eq__(self, other):
        if not isinstance(other, Centroid):
            return NotImplemented
        return np.array_equal(self.active_set, other.active_set) and np.array_equal(
            self.intensities, other.intensities
        )


@dataclass(eq=False)
class CentroidSet:
    """K centroids over a D-dimensional feature space.

    ``density_p`` is the fraction of features each centroid keeps active;
    it is NaN for codebooks that do not constrain density (the binary
    baselines, planted prototypes of mixed density).
    """

    dim: int
    density_p: float
    centroids: list[Centroid]
    _bits: BinarySupportMatrix | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not self.centroids:
            raise ValueError("a codebook needs at least one centroid")
        self.dim = int(self.dim)
        self.density_p = float(self.density_p)
        for c in self.centroids:
            if c.size and c.active_set[-1] >= self.dim:
                raise DimensionError(f"centroid index {c.active_set[-1]} outside dim {self.dim}")

    @property
    def k(self) -> int:
        return len(self.centroids)

    def __len__(self):
        return self.k

    def __getitem__(self, i) -> Centroid:
        return self.centroids[i]

    def indicator(self, dtype=np.uint8) -> np.ndarray:
        """Dense (k, dim) 0/1 matrix of the active sets."""
        out = np.zeros((self.k, self.dim), dtype=dtype)
        for i, c in enumerate(self.centroids):
            out[i, c.active_set] = 1
        return out

    def dense(self) -> np.ndarray:
        """Dense (k, dim) float matrix of intensities."""
        out = np.zeros((self.k, self.dim), dtype=np.float64)
        for i, c in enumerate(self.centroids):
            out[i, c.active_set] = c.intensities
        return out

    def bits(self) -> BinarySupportMatrix:
        if self._bits is None:
            self._bits = BinarySupportMatrix.from_dense(self.indicator())
        return self._bits

    def sizes(self) -> np.ndarray:
        return np.array([c.size for c in self.centroids], dtype=np.int64)

    def __eq__(self, other):
        if not isinstance(other, CentroidSet):
            return NotImplemented
        same_p = (self.density_p == other.density_p) or (
            np.isnan(self.density_p) and np.isnan(other.density_p)
        )
        return (
            self.dim == other.dim
            and same_p
            and self.k == other.k
            and all(a == b for a, b in zip(self.centroids, other.centroids))
        )


@dataclass(eq=False)
class Assignment:
    """Cluster index per row, with member counts per cluster."""

    cluster_of: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.asarray(self.cluster_of, dtype=np.int64).reshape(-1)
        self.k = int(self.k)
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            bad = int(np.flatnonzero((labels < 0) | (labels >= self.k))[0])
            raise AssignmentError(
                f"row {bad} assigned to cluster {labels[bad]}, but k = {self.k}"
            )
        labels.setflags(write=False)
        self.cluster_of = labels

    @property
    def n_rows(self) -> int:
        return int(self.cluster_of.size)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.cluster_of, minlength=self.k)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.cluster_of == cluster)

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.cluster_of, other.cluster_of)
