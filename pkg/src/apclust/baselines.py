"""Binary clustering baselines.

``cluster_bmf``: binary matrix factorization ``A ~ W H`` with a one-hot row
factor ``W``. Alternating minimization of the Hamming reconstruction error
then reduces to k-medians under Hamming distance: assign each row to the
nearest binary centroid, set each centroid bit by strict majority vote.

``cluster_brb_kmeans``: Binary-to-Real-and-Back k-means. Bits are lifted to
0.0/1.0, Lloyd's algorithm runs in real space, and the final centroids are
binarized at 0.5.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._parallel import map_tiles
from .awc import ClusteringResult
from .codebook import Assignment, Centroid, CentroidSet
from .errors import InvalidConfigError
from .metrics import build_report
from .patterns import BinarySupportMatrix, as_support

log = logging.getLogger(__name__)

EMPTY_CLUSTER_POLICIES = ("reseed", "keep")


@dataclass
class BaselineConfig:
    k: int
    max_iters: int = 50
    seed: int = 0
    # "reseed": move an empty centroid onto the row farthest from its own
    # centroid; "keep": leave it where it is
    empty_cluster_policy: str = "reseed"
    n_workers: int = 1

    def validate(self, n_rows: int):
        if self.k < 1:
            raise InvalidConfigError(f"k must be >= 1, got {self.k}")
        if self.k > n_rows:
            raise InvalidConfigError(f"k = {self.k} exceeds the number of rows N = {n_rows}")
        if self.max_iters < 1:
            raise InvalidConfigError("max_iters must be >= 1")
        if self.empty_cluster_policy not in EMPTY_CLUSTER_POLICIES:
            raise InvalidConfigError(f"unknown empty_cluster_policy {self.empty_cluster_policy!r}")


def _seed_rows(n_rows: int, k: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).choice(n_rows, size=k, replace=False)


def binary_codebook(bits: np.ndarray) -> CentroidSet:
    """CentroidSet with unit intensities from a (k, D) 0/1 matrix."""
    bits = np.asarray(bits)
    cents = [Centroid.from_indices(np.flatnonzero(row)) for row in bits]
    return CentroidSet(bits.shape[1], float("nan"), cents)


def hamming_assign(data: BinarySupportMatrix, centroids: np.ndarray, n_workers: int = 1):
    """Nearest binary centroid per row by Hamming distance (ties: lower index).

    Returns (labels, distance to the chosen centroid).
    """
    c = centroids.astype(np.float32)
    c_sizes = c.sum(axis=1)
    c_t = c.T.copy()

    def tile(t):
        a = data.to_dense(t, dtype=np.float32)
        # |a xor c| = |a| + |c| - 2 a.c, exact in float32 for D < 2**24
        dist = a.sum(axis=1)[:, None] + c_sizes[None, :] - 2.0 * (a @ c_t)
        lab = np.argmin(dist, axis=1)
        return lab, dist[np.arange(lab.size), lab]

    parts = map_tiles(tile, data.n_rows, n_workers)
    labels = np.concatenate([p[0] for p in parts]).astype(np.int64)
    dist = np.concatenate([p[1] for p in parts]).astype(np.int64)
    return labels, dist


def _member_sums(data: BinarySupportMatrix, labels: np.ndarray, k: int, n_workers: int):
    """Per-cluster column sums of the 0/1 data, as exact int64."""

    def tile(t):
        out = np.zeros((k, data.n_cols), dtype=np.int64)
        np.add.at(out, labels[t], data.to_dense(t, dtype=np.int64))
        return out

    return sum(map_tiles(tile, data.n_rows, n_workers))


def _farthest_rows(dist: np.ndarray, count: int) -> np.ndarray:
    return np.argsort(-dist, kind="stable")[:count]


def majority_centroids(data: BinarySupportMatrix, labels: np.ndarray, k: int, n_workers: int = 1):
    """Strict-majority vote per bit; an exact tie gives 0."""
    counts = _member_sums(data, labels, k, n_workers)
    sizes = np.bincount(labels, minlength=k)
    return (2 * counts > sizes[:, None]).astype(np.uint8), sizes


def cluster_bmf(data, config: BaselineConfig, observer=None) -> ClusteringResult:
    """BMF-style binary clustering, run until no row changes cluster.

    ``trace`` holds the total within-cluster Hamming distance after each
    centroid update. ``observer(iteration, cost)`` is called with the same.
    """
    data = as_support(data)
    config.validate(data.n_rows)
    k = config.k
    centroids = data.to_dense(_seed_rows(data.n_rows, k, config.seed))
    labels = None
    trace = []
    for it in range(1, config.max_iters + 1):
        new_labels, _ = hamming_assign(data, centroids, config.n_workers)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        updated, sizes = majority_centroids(data, labels, k, config.n_workers)
        empty = np.flatnonzero(sizes == 0)
        if config.empty_cluster_policy == "keep":
            updated[empty] = centroids[empty]
        elif empty.size:
            dist = _row_hamming(data, updated, labels)
            updated[empty] = data.to_dense(_farthest_rows(dist, empty.size))
        centroids = updated
        cost = int(_row_hamming(data, centroids, labels).sum())
        trace.append(cost)
        log.info("bmf iter %d: hamming cost %d", it, cost)
        if observer is not None:
            observer(it, cost)

    codebook = binary_codebook(centroids)
    assignment = Assignment(labels, k)
    return ClusteringResult(codebook, assignment, build_report(data, codebook, assignment), trace)


def _row_hamming(data: BinarySupportMatrix, centroids: np.ndarray, labels: np.ndarray):
    packed = np.packbits(centroids.astype(bool), axis=1, bitorder="little")
    x = data.packed ^ packed[labels]
    return np.bitwise_count(x).sum(axis=1, dtype=np.int64)


def lloyd_assign(x_bits: BinarySupportMatrix, centroids: np.ndarray, n_workers: int = 1):
    """Nearest real centroid by squared Euclidean distance (ties: lower index).

    Returns (labels, squared distance to the chosen centroid).
    """
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    c_t = centroids.T.copy()

    def tile(t):
        a = x_bits.to_dense(t, dtype=np.float64)
        # |a|^2 = popcount for 0/1 rows
        dist = a.sum(axis=1)[:, None] + c_sq[None, :] - 2.0 * (a @ c_t)
        np.maximum(dist, 0.0, out=dist)
        lab = np.argmin(dist, axis=1)
        return lab, dist[np.arange(lab.size), lab]

    parts = map_tiles(tile, x_bits.n_rows, n_workers)
    return (
        np.concatenate([p[0] for p in parts]).astype(np.int64),
        np.concatenate([p[1] for p in parts]),
    )


def within_cluster_ss(x_bits: BinarySupportMatrix, centroids: np.ndarray, labels: np.ndarray) -> float:
    total = 0.0
    for start in range(0, x_bits.n_rows, 2048):
        t = slice(start, start + 2048)
        diff = x_bits.to_dense(t, dtype=np.float64) - centroids[labels[t]]
        total += float(np.einsum("ij,ij->", diff, diff))
    return total


def binarize(centroids: np.ndarray) -> np.ndarray:
    """Real centroids back to bits: ``value >= 0.5`` becomes 1."""
    return (np.asarray(centroids) >= 0.5).astype(np.uint8)


def cluster_brb_kmeans(data, config: BaselineConfig, observer=None) -> ClusteringResult:
    """BRB-KMeans: Lloyd's k-means on 0/1 reals, then binarize the centroids.

    ``trace`` holds the real-space within-cluster sum of squares after each
    update. The reported assignment is recomputed once against the binary
    centroids by Hamming distance.
    """
    data = as_support(data)
    config.validate(data.n_rows)
    k = config.k
    centroids = data.to_dense(_seed_rows(data.n_rows, k, config.seed), dtype=np.float64)
    labels = None
    trace = []
    for it in range(1, config.max_iters + 1):
        new_labels, _ = lloyd_assign(data, centroids, config.n_workers)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        sums = _member_sums(data, labels, k, config.n_workers)
        sizes = np.bincount(labels, minlength=k)
        updated = centroids.copy()
        full = sizes > 0
        updated[full] = sums[full] / sizes[full, None]
        empty = np.flatnonzero(~full)
        if empty.size and config.empty_cluster_policy == "reseed":
            diff_sq = _row_sq_dist(data, updated, labels)
            updated[empty] = data.to_dense(_farthest_rows(diff_sq, empty.size), dtype=np.float64)
        centroids = updated
        wcss = within_cluster_ss(data, centroids, labels)
        trace.append(wcss)
        log.info("brb-kmeans iter %d: wcss %.6f", it, wcss)
        if observer is not None:
            observer(it, wcss)

    bits = binarize(centroids)
    final_labels, _ = hamming_assign(data, bits, config.n_workers)
    codebook = binary_codebook(bits)
    assignment = Assignment(final_labels, k)
    return ClusteringResult(codebook, assignment, build_report(data, codebook, assignment), trace)


def _row_sq_dist(x_bits: BinarySupportMatrix, centroids: np.ndarray, labels: np.ndarray):
    out = np.empty(x_bits.n_rows, dtype=np.float64)
    for start in range(0, x_bits.n_rows, 2048):
        t = slice(start, start + 2048)
        diff = x_bits.to_dense(t, dtype=np.float64) - centroids[labels[t]]
        out[t] = np.einsum("ij,ij->i", diff, diff)
    return out
