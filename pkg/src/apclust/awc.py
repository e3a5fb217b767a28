"""Activation-Aware Clustering (AWC, also published under the name APC).

Three pieces, iterated until assignments settle:

* distance looks only at a row's active neurons:
  ``d = 1 - |supp(row) ∩ active(c)| / |supp(row)|``. Inactive positions and
  centroid intensities play no part.
* assignment is capacity-balanced and globally greedy: all
  (distance, row, centroid) candidates are visited in ascending order and a
  candidate is taken iff its row is still free and its centroid has room.
* the centroid update sums the members' activation values feature-wise and
  keeps the ``ceil(p * D)`` largest sums, with the sums as intensities.

Ties are broken by lower index everywhere, so a run is a pure function of
(data, config).
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from ._parallel import map_tiles
from .codebook import Assignment, Centroid, CentroidSet
from .errors import (
    DimensionError,
    EmptyClusterError,
    InfeasibleCapacityError,
    InvalidConfigError,
)
from .metrics import MetricsReport, build_report
from .patterns import PatternMatrix, as_pattern_matrix, fraction_count, popcount_rows

log = logging.getLogger(__name__)


@dataclass
class ClusteringConfig:
    """Knobs for :func:`cluster_awc`.

    ``capacity`` defaults to ``ceil(N / k)``. ``candidates`` bounds how many
    nearest centroids per row are materialized up front by the balanced
    assignment; it changes speed, never the result.
    """

    k: int
    density_p: float = 0.6
    capacity: int | None = None
    max_iters: int = 50
    min_reassigned_fraction: float = 0.001
    seed: int = 0
    balanced: bool = True
    candidates: int = 32
    n_workers: int = 1

    def resolve_capacity(self, n_rows: int) -> int:
        if self.capacity is None:
            return math.ceil(n_rows / self.k)
        return int(self.capacity)

    def validate(self, n_rows: int):
        if self.k < 1:
            raise InvalidConfigError(f"k must be >= 1, got {self.k}")
        if self.k > n_rows:
            raise InvalidConfigError(f"k = {self.k} exceeds the number of rows N = {n_rows}")
        if not 0.0 < self.density_p <= 1.0:
            raise InvalidConfigError(f"density_p must be in (0, 1], got {self.density_p}")
        if self.max_iters < 1:
            raise InvalidConfigError("max_iters must be >= 1")
        if self.candidates < 1:
            raise InvalidConfigError("candidates must be >= 1")
        if self.n_workers < 1:
            raise InvalidConfigError("n_workers must be >= 1")
        if self.balanced and self.resolve_capacity(n_rows) * self.k < n_rows:
            raise InfeasibleCapacityError(
                f"capacity {self.resolve_capacity(n_rows)} x k {self.k} < N {n_rows}"
            )


class IterationRecord(NamedTuple):
    iteration: int
    reassigned: int
    precision: float
    reseeded: tuple[int, ...] = ()


class ClusteringResult(NamedTuple):
    codebook: CentroidSet
    assignment: Assignment
    report: MetricsReport
    trace: list


def centroid_from_sums(sums: np.ndarray, n_keep: int) -> Centroid:
    """Keep the ``n_keep`` largest feature sums (ties: lower index).

    Selected features whose sum is zero are dropped, so the active set is
    shorter than ``n_keep`` only when fewer than ``n_keep`` sums are positive.
    """
    top = np.sort(np.argsort(-sums, kind="stable")[:n_keep])
    top = top[sums[top] > 0]
    return Centroid(top, sums[top])


def init_centroids(data, k: int, density_p: float, seed: int) -> CentroidSet:
    """Seed ``k`` centroids from distinct rows drawn with ``numpy.random.default_rng(seed)``.

    Each drawn row goes through the same top-``ceil(p*D)`` rule as a
    one-member cluster.
    """
    data = as_pattern_matrix(data)
    if k > data.n_rows:
        raise InvalidConfigError(f"k = {k} exceeds the number of rows N = {data.n_rows}")
    rng = np.random.default_rng(seed)
    rows = rng.choice(data.n_rows, size=k, replace=False)
    n_keep = fraction_count(density_p, data.n_cols)
    return CentroidSet(
        data.n_cols, density_p, [centroid_from_sums(data.values[r], n_keep) for r in rows]
    )


def active_overlap_distance(row, centroid: Centroid, dim: int | None = None) -> float:
    """``1 - |supp(row) ∩ active(centroid)| / |supp(row)|``; 1.0 for an all-zero row."""
    row = np.asarray(row)
    if row.ndim != 1:
        raise DimensionError("row must be 1-D")
    if (dim is not None and dim != row.size) or (
        centroid.size and centroid.active_set[-1] >= row.size
    ):
        raise DimensionError(f"row of length {row.size} does not match centroid dimension")
    supp = row > 0
    n = int(supp.sum())
    if n == 0:
        return 1.0
    return 1.0 - int(supp[centroid.active_set].sum()) / n


def _check_dims(data: PatternMatrix, codebook: CentroidSet):
    if codebook.dim != data.n_cols:
        raise DimensionError(f"codebook dim {codebook.dim} != data dim {data.n_cols}")


def _distance_block(data: PatternMatrix, rows, indicator_t: np.ndarray) -> np.ndarray:
    """Distances from ``data[rows]`` to every centroid, shape (len(rows), k).

    Overlaps come from a float32 product of 0/1 matrices, which is exact for
    D < 2**24; the division is done once in float64 so every caller that
    goes through here sees bit-identical distances.
    """
    supp = data.values[rows] > 0
    sizes = supp.sum(axis=1, dtype=np.int64)
    overlap = supp.astype(np.float32) @ indicator_t
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = 1.0 - overlap.astype(np.float64) / sizes[:, None]
    dist[sizes == 0] = 1.0
    return dist


def distance_matrix(data, codebook: CentroidSet, n_workers: int = 1) -> np.ndarray:
    """Full (N, k) matrix of active-overlap distances."""
    data = as_pattern_matrix(data)
    _check_dims(data, codebook)
    ind_t = codebook.indicator(np.float32).T.copy()
    blocks = map_tiles(lambda t: _distance_block(data, t, ind_t), data.n_rows, n_workers)
    return np.vstack(blocks)


def greedy_capacity_assign(
    cand_dist: np.ndarray,
    cand_row: np.ndarray,
    cand_col: np.ndarray,
    n_rows: int,
    k: int,
    capacity: int,
    refill: Callable[[int], list] | None = None,
) -> np.ndarray:
    """Accept (distance, row, centroid) candidates in ascending order under a capacity.

    The candidate arrays may hold only each row's nearest few centroids.
    When every buffered candidate of a still-free row has been rejected,
    ``refill(row)`` must return that row's remaining candidates as
    ``(distance, row, centroid)`` tuples; each sorts after the row's last
    buffered one, so merging them through a heap reproduces the order of a
    full enumeration exactly.
    """
    if capacity * k < n_rows:
        raise InfeasibleCapacityError(f"capacity {capacity} x k {k} < N {n_rows}")
    order = np.lexsort((cand_col, cand_row, cand_dist))
    ds = cand_dist[order].tolist()
    rs = cand_row[order].tolist()
    js = cand_col[order].tolist()
    buffered = np.bincount(cand_row, minlength=n_rows).tolist()

    cluster_of = [-1] * n_rows
    load = [0] * k
    assigned = 0
    heap: list = []
    p, n_cand = 0, len(ds)
    while assigned < n_rows:
        if heap and (p >= n_cand or heap[0] < (ds[p], rs[p], js[p])):
            _, r, j = heapq.heappop(heap)
            from_buffer = False
        elif p < n_cand:
            r, j = rs[p], js[p]
            p += 1
            from_buffer = True
        else:
            raise RuntimeError("candidate stream exhausted with rows unassigned")
        if cluster_of[r] >= 0:
            continue
        if load[j] < capacity:
            cluster_of[r] = j
            load[j] += 1
            assigned += 1
            continue
        if from_buffer:
            buffered[r] -= 1
            if buffered[r] == 0:
                if refill is None:
                    raise RuntimeError(f"row {r} ran out of candidates and no refill given")
                for item in refill(r):
                    heapq.heappush(heap, item)
    return np.asarray(cluster_of, dtype=np.int64)


def _top_candidates(dist: np.ndarray, c: int):
    """Per row, the ``c`` smallest distances (ties: lower centroid index)."""
    order = np.argsort(dist, axis=1, kind="stable")[:, :c]
    return np.take_along_axis(dist, order, axis=1), order


def balanced_assign(
    data,
    codebook: CentroidSet,
    capacity: int | None = None,
    candidates: int = 32,
    n_workers: int = 1,
) -> Assignment:
    """Greedy nearest-first assignment with at most ``capacity`` rows per centroid.

    Only the ``candidates`` nearest centroids per row are materialized;
    rows that exhaust them get the rest on demand, so the output is the
    same as processing all N*k candidates in sorted order.
    """
    data = as_pattern_matrix(data)
    _check_dims(data, codebook)
    n, k = data.n_rows, codebook.k
    if capacity is None:
        capacity = math.ceil(n / k)
    if capacity * k < n:
        raise InfeasibleCapacityError(f"capacity {capacity} x k {k} < N {n}")
    c = min(candidates, k)
    ind_t = codebook.indicator(np.float32).T.copy()

    def tile_candidates(t):
        dist = _distance_block(data, t, ind_t)
        d, j = _top_candidates(dist, c)
        r = np.broadcast_to(np.arange(t.start, t.stop)[:, None], j.shape)
        return d.ravel(), r.ravel(), j.ravel()

    parts = map_tiles(tile_candidates, n, n_workers)
    cand_d = np.concatenate([p[0] for p in parts])
    cand_r = np.concatenate([p[1] for p in parts])
    cand_j = np.concatenate([p[2] for p in parts])

    def refill(row):
        dist = _distance_block(data, slice(row, row + 1), ind_t)[0]
        order = np.argsort(dist, kind="stable")[c:]
        return [(float(dist[j]), row, int(j)) for j in order]

    labels = greedy_capacity_assign(cand_d, cand_r, cand_j, n, k, capacity, refill)
    return Assignment(labels, k)


def nearest_assign(data, codebook: CentroidSet, n_workers: int = 1) -> Assignment:
    """Unconstrained assignment: each row to its closest centroid (ties: lower index)."""
    data = as_pattern_matrix(data)
    _check_dims(data, codebook)
    ind_t = codebook.indicator(np.float32).T.copy()
    parts = map_tiles(
        lambda t: np.argmin(_distance_block(data, t, ind_t), axis=1), data.n_rows, n_workers
    )
    return Assignment(np.concatenate(parts), codebook.k)


def cluster_sums(data: PatternMatrix, assignment: Assignment, n_workers: int = 1) -> np.ndarray:
    """Feature-wise sum of member values per cluster, shape (k, D).

    Each tile reduces its rows in row order; tiles are folded in tile order.
    """
    labels = assignment.cluster_of

    def tile_sums(t):
        lab = labels[t]
        order = np.argsort(lab, kind="stable")
        lab_sorted = lab[order]
        starts = np.flatnonzero(np.r_[True, lab_sorted[1:] != lab_sorted[:-1]])
        sums = np.add.reduceat(data.values[t][order], starts, axis=0)
        return lab_sorted[starts], sums

    total = np.zeros((assignment.k, data.n_cols), dtype=np.float64)
    for present, sums in map_tiles(tile_sums, data.n_rows, n_workers):
        total[present] += sums
    return total


def update_centroids(data, assignment: Assignment, density_p: float, n_workers: int = 1) -> CentroidSet:
    """Recompute every centroid from its members.

    Raises ``EmptyClusterError`` if a cluster has no members; the AWC driver
    reseeds those instead.
    """
    data = as_pattern_matrix(data)
    if assignment.n_rows != data.n_rows:
        raise DimensionError("assignment length differs from the number of rows")
    empty = np.flatnonzero(assignment.sizes == 0)
    if empty.size:
        raise EmptyClusterError(empty)
    n_keep = fraction_count(density_p, data.n_cols)
    sums = cluster_sums(data, assignment, n_workers)
    return CentroidSet(data.n_cols, density_p, [centroid_from_sums(s, n_keep) for s in sums])


def assigned_distances(data: PatternMatrix, codebook: CentroidSet, assignment: Assignment) -> np.ndarray:
    """Distance of every row to the centroid it is assigned to."""
    a = data.support().packed
    c = codebook.bits().packed[assignment.cluster_of]
    sizes = popcount_rows(a)
    hits = popcount_rows(a & c)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = 1.0 - hits.astype(np.float64) / sizes
    dist[sizes == 0] = 1.0
    return dist


def _update_with_reseed(data, assignment, density_p, n_workers):
    n_keep = fraction_count(density_p, data.n_cols)
    sums = cluster_sums(data, assignment, n_workers)
    sizes = assignment.sizes
    centroids = [centroid_from_sums(s, n_keep) for s in sums]
    empty = np.flatnonzero(sizes == 0)
    if empty.size:
        # a member-less centroid would be all-zero; reseed from the rows the
        # updated codebook represents worst (ties: lower row index)
        partial = CentroidSet(data.n_cols, density_p, centroids)
        worst = np.argsort(-assigned_distances(data, partial, assignment), kind="stable")
        for cluster, row in zip(empty, worst):
            centroids[cluster] = centroid_from_sums(data.values[row], n_keep)
        log.debug("reseeded empty clusters %s", empty.tolist())
    return CentroidSet(data.n_cols, density_p, centroids), tuple(int(e) for e in empty)


def cluster_awc(data, config: ClusteringConfig, observer=None) -> ClusteringResult:
    """Run AWC to convergence.

    Each iteration assigns (balanced unless ``config.balanced`` is off), then
    updates centroids. The loop stops once fewer than
    ``min_reassigned_fraction`` of rows changed cluster, or after
    ``max_iters``.

    ``observer(record, codebook, assignment)``, if given, is called after
    every iteration with that iteration's post-update codebook and the
    assignment it was built from.
    """
    data = as_pattern_matrix(data)
    config.validate(data.n_rows)
    n = data.n_rows
    capacity = config.resolve_capacity(n)

    codebook = init_centroids(data, config.k, config.density_p, config.seed)
    previous = None
    trace: list[IterationRecord] = []
    for it in range(1, config.max_iters + 1):
        if config.balanced:
            assignment = balanced_assign(
                data, codebook, capacity, config.candidates, config.n_workers
            )
        else:
            assignment = nearest_assign(data, codebook, config.n_workers)
        if previous is None:
            reassigned = n
        else:
            reassigned = int(np.count_nonzero(assignment.cluster_of != previous.cluster_of))
        codebook, reseeded = _update_with_reseed(data, assignment, config.density_p, config.n_workers)
        report = build_report(data, codebook, assignment)
        record = IterationRecord(it, reassigned, report.precision, reseeded)
        trace.append(record)
        log.info("awc iter %d: reassigned=%d precision=%.6f", it, reassigned, report.precision)
        if observer is not None:
            observer(record, codebook, assignment)
        previous = assignment
        if reassigned / n < config.min_reassigned_fraction:
            break
    return ClusteringResult(codebook, assignment, report, trace)
