"""Clustering quality measures.

``precision`` is the fraction of the dataset's active neurons that are also
active in the centroid each row is assigned to. Inactive positions never
count, so extra active bits in a centroid are free as far as precision goes.

``element_accuracy`` is the all-positions agreement rate,
``(total - mismatches) / total``. The two are distinct numbers and are
reported side by side.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .codebook import Assignment, CentroidSet
from .errors import AssignmentError, DimensionError, UndefinedMetricError
from .patterns import ROW_TILE, BinarySupportMatrix, as_support, popcount_rows

CSV_FIELDS = (
    "k",
    "density_p",
    "precision",
    "error_count",
    "total_elements",
    "element_accuracy",
    "total_active",
)


def _check_same_shape(a: BinarySupportMatrix, b: BinarySupportMatrix):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


def overlap_counts(data: BinarySupportMatrix, assigned: BinarySupportMatrix):
    """Return (hits, active, mismatches) as Python ints.

    ``hits`` counts positions active in both, ``active`` counts positions
    active in ``data``, ``mismatches`` counts positions that differ.
    """
    _check_same_shape(data, assigned)
    hits = active = mismatches = 0
    for start in range(0, data.n_rows, ROW_TILE):
        a = data.packed[start:start + ROW_TILE]
        c = assigned.packed[start:start + ROW_TILE]
        hits += int(popcount_rows(a & c).sum())
        active += int(popcount_rows(a).sum())
        mismatches += int(popcount_rows(a ^ c).sum())
    return hits, active, mismatches


def clustering_precision(data, assigned_centroids) -> float:
    """Fraction of active entries of ``data`` that are active in ``assigned_centroids``.

    Row i of ``assigned_centroids`` is the binary state of the centroid that
    data row i is assigned to. Raises ``UndefinedMetricError`` when ``data``
    has no active entries at all.
    """
    hits, active, _ = overlap_counts(as_support(data), as_support(assigned_centroids))
    if active == 0:
        raise UndefinedMetricError("precision is undefined: data has no active entries")
    return hits / active


def clustering_error(data, assigned_centroids) -> int:
    """Number of positions where data and assigned centroid bits differ."""
    return overlap_counts(as_support(data), as_support(assigned_centroids))[2]


def element_accuracy(total: int, error: int) -> float:
    if total <= 0:
        raise ValueError(f"total must be positive, got {total}")
    if error < 0 or error > total:
        raise ValueError(f"error count {error} outside [0, {total}]")
    return (total - error) / total


@dataclass
class MetricsReport:
    precision: float
    error_count: int
    total_elements: int
    element_accuracy: float
    total_active: int
    cluster_sizes: list[int]
    k: int
    density_p: float
    # mean over rows with non-empty support of |supp ∩ centroid| / |supp|
    mean_row_recall: float
    label: str | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["density_p"], float) and math.isnan(d["density_p"]):
            d["density_p"] = None
        if not d["extra"]:
            del d["extra"]
        return d

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def csv_row(self) -> list[str]:
        return [format_value(getattr(self, name)) for name in CSV_FIELDS]

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        if d.get("density_p") is None:
            d["density_p"] = float("nan")
        return cls(**d)


def format_value(value) -> str:
    """Full-precision, locale-free text for CSV cells (NaN/None become empty)."""
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


def expand_assigned(codebook: CentroidSet, assignment: Assignment) -> BinarySupportMatrix:
    """Row i of the result is the binary state of row i's centroid."""
    return BinarySupportMatrix(codebook.bits().packed[assignment.cluster_of], codebook.dim)


def build_report(data, codebook: CentroidSet, assignment: Assignment, label=None) -> MetricsReport:
    bits = as_support(data)
    if assignment.n_rows != bits.n_rows:
        raise AssignmentError(
            f"assignment covers {assignment.n_rows} rows, data has {bits.n_rows}"
        )
    if codebook.dim != bits.n_cols:
        raise DimensionError(f"codebook dim {codebook.dim} != data dim {bits.n_cols}")
    if assignment.k != codebook.k:
        raise AssignmentError(f"assignment has k={assignment.k}, codebook has {codebook.k}")

    cbits = codebook.bits().packed
    labels = assignment.cluster_of
    hits = active = mismatches = 0
    recall_sum = 0.0
    recall_rows = 0
    for start in range(0, bits.n_rows, ROW_TILE):
        a = bits.packed[start:start + ROW_TILE]
        c = cbits[labels[start:start + ROW_TILE]]
        row_hits = popcount_rows(a & c)
        row_active = popcount_rows(a)
        hits += int(row_hits.sum())
        active += int(row_active.sum())
        mismatches += int(popcount_rows(a ^ c).sum())
        nz = row_active > 0
        recall_sum += float(np.sum(row_hits[nz] / row_active[nz]))
        recall_rows += int(nz.sum())
    if active == 0:
        raise UndefinedMetricError("precision is undefined: data has no active entries")

    total = bits.n_rows * bits.n_cols
    return MetricsReport(
        precision=hits / active,
        error_count=mismatches,
        total_elements=total,
        element_accuracy=element_accuracy(total, mismatches),
        total_active=active,
        cluster_sizes=assignment.sizes.tolist(),
        k=codebook.k,
        density_p=codebook.density_p,
        mean_row_recall=recall_sum / recall_rows,
        label=label,
    )


def partition_agreement(labels, reference) -> float:
    """Fraction of rows on which two partitions agree under the best relabeling.

    Clusters of ``labels`` are matched one-to-one to clusters of
    ``reference`` so as to maximize the number of co-labelled rows
    (Hungarian algorithm on the contingency table).
    """
    labels = np.asarray(labels, dtype=np.int64)
    reference = np.asarray(reference, dtype=np.int64)
    if labels.shape != reference.shape:
        raise DimensionError("partitions differ in length")
    table = np.zeros((labels.max() + 1, reference.max() + 1), dtype=np.int64)
    np.add.at(table, (labels, reference), 1)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum()) / labels.size
