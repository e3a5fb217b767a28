"""Activation pattern matrices: dense magnitudes and bit-packed supports.

A pattern is one token's activation magnitudes for a single FFN sub-layer.
Zero means the neuron is inactive. ``BinarySupportMatrix`` is the packed
``value > 0`` view that every precision/error computation runs on.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionError, DomainError, InvalidConfigError

# rows per block for anything that expands packed bits to dense
ROW_TILE = 2048


def fraction_count(fraction: float, n: int, mode: str = "ceil") -> int:
    """``ceil``/``floor`` of ``fraction * n`` without float fuzz.

    ``0.3 * 10`` is ``3.0000000000000004`` in binary floating point, which a
    bare ``math.ceil`` turns into 4. Rounding to 9 decimals first keeps the
    count at the value a person would compute by hand.
    """
    x = round(fraction * n, 9)
    if mode == "ceil":
        return int(math.ceil(x))
    if mode == "floor":
        return int(math.floor(x))
    raise ValueError(f"unknown rounding mode {mode!r}")


def popcount_rows(packed: np.ndarray) -> np.ndarray:
    """Number of set bits per row of a packed uint8 array, as int64."""
    if packed.shape[1] == 0:
        return np.zeros(packed.shape[0], dtype=np.int64)
    return np.bitwise_count(packed).sum(axis=1, dtype=np.int64)


class BinarySupportMatrix:
    """Row-major bit-packed activation states (1 = active).

    Bits are packed LSB-first within each byte and every row is padded to a
    whole number of bytes; padding bits are always zero.
    """

    __slots__ = ("packed", "n_rows", "n_cols")

    def __init__(self, packed: np.ndarray, n_cols: int):
        packed = np.ascontiguousarray(packed, dtype=np.uint8)
        if packed.ndim != 2:
            raise DimensionError("packed bits must be 2-D")
        if packed.shape[1] != (n_cols + 7) // 8:
            raise DimensionError(
                f"{packed.shape[1]} bytes per row cannot hold {n_cols} columns"
            )
        pad = packed.shape[1] * 8 - n_cols
        if pad and packed.shape[0] and np.any(packed[:, -1] >> (8 - pad)):
            raise ValueError("padding bits must be zero")
        packed.setflags(write=False)
        self.packed = packed
        self.n_rows = packed.shape[0]
        self.n_cols = int(n_cols)

    @classmethod
    def from_dense(cls, bits) -> "BinarySupportMatrix":
        bits = np.asarray(bits)
        if bits.ndim != 2:
            raise DimensionError("expected a 2-D array")
        packed = np.packbits(bits != 0, axis=1, bitorder="little")
        return cls(packed, bits.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def to_dense(self, rows=None, dtype=np.uint8) -> np.ndarray:
        """Unpack to a 0/1 array, optionally for a subset (slice or index array) of rows."""
        packed = self.packed if rows is None else self.packed[rows]
        out = np.unpackbits(packed, axis=1, count=self.n_cols, bitorder="little")
        return out.astype(dtype, copy=False)

    def row_popcount(self) -> np.ndarray:
        return popcount_rows(self.packed)

    def take(self, rows) -> "BinarySupportMatrix":
        return BinarySupportMatrix(self.packed[np.asarray(rows)], self.n_cols)

    def __eq__(self, other):
        if not isinstance(other, BinarySupportMatrix):
            return NotImplemented
        return self.n_cols == other.n_cols and np.array_equal(self.packed, other.packed)

    def __repr__(self):
        return f"BinarySupportMatrix(n_rows={self.n_rows}, n_cols={self.n_cols})"


class PatternMatrix:
    """N activation patterns of dimension D with non-negative magnitudes.

    The values array is stored read-only as float64. Construction rejects
    negative or non-finite entries and empty shapes.
    """

    __slots__ = ("values", "_support")

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"expected a 2-D array, got {arr.ndim}-D")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"pattern matrix must be non-empty, got shape {arr.shape}")
        bad = ~np.isfinite(arr) | (arr < 0)
        if bad.any():
            r, c = (int(v) for v in np.argwhere(bad)[0])
            raise DomainError(
                f"value {arr[r, c]!r} at row {r}, col {c} is not a finite non-negative number",
                row=r, col=c,
            )
        arr += 0.0  # folds -0.0 into +0.0
        arr.setflags(write=False)
        self.values = arr
        self._support = None

    @classmethod
    def from_support(cls, bits: BinarySupportMatrix) -> "PatternMatrix":
        """Binary data lifted to 0.0/1.0 magnitudes."""
        return cls(bits.to_dense(dtype=np.float64))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def support(self) -> BinarySupportMatrix:
        """Packed ``value > 0`` view, built once and cached."""
        if self._support is None:
            self._support = BinarySupportMatrix.from_dense(self.values > 0)
        return self._support

    def support_sizes(self) -> np.ndarray:
        return self.support().row_popcount()

    def __repr__(self):
        return f"PatternMatrix(n_rows={self.n_rows}, n_cols={self.n_cols})"


def as_pattern_matrix(data) -> PatternMatrix:
    if isinstance(data, PatternMatrix):
        return data
    if isinstance(data, BinarySupportMatrix):
        return PatternMatrix.from_support(data)
    return PatternMatrix(data)


def as_support(data) -> BinarySupportMatrix:
    if isinstance(data, BinarySupportMatrix):
        return data
    if isinstance(data, PatternMatrix):
        return data.support()
    return BinarySupportMatrix.from_dense(np.asarray(data))


def apply_magnitude_threshold(values, target_sparsity: float) -> PatternMatrix:
    """Zero the smallest-magnitude entries of every row.

    Per row, ``floor(target_sparsity * n_cols)`` entries with the smallest
    ``|value|`` become zero (ties: lower column index first). Survivors keep
    their magnitude, so the result is non-negative.

    Args:
        values: 2-D array of signed, finite activations.
        target_sparsity: fraction of each row to zero, in [0, 1).
    """
    if not 0.0 <= target_sparsity < 1.0:
        raise InvalidConfigError(f"target_sparsity must be in [0, 1), got {target_sparsity}")
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got {arr.ndim}-D")
    finite = np.isfinite(arr)
    if not finite.all():
        r, c = (int(v) for v in np.argwhere(~finite)[0])
        raise DomainError(f"non-finite activation in row {r}", row=r, col=c)

    mags = np.abs(arr)
    n_zero = fraction_count(target_sparsity, arr.shape[1], mode="floor")
    if n_zero:
        # stable sort: equal magnitudes keep column order, so lower indices go first
        order = np.argsort(mags, axis=1, kind="stable")[:, :n_zero]
        np.put_along_axis(mags, order, 0.0, axis=1)
    return PatternMatrix(mags)


def support_of(matrix, row: int) -> np.ndarray:
    """Ascending indices of the active features of ``row``."""
    matrix = as_pattern_matrix(matrix)
    if not 0 <= row < matrix.n_rows:
        raise IndexError(f"row {row} out of range for {matrix.n_rows} rows")
    return np.flatnonzero(matrix.values[row] > 0)
