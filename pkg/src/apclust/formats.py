"""On-disk formats. All multi-byte fields are little-endian.

APCB  binary support matrix
    "APCB" | u16 version=1 | u64 n_rows | u64 n_cols
    then n_rows rows of ceil(n_cols/8) bytes, bits LSB-first, zero padding.

APCF  real pattern matrix
    "APCF" | u16 version=1 | u64 n_rows | u64 n_cols
    then n_rows*n_cols float32, row-major; values must be finite and >= 0.

APCC  codebook
    "APCC" | u16 version=1 | u64 k | u64 dim | f64 density_p
    then per centroid: u64 count | count x u64 ascending indices
                     | count x f32 intensities

Declared sizes must match the payload exactly; trailing bytes are an error.

Hand-written fixtures may use the text format: one row per line, values
separated by whitespace, ``#`` starts a comment.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .codebook import Centroid, CentroidSet
from .errors import DomainError, FormatError
from .patterns import BinarySupportMatrix, PatternMatrix

VERSION = 1
MAGIC_BINARY = b"APCB"
MAGIC_REAL = b"APCF"
MAGIC_CODEBOOK = b"APCC"

_MATRIX_HEADER = struct.Struct("<4sHQQ")
_CODEBOOK_HEADER = struct.Struct("<4sHQQd")
_U64 = struct.Struct("<Q")


def _write_bytes(destination, payload: bytes):
    if hasattr(destination, "write"):
        destination.write(payload)
    else:
        with open(destination, "wb") as f:
            f.write(payload)


def _read_bytes(source) -> bytes:
    if hasattr(source, "read"):
        return source.read()
    with open(source, "rb") as f:
        return f.read()


def _matrix_header(buf: bytes, magic: bytes):
    if len(buf) < _MATRIX_HEADER.size:
        raise FormatError(
            f"file too short for a {magic.decode()} header ({len(buf)} bytes)", offset=len(buf)
        )
    found, version, n_rows, n_cols = _MATRIX_HEADER.unpack_from(buf)
    if found != magic:
        raise FormatError(f"bad magic {found!r}, expected {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    return n_rows, n_cols


def _check_payload(buf: bytes, expected: int):
    end = _MATRIX_HEADER.size + expected
    if len(buf) < end:
        raise FormatError(f"truncated payload: need {expected} bytes", offset=len(buf))
    if len(buf) > end:
        raise FormatError(f"{len(buf) - end} trailing bytes after payload", offset=end)


def encode_binary_matrix(matrix: BinarySupportMatrix) -> bytes:
    head = _MATRIX_HEADER.pack(MAGIC_BINARY, VERSION, matrix.n_rows, matrix.n_cols)
    return head + matrix.packed.tobytes()


def decode_binary_matrix(buf: bytes) -> BinarySupportMatrix:
    n_rows, n_cols = _matrix_header(buf, MAGIC_BINARY)
    row_bytes = (n_cols + 7) // 8
    _check_payload(buf, n_rows * row_bytes)
    packed = np.frombuffer(buf, dtype=np.uint8, offset=_MATRIX_HEADER.size).reshape(n_rows, row_bytes)
    pad = row_bytes * 8 - n_cols
    if pad and n_rows:
        dirty = np.flatnonzero(packed[:, -1] >> (8 - pad))
        if dirty.size:
            r = int(dirty[0])
            raise FormatError(
                f"non-zero padding bits in row {r}",
                offset=_MATRIX_HEADER.size + r * row_bytes + row_bytes - 1,
            )
    return BinarySupportMatrix(packed.copy(), n_cols)


def write_binary_matrix(matrix: BinarySupportMatrix, destination):
    _write_bytes(destination, encode_binary_matrix(matrix))


def read_binary_matrix(source) -> BinarySupportMatrix:
    return decode_binary_matrix(_read_bytes(source))


def encode_real_matrix(matrix) -> bytes:
    values = matrix.values if isinstance(matrix, PatternMatrix) else np.asarray(matrix)
    n_rows, n_cols = values.shape
    head = _MATRIX_HEADER.pack(MAGIC_REAL, VERSION, n_rows, n_cols)
    return head + np.ascontiguousarray(values, dtype="<f4").tobytes()


def decode_real_matrix(buf: bytes) -> PatternMatrix:
    n_rows, n_cols = _matrix_header(buf, MAGIC_REAL)
    _check_payload(buf, n_rows * n_cols * 4)
    values = np.frombuffer(buf, dtype="<f4", offset=_MATRIX_HEADER.size).reshape(n_rows, n_cols)
    bad = ~np.isfinite(values) | (values < 0)
    if bad.any():
        r, c = (int(v) for v in np.argwhere(bad)[0])
        raise DomainError(
            f"value {values[r, c]!r} at row {r}, col {c} is not a finite non-negative number "
            f"(byte offset {_MATRIX_HEADER.size + 4 * (r * n_cols + c)})",
            row=r, col=c,
        )
    return PatternMatrix(values.astype(np.float64))


def write_real_matrix(matrix, destination):
    _write_bytes(destination, encode_real_matrix(matrix))


def read_real_matrix(source) -> PatternMatrix:
    return decode_real_matrix(_read_bytes(source))


def encode_codebook(codebook: CentroidSet) -> bytes:
    out = io.BytesIO()
    out.write(_CODEBOOK_HEADER.pack(MAGIC_CODEBOOK, VERSION, codebook.k, codebook.dim, codebook.density_p))
    for c in codebook.centroids:
        out.write(_U64.pack(c.size))
        out.write(c.active_set.astype("<u8").tobytes())
        out.write(c.intensities.astype("<f4").tobytes())
    return out.getvalue()


def decode_codebook(buf: bytes) -> CentroidSet:
    if len(buf) < _CODEBOOK_HEADER.size:
        raise FormatError(f"file too short for an APCC header ({len(buf)} bytes)", offset=len(buf))
    magic, version, k, dim, density_p = _CODEBOOK_HEADER.unpack_from(buf)
    if magic != MAGIC_CODEBOOK:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC_CODEBOOK!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if k == 0:
        raise FormatError("codebook declares k = 0", offset=6)
    pos = _CODEBOOK_HEADER.size
    centroids = []
    for i in range(k):
        if pos + 8 > len(buf):
            raise FormatError(f"truncated before centroid {i}", offset=pos)
        (count,) = _U64.unpack_from(buf, pos)
        if count > dim:
            raise FormatError(f"centroid {i} declares {count} active features but dim is {dim}", offset=pos)
        pos += 8
        need = count * 12
        if pos + need > len(buf):
            raise FormatError(f"truncated inside centroid {i}", offset=len(buf))
        idx = np.frombuffer(buf, dtype="<u8", count=count, offset=pos)
        if count and (np.any(np.diff(idx.astype(np.int64)) <= 0) or idx[-1] >= dim):
            raise FormatError(f"centroid {i} indices are not ascending within [0, {dim})", offset=pos)
        val = np.frombuffer(buf, dtype="<f4", count=count, offset=pos + 8 * count)
        if count and not (np.all(np.isfinite(val)) and np.all(val > 0)):
            raise FormatError(f"centroid {i} has a non-positive intensity", offset=pos + 8 * count)
        centroids.append(Centroid(idx.astype(np.int64), val.astype(np.float32)))
        pos += need
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after codebook", offset=pos)
    return CentroidSet(dim, density_p, centroids)


def write_codebook(codebook: CentroidSet, destination):
    _write_bytes(destination, encode_codebook(codebook))


def read_codebook(source) -> CentroidSet:
    return decode_codebook(_read_bytes(source))


def read_matrix(source) -> PatternMatrix:
    """Load an APCF or APCB file (sniffed by magic) as a PatternMatrix."""
    buf = _read_bytes(source)
    magic = buf[:4]
    if magic == MAGIC_REAL:
        return decode_real_matrix(buf)
    if magic == MAGIC_BINARY:
        return PatternMatrix.from_support(decode_binary_matrix(buf))
    raise FormatError(f"unrecognized magic {magic!r}", offset=0)


def read_text_matrix(source) -> PatternMatrix:
    """Whitespace-separated rows; blank lines and ``#`` comments are skipped."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source) as f:
            text = f.read()
    rows = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(tok) for tok in line.split()])
    if not rows:
        raise FormatError("text matrix has no rows")
    if len({len(r) for r in rows}) != 1:
        raise FormatError("text matrix rows differ in length")
    return PatternMatrix(rows)


def write_text_matrix(matrix: PatternMatrix, destination):
    lines = [" ".join(repr(float(v)) for v in row) for row in matrix.values]
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w") as f:
            f.write(text)


SUBLAYER_DIMS = {"gate": 14336, "up": 14336, "down": 4096}


@dataclass
class DatasetManifest:
    """JSON sidecar describing a matrix dump."""

    sublayer_label: str
    dim: int
    n_rows: int
    source: str
    format_version: int = VERSION
    extra: dict | None = None

    def __post_init__(self):
        if self.sublayer_label not in (*SUBLAYER_DIMS, "synthetic"):
            raise ValueError(f"unknown sublayer label {self.sublayer_label!r}")
        want = SUBLAYER_DIMS.get(self.sublayer_label)
        if want is not None and self.dim != want:
            raise ValueError(f"{self.sublayer_label} dumps have dim {want}, got {self.dim}")

    def write(self, path):
        d = asdict(self)
        if d["extra"] is None:
            del d["extra"]
        with open(path, "w") as f:
            json.dump(d, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        with open(path) as f:
            return cls(**json.load(f))


def manifest_path(matrix_path) -> str:
    root, _ = os.path.splitext(os.fspath(matrix_path))
    return root + ".manifest.json"
