"""Planted-prototype activation data with a known ground-truth clustering.

Prototypes are random supports. Row i copies prototype ``i % n_prototypes``,
flips every bit independently with probability ``flip_noise``, and draws a
magnitude from (0.1, 1.0] for each active bit.

Random streams are derived from ``(seed, purpose, row)`` through
``numpy.random.SeedSequence``, so the output does not depend on how rows are
split across workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ._parallel import map_tiles
from .codebook import Assignment, Centroid, CentroidSet
from .errors import InvalidConfigError
from .patterns import PatternMatrix, fraction_count

_PROTOTYPE_STREAM = 0
_ROW_STREAM = 1

INTENSITY_LOW = 0.1
INTENSITY_HIGH = 1.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and noise of a planted dataset.

    ``proto_density`` may be a sequence; prototype ``p`` then uses
    ``proto_density[p % len(proto_density)]``.
    """

    n_prototypes: int = 32
    dim_D: int = 512
    n_rows: int = 10_000
    proto_density: float | Sequence[float] = 0.5
    flip_noise: float = 0.02
    seed: int = 0

    def densities(self) -> tuple[float, ...]:
        d = self.proto_density
        return tuple(float(x) for x in d) if isinstance(d, (list, tuple)) else (float(d),)

    def prototype_density(self, p: int) -> float:
        ds = self.densities()
        return ds[p % len(ds)]

    def validate(self):
        if self.n_prototypes < 1 or self.n_rows < 1 or self.dim_D < 1:
            raise InvalidConfigError("n_prototypes, n_rows and dim_D must be positive")
        if self.n_prototypes > self.n_rows:
            raise InvalidConfigError(
                f"n_prototypes ({self.n_prototypes}) exceeds n_rows ({self.n_rows})"
            )
        for d in self.densities():
            if not 0.0 < d < 1.0:
                raise InvalidConfigError(f"proto_density must be in (0, 1), got {d}")
            if fraction_count(d, self.dim_D, "floor") == 0:
                raise InvalidConfigError(
                    f"proto_density {d} leaves no active features at dim {self.dim_D}"
                )
        if not 0.0 <= self.flip_noise < 0.5:
            raise InvalidConfigError(f"flip_noise must be in [0, 0.5), got {self.flip_noise}")


class SyntheticData(NamedTuple):
    matrix: PatternMatrix
    planted: Assignment
    prototypes: CentroidSet


def expected_row_density(proto_density: float, flip_noise: float) -> float:
    """Mean fraction of active features in a row: ``p(1-e) + (1-p)e``."""
    return proto_density * (1 - flip_noise) + (1 - proto_density) * flip_noise


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def make_prototypes(spec: SyntheticSpec) -> np.ndarray:
    """(n_prototypes, D) boolean supports."""
    rng = _rng(spec.seed, _PROTOTYPE_STREAM)
    protos = np.zeros((spec.n_prototypes, spec.dim_D), dtype=bool)
    for p in range(spec.n_prototypes):
        m = fraction_count(spec.prototype_density(p), spec.dim_D, "floor")
        protos[p, rng.choice(spec.dim_D, size=m, replace=False)] = True
    return protos


def generate_synthetic(spec: SyntheticSpec, n_workers: int = 1) -> SyntheticData:
    spec.validate()
    protos = make_prototypes(spec)
    labels = np.arange(spec.n_rows, dtype=np.int64) % spec.n_prototypes

    def tile(t):
        out = np.zeros((t.stop - t.start, spec.dim_D), dtype=np.float32)
        for i, row in enumerate(range(t.start, t.stop)):
            rng = _rng(spec.seed, _ROW_STREAM, row)
            flips = rng.random(spec.dim_D) < spec.flip_noise
            active = protos[labels[row]] ^ flips
            # 1 - u*(hi-lo) with u in [0, 1) lands in (lo, hi]
            mags = INTENSITY_HIGH - rng.random(spec.dim_D) * (INTENSITY_HIGH - INTENSITY_LOW)
            out[i, active] = mags[active]
        return out

    values = np.vstack(map_tiles(tile, spec.n_rows, n_workers))
    ds = spec.densities()
    prototypes = CentroidSet(
        spec.dim_D,
        ds[0] if len(set(ds)) == 1 else float("nan"),
        [Centroid.from_indices(np.flatnonzero(p)) for p in protos],
    )
    return SyntheticData(
        PatternMatrix(values.astype(np.float64)),
        Assignment(labels, spec.n_prototypes),
        prototypes,
    )
