"""Closed-form cost of predicting activations per neuron vs. per cluster.

Direct prediction scores every FFN neuron for every layer and token;
clustered prediction scores K centroids instead. L, T and the per-unit
cost cancel in the ratio, which is just ``N_FFN / K``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import InvalidConfigError


@dataclass(frozen=True)
class CostModelParams:
    """Defaults describe a 7B-parameter model with 32 layers and 2048-token sequences."""

    total_params: float = 7e9
    ffn_fraction: float = 2 / 3
    layers_L: int = 32
    tokens_T: int = 2048
    per_neuron_cost_C: float = 1.0
    clusters_per_sublayer: float = 2048
    sublayers: int = 3

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value > 0):
                raise InvalidConfigError(f"{name} must be positive and finite, got {value}")
        if self.ffn_fraction > 1:
            raise InvalidConfigError(f"ffn_fraction must be in (0, 1], got {self.ffn_fraction}")


def _checked(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise OverflowError(f"{what} overflows double precision")
    return value


def round_sig(x: float, sig: int = 3) -> float:
    """``x`` rounded to ``sig`` significant figures."""
    if x == 0:
        return 0.0
    return round(x, sig - 1 - math.floor(math.log10(abs(x))))


def ffn_neuron_count(params: CostModelParams) -> float:
    return _checked(float(params.total_params) * params.ffn_fraction, "N_FFN")


def total_clusters(params: CostModelParams) -> float:
    return _checked(float(params.clusters_per_sublayer) * params.sublayers, "K")


def direct_cost(params: CostModelParams) -> float:
    n = ffn_neuron_count(params)
    return _checked(n * params.layers_L * params.tokens_T * params.per_neuron_cost_C, "direct cost")


def clustered_cost(params: CostModelParams) -> float:
    k = total_clusters(params)
    return _checked(k * params.layers_L * params.tokens_T * params.per_neuron_cost_C, "clustered cost")


def efficiency_gain(params: CostModelParams) -> float:
    return direct_cost(params) / clustered_cost(params)


def summary(params: CostModelParams) -> dict:
    """Everything the ``cost`` command prints."""
    return {
        "n_ffn": ffn_neuron_count(params),
        "k": total_clusters(params),
        "direct": direct_cost(params),
        "clustered": clustered_cost(params),
        "gain": efficiency_gain(params),
    }
