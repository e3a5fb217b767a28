import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from apclust.errors import DimensionError, DomainError, InvalidConfigError
from apclust.patterns import (
    BinarySupportMatrix,
    PatternMatrix,
    apply_magnitude_threshold,
    fraction_count,
    support_of,
)


def threshold_oracle(row, sparsity):
    n_zero = int(sparsity * len(row) + 1e-9)
    order = sorted(range(len(row)), key=lambda j: (abs(row[j]), j))
    out = [abs(v) for v in row]
    for j in order[:n_zero]:
        out[j] = 0.0
    return out


def test_threshold_zeroes_two_smallest():
    row = [0.9, -0.1, 0.5, 0.05]
    assert threshold_oracle(row, 0.5) == [0.9, 0.0, 0.5, 0.0]
    out = apply_magnitude_threshold([row], 0.5)
    np.testing.assert_array_equal(out.values, [[0.9, 0.0, 0.5, 0.0]])


def test_threshold_zero_sparsity_keeps_magnitudes():
    row = [[0.3, -1.5, 0.0, 2.0]]
    out = apply_magnitude_threshold(row, 0.0)
    np.testing.assert_array_equal(out.values, np.abs(row))
    np.testing.assert_array_equal(support_of(out, 0), [0, 1, 3])


def test_threshold_ties_go_to_lower_index():
    out = apply_magnitude_threshold([[0.2, 0.2, 0.2, 0.2]], 0.5)
    np.testing.assert_array_equal(out.values, [[0, 0, 0.2, 0.2]])


def test_threshold_support_size_after_half():
    out = apply_magnitude_threshold([[0.4, -0.3, 0.2, 0.1]], 0.5)
    assert len(support_of(out, 0)) == 2


def test_threshold_errors():
    with pytest.raises(InvalidConfigError):
        apply_magnitude_threshold([[1.0, 2.0]], 1.0)
    with pytest.raises(DomainError) as exc:
        apply_magnitude_threshold([[1.0, 2.0], [np.nan, 1.0]], 0.5)
    assert exc.value.row == 1


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 20)),
           elements=st.floats(-5, 5, allow_nan=False).filter(lambda v: v != 0)),
    st.sampled_from([0.0, 0.1, 0.25, 0.3, 0.5, 0.7, 0.9]),
)
def test_threshold_matches_oracle_and_count(values, sparsity):
    out = apply_magnitude_threshold(values, sparsity)
    n_zero = fraction_count(sparsity, values.shape[1], "floor")
    for i, row in enumerate(values.tolist()):
        assert out.values[i].tolist() == threshold_oracle(row, sparsity)
        assert np.count_nonzero(out.values[i]) == values.shape[1] - n_zero


def test_fraction_count_avoids_float_fuzz():
    assert fraction_count(0.3, 10) == 3
    assert fraction_count(0.29, 100, "floor") == 29
    assert fraction_count(0.6, 5) == 3
    assert fraction_count(0.61, 5) == 4


def test_support_of():
    m = PatternMatrix([[0, 1.2, 0, 3.0], [0, 0, 0, 0]])
    np.testing.assert_array_equal(support_of(m, 0), [1, 3])
    assert support_of(m, 1).size == 0
    with pytest.raises(IndexError):
        support_of(m, 2)


def test_pattern_matrix_rejects_bad_values():
    with pytest.raises(DomainError) as exc:
        PatternMatrix([[0.0, 1.0], [2.0, -0.5]])
    assert (exc.value.row, exc.value.col) == (1, 1)
    with pytest.raises(DomainError):
        PatternMatrix([[np.inf]])
    with pytest.raises(DimensionError):
        PatternMatrix(np.zeros((0, 3)))


def test_pattern_matrix_is_read_only():
    m = PatternMatrix([[1.0, 0.0]])
    with pytest.raises(ValueError):
        m.values[0, 0] = 5.0


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 10), st.integers(1, 40)),
              elements=st.sampled_from([0.0, 0.0, 0.5, 1.25, 3.0])))
def test_support_round_trip(values):
    m = PatternMatrix(values)
    bits = m.support()
    dense = bits.to_dense()
    np.testing.assert_array_equal(dense, (values > 0).astype(np.uint8))
    np.testing.assert_array_equal(bits.row_popcount(), (values > 0).sum(axis=1))
    for i in range(m.n_rows):
        s = support_of(m, i)
        assert np.all(np.diff(s) > 0)
        np.testing.assert_array_equal(s, np.flatnonzero(dense[i]))
    lifted = PatternMatrix.from_support(bits)
    assert lifted.support() == bits


def test_binary_matrix_rejects_dirty_padding():
    with pytest.raises(ValueError):
        BinarySupportMatrix(np.array([[0xFF]], dtype=np.uint8), 5)
