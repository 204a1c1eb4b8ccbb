import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from scenefuse import (
    DegenerateVectorError,
    DimensionMismatchError,
    TooFewCategoriesError,
    cosine_similarity,
    l2_normalize,
    region_softmax,
    stable_sigmoid,
    zscore_normalize,
)

finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


class TestL2Normalize:
    def test_pythagorean(self):
        out = l2_normalize([3.0, 4.0])
        np.testing.assert_allclose(out.values, [0.6, 0.8])
        assert out.unit

    def test_already_unit(self):
        np.testing.assert_allclose(l2_normalize([1.0, 0.0]).values, [1.0, 0.0])

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateVectorError):
            l2_normalize([0.0, 0.0])


class TestCosineSimilarity:
    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_identical(self):
        assert cosine_similarity([3, 4], [3, 4]) == 1.0

    def test_45_degrees(self):
        assert cosine_similarity([1, 1], [1, 0]) == pytest.approx(0.70711, abs=1e-5)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cosine_similarity([1, 0], [1, 0, 0])

    def test_zero_operand(self):
        with pytest.raises(DegenerateVectorError):
            cosine_similarity([0, 0], [1, 0])

    @given(
        st.lists(finite_floats, min_size=2, max_size=8),
        st.lists(finite_floats, min_size=2, max_size=8),
        st.floats(min_value=0.01, max_value=100.0),
    )
    def test_symmetric_and_scale_invariant(self, a, b, k):
        n = min(len(a), len(b))
        va, vb = np.array(a[:n]), np.array(b[:n])
        if np.linalg.norm(va) == 0 or np.linalg.norm(vb) == 0:
            return
        lhs = cosine_similarity(va, vb)
        assert lhs == pytest.approx(cosine_similarity(vb, va), abs=1e-9)
        if np.all(np.isfinite(va * k)) and np.linalg.norm(va * k) > 0:
            assert lhs == pytest.approx(cosine_similarity(va * k, vb), abs=1e-9)


class TestZscoreNormalize:
    def test_three_point(self):
        np.testing.assert_allclose(
            zscore_normalize([1.0, 2.0, 3.0]), [-1.22474, 0.0, 1.22474], atol=1e-4
        )

    def test_degenerate_sigma(self):
        np.testing.assert_array_equal(zscore_normalize([5.0, 5.0, 5.0]), [0.0, 0.0, 0.0])

    def test_two_point(self):
        np.testing.assert_allclose(zscore_normalize([2.0, 4.0]), [-1.0, 1.0])

    def test_too_few(self):
        with pytest.raises(TooFewCategoriesError):
            zscore_normalize([1.0])

    def test_output_stats(self):
        rng = np.random.default_rng(0)
        s = rng.normal(size=200)
        out = zscore_normalize(s)
        assert abs(out.mean()) < 1e-9
        assert abs(np.sqrt(np.mean(out**2)) - 1.0) < 1e-9

    @given(
        st.lists(
            st.floats(min_value=-100.0, max_value=100.0, allow_nan=False),
            min_size=2,
            max_size=12,
        ),
        st.floats(min_value=-1e3, max_value=1e3, allow_nan=False),
        st.floats(min_value=0.01, max_value=1e3),
    )
    def test_shift_and_scale_invariance(self, values, shift, scale):
        arr = np.array(values)
        # near-constant inputs at the float precision limit carry no signal
        assume(np.ptp(arr) == 0.0 or np.ptp(arr) > 1e-3)
        base = zscore_normalize(arr)
        np.testing.assert_allclose(base, zscore_normalize(arr + shift), atol=1e-9)
        np.testing.assert_allclose(base, zscore_normalize(arr * scale), atol=1e-9)


class TestStableSigmoid:
    def test_zero(self):
        assert stable_sigmoid(0.0) == 0.5

    def test_ln3(self):
        assert stable_sigmoid(math.log(3.0)) == pytest.approx(0.75, abs=1e-6)

    def test_extreme_negative(self):
        value = stable_sigmoid(-745.0)
        assert 0.0 <= value < 1e-300
        assert np.isfinite(value)

    def test_extreme_positive(self):
        assert stable_sigmoid(1000.0) == pytest.approx(1.0)

    @given(st.floats(min_value=-700, max_value=700, allow_nan=False))
    def test_complement_identity(self, x):
        assert stable_sigmoid(x) + stable_sigmoid(-x) == pytest.approx(1.0, abs=1e-12)

    def test_vectorized(self):
        out = stable_sigmoid(np.array([-1.0, 0.0, 1.0]))
        assert out.shape == (3,)
        assert out[1] == 0.5


class TestRegionSoftmax:
    def test_equal_cosines(self):
        table = np.array([[1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(
            region_softmax([1.0, 0.0], table, 0.5), [0.5, 0.5], atol=1e-12
        )

    @staticmethod
    def _rows_with_cosines(cosines):
        # unit rows whose cosine against e = [1, 0, 0] equals the given values
        return np.array([[c, np.sqrt(1.0 - c * c), 0.0] for c in cosines])

    def test_small_temperature(self):
        # cosines (0.2, 0.1) at tau = 0.1 reduce to softmax([2, 1])
        table = self._rows_with_cosines([0.2, 0.1])
        out = region_softmax([1.0, 0.0, 0.0], table, 0.1)
        np.testing.assert_allclose(out, [0.73106, 0.26894], atol=1e-5)

    def test_unit_temperature(self):
        # cosines (1, 0) at tau = 1 reduce to softmax([1, 0])
        table = self._rows_with_cosines([1.0, 0.0])
        out = region_softmax([1.0, 0.0, 0.0], table, 1.0)
        np.testing.assert_allclose(out, [0.73106, 0.26894], atol=1e-5)

    def test_sums_to_one_large(self):
        rng = np.random.default_rng(1)
        table = rng.normal(size=(10_000, 8))
        out = region_softmax(rng.normal(size=8), table, 0.05)
        assert abs(out.sum() - 1.0) < 1e-9

    def test_logit_shift_invariance(self):
        # shifting every cosine by a constant leaves the softmax unchanged
        out_a = region_softmax(
            [1.0, 0.0, 0.0], self._rows_with_cosines([0.5, 0.3]), 0.2
        )
        out_b = region_softmax(
            [1.0, 0.0, 0.0], self._rows_with_cosines([0.7, 0.5]), 0.2
        )
        np.testing.assert_allclose(out_a, out_b, atol=1e-12)

    def test_bad_temperature(self):
        with pytest.raises(ValueError):
            region_softmax([1.0, 0.0], np.eye(2), 0.0)
