"""Cosine compatibility and label-attentive pooling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelsem.attention import (
    attend,
    attend_backward,
    attend_with_cache,
    compatibility,
    compatibility_backward,
    window_average,
)
from labelsem.numerics import grad_check, seeded_rng


class TestCompatibility:
    def test_identical_unit_vectors_score_one(self):
        v = np.array([[0.6, 0.8]])
        assert compatibility(v, v)[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_vectors_score_zero(self):
        assert compatibility(np.array([[1.0, 0.0]]), np.array([[0.0, 2.0]]))[0, 0] == 0.0

    def test_hand_computed_example(self):
        labels = np.array([[1.0, 0.0], [0.0, 1.0]])
        tokens = np.array([[0.6, 0.8]])
        np.testing.assert_allclose(compatibility(labels, tokens), [[0.6], [0.8]], atol=1e-15)

    def test_zero_vector_guard(self):
        labels = np.array([[0.0, 0.0], [1.0, 0.0]])
        tokens = np.array([[0.0, 0.0], [1.0, 1.0]])
        compat = compatibility(labels, tokens)
        assert compat[0, 0] == 0.0 and compat[0, 1] == 0.0 and compat[1, 0] == 0.0

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            compatibility(np.zeros((2, 3)), np.zeros((4, 5)))

    def test_entries_bounded_for_random_inputs(self):
        rng = seeded_rng(8)
        for _ in range(200):
            labels = rng.normal(size=(rng.integers(1, 6), 4))
            tokens = rng.normal(size=(rng.integers(1, 9), 4))
            compat = compatibility(labels, tokens)
            assert np.all(compat >= -1.0 - 1e-12) and np.all(compat <= 1.0 + 1e-12)

    def test_positive_row_scaling_leaves_compatibility_unchanged(self):
        rng = seeded_rng(3)
        labels = rng.normal(size=(3, 5))
        tokens = rng.normal(size=(4, 5))
        scaled = labels.copy()
        scaled[1] *= 37.5
        np.testing.assert_allclose(
            compatibility(labels, tokens)[1], compatibility(scaled, tokens)[1], atol=1e-12
        )


class TestWindowAverage:
    def test_window_one_is_identity(self):
        compat = np.array([[1.0, 2.0, 3.0]])
        assert window_average(compat, 1) is compat

    def test_window_three_zero_padded(self):
        compat = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_allclose(window_average(compat, 3), [[1.0, 2.0, 5.0 / 3.0]])

    def test_even_window_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            window_average(np.zeros((2, 4)), 2)


class TestAttend:
    def test_single_token_gets_all_attention(self):
        tokens = np.array([[0.3, -0.4]])
        result = attend(np.array([[0.5]]), tokens)
        np.testing.assert_array_equal(result.alpha, [1.0])
        np.testing.assert_array_equal(result.pooled, tokens[0])

    def test_constant_compatibility_gives_uniform_attention(self):
        result = attend(np.full((3, 5), 0.7), seeded_rng(0).normal(size=(5, 2)))
        np.testing.assert_allclose(result.alpha, np.full(5, 0.2), atol=1e-15)

    def test_hand_computed_softmax(self):
        compat = np.array([[2.0, 0.0], [0.0, 1.0]])
        tokens = np.eye(2)
        result = attend(compat, tokens, window=1)
        expected = [math.exp(2) / (math.exp(2) + math.exp(1)),
                    math.exp(1) / (math.exp(2) + math.exp(1))]
        np.testing.assert_allclose(result.alpha, expected, rtol=1e-12)
        np.testing.assert_allclose(result.pooled, expected, rtol=1e-12)
        assert result.alpha[0] == pytest.approx(0.7310585786300049, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6), st.integers(1, 9), st.integers(1, 5))
    def test_properties_hold_for_random_inputs(self, seed, n_labels, n_tokens, dim):
        rng = np.random.default_rng(seed)
        labels = rng.normal(size=(n_labels, dim))
        tokens = rng.normal(size=(n_tokens, dim))
        compat = compatibility(labels, tokens)
        result = attend(compat, tokens)
        assert abs(result.alpha.sum() - 1.0) <= 1e-12
        assert np.all(result.alpha >= 0.0)
        lo, hi = tokens.min(axis=0), tokens.max(axis=0)
        assert np.all(result.pooled >= lo - 1e-12) and np.all(result.pooled <= hi + 1e-12)

    def test_shift_invariance(self):
        rng = seeded_rng(5)
        compat = rng.uniform(-1, 1, size=(4, 7))
        tokens = rng.normal(size=(7, 3))
        base = attend(compat, tokens)
        shifted = attend(compat + 0.37, tokens)
        np.testing.assert_allclose(base.alpha, shifted.alpha, atol=1e-12)
        np.testing.assert_allclose(base.pooled, shifted.pooled, atol=1e-12)


class TestBackwardPasses:
    @pytest.mark.parametrize("window", [1, 3])
    def test_attend_gradients_match_finite_differences(self, window):
        rng = seeded_rng(21)
        shape_labels, shape_tokens = (3, 6), (6, 4)
        weight_alpha = rng.normal(size=6)
        weight_pooled = rng.normal(size=4)

        def fn(point):
            result, cache = attend_with_cache(point["compat"], point["tokens"], window)
            loss = float(weight_alpha @ result.alpha + weight_pooled @ result.pooled)
            d_compat, d_tokens = attend_backward(
                weight_alpha, weight_pooled, cache, point["tokens"], window
            )
            return loss, {"compat": d_compat, "tokens": d_tokens}

        point = {"compat": rng.uniform(-1, 1, size=shape_labels),
                 "tokens": rng.normal(size=shape_tokens)}
        report = grad_check(fn, point)
        assert report.passed, str(report)

    def test_compatibility_gradients_match_finite_differences(self):
        rng = seeded_rng(33)
        weights = rng.normal(size=(3, 5))

        def fn(point):
            compat = compatibility(point["labels"], point["tokens"])
            loss = float(np.sum(weights * compat))
            d_labels, d_tokens = compatibility_backward(
                point["labels"], point["tokens"], compat, weights
            )
            return loss, {"labels": d_labels, "tokens": d_tokens}

        point = {"labels": rng.normal(size=(3, 4)), "tokens": rng.normal(size=(5, 4))}
        report = grad_check(fn, point)
        assert report.passed, str(report)
