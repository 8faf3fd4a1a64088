import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mobhsmm.exceptions import DataError
from mobhsmm.metrics import EPS, auroc, cross_entropy, logit, sigmoid
from oracles import pair_count_auroc


class TestLogit:
    def test_half(self):
        assert logit(0.5) == 0.0

    def test_point_eight(self):
        # ln(0.8 / 0.2) = ln 4, evaluated with mpmath at 30 digits
        assert logit(0.8) == pytest.approx(1.38629436111989061883, abs=1e-14)

    def test_clipped_at_one(self):
        # ln((1 - 1e-6) / 1e-6), mpmath
        assert logit(1.0) == pytest.approx(13.8155095579637741038, abs=1e-9)
        assert logit(0.0) == pytest.approx(-13.8155095579637741038, abs=1e-9)

    def test_nan_rejected(self):
        with pytest.raises(DataError):
            logit(float("nan"))

    def test_vectorized(self):
        out = logit(np.array([0.2, 0.5, 0.8]))
        np.testing.assert_allclose(out, [-np.log(4), 0, np.log(4)], atol=1e-14)


class TestSigmoid:
    def test_zero(self):
        assert sigmoid(0) == 0.5

    def test_inverse(self):
        assert abs(sigmoid(logit(0.8)) - 0.8) <= 1e-12

    def test_far_negative(self):
        v = sigmoid(-50)
        assert 0 < v < 1e-20

    @given(st.floats(min_value=EPS, max_value=1 - EPS))
    def test_round_trip(self, p):
        assert abs(sigmoid(logit(p)) - p) <= 1e-12


class TestCrossEntropy:
    def test_max_entropy(self):
        assert cross_entropy([0.5], [0.5]) == pytest.approx(0.693147180559945309, abs=1e-15)

    def test_saturated(self):
        # -ln(1 - 1e-6), mpmath
        assert cross_entropy([1.0], [1.0]) == pytest.approx(1.00000050000033333e-6, rel=1e-9)

    def test_two_points(self):
        # mean of -(0.9 ln 0.8 + 0.1 ln 0.2) and -(0.1 ln 0.2 + 0.9 ln 0.8), mpmath
        assert cross_entropy([0.9, 0.1], [0.8, 0.2]) == pytest.approx(
            0.361772987426198818, abs=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            cross_entropy([0.1, 0.2], [0.1])

    def test_gibbs_random(self):
        rng = np.random.default_rng(0)
        y = rng.random((2000, 5))
        q = rng.random((2000, 5))
        for a, b in zip(y, q):
            assert cross_entropy(a, a) <= cross_entropy(a, b) + 1e-15


class TestAuroc:
    def test_perfect(self):
        assert auroc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_three_of_four(self):
        assert auroc([0.9, 0.6, 0.4, 0.1], [1, 0, 1, 0]) == 0.75

    def test_all_ties(self):
        assert auroc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5

    def test_single_class(self):
        with pytest.raises(DataError, match="undefined"):
            auroc([0.1, 0.2], [1, 1])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=2, max_size=40))
    def test_matches_pair_count(self, pairs):
        scores = [s / 3 for s, _ in pairs]
        labels = [y for _, y in pairs]
        if len(set(labels)) < 2:
            return
        assert auroc(scores, labels) == pair_count_auroc(scores, labels)

    def test_monotone_invariance(self):
        rng = np.random.default_rng(1)
        s = rng.normal(size=80)
        y = rng.integers(0, 2, 80)
        assert auroc(s, y) == auroc(np.exp(3 * s) + 1, y)

    def test_label_flip(self):
        rng = np.random.default_rng(2)
        s = rng.integers(0, 5, 60).astype(float)
        y = rng.integers(0, 2, 60)
        assert auroc(s, y) + auroc(s, 1 - y) == pytest.approx(1.0, abs=1e-15)
