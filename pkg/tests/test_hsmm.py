import itertools
import math

import numpy as np
import pytest
from scipy.stats import norm

from mobhsmm.exceptions import DataError, InvariantError
from mobhsmm.hsmm import (Hsmm, HsmmConfig, RunSegment, build_hsmm, kde_sojourn,
                          path_log_likelihood, predict_next, run_length_decode,
                          run_length_encode, sample, silverman_bandwidth, viterbi)
from mobhsmm.synthetic import random_hsmm, three_state_model
from oracles import brute_force_viterbi, compositions, segmentation_score


class TestRunLength:
    def test_ward_runs(self):
        assert run_length_encode([3, 3, 3, 3, 1, 1, 1]) == [(3, 4), (1, 3)]

    def test_singleton(self):
        assert run_length_encode([5]) == [RunSegment(5, 1)]

    def test_alternating(self):
        assert run_length_encode([1, 2, 1, 2]) == [(1, 1), (2, 1), (1, 1), (2, 1)]

    def test_empty(self):
        with pytest.raises(DataError):
            run_length_encode([])

    def test_inverse(self):
        rng = np.random.default_rng(0)
        s = rng.integers(1, 4, 200)
        np.testing.assert_array_equal(run_length_decode(run_length_encode(s)), s)


class TestSojourn:
    def test_single_kernel_symmetry(self):
        pmf = kde_sojourn([3], 6, bandwidth=0.5)
        assert pmf.argmax() + 1 == 3
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
        assert pmf[0] == pytest.approx(pmf[4], rel=1e-12)
        assert pmf[1] == pytest.approx(pmf[3], rel=1e-12)

    def test_point_mass_mode(self):
        for dmax in (2, 5, 30):
            assert kde_sojourn([2, 2, 2, 2], dmax).argmax() + 1 == 2

    def test_two_kernel_mixture(self):
        grid = np.arange(1, 9)
        dens = norm.pdf(grid, 2, 1) + norm.pdf(grid, 6, 1)
        pmf = kde_sojourn([2, 6], 8, bandwidth=1.0)
        np.testing.assert_allclose(pmf, dens / dens.sum(), rtol=1e-12)
        assert pmf[1] == pytest.approx(pmf[5], rel=1e-12)

    def test_dmax_too_small(self):
        with pytest.raises(DataError):
            kde_sojourn([3, 9], 5)

    def test_silverman(self):
        x = np.array([1.0, 2, 3, 4, 10])
        iqr = np.subtract(*np.percentile(x, [75, 25]))
        expected = 0.9 * min(x.std(ddof=1), iqr / 1.34) * 5 ** -0.2
        assert silverman_bandwidth(x) == pytest.approx(max(expected, 0.5))
        assert silverman_bandwidth([4, 4, 4]) == 0.5


def _labeled(segments, values=None):
    states = run_length_decode(segments)
    return states, np.zeros(states.size) if values is None else values


class TestBuild:
    def test_two_state_example(self):
        m = build_hsmm([_labeled([(1, 3), (2, 2), (1, 4)])], 2,
                       HsmmConfig(transition_smoothing=0.0))
        np.testing.assert_array_equal(m.A, [[0, 1], [1, 0]])
        np.testing.assert_array_equal(m.pi, [1, 0])
        assert m.dmax == math.ceil(1.2 * 4)

    def test_smoothing(self):
        segs = [(1, 2), (2, 2), (3, 2), (1, 2), (2, 1)]
        m = build_hsmm([_labeled(segs)], 3, HsmmConfig(transition_smoothing=0.5))
        # state 1 -> 2 twice, -> 3 never
        np.testing.assert_allclose(m.A[0], [0, 2.5 / 3, 0.5 / 3])
        np.testing.assert_allclose(m.pi, np.array([1.5, 0.5, 0.5]) / 2.5)

    def test_sigma_floor(self):
        states = np.array([1, 1, 1, 2, 2])
        vals = np.array([0.03, 0.03, 0.03, 0.5, 0.7])
        m = build_hsmm([(states, vals)], 2)
        assert m.mu[0] == pytest.approx(0.03)
        assert m.sigma[0] == 1e-4
        assert m.sigma[1] == pytest.approx(np.std([0.5, 0.7], ddof=1))

    def test_unvisited_state(self):
        m = build_hsmm([_labeled([(1, 3), (2, 2)], np.arange(5.0))], 3)
        assert m.unvisited.tolist() == [False, False, True]
        np.testing.assert_allclose(m.A[2], [0.5, 0.5, 0])
        np.testing.assert_allclose(m.sojourn[2], 1 / m.dmax)
        assert m.mu[2] == pytest.approx(2.0)

    def test_single_state(self):
        m = build_hsmm([_labeled([(1, 5)]), _labeled([(1, 3)])], 1)
        assert m.A.tolist() == [[0.0]]
        assert m.pi.tolist() == [1.0]

    def test_errors(self):
        with pytest.raises(DataError):
            build_hsmm([], 2)
        with pytest.raises(DataError):
            build_hsmm([_labeled([(1, 2)])], 0)
        with pytest.raises(DataError, match="1..2"):
            build_hsmm([_labeled([(3, 2)])], 2)

    def test_sojourn_normalized(self):
        rng = np.random.default_rng(1)
        seqs = [(rng.integers(1, 5, 40), rng.normal(size=40)) for _ in range(10)]
        m = build_hsmm(seqs, 4)
        np.testing.assert_allclose(m.sojourn.sum(axis=1), 1.0, atol=1e-12)

    def test_transition_recovery(self):
        truth = three_state_model()
        states, obs = sample(truth, 20000, seed=3)
        assert len(run_length_encode(states)) > 1500
        m = build_hsmm([(states, obs)], 3, HsmmConfig(transition_smoothing=0.0))
        assert np.abs(m.A - truth.A).max() <= 0.05

    def test_validate_rejects_bad_rows(self):
        with pytest.raises(InvariantError):
            Hsmm([1, 0], [[0, 0.5], [1, 0]], [0, 0], [1, 1], [[1.0], [1.0]]).validate()
        with pytest.raises(InvariantError):
            Hsmm([1, 0], [[0.2, 0.8], [1, 0]], [0, 0], [1, 1], [[1.0], [1.0]]).validate()


class TestViterbi:
    @pytest.mark.parametrize("seed", range(20))
    def test_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        S = int(rng.integers(1, 4))
        D = int(rng.integers(1, 5))
        T = int(rng.integers(1, D + 1 if S == 1 else 9))
        m = random_hsmm(S, D, rng)
        obs = rng.normal(0, 1.5, T)
        path, ll = viterbi(m, obs)
        ref, _ = brute_force_viterbi(m, obs)
        assert ll == pytest.approx(ref, abs=1e-9)
        assert path_log_likelihood(m, obs, path) == pytest.approx(ll, abs=1e-9)

    def test_single_state(self):
        m = Hsmm([1.0], [[0.0]], [0.2], [0.5], [[0.1, 0.2, 0.3, 0.4]]).validate()
        obs = np.array([0.1, -0.3, 0.9])
        path, ll = viterbi(m, obs)
        assert path.tolist() == [1, 1, 1]
        expect = math.log(0.3) + norm.logpdf(obs, 0.2, 0.5).sum()
        assert ll == pytest.approx(expect, abs=1e-12)

    def test_single_state_too_long(self):
        m = Hsmm([1.0], [[0.0]], [0.2], [0.5], [[0.5, 0.5]]).validate()
        with pytest.raises(DataError, match="sequence exceeds maximal sojourn"):
            viterbi(m, np.zeros(3))

    def test_nan(self):
        with pytest.raises(DataError):
            viterbi(three_state_model(), [0.0, np.nan])

    def test_dominant_state(self):
        soj = np.zeros((2, 10))
        soj[:, 9] = 1.0
        soj[0] = 0.1
        m = Hsmm([0.5, 0.5], [[0, 1], [1, 0]], [0.0, 10.0], [1.0, 1.0], soj).validate()
        # emission ratio per step at x = 10 is exp(50) >> e^10
        path, _ = viterbi(m, np.full(10, 10.0))
        assert path.tolist() == [2] * 10

    def test_recovers_sampled_path(self):
        m = three_state_model()
        states, obs = sample(m, 150, seed=8)
        path, _ = viterbi(m, obs)
        assert np.mean(path == states) > 0.95


class TestPredictNext:
    def _model(self, row0):
        A = np.array([row0, [0.5, 0, 0.5], [0.5, 0.5, 0]])
        return Hsmm([1, 0, 0], A, [0, 1, 2], [1, 1, 1], np.full((3, 2), 0.5)).validate()

    def test_argmax(self):
        assert predict_next(self._model([0, 0.7, 0.3]), 1, k=1) == [(2, 0.7)]

    def test_full_row(self):
        assert predict_next(self._model([0, 0.3, 0.7]), 1, k=2) == [(3, 0.7), (2, 0.3)]

    def test_tie_rule(self):
        m = random_hsmm(5, 3, np.random.default_rng(0))
        m.A[4] = [0.25, 0.25, 0.25, 0.25, 0]
        assert [s for s, _ in predict_next(m, 5, k=2)] == [1, 2]

    def test_invalid(self):
        with pytest.raises(DataError):
            predict_next(self._model([0, 0.7, 0.3]), 4)
        with pytest.raises(DataError):
            predict_next(self._model([0, 0.7, 0.3]), 1, k=3)


class TestSample:
    def test_point_mass(self):
        soj = np.zeros((1, 8))
        soj[0, 7] = 1
        m = Hsmm([1.0], [[0.0]], [0.0], [1.0], soj).validate()
        states, obs = sample(m, 6, seed=1)
        assert states.tolist() == [1] * 6
        assert obs.shape == (6,)

    def test_deterministic(self):
        m = three_state_model()
        a = sample(m, 300, seed=4)
        b = sample(m, 300, seed=4)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_sojourn_distribution(self):
        m = three_state_model()
        states, _ = sample(m, 400000, seed=2)
        segs = run_length_encode(states)[:-1]  # last run is truncated
        for j in range(3):
            d = np.array([s.duration for s in segs if s.state == j + 1])
            emp = np.bincount(d, minlength=m.dmax + 1)[1:] / d.size
            assert 0.5 * np.abs(emp - m.sojourn[j]).sum() < 0.02


class TestSerialize:
    def test_dict_round_trip(self):
        m = build_hsmm([_labeled([(1, 3), (2, 2)], np.arange(5.0))], 3)
        back = Hsmm.from_dict(m.to_dict())
        np.testing.assert_array_equal(back.A, m.A)
        np.testing.assert_array_equal(back.unvisited, m.unvisited)


def test_sharpening_keeps_clear_winner():
    # build an instance whose best path beats every other by a wide margin
    rng = np.random.default_rng(21)
    checked = 0
    for _ in range(20):
        m = random_hsmm(3, 4, rng)
        T = 7
        obs = rng.normal(0, 1.5, T)
        path, ll = viterbi(m, obs)
        scores = []
        for durs in compositions(T, 4):
            for st in itertools.product(range(3), repeat=len(durs)):
                if any(a == b for a, b in zip(st[:-1], st[1:])):
                    continue
                scores.append(segmentation_score(m, obs, durs, st))
        scores.sort(reverse=True)
        margin = scores[0] - scores[1]
        c = 0.9
        if margin <= T * abs(math.log(c)):
            continue
        sharp = Hsmm(m.pi, m.A, m.mu, m.sigma * c, m.sojourn).validate()
        assert viterbi(sharp, obs)[0].tolist() == path.tolist()
        checked += 1
    assert checked >= 5


def test_emission_mean_recovery_unit_sigma():
    truth = three_state_model()
    truth = Hsmm(truth.pi, truth.A, [0.0, 1.0, 2.0], [1.0, 1.0, 1.0], truth.sojourn).validate()
    states, obs = sample(truth, 100000, seed=6)
    assert len(run_length_encode(states)) >= 10000
    m = build_hsmm([(states, obs)], 3, HsmmConfig(transition_smoothing=0.0))
    assert np.abs(m.A - truth.A).max() <= 0.05
    assert np.abs(m.mu - truth.mu).max() <= 0.02
