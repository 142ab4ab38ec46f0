import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from miprune.errors import InstanceTooLarge
from miprune.mi import (
    GreedyState,
    brute_force_best_subset,
    clamp,
    conditional_mi,
    entropy,
    extend,
    mutual_information,
)
from miprune.stats import CovarianceModel

from oracles import bivariate_mi_grid, enumerate_best, gaussian_cmi, gaussian_mi, random_pd

H1 = 0.5 * math.log(2 * math.pi * math.e)


def _cov(m, split=None):
    return CovarianceModel.from_matrix(m, split)


def _corr(rho):
    return _cov(np.array([[1.0, rho], [rho, 1.0]]))


class TestEntropy:
    def test_standard_normal(self):
        assert entropy(_cov(np.eye(1)), [0]) == pytest.approx(1.418938, abs=1e-6)
        assert entropy(_cov(np.eye(1)), [0]) == pytest.approx(H1, rel=1e-15)

    def test_scaled(self):
        assert entropy(_cov(np.array([[4.0]])), [0]) == pytest.approx(H1 + 0.5 * math.log(4), rel=1e-14)

    def test_additive(self):
        assert entropy(_cov(np.eye(3)), [0, 1, 2]) == pytest.approx(3 * H1, rel=1e-14)


class TestMutualInformation:
    def test_independent_blocks(self, rng):
        m = np.zeros((5, 5))
        m[:2, :2] = random_pd(rng, 2)
        m[2:, 2:] = random_pd(rng, 3)
        assert abs(mutual_information(_cov(m), [0, 1], [2, 3, 4])) < 1e-9

    @pytest.mark.parametrize("rho, expected", [(0.5, 0.143841), (0.8, 0.510826)])
    def test_bivariate(self, rho, expected):
        got = mutual_information(_corr(rho), [0], [1])
        assert got == pytest.approx(expected, abs=1e-6)
        assert got == pytest.approx(bivariate_mi_grid(rho), abs=1e-8)

    def test_matches_lu_oracle(self, rng):
        m = random_pd(rng, 9)
        assert mutual_information(_cov(m), [0, 4, 7], [1, 2]) == pytest.approx(
            gaussian_mi(m, [0, 4, 7], [1, 2]), abs=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6), st.integers(2, 9))
    def test_symmetry_and_sign(self, seed, n):
        rng = np.random.default_rng(seed)
        cov = _cov(random_pd(rng, n))
        perm = rng.permutation(n)
        cut = rng.integers(1, n)
        a, b = np.sort(perm[:cut]), np.sort(perm[cut:])
        ab, ba = mutual_information(cov, a, b), mutual_information(cov, b, a)
        assert abs(ab - ba) < 1e-10
        assert ab >= -1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_scaling_invariance(self, seed):
        rng = np.random.default_rng(seed)
        m = random_pd(rng, 6)
        c = rng.uniform(0.1, 10.0, 6)
        scaled = m * np.outer(c, c)
        for a, b in (([0], [1, 2]), ([0, 3], [4, 5]), ([5], [2])):
            assert abs(mutual_information(_cov(m), a, b) - mutual_information(_cov(scaled), a, b)) < 1e-9

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            mutual_information(_cov(np.eye(3)), [0, 1], [1, 2])

    def test_clamp(self):
        assert clamp(-1e-12) == 0.0
        assert clamp(-1e-3) == -1e-3
        assert clamp(0.2) == 0.2


class TestConditionalMI:
    def test_empty_z_equals_mi(self, rng):
        cov = _cov(random_pd(rng, 5))
        assert conditional_mi(cov, [0], [1, 2]) == mutual_information(cov, [0], [1, 2])

    def test_markov_chain(self):
        # A -> Z -> B with Z = A + noise, B = 2 Z + noise.
        va, vz, vb = 1.0, 0.5, 0.3
        var_z = va + vz
        m = np.array([
            [va, va, 2 * va],
            [va, var_z, 2 * var_z],
            [2 * va, 2 * var_z, 4 * var_z + vb],
        ])
        cov = _cov(m)
        assert abs(conditional_mi(cov, [0], [2], [1])) <= 1e-6
        assert mutual_information(cov, [0], [2]) > 0.1

    def test_independent_triple(self):
        assert abs(conditional_mi(_cov(np.diag([1.0, 2.0, 3.0])), [0], [1], [2])) < 1e-12

    def test_matches_lu_oracle(self, rng):
        m = random_pd(rng, 7)
        got = conditional_mi(_cov(m), [0, 1], [2], [3, 5])
        assert got == pytest.approx(gaussian_cmi(m, [0, 1], [2], [3, 5]), abs=1e-10)
        assert got >= -1e-9


class TestGreedyState:
    def test_first_extension_is_pair_mi(self, rng):
        cov = _cov(random_pd(rng, 8), 5)
        upper = [5, 6, 7]
        state = GreedyState(cov, upper)
        gain, state = extend(state, 2)
        assert gain == pytest.approx(mutual_information(cov, upper, [2]), abs=1e-12)

    def test_incremental_matches_scratch(self, rng):
        for _ in range(20):
            cov = _cov(random_pd(rng, 10), 7)
            state = GreedyState(cov, [7, 8, 9])
            for d in rng.permutation(7)[:5]:
                gain = state.extend(int(d))
                assert gain >= -1e-9
            assert abs(state.value - state.from_scratch()) < 1e-8
            assert abs(state.value - gaussian_mi(cov.cov, [7, 8, 9], state.selected)) < 1e-8

    def test_gains_predict_extension(self, rng):
        cov = _cov(random_pd(rng, 9), 6)
        state = GreedyState(cov, [6, 7, 8])
        state.extend(1)
        cands = np.array([0, 2, 3, 4, 5])
        predicted = state.gains(cands)
        for d, g in zip(cands, predicted):
            probe = GreedyState(cov, [6, 7, 8])
            probe.extend(1)
            assert probe.extend(int(d)) == pytest.approx(g, abs=1e-10)

    def test_rejects_duplicates_and_upper(self):
        state = GreedyState(_cov(np.eye(4), 2), [2, 3])
        state.extend(0)
        with pytest.raises(ValueError):
            state.extend(0)
        with pytest.raises(ValueError):
            state.extend(3)


class TestBruteForce:
    def test_k_equals_width(self, rng):
        cov = _cov(random_pd(rng, 7), 4)
        subset, value = brute_force_best_subset(cov, [4, 5, 6], 4)
        assert subset == [0, 1, 2, 3]
        assert value == pytest.approx(mutual_information(cov, [4, 5, 6], [0, 1, 2, 3]), abs=1e-12)

    def test_perfect_correlate(self):
        m = np.eye(5)
        m[2, 4] = m[4, 2] = 0.999
        subset, _ = brute_force_best_subset(_cov(m, 4), [4], 1)
        assert subset == [2]

    def test_independent_enumerator(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            m = random_pd(rng, 11)
            subset, value = brute_force_best_subset(_cov(m, 8), [8, 9, 10], 3)
            ref, ref_value = enumerate_best(m, [8, 9, 10], range(8), 3)
            assert subset == ref
            assert value == pytest.approx(ref_value, abs=1e-10)

    def test_refuses_large_instances(self):
        cov = _cov(np.eye(20), 17)
        with pytest.raises(InstanceTooLarge):
            brute_force_best_subset(cov, [17, 18, 19], 3)
