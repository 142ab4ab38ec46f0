import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from miprune.errors import NonFiniteActivation
from miprune.nn import Batch, LayerSpec, Network, init_network
from miprune.stats import (
    CovarianceModel,
    LayerPairStats,
    collect,
    finalize,
    logdet_principal,
    sample_rows,
)

from oracles import lu_logdet, random_pd


def _two_pass(rows):
    mean = rows.mean(axis=0)
    c = rows - mean
    return mean, c.T @ c / rows.shape[0]


def _identity_net(d):
    return Network([LayerSpec(np.eye(d), np.zeros(d), "identity")])


class TestAccumulator:
    @settings(max_examples=40, deadline=None)
    @given(
        arrays(np.float64, st.tuples(st.integers(2, 300), st.just(5)),
               elements=st.floats(-1e3, 1e3, allow_nan=False)),
        st.integers(1, 7),
    )
    def test_streaming_matches_two_pass(self, rows, n_chunks):
        acc = LayerPairStats(0, 2, 3)
        for chunk in np.array_split(rows, n_chunks):
            acc.update(chunk)
        mean, cov = _two_pass(rows)
        scale = max(1.0, np.abs(cov).max())
        np.testing.assert_allclose(acc.mean, mean, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(mean).max()))
        np.testing.assert_allclose(acc.covariance(), cov, rtol=1e-9, atol=1e-9 * scale)

    def test_merge_equals_concatenation(self, rng):
        shards = [rng.standard_normal((n, 4)) * 3 + 1 for n in (10, 1, 500, 37)]
        merged = LayerPairStats(0, 1, 3)
        for s in shards:
            merged.merge(LayerPairStats(0, 1, 3).update(s))
        single = LayerPairStats(0, 1, 3).update(np.vstack(shards))
        np.testing.assert_allclose(merged.covariance(), single.covariance(), rtol=1e-9)
        np.testing.assert_allclose(merged.mean, single.mean, rtol=1e-9)
        assert merged.n == single.n

    def test_merge_is_associative(self, rng):
        a, b, c = (rng.standard_normal((n, 3)) for n in (20, 30, 40))
        mk = lambda x: LayerPairStats(0, 1, 2).update(x)  # noqa: E731
        left = mk(a).merge(mk(b)).merge(mk(c))
        right = mk(a).merge(mk(b).merge(mk(c)))
        np.testing.assert_allclose(left.covariance(), right.covariance(), rtol=1e-12)

    def test_symmetric(self, rng):
        acc = LayerPairStats(0, 3, 3)
        for _ in range(5):
            acc.update(rng.standard_normal((17, 6)))
        cov = acc.covariance()
        assert np.array_equal(cov, cov.T)

    def test_width_checked(self):
        with pytest.raises(ValueError):
            LayerPairStats(0, 2, 2).update(np.zeros((3, 5)))


class TestFinalize:
    def test_one_dim_plus_minus_one(self):
        acc = LayerPairStats(0, 1, 0).update(np.array([[-1.0], [1.0]] * 50))
        cov = finalize(acc, ridge_scale=1e-6)
        assert cov.ridge == pytest.approx(1e-6)
        assert cov.cov[0, 0] == pytest.approx(1.0 + 1e-6, abs=1e-15)

    def test_rank_deficient_becomes_pd(self, rng):
        x = rng.standard_normal((200, 3))
        rows = np.hstack([x, x[:, :1]])
        cov = finalize(LayerPairStats(0, 2, 2).update(rows))
        assert np.linalg.eigvalsh(cov.cov).min() > 0

    def test_constant_input(self):
        acc = LayerPairStats(0, 2, 1).update(np.ones((10, 3)) * 4.0)
        assert np.array_equal(acc.covariance(), np.zeros((3, 3)))
        cov = finalize(acc, ridge_scale=1e-6)
        np.testing.assert_allclose(cov.cov, 1e-6 * np.eye(3))

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            finalize(LayerPairStats(0, 1, 1).update(np.ones((1, 2))))

    def test_sampled_gaussian(self):
        rng = np.random.default_rng(9)
        truth = random_pd(rng, 4, cond_floor=0.3)
        x = rng.multivariate_normal(np.zeros(4), truth, size=50_000)
        cov = finalize(LayerPairStats(0, 2, 2).update(x))
        assert np.abs(cov.cov - truth).max() < 0.05


class TestLogdet:
    def test_identity(self):
        cov = CovarianceModel.from_matrix(np.eye(6))
        for k in range(1, 7):
            assert logdet_principal(cov, list(range(k))) == pytest.approx(0.0, abs=1e-15)

    def test_diagonal(self):
        cov = CovarianceModel.from_matrix(np.diag([2.0, 3.0, 5.0]))
        assert logdet_principal(cov, [0, 2]) == pytest.approx(np.log(10.0), rel=1e-14)

    def test_against_lu(self, rng):
        m = random_pd(rng, 10)
        idx = [0, 2, 3, 5, 8, 9]
        got = logdet_principal(CovarianceModel.from_matrix(m), idx)
        assert abs(got - lu_logdet(m[np.ix_(idx, idx)])) < 1e-10

    @pytest.mark.parametrize("idx", [[], [2, 1], [1, 1], [0, 7]])
    def test_bad_index_sets(self, idx):
        with pytest.raises((ValueError, IndexError)):
            logdet_principal(CovarianceModel.from_matrix(np.eye(4)), idx)


class TestCollect:
    def test_identity_network_block_structure(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((100_000, 3))
        stats = collect(_identity_net(3), Batch(x, np.zeros(len(x), int)))
        expected = np.block([[np.eye(3), np.eye(3)], [np.eye(3), np.eye(3)]])
        assert np.abs(stats[0].covariance() - expected).max() < 0.05

    def test_deterministic(self, rng):
        net = init_network([5, 4, 3], seed=0)
        data = Batch(rng.standard_normal((3000, 5)), np.zeros(3000, int))
        a = collect(net, data, sample_cap=1000, seed=4, batch_size=128)
        b = collect(net, data, sample_cap=1000, seed=4, batch_size=128)
        for s, t in zip(a, b):
            assert np.array_equal(s.comoment, t.comoment) and np.array_equal(s.mean, t.mean)
        assert a[0].n == 1000

    def test_pairs_cover_every_layer(self, rng):
        net = init_network([5, 4, 3, 2], seed=0)
        stats = collect(net, Batch(rng.standard_normal((50, 5)), np.zeros(50, int)))
        assert [(s.layer, s.dim_lower, s.dim_upper) for s in stats] == [(0, 5, 4), (1, 4, 3), (2, 3, 2)]

    def test_batching_does_not_change_result(self, rng):
        net = init_network([5, 4, 3], "tanh", seed=0)
        data = Batch(rng.standard_normal((500, 5)), np.zeros(500, int))
        a = collect(net, data, batch_size=7)[1].covariance()
        b = collect(net, data, batch_size=500)[1].covariance()
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-14)

    def test_non_finite_activation(self, rng):
        x = rng.standard_normal((10, 2))
        x[6, 1] = np.nan
        with pytest.raises(NonFiniteActivation) as err:
            collect(_identity_net(2), Batch(x, np.zeros(10, int)))
        assert err.value.row == 6

    def test_sample_rows(self):
        assert np.array_equal(sample_rows(5, 10, 0), np.arange(5))
        rows = sample_rows(1000, 100, 1)
        assert len(np.unique(rows)) == 100 and np.all(np.diff(rows) > 0)
