"""Embedding init, activation, edge dropout, and the propagation stack.

The forward oracle here is a hand-rolled dense reimplementation built
from numpy primitives only, so any indexing or caching mistake in the
traced version shows up as a mismatch.
"""

import numpy as np
import pytest

from svdgcl.errors import ConfigError
from svdgcl.interactions import build_adjacency, normalize_adjacency
from svdgcl.linalg import approx_svd
from svdgcl.model import (
    LEAKY_SLOPE,
    HyperParams,
    edge_dropout,
    forward,
    init_model,
    leaky_relu,
    leaky_relu_grad,
    predict_scores,
)
from svdgcl.sparse import SparseMatrix
from tests.util import tiny_dataset


def slope(x):
    return np.where(np.asarray(x) >= 0, 1.0, LEAKY_SLOPE)


def dense_forward(state, a_dense, svd_recon, layers, with_view):
    """Reference propagation with plain dense ops."""
    hu, hi = [state.e_user.copy()], [state.e_item.copy()]
    gu, gi = [], []
    for _ in range(layers):
        pre_u = a_dense @ hi[-1]
        pre_i = a_dense.T @ hu[-1]
        zu = np.where(pre_u >= 0, pre_u, LEAKY_SLOPE * pre_u)
        zi = np.where(pre_i >= 0, pre_i, LEAKY_SLOPE * pre_i)
        if with_view:
            pg_u = svd_recon @ hi[-1]
            pg_i = svd_recon.T @ hu[-1]
            gu.append(np.where(pg_u >= 0, pg_u, LEAKY_SLOPE * pg_u))
            gi.append(np.where(pg_i >= 0, pg_i, LEAKY_SLOPE * pg_i))
        hu.append(zu + hu[-1])
        hi.append(zi + hi[-1])
    return sum(hu), sum(hi), gu, gi


class TestHyperParams:
    def test_defaults_are_valid(self):
        HyperParams()

    @pytest.mark.parametrize(
        "bad",
        [
            dict(embed_dim=0),
            dict(layers=0),
            dict(svd_rank=0),
            dict(dropout_p=1.0),
            dict(dropout_p=-0.1),
            dict(temperature=0.0),
            dict(lambda1=-1.0),
            dict(learning_rate=0.0),
            dict(batch_size=0),
            dict(epochs=-1),
            dict(cl_scope="sometimes"),
        ],
    )
    def test_bad_values_rejected(self, bad):
        with pytest.raises(ConfigError):
            HyperParams(**bad)


class TestInit:
    def test_shapes_bounds_and_determinism(self):
        ds = tiny_dataset()
        hp = HyperParams(embed_dim=16, seed=5)
        s1 = init_model(ds, hp)
        s2 = init_model(ds, hp)
        bound = np.sqrt(3.0 / 16)
        assert s1.e_user.shape == (ds.num_users, 16)
        assert s1.e_item.shape == (ds.num_items, 16)
        assert np.abs(s1.e_user).max() <= bound
        assert np.abs(s1.e_item).max() <= bound
        np.testing.assert_array_equal(s1.e_user, s2.e_user)
        np.testing.assert_array_equal(s1.e_item, s2.e_item)
        s3 = init_model(ds, HyperParams(embed_dim=16, seed=6))
        assert not np.array_equal(s1.e_user, s3.e_user)

    def test_train_stream_reproducible(self):
        ds = tiny_dataset()
        s1 = init_model(ds, HyperParams(embed_dim=4, seed=0))
        s2 = init_model(ds, HyperParams(embed_dim=4, seed=0))
        np.testing.assert_array_equal(s1.rng.random(8), s2.rng.random(8))


class TestActivation:
    def test_values(self):
        x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
        np.testing.assert_allclose(leaky_relu(x), [-0.4, -0.1, 0.0, 0.5, 2.0])

    def test_grad_including_the_kink(self):
        x = np.array([-1.0, 0.0, 1.0])
        np.testing.assert_array_equal(leaky_relu_grad(x), [LEAKY_SLOPE, 1.0, 1.0])

    def test_grad_matches_finite_differences_off_kink(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(100)
        x = x[np.abs(x) > 1e-3]
        h = 1e-7
        fd = (leaky_relu(x + h) - leaky_relu(x - h)) / (2 * h)
        np.testing.assert_allclose(leaky_relu_grad(x), fd, atol=1e-6)


class TestEdgeDropout:
    def test_p_zero_is_identity(self):
        a = SparseMatrix.from_pairs(3, 3, [0, 1, 2], [1, 2, 0])
        rng = np.random.default_rng(0)
        dropped, keep = edge_dropout(a, 0.0, rng)
        assert dropped is a
        assert keep.all() and keep.shape == (3,)

    def test_survivors_scaled(self):
        rng = np.random.default_rng(1)
        n = 2000
        a = SparseMatrix.from_pairs(1, n, np.zeros(n, dtype=int), np.arange(n))
        p = 0.3
        dropped, keep = edge_dropout(a, p, rng)
        assert dropped.nnz == int(keep.sum())
        np.testing.assert_allclose(dropped.values, 1.0 / (1.0 - p))
        # keep rate concentrates near 1-p
        assert abs(keep.mean() - (1.0 - p)) < 0.05

    def test_mask_replay_reproduces_matrix(self):
        rng = np.random.default_rng(4)
        a = SparseMatrix.from_pairs(5, 5, [0, 1, 2, 3, 4], [1, 2, 3, 4, 0])
        dropped, keep = edge_dropout(a, 0.4, rng)
        replay = a.select(keep, scale=1.0 / 0.6)
        np.testing.assert_array_equal(dropped.to_dense(), replay.to_dense())

    def test_bad_p_rejected(self):
        with pytest.raises(ValueError):
            edge_dropout(SparseMatrix.from_pairs(1, 1, [0], [0]), 1.0, np.random.default_rng(0))


class TestForward:
    def setup_method(self):
        self.ds = tiny_dataset()
        self.a = normalize_adjacency(build_adjacency(self.ds))
        self.hp = HyperParams(embed_dim=6, layers=3, svd_rank=2, dropout_p=0.0, seed=11)
        self.state = init_model(self.ds, self.hp)
        self.svd = approx_svd(self.a, self.hp.svd_rank, oversample=1, power_iters=2, seed=11)

    def test_eval_matches_dense_reference(self):
        trace = forward(self.state, self.a)
        fu, fi, _, _ = dense_forward(self.state, self.a.to_dense(), None, 3, False)
        np.testing.assert_allclose(trace.final_user, fu, atol=1e-10)
        np.testing.assert_allclose(trace.final_item, fi, atol=1e-10)
        assert trace.g_user is None and trace.g_item is None
        assert len(trace.h_user) == 4 and len(trace.z_user) == 3
        np.testing.assert_array_equal(trace.h_user[0], self.state.e_user)

    def test_train_with_view_matches_dense_reference(self):
        trace = forward(self.state, self.a, svd=self.svd, hp=self.hp, mode="train")
        recon = self.svd.reconstruct()
        fu, fi, gu, gi = dense_forward(self.state, self.a.to_dense(), recon, 3, True)
        np.testing.assert_allclose(trace.final_user, fu, atol=1e-10)
        np.testing.assert_allclose(trace.final_item, fi, atol=1e-10)
        for got, want in zip(trace.g_user, gu):
            np.testing.assert_allclose(got, want, atol=1e-10)
        for got, want in zip(trace.g_item, gi):
            np.testing.assert_allclose(got, want, atol=1e-10)
        assert trace.svd_factors is self.svd

    def test_view_never_feeds_predictions(self):
        # same weights, view on and off: identical finals
        t1 = forward(self.state, self.a, svd=self.svd, hp=self.hp, mode="train")
        t2 = forward(self.state, self.a, hp=self.hp, mode="train", with_global_view=False)
        np.testing.assert_array_equal(t1.final_user, t2.final_user)
        np.testing.assert_array_equal(t1.final_item, t2.final_item)

    def test_dropout_masks_replay(self):
        hp = HyperParams(embed_dim=6, layers=2, svd_rank=2, dropout_p=0.5, seed=3)
        state = init_model(self.ds, hp)
        t1 = forward(state, self.a, svd=self.svd, hp=hp, mode="train")
        t2 = forward(state, self.a, svd=self.svd, hp=hp, mode="train", masks=t1.dropout_masks)
        np.testing.assert_array_equal(t1.final_user, t2.final_user)
        np.testing.assert_array_equal(t1.final_item, t2.final_item)
        assert len(t1.dropout_masks) == 2
        # train rng advanced, so a fresh draw differs
        t3 = forward(state, self.a, svd=self.svd, hp=hp, mode="train")
        assert not np.array_equal(t1.final_user, t3.final_user)

    def test_mask_count_checked(self):
        hp = HyperParams(embed_dim=6, layers=2, svd_rank=2, dropout_p=0.5, seed=3)
        state = init_model(self.ds, hp)
        with pytest.raises(ValueError, match="replay mask"):
            forward(state, self.a, svd=self.svd, hp=hp, mode="train", masks=[np.ones(1, bool)])

    def test_mode_and_requirement_validation(self):
        with pytest.raises(ValueError, match="mode"):
            forward(self.state, self.a, mode="predict")
        with pytest.raises(ValueError, match="hyperparameters"):
            forward(self.state, self.a, mode="train")
        with pytest.raises(ValueError, match="factorization"):
            forward(self.state, self.a, hp=self.hp, mode="train", with_global_view=True)

    def test_dimension_mismatch_rejected(self):
        other = SparseMatrix.from_pairs(2, 2, [0], [0])
        with pytest.raises(ValueError):
            forward(self.state, other)


class TestPredictScores:
    def test_scores_are_final_dot_products(self):
        ds = tiny_dataset()
        a = normalize_adjacency(build_adjacency(ds))
        state = init_model(ds, HyperParams(embed_dim=5, layers=2, seed=1))
        trace = forward(state, a)
        users = np.array([1, 0])
        got = predict_scores(trace, users)
        want = trace.final_user[users] @ trace.final_item.T
        np.testing.assert_allclose(got, want, atol=0)

    def test_bounds_checked(self):
        ds = tiny_dataset()
        a = normalize_adjacency(build_adjacency(ds))
        state = init_model(ds, HyperParams(embed_dim=5, seed=1))
        trace = forward(state, a)
        with pytest.raises(IndexError):
            predict_scores(trace, [ds.num_users])
