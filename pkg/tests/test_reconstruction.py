import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from takensda import reconstruction as recon


def linear_dataset(n=600, d_in=8, d_out=3, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d_out, d_in)) * 0.5
    x = rng.standard_normal((n, d_in))
    y = x @ A.T + noise * rng.standard_normal((n, d_out))
    return recon.ReconstructionDataset(x, y), A


class TestRegressor:
    def test_learns_linear_map(self):
        data, _ = linear_dataset()
        spec = recon.RegressorSpec(
            hidden=(64,), epochs=5000, batch_size=600, learning_rate=2e-2, lr_decay=3.0, seed=1
        )
        trained = recon.train_regressor(data, spec)
        assert trained.final_loss < 1e-4

    def test_constant_dataset(self):
        x0 = np.full((50, 4), 0.3)
        y0 = np.tile([1.0, -2.0], (50, 1))
        data = recon.ReconstructionDataset(x0, y0)
        trained = recon.train_regressor(data, recon.RegressorSpec(hidden=(16,), epochs=200, seed=0))
        assert trained.final_loss < 1e-6
        assert np.allclose(recon.predict_regressor(trained, x0[0]), y0[0], atol=1e-3)

    def test_heldout_linear_prediction(self):
        data, A = linear_dataset(seed=2)
        spec = recon.RegressorSpec(
            hidden=(64,), epochs=2000, batch_size=600, learning_rate=2e-2, lr_decay=3.0, seed=3
        )
        trained = recon.train_regressor(data, spec)
        rng = np.random.default_rng(7)
        x_new = rng.standard_normal((100, 8))
        pred = recon.predict_regressor(trained, x_new)
        truth = x_new @ A.T
        rel = np.linalg.norm(pred - truth) / np.linalg.norm(truth)
        assert rel < 1e-2

    def test_deterministic_given_seed(self):
        data, _ = linear_dataset(n=100)
        spec = recon.RegressorSpec(hidden=(16,), epochs=30, seed=11)
        a = recon.train_regressor(data, spec)
        b = recon.train_regressor(data, spec)
        x = np.random.default_rng(0).standard_normal(8)
        assert np.array_equal(recon.predict_regressor(a, x), recon.predict_regressor(b, x))

    def test_full_batch_descent_is_monotone(self):
        data, _ = linear_dataset(n=200, seed=4)
        spec = recon.RegressorSpec(
            hidden=(32,), epochs=150, optimizer="gd", learning_rate=1e-2, lr_decay=0.0, seed=5
        )
        trained = recon.train_regressor(data, spec)
        diffs = np.diff(trained.loss_history)
        assert np.all(diffs <= 1e-12)

    def test_untrained_prediction_rejected(self):
        with pytest.raises(recon.UntrainedError):
            recon.predict_regressor(recon.RegressorSpec(hidden=(8,)), np.zeros(4))

    def test_output_finite(self):
        data, _ = linear_dataset(n=50)
        trained = recon.train_regressor(data, recon.RegressorSpec(hidden=(8,), epochs=5, seed=0))
        out = recon.predict_regressor(trained, np.zeros(8))
        assert np.all(np.isfinite(out))


def small_library(seed=0, size=50, dim=3, vdim=2):
    rng = np.random.default_rng(seed)
    return recon.AnalogLibrary(
        rng.standard_normal((size, dim)), rng.standard_normal((size, vdim)), "state"
    )


class TestKnnQuery:
    def test_exact_match(self):
        lib = small_library()
        triples = recon.knn_query(lib, lib.keys[17], 1)
        assert triples[0][2] == 0.0
        assert np.array_equal(triples[0][1], lib.values[17])

    def test_collinear_points(self):
        lib = recon.AnalogLibrary(
            np.array([[0.0], [1.0], [2.0]]), np.array([[0.0], [1.0], [2.0]]), "successor"
        )
        triples = recon.knn_query(lib, np.array([0.9]), 2)
        assert triples[0][0][0] == 1.0
        assert triples[1][0][0] == 0.0

    def test_ties_break_by_insertion_index(self):
        keys = np.array([[1.0], [-1.0], [1.0]])
        lib = recon.AnalogLibrary(keys, np.array([[10.0], [20.0], [30.0]]), "state")
        idx, dist = recon.knn_query_batch(lib, np.array([[0.0]]), 3)
        assert np.array_equal(idx[0], [0, 1, 2])

    def test_too_many_neighbors(self):
        with pytest.raises(ValueError):
            recon.knn_query(small_library(size=5), np.zeros(3), 6)


@given(seed=st.integers(0, 5000), size=st.integers(2, 60), k=st.integers(1, 10))
@settings(max_examples=150, deadline=None)
def test_knn_matches_exhaustive_scan(seed, size, k):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 5))
    lib = recon.AnalogLibrary(
        rng.standard_normal((size, dim)), rng.standard_normal((size, 1)), "state"
    )
    k = min(k, size)
    q = rng.standard_normal(dim)
    idx, dist = recon.knn_query_batch(lib, q[None, :], k)
    d_all = np.sqrt(np.sum((lib.keys - q) ** 2, axis=1))
    order = np.lexsort((np.arange(size), d_all))[:k]
    assert np.array_equal(idx[0], order)
    assert np.allclose(dist[0], d_all[order])


class TestKernelWeights:
    def test_equidistant_uniform(self):
        nbrs = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        w = recon.kernel_weights(np.zeros(2), nbrs, 2.0)
        assert np.allclose(w, 0.25)

    def test_tiny_scale_is_uniform(self):
        rng = np.random.default_rng(1)
        w = recon.kernel_weights(rng.standard_normal(3), rng.standard_normal((7, 3)), 1e-12)
        assert np.allclose(w, 1.0 / 7, atol=1e-9)

    def test_two_point_values(self):
        nbrs = np.array([[0.0], [1.0]])
        w = recon.kernel_weights(np.zeros(1), nbrs, 1.0)
        assert w[0] == pytest.approx(0.7310585786300049, abs=1e-12)
        assert w[1] == pytest.approx(0.2689414213699951, abs=1e-12)

    def test_underflow_falls_back_to_uniform(self):
        nbrs = np.array([[100.0], [200.0]])
        with pytest.warns(recon.KernelUnderflowWarning):
            w = recon.kernel_weights(np.zeros(1), nbrs, 1.0)
        assert np.allclose(w, 0.5)

    def test_sum_to_one(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            w = recon.kernel_weights(
                rng.standard_normal(2), rng.standard_normal((5, 2)), float(10 ** rng.uniform(-2, 2))
            )
            assert np.all(w > 0)
            assert abs(w.sum() - 1.0) < 1e-12


class TestLocallyConstant:
    def test_single_neighbor_returns_its_value(self):
        lib = small_library(seed=3)
        out = recon.lc_apply(lib, lib.keys[4] + 0.01, 1)
        assert np.array_equal(out, lib.values[recon.knn_query_batch(lib, (lib.keys[4] + 0.01)[None], 1)[0][0, 0]])

    def test_uniform_weights_are_plain_average(self):
        lib = small_library(seed=4)
        q = np.zeros(3)
        out = recon.lc_apply(lib, q, 5, uniform=True)
        idx, _ = recon.knn_query_batch(lib, q[None], 5)
        assert np.allclose(out, lib.values[idx[0]].mean(axis=0))

    def test_kernel_concentration_on_exact_match(self):
        lib = small_library(seed=5)
        out = recon.lc_apply(lib, lib.keys[9], 3, kernel_scale=1e3)
        rel = np.linalg.norm(out - lib.values[9]) / np.linalg.norm(lib.values[9])
        assert rel < 1e-3

    def test_convex_hull(self):
        rng = np.random.default_rng(6)
        lib = small_library(seed=6)
        for _ in range(50):
            q = rng.standard_normal(3)
            out = recon.lc_apply(lib, q, 7)
            idx, _ = recon.knn_query_batch(lib, q[None], 7)
            vals = lib.values[idx[0]]
            assert np.all(out >= vals.min(axis=0) - 1e-12)
            assert np.all(out <= vals.max(axis=0) + 1e-12)


class TestLocallyLinear:
    def test_exact_affine_data(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((2, 3))
        b = rng.standard_normal(2)
        keys = rng.standard_normal((30, 3))
        lib = recon.AnalogLibrary(keys, keys @ A.T + b, "state")
        q = rng.standard_normal(3)
        out = recon.ll_apply(lib, q, 12)
        assert np.linalg.norm(out - (A @ q + b)) < 1e-8

    def test_constant_values(self):
        rng = np.random.default_rng(8)
        lib = recon.AnalogLibrary(
            rng.standard_normal((20, 3)), np.tile([3.0, -1.0], (20, 1)), "state"
        )
        out = recon.ll_apply(lib, rng.standard_normal(3), 8)
        assert np.allclose(out, [3.0, -1.0], atol=1e-9)

    def test_hand_regression(self):
        lib = recon.AnalogLibrary(
            np.array([[0.0], [1.0], [2.0]]), np.array([[0.0], [2.0], [4.0]]), "successor"
        )
        out = recon.ll_apply(lib, np.array([1.5]), 3, uniform=True)
        assert out[0] == pytest.approx(3.0, abs=1e-9)

    def test_underdetermined_warns(self):
        lib = small_library(size=4, dim=3)
        with pytest.warns(UserWarning):
            recon.ll_apply(lib, np.zeros(3), 3)

    def test_degenerate_falls_back_to_constant(self):
        # All neighbors at one key: no linear structure to fit.
        keys = np.tile([1.0, 1.0], (6, 1))
        vals = np.tile([2.0], (6, 1))
        lib = recon.AnalogLibrary(keys, vals, "state")
        out = recon.ll_apply(lib, np.array([0.0, 0.0]), 6)
        assert out[0] == pytest.approx(2.0)

    def test_batch_matches_single(self):
        lib = small_library(seed=9, size=40)
        rng = np.random.default_rng(10)
        qs = rng.standard_normal((5, 3))
        batch = recon.ll_apply_batch(lib, qs, 10)
        for i in range(5):
            assert np.allclose(batch[i], recon.ll_apply(lib, qs[i], 10), atol=1e-12)
