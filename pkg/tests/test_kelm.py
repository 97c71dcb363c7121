import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alf import kelm
from alf.errors import DimensionError, EmptyDatasetError, InvalidArgumentError
from alf.kelm import (KernelSpec, apply_scaler, cross_validate, fit_scaler, invert_scaler, kernel_matrix,
                      predict, predict_normalized, train)


def test_kernel_matrix_examples():
    X = np.random.default_rng(0).random((6, 3))
    K = kernel_matrix(X, X, KernelSpec(2.0))
    assert np.allclose(np.diag(K), 1.0)
    assert np.allclose(K, K.T)
    assert np.all(kernel_matrix(X, X[:2], KernelSpec(0.0)) == 1.0)
    assert kernel_matrix([[0.0]], [[1.0]], KernelSpec(1.0))[0, 0] == pytest.approx(np.exp(-1), abs=1e-12)
    assert np.exp(-1) == pytest.approx(0.367879, abs=1e-6)


def test_kernel_matrix_dimension_mismatch():
    with pytest.raises(DimensionError):
        kernel_matrix(np.zeros((2, 3)), np.zeros((2, 2)), 1.0)


def test_kernel_spec_rejects_negative_gamma():
    with pytest.raises(InvalidArgumentError):
        KernelSpec(-1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 300), st.integers(1, 6), st.floats(0.01, 50.0), st.integers(0, 1000))
def test_kernel_matrix_psd(n, d, gamma, seed):
    X = np.random.default_rng(seed).random((n, d))
    K = kernel_matrix(X, X, gamma)
    np.linalg.cholesky(K + 1e-8 * np.eye(n))


# -- scaling -------------------------------------------------------------------

def test_scaler_examples():
    assert np.allclose(apply_scaler(fit_scaler([[0.0], [1.0]]), [[0.0], [1.0]]), [[0.0], [1.0]])
    assert np.allclose(apply_scaler(fit_scaler([[2.0], [4.0]]), [[2.0], [4.0]]), [[0.0], [1.0]])
    assert np.allclose(apply_scaler(fit_scaler([[3.0], [3.0]]), [[3.0], [3.0]]), [[0.5], [0.5]])


def test_scaler_inverse_and_empty():
    data = np.random.default_rng(1).normal(size=(20, 4))
    s = fit_scaler(data)
    assert np.allclose(invert_scaler(s, apply_scaler(s, data)), data)
    with pytest.raises(EmptyDatasetError):
        fit_scaler(np.zeros((0, 3)))


def test_scaler_clip_and_saturation():
    s = fit_scaler([[0.0], [1.0]])
    assert apply_scaler(s, [[5.0]], clip=(-0.1, 1.1))[0, 0] == pytest.approx(1.1)
    sat = fit_scaler(np.arange(101.0)[:, None], upper_quantile=50)
    assert sat.saturate and sat.max[0] == pytest.approx(50.0)
    assert apply_scaler(sat, [[100.0]])[0, 0] == 1.0


def test_scaler_round_trip_dict():
    s = fit_scaler(np.random.default_rng(2).random((5, 3)), upper_quantile=80)
    t = kelm.Scaler.from_dict(s.to_dict())
    assert np.array_equal(s.min, t.min) and np.array_equal(s.max, t.max) and t.saturate


# -- training ------------------------------------------------------------------

def test_single_point_interpolates():
    m = train([[0.3, 0.7]], [[2.0, -1.0]], 1e8, 1.0)
    # one row: every column is constant and normalizes to 0.5
    assert np.allclose(predict_normalized(m, [0.3, 0.7]), 0.5, atol=1e-6)
    assert np.allclose(predict(m, [0.3, 0.7]), [2.0, -1.0], atol=1e-6)


def test_two_point_closed_form():
    X = np.array([[0.0], [1.0]])
    Y = np.array([[1.0], [3.0]])
    c, gamma = 10.0, 0.5
    m = train(X, Y, c, gamma)
    k = np.exp(-gamma)
    A = np.array([[1 + 1 / c, k], [k, 1 + 1 / c]])
    Yn = np.array([[0.0], [1.0]])
    B = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]]) / np.linalg.det(A) @ Yn
    assert np.allclose(m.weights, B, atol=1e-9)


def test_training_residual_bound():
    rng = np.random.default_rng(3)
    X, Y = rng.random((200, 4)), rng.random((200, 3))
    m = train(X, Y, 1e4, 2.0)
    K = kernel_matrix(m.anchors, m.anchors, m.kernel)
    Yn = apply_scaler(m.out_scaler, Y)
    res = np.abs(K @ m.weights + m.weights / m.c - Yn).max()
    assert res <= 1e-6 * max(1.0, np.abs(Yn).max())


def test_training_deterministic():
    rng = np.random.default_rng(4)
    X, Y = rng.random((50, 3)), rng.random((50, 2))
    a, b = train(X, Y, 100.0, 1.0), train(X, Y, 100.0, 1.0)
    assert np.array_equal(a.weights, b.weights) and np.array_equal(a.anchors, b.anchors)


def test_training_mse_monotone_in_c():
    rng = np.random.default_rng(5)
    X = rng.random((80, 2))
    Y = np.sin(4 * X[:, :1]) + 0.1 * rng.standard_normal((80, 1))
    mse = [np.mean((predict(train(X, Y, c, 4.0), X) - Y) ** 2) for c in (1e-2, 1, 1e2, 1e4, 1e6)]
    assert all(a >= b - 1e-12 for a, b in zip(mse, mse[1:]))


def test_predict_linear_in_weights():
    rng = np.random.default_rng(6)
    X, Y = rng.random((30, 2)), rng.random((30, 2))
    m = train(X, Y, 10.0, 1.0)
    Q = rng.random((7, 2))
    base = predict_normalized(m, Q)
    m.weights = 3.0 * m.weights
    assert np.allclose(predict_normalized(m, Q), 3.0 * base)


def test_far_query_returns_scaler_floor():
    X = np.array([[0.0], [0.1], [0.2]])
    Y = np.array([[1.0], [2.0], [5.0]])
    m = train(X, Y, 10.0, 1e4)
    # input is clipped to 1.1 in scaled units, which is still far from every anchor
    assert np.allclose(predict(m, [50.0]), invert_scaler(m.out_scaler, [[0.0]])[0], atol=1e-9)


def test_train_validation():
    with pytest.raises(EmptyDatasetError):
        train(np.zeros((0, 2)), np.zeros((0, 1)), 1.0, 1.0)
    with pytest.raises(DimensionError):
        train(np.zeros((3, 2)), np.zeros((2, 1)), 1.0, 1.0)
    with pytest.raises(InvalidArgumentError):
        train(np.zeros((3, 2)), np.zeros((3, 1)), 0.0, 1.0)
    m = train(np.random.default_rng(0).random((4, 2)), np.zeros((4, 1)), 1.0, 1.0)
    with pytest.raises(DimensionError):
        predict(m, [1.0, 2.0, 3.0])


def test_batch_prediction_speed():
    import time

    rng = np.random.default_rng(7)
    m = train(rng.random((3000, 50)), rng.random((3000, 50)), 32.0, 0.0625)
    t0 = time.perf_counter()
    predict(m, rng.random((1000, 50)))
    assert time.perf_counter() - t0 < 1.0


# -- cross-validation ------------------------------------------------------------

def test_cv_duplicated_halves():
    rng = np.random.default_rng(8)
    X = rng.random((5, 2))
    Y = np.sin(3 * X[:, :1])
    X2, Y2 = np.vstack([X, X]), np.vstack([Y, Y])
    # fold seed whose permutation puts one copy of every row in each fold
    for seed in range(2000):
        parts = kelm.fold_indices(10, 2, seed)
        if sorted(parts[0] % 5) == list(range(5)):
            break
    else:
        pytest.skip("no balanced permutation found")
    res = cross_validate(X2, Y2, folds=2, c_grid=[100.0], gamma_grid=[2.0], seed=seed)
    m = train(X, Y, 100.0, 2.0)
    Yn = apply_scaler(m.out_scaler, Y)
    train_mse = np.mean((predict_normalized(m, X) - Yn) ** 2)
    assert res.mse[0, 0] == pytest.approx(train_mse, rel=1e-6, abs=1e-12)


def test_cv_linear_target():
    rng = np.random.default_rng(9)
    X = rng.random((120, 3))
    Y = X @ np.array([[1.0], [-2.0], [0.5]])
    res = cross_validate(X, Y, folds=5, seed=0)
    assert res.mse.shape == (len(kelm.DEFAULT_C_GRID), len(kelm.DEFAULT_GAMMA_GRID))
    i, j = kelm.DEFAULT_C_GRID.index(res.c), kelm.DEFAULT_GAMMA_GRID.index(res.gamma)
    assert res.mse[i, j] == res.mse.min() <= 1e-3


def test_cv_single_point_and_ties():
    rng = np.random.default_rng(10)
    X, Y = rng.random((10, 2)), rng.random((10, 1))
    res = cross_validate(X, Y, folds=2, c_grid=[3.0], gamma_grid=[0.7])
    assert (res.c, res.gamma) == (3.0, 0.7)
    # with gamma this large the kernel underflows to the identity: every
    # validation prediction is 0 and all grid points score the same
    line = np.arange(10.0)[:, None]
    tie = cross_validate(line, Y, folds=2, c_grid=[4.0, 2.0], gamma_grid=[1e6, 1e5])
    assert np.all(tie.mse == tie.mse[0, 0])
    assert (tie.c, tie.gamma) == (2.0, 1e5)


def test_cv_errors():
    with pytest.raises(InvalidArgumentError):
        cross_validate(np.zeros((3, 1)), np.zeros((3, 1)), folds=5)
    with pytest.raises(InvalidArgumentError):
        cross_validate(np.zeros((10, 1)), np.zeros((10, 1)), folds=1)
    with pytest.raises(InvalidArgumentError):
        cross_validate(np.zeros((10, 1)), np.zeros((10, 1)), c_grid=[])


# -- serialization -------------------------------------------------------------

def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    m = train(rng.random((40, 3)), rng.random((40, 2)), 7.3, 0.37, input_quantile=90)
    kelm.save_model(m, tmp_path / "m.json")
    back = kelm.load_model(tmp_path / "m.json")
    assert np.array_equal(back.anchors, m.anchors)
    assert np.array_equal(back.weights, m.weights)
    assert back.c == m.c and back.gamma == m.gamma
    Q = rng.random((5, 3))
    assert np.array_equal(predict(back, Q), predict(m, Q))


def test_model_from_dict_rejects_other_kinds():
    with pytest.raises(InvalidArgumentError):
        kelm.model_from_dict({"kind": "gp"})
