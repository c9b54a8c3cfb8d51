"""Tensor engine semantics and finite-difference gradient checks."""

import math

import numpy as np
import pytest

from polymp import tensor as T
from polymp.errors import IndexOutOfRange, NotScalar, ShapeMismatch, TapeConsumed
from polymp.tensor import Tensor


def fd_grad(fn, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of the scalar fn(array) w.r.t. the array."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn(x)
        flat[i] = orig - eps
        fm = fn(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


class TestElementwise:
    def test_relu(self):
        out = T.relu(Tensor([-1.0, 0.0, 2.0]))
        assert out.data.tolist() == [0.0, 0.0, 2.0]

    def test_abs_and_grad_sign(self):
        x = Tensor([-3.0, 4.0], requires_grad=True)
        loss = T.sum_all(T.abs(x))
        T.backward(loss)
        assert loss.data.tolist() == 7.0
        assert x.grad.tolist() == [-1.0, 1.0]

    def test_concat_cols(self):
        a = Tensor(np.ones((3, 2)))
        b = Tensor(np.zeros((3, 4)))
        assert T.concat_cols(a, b).shape == (3, 6)

    def test_add_bias_broadcast_grad(self):
        a = Tensor(np.zeros((4, 3)), requires_grad=True)
        b = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        T.backward(T.sum_all(T.add(a, b)))
        assert np.all(a.grad == 1.0)
        assert b.grad.tolist() == [4.0, 4.0, 4.0]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            T.add(Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 2))))
        with pytest.raises(ShapeMismatch):
            T.sub(Tensor(np.zeros(3)), Tensor(np.zeros(4)))

    def test_mul_rows(self):
        x = Tensor(np.ones((3, 2)), requires_grad=True)
        out = T.mul_rows(x, np.array([1.0, 2.0, 3.0]))
        T.backward(T.sum_all(out))
        assert out.data[:, 0].tolist() == [1.0, 2.0, 3.0]
        assert x.grad[:, 0].tolist() == [1.0, 2.0, 3.0]


class TestMatmul:
    def test_identity(self):
        b = np.arange(6.0).reshape(2, 3)
        out = T.matmul(Tensor(np.eye(2)), Tensor(b))
        assert np.array_equal(out.data, b)

    def test_hand_arithmetic(self):
        out = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        assert out.data.tolist() == [[3.0], [7.0]]

    def test_grad_matches_fd(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        ta = Tensor(a.copy(), requires_grad=True)
        T.backward(T.sum_all(T.matmul(ta, Tensor(b))))
        num = fd_grad(lambda arr: float((arr @ b).sum()), a.copy())
        assert rel_err(ta.grad, num) < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


class TestGatherRows:
    def test_full_copy(self):
        x = Tensor(np.arange(12.0).reshape(4, 3))
        out = T.gather_rows(x, np.arange(4))
        assert np.array_equal(out.data, x.data)

    def test_repeated_index_accumulates(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        out = T.gather_rows(x, np.array([0, 0]))
        T.backward(T.sum_all(out))
        assert x.grad.tolist() == [[2.0, 2.0], [0.0, 0.0]]

    def test_empty_idx(self):
        out = T.gather_rows(Tensor(np.ones((3, 5))), np.array([], dtype=int))
        assert out.shape == (0, 5)

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            T.gather_rows(Tensor(np.ones((3, 2))), np.array([3]))


class TestSegmentReduce:
    def test_sum_all_zero_segments(self):
        x = np.arange(12.0).reshape(4, 3)
        out = T.segment_reduce(Tensor(x), np.zeros(4, int), 1, "sum")
        assert np.array_equal(out.data[0], x.sum(axis=0))

    def test_mean_identity(self):
        x = np.arange(6.0).reshape(3, 2)
        out = T.segment_reduce(Tensor(x), np.arange(3), 3, "mean")
        assert np.array_equal(out.data, x)

    def test_empty_segment_rows_zero(self):
        x = np.ones((2, 2))
        for mode in ("sum", "mean", "max"):
            out = T.segment_reduce(Tensor(x), np.array([0, 2]), 4, mode)
            assert np.all(out.data[1] == 0) and np.all(out.data[3] == 0)

    def test_max_grad_matches_fd(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(6, 3))
        seg = np.array([0, 1, 0, 1, 0, 1])
        tx = Tensor(x.copy(), requires_grad=True)
        T.backward(T.sum_all(T.segment_reduce(tx, seg, 2, "max")))

        def f(arr):
            out = np.full((2, 3), -np.inf)
            for i, s in enumerate(seg):
                out[s] = np.maximum(out[s], arr[i])
            return float(out.sum())

        num = fd_grad(f, x.copy())
        assert rel_err(tx.grad, num) < 1e-5

    def test_max_tie_first_occurrence(self):
        x = Tensor(np.array([[2.0], [2.0], [1.0]]), requires_grad=True)
        T.backward(T.sum_all(T.segment_reduce(x, np.zeros(3, int), 1, "max")))
        assert x.grad.ravel().tolist() == [1.0, 0.0, 0.0]

    def test_sum_bitwise_equal_after_canonical_sort(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(40, 4))
        seg = rng.integers(0, 5, size=40)

        def canonical(xa, sa):
            key = np.lexsort((*xa.T[::-1], sa))
            return xa[key], sa[key]

        xc0, sc0 = canonical(x, seg)
        base = T.segment_reduce(Tensor(xc0), sc0, 5, "sum").data
        for _ in range(5):
            perm = rng.permutation(40)
            xc, sc = canonical(x[perm], seg[perm])
            out = T.segment_reduce(Tensor(xc), sc, 5, "sum").data
            assert np.array_equal(out, base)

    def test_sum_permutation_invariant_at_tolerance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(30, 3))
        seg = rng.integers(0, 4, size=30)
        base = T.segment_reduce(Tensor(x), seg, 4, "sum").data
        for _ in range(5):
            perm = rng.permutation(30)
            out = T.segment_reduce(Tensor(x[perm]), seg[perm], 4, "sum").data
            np.testing.assert_allclose(out, base, atol=1e-9)

    def test_bad_segment_id(self):
        with pytest.raises(IndexOutOfRange):
            T.segment_reduce(Tensor(np.ones((2, 2))), np.array([0, 5]), 2, "sum")


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_ln26(self):
        logits = Tensor(np.zeros((4, 26)))
        loss = T.softmax_cross_entropy(logits, np.array([0, 5, 12, 25]))
        assert math.isclose(float(loss.data), math.log(26), rel_tol=1e-12)

    def test_confident_logit_drives_loss_to_zero(self):
        logits = np.zeros((1, 5))
        logits[0, 2] = 100.0
        loss = T.softmax_cross_entropy(Tensor(logits), np.array([2]))
        assert float(loss.data) < 1e-8

    def test_grad_matches_fd(self):
        rng = np.random.default_rng(4)
        logits = rng.normal(size=(4, 5))
        labels = np.array([0, 3, 2, 4])
        tl = Tensor(logits.copy(), requires_grad=True)
        T.backward(T.softmax_cross_entropy(tl, labels))

        def f(arr):
            z = arr - arr.max(axis=1, keepdims=True)
            lp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            return float(-lp[np.arange(4), labels].mean())

        num = fd_grad(f, logits.copy())
        assert rel_err(tl.grad, num) < 1e-6

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        logits = rng.normal(size=(3, 7))
        labels = np.array([1, 2, 3])
        a = T.softmax_cross_entropy(Tensor(logits), labels)
        b = T.softmax_cross_entropy(Tensor(logits + 13.25), labels)
        assert abs(float(a.data) - float(b.data)) < 1e-12

    def test_label_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            T.softmax_cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))


class TestConv1d:
    def test_k1_is_per_position_matmul(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(2, 5, 3))
        k = rng.normal(size=(1, 3, 4))
        out = T.conv1d(Tensor(x), Tensor(k))
        np.testing.assert_allclose(out.data, x @ k[0], atol=1e-15)

    def test_ones_kernel_impulse(self):
        x = np.zeros((1, 6, 1))
        x[0, 1, 0] = 1.0
        k = np.ones((3, 1, 1))
        out = T.conv1d(Tensor(x), Tensor(k))
        assert out.data[0, :, 0].tolist() == [1.0, 1.0, 1.0, 0.0, 0.0, 0.0]

    def test_grad_matches_fd(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 6, 2))
        k = rng.normal(size=(3, 2, 3))

        def f_x(arr):
            return float(T.conv1d(Tensor(arr), Tensor(k)).data.sum())

        def f_k(arr):
            return float(T.conv1d(Tensor(x), Tensor(arr)).data.sum())

        tx, tk = Tensor(x.copy(), requires_grad=True), Tensor(k.copy(), requires_grad=True)
        T.backward(T.sum_all(T.conv1d(tx, tk)))
        assert rel_err(tx.grad, fd_grad(f_x, x.copy())) < 1e-5
        assert rel_err(tk.grad, fd_grad(f_k, k.copy())) < 1e-5

    def test_even_kernel_rejected(self):
        with pytest.raises(ShapeMismatch):
            T.conv1d(Tensor(np.zeros((1, 4, 2))), Tensor(np.zeros((2, 2, 2))))


class TestBackward:
    def test_sum_grad_is_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        T.backward(T.sum_all(x))
        assert np.all(x.grad == 1.0)

    def test_product_rule_scalars(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        y = Tensor(np.array([4.0]), requires_grad=True)
        T.backward(T.sum_all(T.mul(x, y)))
        assert x.grad.tolist() == [4.0]
        assert y.grad.tolist() == [3.0]

    def test_not_scalar(self):
        x = Tensor(np.zeros((2, 2)), requires_grad=True)
        with pytest.raises(NotScalar):
            T.backward(T.add(x, x))

    def test_tape_consumed(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        loss = T.sum_all(x)
        T.backward(loss)
        with pytest.raises(TapeConsumed):
            T.backward(loss)

    def test_grad_accumulates_over_reuse(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        loss = T.sum_all(T.add(x, x))
        T.backward(loss)
        assert x.grad.tolist() == [2.0]

    def test_no_grad_blocks_taping(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        with T.no_grad():
            out = T.mul_scalar(x, 2.0)
        assert out.requires_grad is False
        assert out._backward is None
