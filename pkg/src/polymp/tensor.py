"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Covers exactly the operations the four architectures need. Tensors hold
float64 numpy arrays; an op records itself on the implicit tape (parent
links plus a backward closure) whenever gradients are enabled and any
input requires them. backward() on a scalar loss walks the recorded graph
once in reverse topological order and accumulates into the .grad of every
leaf that requires gradients.

Segment reductions accumulate in a fixed canonical order (stable sort by
segment id, so rows of one segment keep ascending storage order), which
makes results bit-reproducible for a given input ordering.

Set POLY_NAN_CHECK=1 to assert finiteness after every op.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

from .errors import IndexOutOfRange, NotScalar, ShapeMismatch, TapeConsumed

_grad_enabled = True
_nan_check = os.environ.get("POLY_NAN_CHECK", "") == "1"


def set_nan_check(enabled: bool) -> None:
    global _nan_check
    _nan_check = bool(enabled)


@contextmanager
def no_grad():
    """Disable tape recording inside the block (pure inference / FD probes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_done")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._done = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())


def _check_finite(arr: np.ndarray) -> None:
    if _nan_check and not np.all(np.isfinite(arr)):
        raise FloatingPointError("non-finite value produced by a tensor op")


def _result(data: np.ndarray, parents: tuple, backward) -> Tensor:
    """Wrap op output; record on the tape only when gradients are live."""
    _check_finite(data)
    taped = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=taped)
    if taped:
        out._parents = parents
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def backward(loss: Tensor) -> None:
    """Populate .grad of every requires_grad leaf reachable from `loss`.

    `loss` must be scalar (size 1). Calling twice on the same computation
    raises TapeConsumed; build a fresh forward pass instead.
    """
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar, got shape {loss.data.shape}")
    if loss._done:
        raise TapeConsumed("backward already ran for this computation")
    loss._done = True

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p._backward is not None or p.requires_grad:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is None or node.grad is None:
            continue
        node._backward(node.grad)


# --- elementwise and structural ops -------------------------------------------

def _bias_broadcast_ok(a_shape: tuple, b_shape: tuple) -> bool:
    return len(b_shape) == 1 and len(a_shape) >= 2 and a_shape[-1] == b_shape[0]


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also supports adding a vector along the last axis (bias)."""
    if a.shape == b.shape:
        def back(g):
            if a.requires_grad:
                _accumulate(a, g)
            if b.requires_grad:
                _accumulate(b, g)
        return _result(a.data + b.data, (a, b), back)
    if _bias_broadcast_ok(a.shape, b.shape):
        def back(g):
            if a.requires_grad:
                _accumulate(a, g)
            if b.requires_grad:
                _accumulate(b, g.reshape(-1, g.shape[-1]).sum(axis=0))
        return _result(a.data + b.data, (a, b), back)
    raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"sub: {a.shape} vs {b.shape}")

    def back(g):
        if a.requires_grad:
            _accumulate(a, g)
        if b.requires_grad:
            _accumulate(b, -g)

    return _result(a.data - b.data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}")

    def back(g):
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, g * a.data)

    return _result(a.data * b.data, (a, b), back)


def mul_scalar(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def back(g):
        if a.requires_grad:
            _accumulate(a, g * s)

    return _result(a.data * s, (a,), back)


def mul_rows(a: Tensor, w) -> Tensor:
    """Scale each row of a 2D tensor by a constant weight (not differentiated
    w.r.t. the weights)."""
    w = np.asarray(w, dtype=np.float64)
    if a.data.ndim != 2 or w.shape != (a.shape[0],):
        raise ShapeMismatch(f"mul_rows: {a.shape} vs weights {w.shape}")

    def back(g):
        if a.requires_grad:
            _accumulate(a, g * w[:, None])

    return _result(a.data * w[:, None], (a,), back)


def abs(a: Tensor) -> Tensor:  # noqa: A001 - mirrors the op name used throughout
    """Elementwise absolute value; subgradient 0 at exactly 0."""

    def back(g):
        if a.requires_grad:
            _accumulate(a, g * np.sign(a.data))

    return _result(np.abs(a.data), (a,), back)


def relu(a: Tensor) -> Tensor:
    def back(g):
        if a.requires_grad:
            _accumulate(a, g * (a.data > 0))

    return _result(np.maximum(a.data, 0.0), (a,), back)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"concat_cols: {a.shape} vs {b.shape}")
    ca = a.shape[1]

    def back(g):
        if a.requires_grad:
            _accumulate(a, g[:, :ca])
        if b.requires_grad:
            _accumulate(b, g[:, ca:])

    return _result(np.concatenate([a.data, b.data], axis=1), (a, b), back)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    def back(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(a.data.shape))

    return _result(a.data.reshape(shape), (a,), back)


def sum_all(a: Tensor) -> Tensor:
    def back(g):
        if a.requires_grad:
            _accumulate(a, np.full_like(a.data, float(g)))

    return _result(np.asarray(a.data.sum()), (a,), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")

    def back(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), back)


def gather_rows(x: Tensor, idx) -> Tensor:
    """Select rows by index; backward scatter-adds, so repeated indices
    accumulate gradient."""
    idx = np.asarray(idx, dtype=np.int64)
    if x.data.ndim != 2:
        raise ShapeMismatch(f"gather_rows expects a 2D tensor, got {x.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise IndexOutOfRange(f"row index out of range for {x.shape[0]} rows")

    def back(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx, g)
            _accumulate(x, gx)

    return _result(x.data[idx], (x,), back)


def _segment_order(seg: np.ndarray):
    """Stable sort by segment id; rows within a segment keep storage order."""
    order = np.argsort(seg, kind="stable")
    ss = seg[order]
    new_block = np.concatenate(([True], ss[1:] != ss[:-1]))
    starts = np.flatnonzero(new_block)
    present = ss[starts]
    return order, present, starts, new_block


def segment_reduce(x: Tensor, seg, n_seg: int, mode: str = "sum") -> Tensor:
    """Per-segment reduction of rows: sum, mean or max.

    Empty segments produce zero rows. Rows of each segment are reduced in
    ascending storage order; max backward routes the gradient to the first
    occurrence of the maximum.
    """
    seg = np.asarray(seg, dtype=np.int64)
    if x.data.ndim != 2 or seg.shape != (x.shape[0],):
        raise ShapeMismatch(f"segment_reduce: {x.shape} vs seg {seg.shape}")
    if seg.size and (seg.min() < 0 or seg.max() >= n_seg):
        raise IndexOutOfRange(f"segment id out of range for {n_seg} segments")
    if mode not in ("sum", "mean", "max"):
        raise ValueError(f"unknown mode {mode!r}")

    d = x.shape[1]
    out = np.zeros((n_seg, d), dtype=np.float64)

    if mode in ("sum", "mean"):
        counts = np.bincount(seg, minlength=n_seg).astype(np.float64)
        if seg.size:
            order, present, starts, _ = _segment_order(seg)
            out[present] = np.add.reduceat(x.data[order], starts, axis=0)
        if mode == "mean":
            nz = counts > 0
            out[nz] /= counts[nz, None]

        def back(g):
            if x.requires_grad:
                gx = g[seg]
                if mode == "mean":
                    safe = np.where(counts > 0, counts, 1.0)
                    gx = gx / safe[seg, None]
                _accumulate(x, gx)

        return _result(out, (x,), back)

    # max
    argmax_rows = np.zeros((0, d), dtype=np.int64)
    present = np.zeros(0, dtype=np.int64)
    if seg.size:
        order, present, starts, new_block = _segment_order(seg)
        xs = x.data[order]
        out[present] = np.maximum.reduceat(xs, starts, axis=0)
        if _grad_enabled and x.requires_grad:
            # first occurrence of the per-block max, in storage order
            block_max = out[present][np.cumsum(new_block) - 1]
            pos = np.arange(len(seg), dtype=np.int64)[:, None]
            cand = np.where(xs == block_max, pos, len(seg))
            first = np.minimum.reduceat(cand, starts, axis=0)
            argmax_rows = order[first]

    def back(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            cols = np.broadcast_to(np.arange(d), argmax_rows.shape)
            np.add.at(gx, (argmax_rows, cols), g[present])
            _accumulate(x, gx)

    return _result(out, (x,), back)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label], row-max stabilized."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatch(f"cross entropy: {logits.shape} vs labels {labels.shape}")
    b, c = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise IndexOutOfRange(f"label out of range for {c} classes")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    log_probs = z - np.log(denom)
    loss = -log_probs[np.arange(b), labels].mean()

    def back(g):
        if logits.requires_grad:
            softmax = ez / denom
            softmax[np.arange(b), labels] -= 1.0
            _accumulate(logits, softmax * (float(g) / b))

    return _result(np.asarray(loss), (logits,), back)


def conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """1D cross-correlation along axis 1 with stride 1 and zero same-padding.

    x is (batch, length, in_channels), kernel is (k, in_channels,
    out_channels) with odd k; output is (batch, length, out_channels).
    """
    if x.data.ndim != 3 or kernel.data.ndim != 3:
        raise ShapeMismatch(f"conv1d: x {x.shape}, kernel {kernel.shape}")
    k, d_in, d_out = kernel.shape
    if k % 2 == 0:
        raise ShapeMismatch(f"conv1d kernel size must be odd, got {k}")
    if x.shape[2] != d_in:
        raise ShapeMismatch(f"conv1d channels: x has {x.shape[2]}, kernel wants {d_in}")
    bsz, length, _ = x.shape
    p = k // 2

    xp = np.pad(x.data, ((0, 0), (p, p), (0, 0)))
    out = np.zeros((bsz, length, d_out), dtype=np.float64)
    for t in range(k):
        out += xp[:, t : t + length, :] @ kernel.data[t]

    def back(g):
        if kernel.requires_grad:
            gk = np.empty_like(kernel.data)
            for t in range(k):
                gk[t] = np.tensordot(xp[:, t : t + length, :], g, axes=([0, 1], [0, 1]))
            _accumulate(kernel, gk)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for t in range(k):
                gxp[:, t : t + length, :] += g @ kernel.data[t].T
            _accumulate(x, gxp[:, p : p + length, :])

    return _result(out, (x, kernel), back)
