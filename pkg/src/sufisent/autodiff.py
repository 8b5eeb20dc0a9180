"""Tape-based reverse-mode differentiation over dense float64 arrays.

A :class:`Graph` is an append-only tape of :class:`Node` objects. Every op
records its output node after its inputs, so the tape order is already a
topological order and :meth:`Graph.backward` just walks it in reverse.

Parameter arrays enter the tape through :meth:`Graph.param`, which is
memoised on the identity of the array. Two uses of the same numpy array
(tied LSTM weights) therefore share one leaf and their gradient
contributions are summed there.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Node:
    __slots__ = ("graph", "value", "grad", "op", "inputs", "requires_grad", "_backward")

    def __init__(self, graph, value, op, inputs=(), requires_grad=False, backward=None):
        self.graph = graph
        self.value = value
        self.grad = None
        self.op = op
        self.inputs = inputs
        self.requires_grad = requires_grad
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"


class Graph:
    """Single-writer tape. Build one per forward pass."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Node] = []
        self.check_finite = check_finite
        self._params: dict[int, Node] = {}
        self._param_arrays: dict[int, np.ndarray] = {}
        # per-graph cache for derived nodes (e.g. transposed weights)
        self.memo: dict = {}

    # -- leaves -----------------------------------------------------------
    def const(self, value) -> Node:
        arr = np.asarray(value, dtype=np.float64)
        return self._push(arr, "const", (), False, None)

    def param(self, array: np.ndarray) -> Node:
        """Leaf for a trainable array; the same array always maps to the same node."""
        key = id(array)
        node = self._params.get(key)
        if node is None:
            if array.dtype != np.float64:
                raise TypeError(f"parameters must be float64, got {array.dtype}")
            node = self._push(array, "param", (), True, None)
            self._params[key] = node
            # keep the array alive so its id cannot be recycled while the tape exists
            self._param_arrays[key] = array
        return node

    def grad_of(self, array: np.ndarray) -> np.ndarray:
        node = self._params.get(id(array))
        if node is None:
            raise KeyError("array was never registered on this graph")
        return node.grad if node.grad is not None else np.zeros_like(array)

    # -- plumbing ---------------------------------------------------------
    def _push(self, value, op, inputs, requires_grad, backward) -> Node:
        if self.check_finite and op != "param" and not np.all(np.isfinite(value)):
            raise NonFiniteError(f"non-finite value produced by {op}")
        node = Node(self, value, op, inputs, requires_grad, backward)
        self.nodes.append(node)
        return node

    def backward(self, loss: Node) -> None:
        if loss.value.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.value.shape}")
        for node in self.nodes:
            node.grad = None
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)


def _op(value, op: str, inputs: Sequence[Node], backward: Callable | None) -> Node:
    needs = False
    for x in inputs:
        if x.requires_grad:
            needs = True
            break
    return inputs[0].graph._push(value, op, tuple(inputs), needs, backward if needs else None)


def _acc(node: Node, grad: np.ndarray) -> None:
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.array(grad, dtype=np.float64, copy=True)
    else:
        node.grad += grad


# -- linear algebra ---------------------------------------------------------
def _rows_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a @ b whose rows do not depend on how many rows ``a`` has.

    BLAS takes a matrix-vector path for a single row that rounds differently
    from the matrix-matrix path, so one row is evaluated as two copies.
    Callers pass a C-ordered ``b``; a transposed view also breaks row invariance.
    """
    if a.shape[0] == 1:
        return (np.concatenate([a, a]) @ b)[:1]
    return a @ b


def matmul(a: Node, b: Node) -> Node:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def backward(gout):
        _acc(a, gout @ b.value.T)
        _acc(b, a.value.T @ gout)

    return _op(_rows_dot(a.value, b.value), "matmul", (a, b), backward)


def transpose(a: Node) -> Node:
    if a.value.ndim != 2:
        raise ShapeError(f"transpose needs a matrix, got {a.shape}")
    # a C-ordered copy keeps later products independent of the row count, see _rows_dot
    return _op(np.ascontiguousarray(a.value.T), "transpose", (a,), lambda gout: _acc(a, gout.T))


def add_bias(x: Node, b: Node) -> Node:
    """Matrix plus row vector, the only broadcast the library supports."""
    if b.value.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"bias shape {b.shape} does not match {x.shape}")

    def backward(gout):
        _acc(x, gout)
        _acc(b, gout.sum(axis=0) if gout.ndim == 2 else gout)

    return _op(x.value + b.value, "add_bias", (x, b), backward)


def linear(x: Node, w: Node, b: Node) -> Node:
    return add_bias(matmul(x, w), b)


# -- elementwise ------------------------------------------------------------
def _same_shape(kind, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Node, b: Node) -> Node:
    _same_shape("add", a, b)

    def backward(gout):
        _acc(a, gout)
        _acc(b, gout)

    return _op(a.value + b.value, "add", (a, b), backward)


def sub(a: Node, b: Node) -> Node:
    _same_shape("sub", a, b)

    def backward(gout):
        _acc(a, gout)
        _acc(b, -gout)

    return _op(a.value - b.value, "sub", (a, b), backward)


def mul(a: Node, b: Node) -> Node:
    _same_shape("mul", a, b)

    def backward(gout):
        _acc(a, gout * b.value)
        _acc(b, gout * a.value)

    return _op(a.value * b.value, "mul", (a, b), backward)


def maximum(a: Node, b: Node) -> Node:
    """Elementwise max; on exact ties the gradient is split evenly."""
    _same_shape("max", a, b)
    av, bv = a.value, b.value
    share_a = np.where(av > bv, 1.0, np.where(av < bv, 0.0, 0.5))

    def backward(gout):
        _acc(a, gout * share_a)
        _acc(b, gout * (1.0 - share_a))

    return _op(np.maximum(av, bv), "max", (a, b), backward)


def sigmoid(x: Node) -> Node:
    # tanh form never overflows, unlike 1 / (1 + exp(-x))
    out = 0.5 * (1.0 + np.tanh(0.5 * x.value))

    def backward(gout):
        _acc(x, gout * out * (1.0 - out))

    return _op(out, "sigmoid", (x,), backward)


def tanh(x: Node) -> Node:
    out = np.tanh(x.value)

    def backward(gout):
        _acc(x, gout * (1.0 - out * out))

    return _op(out, "tanh", (x,), backward)


def absolute(x: Node) -> Node:
    """|x| with subgradient 0 at 0."""
    sign = np.sign(x.value)
    return _op(np.abs(x.value), "abs", (x,), lambda gout: _acc(x, gout * sign))


def ewise_unary(kind: str, x: Node) -> Node:
    try:
        fn = {"sigmoid": sigmoid, "tanh": tanh, "abs": absolute}[kind]
    except KeyError:
        raise ValueError(f"unknown unary op {kind!r}") from None
    return fn(x)


def ewise_binary(kind: str, a: Node, b: Node) -> Node:
    try:
        fn = {"add": add, "mul": mul, "max": maximum}[kind]
    except KeyError:
        raise ValueError(f"unknown binary op {kind!r}") from None
    return fn(a, b)


def select_rows(mask: np.ndarray, a: Node, b: Node) -> Node:
    """Row r of the result is a[r] where mask[r] else b[r]. mask is a constant."""
    _same_shape("select_rows", a, b)
    m = np.asarray(mask, dtype=bool).reshape(-1, *([1] * (a.value.ndim - 1)))
    mf = m.astype(np.float64)

    def backward(gout):
        _acc(a, gout * mf)
        _acc(b, gout * (1.0 - mf))

    return _op(np.where(m, a.value, b.value), "select_rows", (a, b), backward)


# -- structural -------------------------------------------------------------
def concat(parts: Sequence[Node]) -> Node:
    """Join along the last axis. For vectors this is plain concatenation."""
    if not parts:
        raise ShapeError("concat needs at least one part")
    if len(parts) == 1:
        return parts[0]
    lead = parts[0].shape[:-1]
    for p in parts:
        if p.shape[:-1] != lead:
            raise ShapeError(f"concat: leading dims differ, {[q.shape for q in parts]}")
    widths = [p.shape[-1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def backward(gout):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            _acc(p, gout[..., lo:hi])

    return _op(np.concatenate([p.value for p in parts], axis=-1), "concat", parts, backward)


def vstack(parts: Sequence[Node]) -> Node:
    if not parts:
        raise ShapeError("vstack needs at least one part")
    heights = [p.shape[0] for p in parts]
    bounds = np.cumsum([0] + heights)

    def backward(gout):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            _acc(p, gout[lo:hi])

    return _op(np.concatenate([p.value for p in parts], axis=0), "vstack", parts, backward)


def reshape(x: Node, shape) -> Node:
    return _op(x.value.reshape(shape), "reshape", (x,), lambda gout: _acc(x, gout.reshape(x.shape)))


def slice_cols(x: Node, start: int, stop: int) -> Node:
    def backward(gout):
        if not x.requires_grad:
            return
        full = np.zeros_like(x.value)
        full[..., start:stop] = gout
        _acc(x, full)

    return _op(x.value[..., start:stop], "slice_cols", (x,), backward)


def take_rows(x: Node, index) -> Node:
    """Gather rows by integer index; repeated rows scatter-add on the way back."""
    idx = np.asarray(index, dtype=np.intp)

    def backward(gout):
        if not x.requires_grad:
            return
        full = np.zeros_like(x.value)
        np.add.at(full, idx, gout)
        _acc(x, full)

    return _op(x.value[idx], "take_rows", (x,), backward)


def time_max_pool(h: Node, mask) -> Node:
    """Max over time of masked rows.

    ``h`` is ``(n, d)`` with a length-``n`` mask (returns a ``d`` vector) or the
    time-major batch layout ``(n*B, d)`` with an ``(n, B)`` mask (returns
    ``(B, d)``). Ties go to the lowest time index.
    """
    m = np.asarray(mask, dtype=bool)
    single = m.ndim == 1
    if single:
        m = m[:, None]
    n, batch = m.shape
    if h.value.ndim != 2 or h.shape[0] != n * batch:
        raise ShapeError(f"time_max_pool: states {h.shape} do not match mask {m.shape}")
    if not m.any(axis=0).all():
        raise ValueError("time_max_pool: every sequence needs at least one unmasked step")
    d = h.shape[1]
    v = h.value.reshape(n, batch, d)
    masked = np.where(m[:, :, None], v, -np.inf)
    arg = masked.argmax(axis=0)  # first occurrence on ties
    bi, di = np.meshgrid(np.arange(batch), np.arange(d), indexing="ij")
    out = v[arg, bi, di]
    flat_rows = arg * batch + bi

    def backward(gout):
        if not h.requires_grad:
            return
        full = np.zeros_like(h.value)
        np.add.at(full, (flat_rows, di), gout.reshape(batch, d))
        _acc(h, full)

    return _op(out[0] if single else out, "time_max_pool", (h,), backward)


# -- reductions and loss ----------------------------------------------------
def scale(x: Node, c: float) -> Node:
    return _op(x.value * c, "scale", (x,), lambda gout: _acc(x, gout * c))


def total(x: Node) -> Node:
    return _op(np.asarray(x.value.sum()), "sum", (x,), lambda gout: _acc(x, np.broadcast_to(gout, x.shape)))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Node, labels) -> Node:
    """Mean of -log softmax(logits)[label]. A 1-D logits vector takes one label."""
    z = logits.value
    single = z.ndim == 1
    zz = z[None, :] if single else z
    lab = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    k = zz.shape[1]
    if lab.shape != (zz.shape[0],):
        raise ShapeError(f"labels {lab.shape} do not match logits {z.shape}")
    if lab.min(initial=0) < 0 or lab.max(initial=0) >= k:
        raise ValueError(f"label out of range for {k} classes: {lab.tolist()}")
    shifted = zz - zz.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(zz.shape[0])
    losses = logsum - shifted[rows, lab]
    probs = np.exp(shifted - logsum[:, None])
    count = zz.shape[0]

    def backward(gout):
        g = probs.copy()
        g[rows, lab] -= 1.0
        g *= float(gout) / count
        _acc(logits, g[0] if single else g)

    return _op(np.asarray(losses.mean()), "softmax_xent", (logits,), backward)


# -- fused recurrent cell ---------------------------------------------------
def lstm_cell(xproj: Node, hc_prev: Node, wh_t: Node) -> Node:
    """Fused LSTM step on the packed state [h | c].

    ``xproj`` is the (B, 4d) input projection with bias already added,
    ``hc_prev`` the (B, 2d) previous packed state and ``wh_t`` the (d, 4d)
    transposed recurrent matrix. Gate blocks are input, forget, candidate,
    output. Returns the new packed state.
    """
    d = wh_t.shape[0]
    if xproj.shape[-1] != 4 * d or hc_prev.shape != (xproj.shape[0], 2 * d) or wh_t.shape != (d, 4 * d):
        raise ShapeError(f"lstm_cell: xproj {xproj.shape}, state {hc_prev.shape}, Wh^T {wh_t.shape}")
    h_prev = hc_prev.value[:, :d]
    c_prev = hc_prev.value[:, d:]
    pre = xproj.value + _rows_dot(h_prev, wh_t.value)
    gates = 0.5 * (1.0 + np.tanh(0.5 * pre))
    i, f, o = gates[:, :d], gates[:, d:2 * d], gates[:, 3 * d:]
    g = np.tanh(pre[:, 2 * d:3 * d])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    out = np.concatenate([o * tc, c], axis=1)

    def backward(gout):
        dh, dc = gout[:, :d], gout[:, d:]
        dc = dc + dh * o * (1.0 - tc * tc)
        dpre = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - g * g),
            dh * tc * o * (1.0 - o),
        ], axis=1)
        _acc(xproj, dpre)
        _acc(wh_t, h_prev.T @ dpre)
        if hc_prev.requires_grad:
            _acc(hc_prev, np.concatenate([dpre @ wh_t.value.T, dc * f], axis=1))

    return _op(out, "lstm_cell", (xproj, hc_prev, wh_t), backward)
