"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Expressions are immutable DAGs of primitive operations over leaves
(:class:`Parameter` for trainable arrays, :class:`Constant` for data).
``evaluate`` recomputes the forward pass from current leaf values, so a graph
built once can be re-evaluated after an optimizer step or a finite-difference
perturbation. Every operation validates shapes at construction time and
checks its output for NaN/Inf at evaluation time.

Index-heavy kernels (segment sums, row gathers, fixed sparse matmul) are
backed by scipy CSR matrices prebuilt per node; everything else is plain
numpy. All arrays are float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, NumericError, ShapeError

Array = np.ndarray


def as_array(x, *, op: str = "constant") -> Array:
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{op}: non-finite input value")
    # ascontiguousarray promotes 0-d to 1-d; keep scalars 0-d
    return a if a.ndim == 0 else np.ascontiguousarray(a)


class Expr:
    """A node in the expression DAG.

    ``_forward`` maps parent values to this node's value; ``_backward`` maps
    the incoming gradient to per-parent gradients (``None`` where the caller
    marked a parent as not needed).
    """

    __slots__ = ("op", "parents", "shape", "_forward", "_backward")

    def __init__(self, op, parents, shape, forward, backward=None):
        self.op: str = op
        self.parents: tuple[Expr, ...] = tuple(parents)
        self.shape: tuple[int, ...] = tuple(shape)
        self._forward: Callable[..., Array] = forward
        self._backward = backward

    def __repr__(self):
        return f"Expr({self.op}, shape={self.shape})"


class Leaf(Expr):
    """A leaf holding a concrete array value."""

    __slots__ = ("_value", "trainable", "name")

    def __init__(self, value, trainable: bool, name: str = ""):
        v = as_array(value)
        super().__init__("leaf", (), v.shape, None)
        self._value = v
        self.trainable = trainable
        self.name = name

    @property
    def value(self) -> Array:
        return self._value

    @value.setter
    def value(self, new) -> None:
        v = as_array(new)
        if v.shape != self.shape:
            raise ShapeError(f"leaf {self.name or id(self)}: cannot change shape "
                             f"{self.shape} -> {v.shape}")
        self._value = v

    def __repr__(self):
        kind = "Parameter" if self.trainable else "Constant"
        return f"{kind}({self.name or hex(id(self))}, shape={self.shape})"


class Parameter(Leaf):
    def __init__(self, value, name: str = ""):
        super().__init__(value, trainable=True, name=name)


class Constant(Leaf):
    def __init__(self, value, name: str = ""):
        super().__init__(value, trainable=False, name=name)


def _wrap(x) -> Expr:
    return x if isinstance(x, Expr) else Constant(x)


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Expr, b: Expr) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as err:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from err


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Expr:
    a, b = _wrap(a), _wrap(b)
    shape = _broadcast_shape("add", a, b)

    def backward(g, pv, out, need):
        return (_unbroadcast(g, a.shape) if need[0] else None,
                _unbroadcast(g, b.shape) if need[1] else None)

    return Expr("add", (a, b), shape, lambda x, y: x + y, backward)


def mul(a, b) -> Expr:
    """Elementwise multiply with numpy broadcasting.

    Covers scalar scaling (() against anything) and the row-wise broadcast of
    a prompt vector (d,) against an embedding matrix (n, d).
    """
    a, b = _wrap(a), _wrap(b)
    shape = _broadcast_shape("mul", a, b)

    def backward(g, pv, out, need):
        x, y = pv
        return (_unbroadcast(g * y, a.shape) if need[0] else None,
                _unbroadcast(g * x, b.shape) if need[1] else None)

    return Expr("mul", (a, b), shape, lambda x, y: x * y, backward)


def div(a, b) -> Expr:
    a, b = _wrap(a), _wrap(b)
    shape = _broadcast_shape("div", a, b)

    def backward(g, pv, out, need):
        x, y = pv
        ga = _unbroadcast(g / y, a.shape) if need[0] else None
        gb = _unbroadcast(-g * x / (y * y), b.shape) if need[1] else None
        return ga, gb

    return Expr("div", (a, b), shape, lambda x, y: x / y, backward)


def scale(a, c: float) -> Expr:
    """Multiply by a python float (non-differentiable scalar)."""
    a = _wrap(a)
    c = float(c)

    def backward(g, pv, out, need):
        return (g * c if need[0] else None,)

    return Expr("scale", (a,), a.shape, lambda x: x * c, backward)


def neg(a) -> Expr:
    return scale(a, -1.0)


def matmul(a, b) -> Expr:
    a, b = _wrap(a), _wrap(b)
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")

    def backward(g, pv, out, need):
        x, y = pv
        return (g @ y.T if need[0] else None,
                x.T @ g if need[1] else None)

    return Expr("matmul", (a, b), (a.shape[0], b.shape[1]),
                lambda x, y: x @ y, backward)


def relu(a) -> Expr:
    a = _wrap(a)

    def backward(g, pv, out, need):
        # subgradient at exactly 0 is 0
        return (g * (pv[0] > 0.0) if need[0] else None,)

    return Expr("relu", (a,), a.shape, lambda x: np.maximum(x, 0.0), backward)


def exp(a) -> Expr:
    a = _wrap(a)

    def backward(g, pv, out, need):
        return (g * out if need[0] else None,)

    return Expr("exp", (a,), a.shape, np.exp, backward)


def log(a) -> Expr:
    a = _wrap(a)

    def backward(g, pv, out, need):
        return (g / pv[0] if need[0] else None,)

    return Expr("log", (a,), a.shape, np.log, backward)


def sum_all(a) -> Expr:
    a = _wrap(a)

    def backward(g, pv, out, need):
        return (np.full(a.shape, float(g)) if need[0] else None,)

    return Expr("sum", (a,), (), lambda x: np.asarray(x.sum()), backward)


def mean_all(a) -> Expr:
    a = _wrap(a)
    n = int(np.prod(a.shape)) if a.shape else 1

    def backward(g, pv, out, need):
        return (np.full(a.shape, float(g) / n) if need[0] else None,)

    return Expr("mean", (a,), (), lambda x: np.asarray(x.mean()), backward)


def sum_rows(a) -> Expr:
    """Sum a (n, d) matrix over axis 0, yielding a (d,) row."""
    a = _wrap(a)
    if len(a.shape) != 2:
        raise ShapeError(f"sum_rows: expects a matrix, got {a.shape}")

    def backward(g, pv, out, need):
        return (np.broadcast_to(g, a.shape).copy() if need[0] else None,)

    return Expr("sum_rows", (a,), (a.shape[1],), lambda x: x.sum(axis=0), backward)


def row_norm(a) -> Expr:
    """Row-wise L2 norm of a (n, d) matrix, yielding (n,)."""
    a = _wrap(a)
    if len(a.shape) != 2:
        raise ShapeError(f"row_norm: expects a matrix, got {a.shape}")

    def backward(g, pv, out, need):
        if not need[0]:
            return (None,)
        return (g[:, None] * pv[0] / (out + 1e-12)[:, None],)

    return Expr("row_norm", (a,), (a.shape[0],),
                lambda x: np.sqrt(np.einsum("ij,ij->i", x, x)), backward)


def cosine_rows(a, b) -> Expr:
    """Cosine similarity between corresponding rows of two (n, d) matrices.

    Each norm is guarded with +1e-12 so all-zero rows yield similarity 0
    instead of NaN.
    """
    a, b = _wrap(a), _wrap(b)
    if len(a.shape) != 2 or a.shape != b.shape:
        raise ShapeError(f"cosine_rows: expects equal-shape matrices, got "
                         f"{a.shape} and {b.shape}")

    def forward(x, y):
        dot = np.einsum("ij,ij->i", x, y)
        nx = np.sqrt(np.einsum("ij,ij->i", x, x)) + 1e-12
        ny = np.sqrt(np.einsum("ij,ij->i", y, y)) + 1e-12
        return dot / (nx * ny)

    def backward(g, pv, out, need):
        x, y = pv
        dot = np.einsum("ij,ij->i", x, y)
        rx = np.sqrt(np.einsum("ij,ij->i", x, x))
        ry = np.sqrt(np.einsum("ij,ij->i", y, y))
        nx, ny = rx + 1e-12, ry + 1e-12
        inv = 1.0 / (nx * ny)
        gx = gy = None
        if need[0]:
            gx = g[:, None] * (y * inv[:, None]
                               - (dot * inv * inv * ny / (rx + 1e-12))[:, None] * x)
        if need[1]:
            gy = g[:, None] * (x * inv[:, None]
                               - (dot * inv * inv * nx / (ry + 1e-12))[:, None] * y)
        return gx, gy

    return Expr("cosine_rows", (a, b), (a.shape[0],), forward, backward)


def gather_rows(a, index) -> Expr:
    """Select rows ``a[index]`` from a (n, d) matrix (or (n,) vector)."""
    a = _wrap(a)
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("gather_rows: index must be 1-D")
    if len(a.shape) not in (1, 2):
        raise ShapeError(f"gather_rows: expects vector or matrix, got {a.shape}")
    n = a.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"gather_rows: index out of range for {n} rows")
    # scatter-add for the backward pass, prebuilt as CSR transpose
    scatter = sp.csr_matrix(
        (np.ones(idx.size), (idx, np.arange(idx.size))), shape=(n, idx.size))
    out_shape = (idx.size,) + a.shape[1:]

    def backward(g, pv, out, need):
        return (scatter @ g if need[0] else None,)

    return Expr("gather_rows", (a,), out_shape, lambda x: x[idx], backward)


def segment_sum(a, segment_ids, num_segments: int) -> Expr:
    """Sum rows of ``a`` into ``num_segments`` groups given per-row ids.

    Accepts a (n, d) matrix or (n,) vector; permutation of rows within a
    group does not change the result.
    """
    a = _wrap(a)
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError("segment_sum: segment_ids must be 1-D")
    if len(a.shape) not in (1, 2) or a.shape[0] != ids.size:
        raise ShapeError(f"segment_sum: ids length {ids.size} does not match "
                         f"input shape {a.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= num_segments):
        raise ShapeError("segment_sum: segment id out of range")
    pool = sp.csr_matrix(
        (np.ones(ids.size), (ids, np.arange(ids.size))),
        shape=(num_segments, ids.size))
    out_shape = (num_segments,) + a.shape[1:]

    def backward(g, pv, out, need):
        return (g[ids] if need[0] else None,)

    return Expr("segment_sum", (a,), out_shape, lambda x: pool @ x, backward)


def spmm(adjacency: sp.spmatrix, a) -> Expr:
    """Multiply a fixed sparse matrix (e.g. an adjacency) with a dense matrix.

    The sparse operand is a non-differentiable constant of the node.
    """
    a = _wrap(a)
    A = adjacency.tocsr().astype(np.float64)
    if len(a.shape) != 2 or A.shape[1] != a.shape[0]:
        raise ShapeError(f"spmm: cannot multiply {A.shape} sparse by {a.shape}")
    A_t = A.T.tocsr()

    def backward(g, pv, out, need):
        return (A_t @ g if need[0] else None,)

    return Expr("spmm", (a,), (A.shape[0], a.shape[1]), lambda x: A @ x, backward)


def stack_rows(rows: Sequence) -> Expr:
    """Stack m equal-width (d,) rows into an (m, d) matrix."""
    rows = [_wrap(r) for r in rows]
    if not rows:
        raise ShapeError("stack_rows: need at least one row")
    d = rows[0].shape
    if len(d) != 1 or any(r.shape != d for r in rows):
        raise ShapeError("stack_rows: all rows must be 1-D with equal width")

    def backward(g, pv, out, need):
        return tuple(g[i] if need[i] else None for i in range(len(rows)))

    return Expr("stack_rows", rows, (len(rows), d[0]),
                lambda *vals: np.stack(vals, axis=0), backward)


def weighted_sum(mats: Sequence, weights: Sequence) -> Expr:
    """Sum of equal-shape matrices scaled by scalar expressions."""
    mats = [_wrap(m) for m in mats]
    weights = [_wrap(w) for w in weights]
    if len(mats) != len(weights) or not mats:
        raise ShapeError("weighted_sum: needs matching non-empty mats/weights")
    for w in weights:
        if w.shape != ():
            raise ShapeError("weighted_sum: weights must be scalars")
    out = mul(weights[0], mats[0])
    for w, m in zip(weights[1:], mats[1:]):
        out = add(out, mul(w, m))
    return out


# ---------------------------------------------------------------------------
# evaluation and differentiation
# ---------------------------------------------------------------------------

def _topo_order(root: Expr) -> list[Expr]:
    """Parents-before-children order, iterative to handle deep graphs."""
    order: list[Expr] = []
    seen: set[int] = set()
    stack: list[tuple[Expr, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _forward_values(order: Iterable[Expr]) -> dict[int, Array]:
    values: dict[int, Array] = {}
    for node in order:
        if isinstance(node, Leaf):
            v = node.value
        else:
            v = np.asarray(node._forward(*(values[id(p)] for p in node.parents)))
            if not np.all(np.isfinite(v)):
                raise NumericError(f"{node.op}: produced non-finite values")
        values[id(node)] = v
    return values


def evaluate(e: Expr) -> Array:
    """Forward value of the expression from current leaf values."""
    order = _topo_order(e)
    return _forward_values(order)[id(e)]


def trainable_leaves(e: Expr) -> list[Parameter]:
    """All trainable leaves reachable from ``e``, in topological order."""
    return [n for n in _topo_order(e) if isinstance(n, Leaf) and n.trainable]


def gradients(e: Expr, wrt=None) -> dict[Leaf, Array]:
    """Reverse-mode gradient of a scalar expression per trainable leaf."""
    _, g = _value_and_grad_impl(e, wrt)
    return g


def value_and_grad(e: Expr, wrt=None) -> tuple[float, dict[Leaf, Array]]:
    """Forward value and gradients in one pass (single forward evaluation)."""
    return _value_and_grad_impl(e, wrt)


def _value_and_grad_impl(e: Expr, wrt=None) -> tuple[float, dict[Leaf, Array]]:
    if e.shape != ():
        raise ContractError(f"gradients: root must be scalar, got shape {e.shape}")
    order = _topo_order(e)
    values = _forward_values(order)

    if wrt is None:
        targets = [n for n in order if isinstance(n, Leaf) and n.trainable]
    else:
        targets = [t for t in wrt]
    target_ids = {id(t) for t in targets}

    relevant: set[int] = set()
    for node in order:
        if id(node) in target_ids or any(id(p) in relevant for p in node.parents):
            relevant.add(id(node))

    grads: dict[int, Array] = {id(e): np.asarray(1.0)}
    for node in reversed(order):
        if isinstance(node, Leaf):
            continue
        g = grads.pop(id(node), None)
        if g is None:
            continue
        need = tuple(id(p) in relevant for p in node.parents)
        if not any(need):
            continue
        parent_vals = tuple(values[id(p)] for p in node.parents)
        parent_grads = node._backward(g, parent_vals, values[id(node)], need)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None:
                continue
            if not np.all(np.isfinite(pg)):
                raise NumericError(f"{node.op}: non-finite gradient")
            acc = grads.get(id(p))
            grads[id(p)] = pg if acc is None else acc + pg

    out: dict[Leaf, Array] = {}
    for t in targets:
        g = grads.get(id(t))
        out[t] = np.zeros(t.shape) if g is None else np.asarray(g, dtype=np.float64)
    return float(values[id(e)]), out


def finite_diff_check(e: Expr, step: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Perturbs every scalar of every trainable leaf in turn; the relative error
    denominator is max(|analytic|, |numeric|, 1e-8).
    """
    if step <= 0:
        raise ContractError("finite_diff_check: step must be positive")
    analytic = gradients(e)
    worst = 0.0
    for leaf, grad in analytic.items():
        flat = leaf.value.reshape(-1)
        pristine = flat.copy()
        garr = np.asarray(grad).reshape(-1)
        for i in range(flat.size):
            flat[i] = pristine[i] + step
            f_plus = float(evaluate(e))
            flat[i] = pristine[i] - step
            f_minus = float(evaluate(e))
            flat[i] = pristine[i]
            numeric = (f_plus - f_minus) / (2.0 * step)
            denom = max(abs(garr[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(garr[i] - numeric) / denom)
        flat[:] = pristine
    return worst


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Adaptive-moment optimizer state (bias-corrected update)."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: Sequence[Parameter], grads: Mapping[Leaf, Array],
              state: AdamState) -> AdamState:
    """One bias-corrected adaptive-moment update, applied to params in place."""
    state.step_count += 1
    t = state.step_count
    for p in params:
        g = np.asarray(grads[p], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: gradient shape {g.shape} does not match "
                             f"parameter shape {p.shape}")
        m = state.m.get(p)
        v = state.v.get(p)
        if m is None:
            m = np.zeros(p.shape)
            v = np.zeros(p.shape)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[p] = m
        state.v[p] = v
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        p.value = p.value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state
