"""Dense 2-D float64 tensors with reverse-mode automatic differentiation.

Everything is deliberately small: a ``Graph`` is an append-only tape of
nodes, a ``Tensor`` wraps a 2-D numpy array and (optionally) points at a
node on a graph.  Recording an operation appends one node holding the
operation tag, the parent node ids, the cached forward value and one
vector-Jacobian closure per parent.  Because the tape is append-only,
node ids are already a topological order and ``Graph.backward`` is a
single reverse sweep.

Tensors without a graph behave as constants: operations on them evaluate
eagerly and produce plain (graph-free) tensors, which keeps loss code
usable for both training and cheap evaluation.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, GradCheckError, ShapeError, UsageError

Axis = str  # {"all", "rows", "cols"}

_VALID_AXES = ("all", "rows", "cols")


class _Node:
    __slots__ = ("tag", "parents", "value", "vjps")

    def __init__(self, tag: str, parents: tuple[int, ...], value: np.ndarray,
                 vjps: tuple[Callable[[np.ndarray], np.ndarray], ...]):
        self.tag = tag
        self.parents = parents
        self.value = value
        self.vjps = vjps


class Graph:
    """Append-only differentiation tape.

    Single-writer: one graph must not be shared between concurrent
    builders.  Distinct graphs are fully independent.
    """

    def __init__(self) -> None:
        self._nodes: list[_Node] = []
        self._grads: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, tag: str, parents: tuple[int, ...], value: np.ndarray,
                vjps: tuple[Callable[[np.ndarray], np.ndarray], ...]) -> int:
        self._nodes.append(_Node(tag, parents, value, vjps))
        return len(self._nodes) - 1

    def backward(self, root: "Tensor") -> dict[int, np.ndarray]:
        """Accumulate d(root)/d(node) for every ancestor of ``root``.

        ``root`` must be a 1x1 tensor recorded on this graph.  Returns the
        gradient map keyed by node id; the map is also stored on the graph
        for ``grad`` lookups.
        """
        if root.graph is not self or root.node is None:
            raise UsageError("backward root does not belong to this graph")
        if root.data.shape != (1, 1):
            raise UsageError(f"backward requires a scalar root, got shape {root.data.shape}")
        grads: list[np.ndarray | None] = [None] * len(self._nodes)
        grads[root.node] = np.ones((1, 1))
        for nid in range(root.node, -1, -1):
            gout = grads[nid]
            if gout is None:
                continue
            node = self._nodes[nid]
            for pid, vjp in zip(node.parents, node.vjps):
                contrib = vjp(gout)
                if grads[pid] is None:
                    grads[pid] = contrib
                else:
                    grads[pid] = grads[pid] + contrib
        self._grads = {i: g for i, g in enumerate(grads) if g is not None}
        return self._grads

    def grad(self, t: "Tensor") -> np.ndarray:
        """Gradient of the last ``backward`` root w.r.t. ``t`` (zeros if unreached)."""
        if t.graph is not self or t.node is None:
            raise UsageError("tensor does not belong to this graph")
        g = self._grads.get(t.node)
        if g is None:
            return np.zeros_like(t.data)
        return g


class Tensor:
    """2-D array of float64, optionally tracked on a :class:`Graph`."""

    __slots__ = ("data", "graph", "node")

    def __init__(self, data, graph: Graph | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are strictly 2-D, got ndim={arr.ndim}")
        self.data = arr
        self.graph = graph
        self.node = graph._record("leaf", (), arr, ()) if graph is not None else None

    @classmethod
    def _from_op(cls, value: np.ndarray, graph: Graph | None, tag: str,
                 parents: tuple[int, ...],
                 vjps: tuple[Callable[[np.ndarray], np.ndarray], ...]) -> "Tensor":
        out = cls.__new__(cls)
        out.data = value
        out.graph = graph
        out.node = graph._record(tag, parents, value, vjps) if graph is not None else None
        return out

    # -- introspection -------------------------------------------------
    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise UsageError(f"item() requires a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def to_array(self) -> np.ndarray:
        return np.array(self.data, copy=True)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, tracked={self.node is not None})"

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise UsageError("division is supported by scalar only")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _coerce(pair_tag: str, a, b) -> tuple[Tensor, Tensor, Graph | None]:
    """Lift operands to tensors on a common graph (constants become leaves)."""
    if not isinstance(a, Tensor):
        a = Tensor(a)
    if not isinstance(b, Tensor):
        b = Tensor(b)
    ga, gb = a.graph, b.graph
    if ga is not None and gb is not None and ga is not gb:
        raise UsageError(f"{pair_tag}: operands live on different graphs")
    graph = ga if ga is not None else gb
    if graph is not None:
        if a.node is None:
            a = Tensor(a.data, graph)
        if b.node is None:
            b = Tensor(b.data, graph)
    return a, b, graph


def _require_same_shape(tag: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{tag}: shape mismatch {a.data.shape} vs {b.data.shape}")


def _unary(tag: str, t: Tensor, value: np.ndarray,
           vjp: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    if t.graph is None:
        return Tensor._from_op(value, None, tag, (), ())
    return Tensor._from_op(value, t.graph, tag, (t.node,), (vjp,))


# -- arithmetic ---------------------------------------------------------

def add(a, b) -> Tensor:
    if np.isscalar(b) and isinstance(a, Tensor):
        c = float(b)
        return _unary("add_scalar", a, a.data + c, lambda g: g)
    if np.isscalar(a) and isinstance(b, Tensor):
        return add(b, a)
    a, b, graph = _coerce("add", a, b)
    _require_same_shape("add", a, b)
    value = a.data + b.data
    if graph is None:
        return Tensor._from_op(value, None, "add", (), ())
    return Tensor._from_op(value, graph, "add", (a.node, b.node),
                           (lambda g: g, lambda g: g))


def sub(a, b) -> Tensor:
    if np.isscalar(b) and isinstance(a, Tensor):
        return add(a, -float(b))
    if np.isscalar(a) and isinstance(b, Tensor):
        return add(neg(b), float(a))
    a, b, graph = _coerce("sub", a, b)
    _require_same_shape("sub", a, b)
    value = a.data - b.data
    if graph is None:
        return Tensor._from_op(value, None, "sub", (), ())
    return Tensor._from_op(value, graph, "sub", (a.node, b.node),
                           (lambda g: g, lambda g: -g))


def neg(t: Tensor) -> Tensor:
    return _unary("neg", t, -t.data, lambda g: -g)


def mul(a, b) -> Tensor:
    if np.isscalar(b) and isinstance(a, Tensor):
        c = float(b)
        return _unary("scalar_mul", a, a.data * c, lambda g: g * c)
    if np.isscalar(a) and isinstance(b, Tensor):
        return mul(b, a)
    a, b, graph = _coerce("mul", a, b)
    _require_same_shape("mul", a, b)
    value = a.data * b.data
    if graph is None:
        return Tensor._from_op(value, None, "mul", (), ())
    ad, bd = a.data, b.data
    return Tensor._from_op(value, graph, "mul", (a.node, b.node),
                           (lambda g: g * bd, lambda g: g * ad))


def matmul(a, b) -> Tensor:
    a, b, graph = _coerce("matmul", a, b)
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.data.shape} x {b.data.shape}")
    value = a.data @ b.data
    if graph is None:
        return Tensor._from_op(value, None, "matmul", (), ())
    ad, bd = a.data, b.data
    return Tensor._from_op(value, graph, "matmul", (a.node, b.node),
                           (lambda g: g @ bd.T, lambda g: ad.T @ g))


def add_bias(x, b) -> Tensor:
    """Add a 1xC bias row to every row of a BxC tensor."""
    x, b, graph = _coerce("add_bias", x, b)
    if b.data.shape != (1, x.data.shape[1]):
        raise ShapeError(f"add_bias: bias shape {b.data.shape} incompatible with {x.data.shape}")
    value = x.data + b.data
    if graph is None:
        return Tensor._from_op(value, None, "add_bias", (), ())
    return Tensor._from_op(value, graph, "add_bias", (x.node, b.node),
                           (lambda g: g, lambda g: g.sum(axis=0, keepdims=True)))


# -- pointwise nonlinearities -------------------------------------------

def log(t: Tensor) -> Tensor:
    bad = t.data <= 0.0
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DomainError(f"log: non-positive value {t.data[i, j]} at index ({i}, {j})")
    td = t.data
    return _unary("log", t, np.log(td), lambda g: g / td)


def exp(t: Tensor) -> Tensor:
    value = np.exp(t.data)
    return _unary("exp", t, value, lambda g: g * value)


def relu(t: Tensor) -> Tensor:
    td = t.data
    return _unary("relu", t, np.maximum(td, 0.0), lambda g: g * (td > 0.0))


_SIGMOID_LO = np.finfo(np.float64).tiny
_SIGMOID_HI = np.nextafter(1.0, 0.0)


def sigmoid(t: Tensor) -> Tensor:
    # Split by sign so exp never overflows; the clip keeps the output
    # strictly inside (0, 1) where float64 rounding would reach 0 or 1.
    td = t.data
    value = np.where(td >= 0, 1.0 / (1.0 + np.exp(-np.abs(td))),
                     np.exp(-np.abs(td)) / (1.0 + np.exp(-np.abs(td))))
    value = np.clip(value, _SIGMOID_LO, _SIGMOID_HI)
    return _unary("sigmoid", t, value, lambda g: g * value * (1.0 - value))


def clamp_min(t: Tensor, floor: float) -> Tensor:
    """max(t, floor) with zero gradient on the clamped region."""
    td = t.data
    return _unary("clamp_min", t, np.maximum(td, floor), lambda g: g * (td > floor))


# -- structured ops ------------------------------------------------------

def _axis_num(tag: str, axis: Axis) -> int:
    # "cols" normalizes/reduces across the columns of each row (numpy axis 1),
    # "rows" across the rows of each column (numpy axis 0).
    if axis == "cols":
        return 1
    if axis == "rows":
        return 0
    raise UsageError(f"{tag}: axis must be one of {_VALID_AXES}, got {axis!r}")


def softmax(t: Tensor, axis: Axis = "cols") -> Tensor:
    ax = _axis_num("softmax", axis)
    shifted = t.data - t.data.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=ax, keepdims=True)

    def vjp(g: np.ndarray) -> np.ndarray:
        return value * (g - (g * value).sum(axis=ax, keepdims=True))

    return _unary("softmax", t, value, vjp)


def reduce_sum(t: Tensor, axis: Axis = "all") -> Tensor:
    r, c = t.data.shape
    if axis == "all":
        value = t.data.sum().reshape(1, 1)
        vjp = lambda g: np.full((r, c), g[0, 0])
    elif axis == "cols":
        value = t.data.sum(axis=1, keepdims=True)
        vjp = lambda g: np.broadcast_to(g, (r, c)).copy()
    elif axis == "rows":
        value = t.data.sum(axis=0, keepdims=True)
        vjp = lambda g: np.broadcast_to(g, (r, c)).copy()
    else:
        raise UsageError(f"reduce_sum: axis must be one of {_VALID_AXES}, got {axis!r}")
    return _unary("sum", t, value, vjp)


def reduce_mean(t: Tensor, axis: Axis = "all") -> Tensor:
    r, c = t.data.shape
    n = {"all": r * c, "cols": c, "rows": r}.get(axis)
    if n is None:
        raise UsageError(f"reduce_mean: axis must be one of {_VALID_AXES}, got {axis!r}")
    return mul(reduce_sum(t, axis), 1.0 / n)


def concat_rows(a, b) -> Tensor:
    a, b, graph = _coerce("concat_rows", a, b)
    if a.data.shape[1] != b.data.shape[1]:
        raise ShapeError(f"concat_rows: column mismatch {a.data.shape} vs {b.data.shape}")
    value = np.concatenate([a.data, b.data], axis=0)
    if graph is None:
        return Tensor._from_op(value, None, "concat_rows", (), ())
    ra = a.data.shape[0]
    return Tensor._from_op(value, graph, "concat_rows", (a.node, b.node),
                           (lambda g: g[:ra], lambda g: g[ra:]))


# -- verification ---------------------------------------------------------

def grad_check(f: Callable[..., Tensor], params: Sequence[np.ndarray],
               h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` maps one :class:`Tensor` per entry of ``params`` to a scalar
    tensor; it is called once on graph leaves for the analytic side and
    repeatedly on plain tensors for the numeric side.  The relative error
    of one element is ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if h <= 0:
        raise UsageError("grad_check: h must be positive")
    graph = Graph()
    leaves = [Tensor(p, graph) for p in params]
    out = f(*leaves)
    if out.data.shape != (1, 1):
        raise UsageError("grad_check: f must return a scalar tensor")
    graph.backward(out)
    analytic = [graph.grad(leaf) for leaf in leaves]

    def eval_at(arrays: list[np.ndarray]) -> float:
        res = f(*[Tensor(arr) for arr in arrays])
        return res.item()

    base = [np.array(p, dtype=np.float64, copy=True) for p in params]
    worst = 0.0
    for pi, p in enumerate(base):
        flat = p.reshape(-1)
        for ei in range(flat.size):
            orig = flat[ei]
            flat[ei] = orig + h
            fp = eval_at(base)
            flat[ei] = orig - h
            fm = eval_at(base)
            flat[ei] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise GradCheckError(
                    f"non-finite loss while perturbing parameter {pi}, element {ei}")
            numeric = (fp - fm) / (2.0 * h)
            ana = analytic[pi].reshape(-1)[ei]
            rel = abs(ana - numeric) / max(1.0, abs(numeric))
            worst = max(worst, rel)
    return worst
