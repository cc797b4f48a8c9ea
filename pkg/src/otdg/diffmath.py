"""Small dense reverse-mode automatic differentiation.

A graph is built symbolically from :class:`Node` objects (parameters, named
inputs, constants and primitive ops). :func:`evaluate` runs the forward pass
for a set of bindings and :func:`backward` returns gradients for every
parameter that requires them. Values are plain ``float64`` numpy arrays.

Example
-------
>>> x = Parameter("x", 3.0)
>>> y = x * x
>>> float(evaluate(y))
9.0
>>> float(backward(y)["x"])
6.0
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

Tensor = np.ndarray

_counter = itertools.count()


class DiffError(ValueError):
    """Raised when a graph cannot be evaluated or differentiated."""

    def __init__(self, message: str, node: "Node | None" = None):
        if node is not None:
            message = f"node #{node.index} ({node.op}): {message}"
        super().__init__(message)
        self.node = node


def as_tensor(value) -> Tensor:
    return np.asarray(value, dtype=np.float64)


class Node:
    """A vertex of a differentiable computation graph.

    Nodes are immutable once built. ``index`` is assigned from a global
    counter so parents always carry a smaller index than their children.
    """

    __slots__ = ("op", "parents", "attrs", "index", "__weakref__")
    __array_priority__ = 100.0

    def __init__(self, op: str, parents: tuple["Node", ...] = (), attrs: dict | None = None):
        self.op = op
        self.parents = tuple(parents)
        self.attrs = attrs or {}
        self.index = next(_counter)

    def __repr__(self) -> str:
        return f"Node(#{self.index}, {self.op})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, key):
        return slice_(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)


class Parameter(Node):
    """Trainable leaf. Its current ``value`` is used unless a binding overrides it."""

    __slots__ = ("id", "value", "requires_grad")

    def __init__(self, id: str, value, requires_grad: bool = True):
        super().__init__("param")
        self.id = id
        self.value = as_tensor(value).copy()
        self.value.setflags(write=False)
        self.requires_grad = requires_grad

    def __repr__(self) -> str:
        return f"Parameter({self.id!r}, shape={self.value.shape})"


class Input(Node):
    """Named placeholder; must be supplied in the bindings."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        super().__init__("input")
        self.name = name


def constant(value) -> Node:
    v = as_tensor(value).copy()
    v.setflags(write=False)
    return Node("const", (), {"value": v})


def _lift(x) -> Node:
    return x if isinstance(x, Node) else constant(x)


# ---------------------------------------------------------------------------
# primitive registry


@dataclass(frozen=True)
class Primitive:
    forward: Callable
    # backward(grad_out, out_value, parent_values, attrs) -> tuple of parent grads
    backward: Callable


PRIMITIVES: dict[str, Primitive] = {}


def _register(name, forward, backward):
    PRIMITIVES[name] = Primitive(forward, backward)


def _unbroadcast(grad: Tensor, shape: tuple) -> Tensor:
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _expand(grad: Tensor, axis, keepdims: bool, shape: tuple) -> Tensor:
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


_register(
    "add",
    lambda a, b: a + b,
    lambda g, out, pv, at: (_unbroadcast(g, pv[0].shape), _unbroadcast(g, pv[1].shape)),
)
_register(
    "sub",
    lambda a, b: a - b,
    lambda g, out, pv, at: (_unbroadcast(g, pv[0].shape), _unbroadcast(-g, pv[1].shape)),
)
_register(
    "mul",
    lambda a, b: a * b,
    lambda g, out, pv, at: (
        _unbroadcast(g * pv[1], pv[0].shape),
        _unbroadcast(g * pv[0], pv[1].shape),
    ),
)
_register(
    "div",
    lambda a, b: a / b,
    lambda g, out, pv, at: (
        _unbroadcast(g / pv[1], pv[0].shape),
        _unbroadcast(-g * out / pv[1], pv[1].shape),
    ),
)
_register("neg", lambda a: -a, lambda g, out, pv, at: (-g,))


def _matmul_fwd(a, b):
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    return a @ b


_register("matmul", _matmul_fwd, lambda g, out, pv, at: (g @ pv[1].T, pv[0].T @ g))
_register("exp", np.exp, lambda g, out, pv, at: (g * out,))
_register("log", np.log, lambda g, out, pv, at: (g / pv[0],))
_register("relu", lambda a: np.maximum(a, 0.0), lambda g, out, pv, at: (g * (pv[0] > 0),))
_register("square", np.square, lambda g, out, pv, at: (2.0 * g * pv[0],))
_register("sqrt", np.sqrt, lambda g, out, pv, at: (g / (2.0 * out),))


def _softmax_fwd(a, axis=-1):
    z = a - a.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _softmax_bwd(g, out, pv, at):
    axis = at.get("axis", -1)
    return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)


_register("softmax", _softmax_fwd, _softmax_bwd)


def _lse_fwd(a, axis=None, keepdims=False):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if not keepdims:
        s = np.squeeze(s, axis=axis) if axis is not None else s.reshape(())
    return s


def _lse_bwd(g, out, pv, at):
    axis, keepdims = at.get("axis"), at.get("keepdims", False)
    a = pv[0]
    out_k = _expand(out, axis, keepdims, a.shape) if axis is not None else out
    g_k = _expand(g, axis, keepdims, a.shape)
    return (g_k * np.exp(a - out_k),)


_register("logsumexp", _lse_fwd, _lse_bwd)
_register(
    "sum",
    lambda a, axis=None, keepdims=False: np.sum(a, axis=axis, keepdims=keepdims),
    lambda g, out, pv, at: (
        _expand(g, at.get("axis"), at.get("keepdims", False), pv[0].shape).copy(),
    ),
)


def _slice_bwd(g, out, pv, at):
    full = np.zeros_like(pv[0])
    np.add.at(full, at["key"], g)
    return (full,)


_register("slice", lambda a, key: a[key], _slice_bwd)


def _concat_bwd(g, out, pv, at):
    axis = at.get("axis", 0)
    sizes = np.cumsum([p.shape[axis] for p in pv])[:-1]
    return tuple(np.split(g, sizes, axis=axis))


_register("concat", lambda *xs, axis=0: np.concatenate(xs, axis=axis), _concat_bwd)
_register("transpose", lambda a: a.T, lambda g, out, pv, at: (g.T,))
_register(
    "reshape",
    lambda a, shape: a.reshape(shape),
    lambda g, out, pv, at: (g.reshape(pv[0].shape),),
)
_register("detach", lambda a: a, lambda g, out, pv, at: (np.zeros_like(pv[0]),))


# ---------------------------------------------------------------------------
# graph-building functions


def add(a, b) -> Node:
    return Node("add", (_lift(a), _lift(b)))


def sub(a, b) -> Node:
    return Node("sub", (_lift(a), _lift(b)))


def mul(a, b) -> Node:
    return Node("mul", (_lift(a), _lift(b)))


def div(a, b) -> Node:
    return Node("div", (_lift(a), _lift(b)))


def neg(a) -> Node:
    return Node("neg", (_lift(a),))


def matmul(a, b) -> Node:
    return Node("matmul", (_lift(a), _lift(b)))


def exp(a) -> Node:
    return Node("exp", (_lift(a),))


def log(a) -> Node:
    return Node("log", (_lift(a),))


def relu(a) -> Node:
    return Node("relu", (_lift(a),))


def square(a) -> Node:
    return Node("square", (_lift(a),))


def sqrt(a) -> Node:
    return Node("sqrt", (_lift(a),))


def softmax(a, axis: int = -1) -> Node:
    return Node("softmax", (_lift(a),), {"axis": axis})


def logsumexp(a, axis=None, keepdims: bool = False) -> Node:
    return Node("logsumexp", (_lift(a),), {"axis": axis, "keepdims": keepdims})


def reduce_sum(a, axis=None, keepdims: bool = False) -> Node:
    return Node("sum", (_lift(a),), {"axis": axis, "keepdims": keepdims})


def reduce_mean(a, axis=None, keepdims: bool = False) -> Node:
    # the count is only known at evaluation time
    return Node("mean", (_lift(a),), {"axis": axis, "keepdims": keepdims})


def slice_(a, key) -> Node:
    return Node("slice", (_lift(a),), {"key": key})


def concat(nodes, axis: int = 0) -> Node:
    return Node("concat", tuple(_lift(n) for n in nodes), {"axis": axis})


def transpose(a) -> Node:
    return Node("transpose", (_lift(a),))


def reshape(a, shape) -> Node:
    return Node("reshape", (_lift(a),), {"shape": tuple(shape)})


def detach(a) -> Node:
    """Identity in the forward pass, zero gradient in the backward pass."""
    return Node("detach", (_lift(a),))


def _mean_fwd(a, axis=None, keepdims=False):
    return np.mean(a, axis=axis, keepdims=keepdims)


def _mean_bwd(g, out, pv, at):
    axis = at.get("axis")
    count = pv[0].size if axis is None else pv[0].shape[axis]
    return (_expand(g, axis, at.get("keepdims", False), pv[0].shape) / count,)


_register("mean", _mean_fwd, _mean_bwd)


# ---------------------------------------------------------------------------
# evaluation


def topological_order(output: Node) -> list[Node]:
    """All nodes reachable from ``output``, sorted by creation index."""
    seen: dict[int, Node] = {}
    stack = [output]
    while stack:
        node = stack.pop()
        if node.index in seen:
            continue
        seen[node.index] = node
        stack.extend(node.parents)
    return [seen[i] for i in sorted(seen)]


def _leaf_value(node: Node, bindings: Mapping[str, object]) -> Tensor:
    if isinstance(node, Parameter):
        if node.id in bindings:
            return as_tensor(bindings[node.id])
        return node.value
    if isinstance(node, Input):
        if node.name not in bindings:
            raise DiffError(f"input {node.name!r} is not bound", node)
        return as_tensor(bindings[node.name])
    return node.attrs["value"]


def _forward(order: list[Node], bindings: Mapping[str, object]) -> dict[int, Tensor]:
    values: dict[int, Tensor] = {}
    for node in order:
        if node.op in ("param", "input", "const"):
            v = _leaf_value(node, bindings)
        else:
            prim = PRIMITIVES[node.op]
            args = [values[p.index] for p in node.parents]
            kwargs = {k: v for k, v in node.attrs.items()}
            try:
                with np.errstate(all="ignore"):
                    v = np.asarray(prim.forward(*args, **kwargs), dtype=np.float64)
            except (ValueError, IndexError) as exc:
                shapes = [a.shape for a in args]
                raise DiffError(f"{exc} (operand shapes {shapes})", node) from exc
        if not np.all(np.isfinite(v)):
            raise DiffError("non-finite value produced", node)
        values[node.index] = v
    return values


def evaluate(graph: Node, bindings: Mapping[str, object] | None = None) -> Tensor:
    """Forward value of ``graph``. Bindings are never mutated."""
    order = topological_order(graph)
    return _forward(order, bindings or {})[graph.index]


def value_and_grad(
    graph: Node, bindings: Mapping[str, object] | None = None
) -> tuple[Tensor, dict[str, Tensor]]:
    """Forward value and gradients of a scalar graph.

    Returns a gradient for every reachable :class:`Parameter` with
    ``requires_grad``; parameters only reachable through :func:`detach`
    receive zeros.
    """
    bindings = bindings or {}
    order = topological_order(graph)
    values = _forward(order, bindings)
    out = values[graph.index]
    if out.size != 1:
        raise DiffError(f"backward needs a scalar output, got shape {out.shape}", graph)

    grads: dict[int, Tensor] = {graph.index: np.ones_like(out)}
    for node in reversed(order):
        g = grads.get(node.index)
        if g is None or not node.parents:
            continue
        if node.op == "detach":
            continue
        prim = PRIMITIVES[node.op]
        pv = [values[p.index] for p in node.parents]
        parent_grads = prim.backward(g, values[node.index], pv, node.attrs)
        for parent, pg in zip(node.parents, parent_grads):
            if parent.op == "const":
                continue
            if parent.index in grads:
                grads[parent.index] = grads[parent.index] + pg
            else:
                grads[parent.index] = np.array(pg, dtype=np.float64)

    result: dict[str, Tensor] = {}
    for node in order:
        if isinstance(node, Parameter) and node.requires_grad:
            g = grads.get(node.index)
            value = values[node.index]
            g = np.zeros_like(value) if g is None else g.reshape(value.shape)
            result[node.id] = result[node.id] + g if node.id in result else g
    return out, result


def backward(graph: Node, bindings: Mapping[str, object] | None = None) -> dict[str, Tensor]:
    return value_and_grad(graph, bindings)[1]


def parameters(graph: Node) -> list[Parameter]:
    """Parameters reachable from ``graph`` in creation order (deduplicated by id)."""
    out: dict[str, Parameter] = {}
    for node in topological_order(graph):
        if isinstance(node, Parameter):
            out.setdefault(node.id, node)
    return list(out.values())


def finite_diff_check(
    graph: Node,
    param: Parameter,
    step: float = 1e-5,
    bindings: Mapping[str, object] | None = None,
) -> float:
    """Max relative error between AD and central differences for ``param``.

    The error per coordinate is ``|fd - ad| / (|ad| + 1e-8)``.
    """
    bindings = dict(bindings or {})
    point = as_tensor(bindings.get(param.id, param.value))
    ad = backward(graph, bindings)[param.id]
    worst = 0.0
    for idx in np.ndindex(point.shape):
        hi = point.copy()
        lo = point.copy()
        hi[idx] += step
        lo[idx] -= step
        try:
            f_hi = float(evaluate(graph, {**bindings, param.id: hi}))
            f_lo = float(evaluate(graph, {**bindings, param.id: lo}))
        except DiffError as exc:
            raise DiffError(f"function not evaluable near the point: {exc}") from exc
        fd = (f_hi - f_lo) / (2.0 * step)
        worst = max(worst, abs(fd - ad[idx]) / (abs(ad[idx]) + 1e-8))
    return worst
