"""Dense float64 tensors with reverse-mode automatic differentiation.

A computation graph is built during the forward pass and traversed once,
in reverse topological order, by `backward`; nothing persists between
steps. Broadcasting is restricted to exact trailing-shape matches so
every backward reduction is a plain sum over leading axes.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError, DomainError, ParameterError

Array = np.ndarray


class Tensor:
    """Node in a reverse-mode computation graph backed by a float64 array."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_prev", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._prev: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Copy of the value with no graph history."""
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # Operator sugar; scalars and arrays are lifted to constant tensors.
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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name: str | None = None) -> Tensor:
    """Leaf tensor that receives gradients."""
    return Tensor(data, requires_grad=True, name=name)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: Array, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = parents
        out._backward = backward_fn
    return out


# ---------------------------------------------------------------------------
# broadcasting (trailing-shape suffix only)

def _check_trailing(sa: tuple, sb: tuple, op: str) -> None:
    if sa == sb:
        return
    la, lb = len(sa), len(sb)
    if la >= lb and sa[la - lb:] == sb:
        return
    if lb > la and sb[lb - la:] == sa:
        return
    raise DimensionError(
        f"{op}: shapes {sa} and {sb} are not trailing-broadcastable"
    )


def _unbroadcast(g: Array, shape: tuple) -> Array:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


# ---------------------------------------------------------------------------
# binary elementwise ops

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_trailing(a.shape, b.shape, "add")

    def bk(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bk)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_trailing(a.shape, b.shape, "sub")

    def bk(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _node(a.data - b.data, (a, b), bk)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_trailing(a.shape, b.shape, "mul")

    def bk(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), bk)


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_trailing(a.shape, b.shape, "div")
    if np.any(b.data == 0.0):
        raise DomainError("div: divisor contains zero")

    def bk(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _node(a.data / b.data, (a, b), bk)


# ---------------------------------------------------------------------------
# unary elementwise ops

def neg(a) -> Tensor:
    a = _lift(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = _lift(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _lift(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log: input contains non-positive values")
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a) -> Tensor:
    a = _lift(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def _stable_sigmoid(x: Array) -> Array:
    # Two-branch form: never exponentiates a positive argument.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _lift(a)
    out = _stable_sigmoid(a.data)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a) -> Tensor:
    a = _lift(a)
    return _node(np.maximum(a.data, 0.0), (a,), lambda g: (g * (a.data > 0),))


_UNARY_KINDS = {
    "sigmoid": sigmoid,
    "tanh": tanh,
    "log": log,
    "exp": exp,
    "neg": neg,
    "relu": relu,
}
_BINARY_KINDS = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(kind: str, a, b=None) -> Tensor:
    """Apply a named elementwise operation.

    Unary kinds: sigmoid, tanh, log, exp, neg, relu. Binary kinds: add,
    sub, mul, div (equal shapes or trailing-dimension broadcast).
    """
    if kind in _UNARY_KINDS:
        if b is not None:
            raise ParameterError(f"elementwise: {kind!r} takes one operand")
        return _UNARY_KINDS[kind](a)
    if kind in _BINARY_KINDS:
        if b is None:
            raise ParameterError(f"elementwise: {kind!r} takes two operands")
        return _BINARY_KINDS[kind](a, b)
    raise ParameterError(f"elementwise: unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# structural ops

def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(
            f"matmul expects 2-D operands, got {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions disagree for {a.shape} x {b.shape}"
        )

    def bk(g):
        return g @ b.data.T, a.data.T @ g

    return _node(a.data @ b.data, (a, b), bk)


def concat(a, b, axis: int = 0) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim != b.ndim:
        raise DimensionError(f"concat: rank mismatch {a.shape} vs {b.shape}")
    ax = axis if axis >= 0 else a.ndim + axis
    if not 0 <= ax < a.ndim:
        raise DimensionError(f"concat: axis {axis} out of range for {a.shape}")
    for d in range(a.ndim):
        if d != ax and a.shape[d] != b.shape[d]:
            raise DimensionError(
                f"concat: shapes {a.shape} and {b.shape} differ off axis {axis}"
            )
    split = a.shape[ax]

    def bk(g):
        ga = np.take(g, range(split), axis=ax)
        gb = np.take(g, range(split, g.shape[ax]), axis=ax)
        return ga, gb

    return _node(np.concatenate([a.data, b.data], axis=ax), (a, b), bk)


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    old = a.shape

    def bk(g):
        return (g.reshape(old),)

    return _node(a.data.reshape(shape), (a,), bk)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of `length` entries along `axis`."""
    a = _lift(a)
    ax = axis if axis >= 0 else a.ndim + axis
    if not 0 <= ax < a.ndim:
        raise DimensionError(f"narrow: axis {axis} out of range for {a.shape}")
    if start < 0 or length < 0 or start + length > a.shape[ax]:
        raise DimensionError(
            f"narrow: slice [{start}:{start + length}] exceeds axis {axis} of {a.shape}"
        )
    idx = tuple(
        slice(start, start + length) if d == ax else slice(None)
        for d in range(a.ndim)
    )

    def bk(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _node(a.data[idx].copy(), (a,), bk)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes only through the interior."""
    a = _lift(a)
    inside = (a.data > lo) & (a.data < hi)

    def bk(g):
        return (g * inside,)

    return _node(np.clip(a.data, lo, hi), (a,), bk)


def tsum(a, axis: int | None = None) -> Tensor:
    a = _lift(a)

    if axis is None:
        def bk(g):
            return (np.broadcast_to(g, a.shape).copy(),)

        return _node(a.data.sum(), (a,), bk)

    ax = axis if axis >= 0 else a.ndim + axis

    def bk(g):
        return (np.broadcast_to(np.expand_dims(g, ax), a.shape).copy(),)

    return _node(a.data.sum(axis=ax), (a,), bk)


def tmean(a, axis: int | None = None) -> Tensor:
    a = _lift(a)
    n = a.size if axis is None else a.shape[axis]
    return tsum(a, axis) * (1.0 / n)


def softmax_axis(x, axis: int, temperature: float) -> Tensor:
    """Temperature-scaled softmax along `axis`, computed with max-subtraction."""
    if not np.isfinite(temperature) or temperature <= 0.0:
        raise ParameterError(f"softmax_axis: temperature must be > 0, got {temperature}")
    x = _lift(x)
    ax = axis if axis >= 0 else x.ndim + axis
    if not 0 <= ax < x.ndim:
        raise DimensionError(f"softmax_axis: axis {axis} out of range for {x.shape}")
    y = x.data / temperature
    y = y - y.max(axis=ax, keepdims=True)
    e = np.exp(y)
    s = e / e.sum(axis=ax, keepdims=True)

    def bk(g):
        inner = (g * s).sum(axis=ax, keepdims=True)
        return ((s * (g - inner)) / temperature,)

    return _node(s, (x,), bk)


# ---------------------------------------------------------------------------
# reverse pass

class GradientMap:
    """Gradients keyed by parameter identifier.

    Parameters the loss does not reach get zero gradients and are listed
    in `unreached`.
    """

    __slots__ = ("_grads", "unreached")

    def __init__(self, grads: dict[str, Tensor], unreached=()):
        self._grads = dict(grads)
        self.unreached = tuple(unreached)

    def __getitem__(self, key: str) -> Tensor:
        return self._grads[key]

    def __contains__(self, key: str) -> bool:
        return key in self._grads

    def __iter__(self):
        return iter(self._grads)

    def __len__(self) -> int:
        return len(self._grads)

    def keys(self):
        return self._grads.keys()

    def items(self):
        return self._grads.items()

    def values(self):
        return self._grads.values()


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._prev:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: dict[str, Tensor]) -> GradientMap:
    """Reverse-accumulate d(loss)/d(p) for every tensor in `params`.

    The loss must be a scalar. Gradients accumulate into each parameter's
    `.grad` buffer; the returned GradientMap holds independent copies, so
    a second call after `zero_grads` reproduces it bit for bit.
    """
    if not isinstance(loss, Tensor) or loss.data.shape != ():
        got = getattr(loss, "shape", type(loss))
        raise ContractError(f"backward expects a scalar loss tensor, got {got}")

    order = _toposort(loss)
    adjoint: dict[int, Array] = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(order):
        g = adjoint.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, pg in zip(node._prev, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = adjoint.get(id(parent))
            adjoint[id(parent)] = pg if prev is None else prev + pg

    grads: dict[str, Tensor] = {}
    unreached: list[str] = []
    for name, p in params.items():
        g = adjoint.get(id(p))
        if g is None:
            unreached.append(name)
            g = np.zeros_like(p.data)
        else:
            g = np.array(g, dtype=np.float64, copy=True)
        p.grad = g.copy() if p.grad is None else p.grad + g
        grads[name] = Tensor(g)
    return GradientMap(grads, unreached)


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
