"""Dense float64 tensors with reverse-mode automatic differentiation.

Every value in the network is a `Tensor`: a contiguous row-major float64
numpy buffer plus an optional gradient buffer and an optional handle into
the active gradient tape. The tape is define-by-run and rebuilt on every
forward pass:

    with Tape() as tape:
        loss = some_scalar_function(params)
        tape.backward(loss)
    # params[i].grad now holds d loss / d params[i]

Outside a `with Tape()` block operations compute values only, which is the
eval path. Tensors not attached to a tape are immutable values and safe to
share across threads; one tape is strictly single-threaded (the active-tape
stack is thread-local, so independent tapes may run on separate threads).

Any operation that would produce NaN/Inf from finite inputs raises
`NumericalError` instead of propagating silently. A tensor with
``requires_grad=False`` that enters a recorded graph is treated as a
constant: it simply receives no gradient.
"""

import threading

import numpy as np

from .errors import ContractError, DimensionError, NumericalError

_DIV_GUARD = 1e-300  # |divisor| below this raises NumericalError
_NORM_GUARD = 1e-300  # backward-only floor for the last-axis L2 norm

_tls = threading.local()


def _tape_stack():
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def active_tape():
    """The innermost open Tape on this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Node:
    """One recorded operation: inputs, output, and its backward rule."""

    __slots__ = ("inputs", "out", "backward_fn", "tape")

    def __init__(self, inputs, out, backward_fn, tape):
        self.inputs = inputs
        self.out = out
        self.backward_fn = backward_fn
        self.tape = tape


class Tape:
    """Append-only record of operations; backward walks it in reverse.

    A tape may be consumed by `backward` exactly once; consuming it clears
    the node list, freeing all saved intermediates.
    """

    def __init__(self):
        self.nodes = []
        self.consumed = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        if not self.consumed:
            self._release()  # abandoned graph (exception path): free it now
        return False

    def _release(self):
        """Unlink the graph so plain refcounting frees every buffer.

        Node and its output tensor reference each other, so a consumed
        graph is otherwise cyclic garbage that waits for the cycle
        collector while holding multi-MB arrays alive.
        """
        for node in self.nodes:
            node.out.node = None
            node.out = None
            node.inputs = ()
            node.backward_fn = None
            node.tape = None
        self.nodes.clear()

    def backward(self, loss):
        """Populate .grad on every leaf reachable from `loss`.

        `loss` must be a scalar recorded on this tape. Calling twice
        without re-running the forward pass raises ContractError.
        """
        if self.consumed:
            raise ContractError("tape already consumed; re-run the forward pass")
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.node is None or loss.node.tape is not self:
            raise ContractError("loss is not recorded on this tape")

        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            out_grad = node.out.grad
            if out_grad is None:
                continue
            grads = node.backward_fn(out_grad)
            for inp, g in zip(node.inputs, grads):
                if g is None:
                    continue
                if inp.requires_grad or (inp.node is not None and inp.node.tape is self):
                    inp.grad = g if inp.grad is None else inp.grad + g
        self.consumed = True
        self._release()


class Tensor:
    """N-dimensional float64 array, optionally attached to a tape."""

    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:  # ascontiguousarray would promote 0-d
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        """Constant view of this tensor's value (no tape, no grad)."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # operator sugar; scalars become constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _finite_or_raise(arr, opname):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{opname} produced non-finite values")
    return arr


def _make(data, inputs, backward_fn, opname):
    """Wrap op output, check finiteness, and record on the active tape."""
    out = Tensor(_finite_or_raise(data, opname))
    tape = active_tape()
    if tape is not None and any(
        t.requires_grad or (t.node is not None and t.node.tape is tape) for t in inputs
    ):
        node = Node(tuple(inputs), out, backward_fn, tape)
        out.node = node
        tape.nodes.append(node)
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, inverting numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcastable(a, b, opname):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            f"{opname}: shapes {a.shape} and {b.shape} are not broadcastable"
        ) from None


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b):
    _check_broadcastable(a.data, b.data, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    _check_broadcastable(a.data, b.data, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    _check_broadcastable(a.data, b.data, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _make(ad * bd, (a, b), backward, "mul")


def div(a, b):
    _check_broadcastable(a.data, b.data, "div")
    if np.min(np.abs(b.data)) < _DIV_GUARD:
        raise NumericalError("div: divisor magnitude below 1e-300")
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g / bd, a.shape), _unbroadcast(-g * ad / (bd * bd), b.shape)

    return _make(ad / bd, (a, b), backward, "div")


def scale(a, c):
    """Multiply by a Python scalar constant."""
    c = float(c)

    def backward(g):
        return (g * c,)

    return _make(a.data * c, (a,), backward, "scale")


def tanh(a):
    t = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - t * t),)

    return _make(t, (a,), backward, "tanh")


def sigmoid(a):
    # stable both directions: exp of a non-positive argument only
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        return (g * s * (1.0 - s),)

    return _make(s, (a,), backward, "sigmoid")


def exp(a):
    with np.errstate(over="ignore"):  # overflow becomes NumericalError below
        e = np.exp(a.data)

    def backward(g):
        return (g * e,)

    return _make(e, (a,), backward, "exp")


def log(a):
    ad = a.data

    def backward(g):
        return (g / ad,)

    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(ad)
    return _make(out, (a,), backward, "log")


def softplus(a):
    """log(1 + exp(x)), overflow-safe."""
    x = a.data
    s = np.logaddexp(0.0, x)

    def backward(g):
        sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return (g * sig,)

    return _make(s, (a,), backward, "softplus")


def l2norm_last(a, keepdims=True):
    """L2 norm over the last axis.

    Backward uses v / max(r, 1e-300): at v = 0 exactly this yields a zero
    gradient, the epsilon-regularized subgradient convention the hyperbolic
    map relies on; elsewhere it is the exact derivative.
    """
    ad = a.data
    r = np.sqrt(np.sum(ad * ad, axis=-1, keepdims=True))

    def backward(g):
        if not keepdims:
            g = g[..., None]
        return (g * ad / np.maximum(r, _NORM_GUARD),)

    return _make(r if keepdims else r[..., 0], (a,), backward, "l2norm_last")


# ---------------------------------------------------------------------------
# matmul / softmax
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Batched matrix product with broadcastable leading dimensions."""
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise DimensionError("matmul: operands must have at least 2 dimensions")
    if ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(
            f"matmul: inner dimensions disagree ({ad.shape} x {bd.shape})"
        )
    _check_broadcastable(
        np.empty(ad.shape[:-2]), np.empty(bd.shape[:-2]), "matmul (batch dims)"
    )

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _make(ad @ bd, (a, b), backward, "matmul")


def softmax(a, axis):
    """Max-subtracted softmax along `axis`; rows sum to 1."""
    x = a.data
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax: axis {axis} invalid for shape {x.shape}")
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - np.sum(g * s, axis=axis, keepdims=True)),)

    return _make(s, (a,), backward, "softmax")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _restore_axes(g, in_shape, axes, keepdims):
    if keepdims:
        return np.broadcast_to(g, in_shape)
    shape = list(in_shape)
    for ax in axes:
        shape[ax] = 1
    return np.broadcast_to(g.reshape(shape), in_shape)


def _norm_axes(axes, ndim):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    return tuple(sorted(ax % ndim for ax in axes))


def reduce_sum(a, axes=None, keepdims=False):
    axes = _norm_axes(axes, a.data.ndim)
    in_shape = a.shape

    def backward(g):
        return (_restore_axes(g, in_shape, axes, keepdims).copy(),)

    return _make(np.sum(a.data, axis=axes, keepdims=keepdims), (a,), backward, "reduce_sum")


def reduce_mean(a, axes=None, keepdims=False):
    axes = _norm_axes(axes, a.data.ndim)
    in_shape = a.shape
    n = int(np.prod([in_shape[ax] for ax in axes]))

    def backward(g):
        return (_restore_axes(g, in_shape, axes, keepdims) / n,)

    return _make(np.mean(a.data, axis=axes, keepdims=keepdims), (a,), backward, "reduce_mean")


def reduce_max(a, axis, keepdims=False):
    """Max along one axis; backward routes to the first argmax (ties go to it)."""
    ad = a.data
    axis = axis % ad.ndim
    idx = np.argmax(ad, axis=axis)
    out = np.take_along_axis(ad, np.expand_dims(idx, axis), axis=axis)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros_like(ad)
        np.put_along_axis(full, np.expand_dims(idx, axis), g, axis=axis)
        return (full,)

    return _make(out if keepdims else np.squeeze(out, axis), (a,), backward, "reduce_max")


# ---------------------------------------------------------------------------
# layout
# ---------------------------------------------------------------------------

def reshape(a, shape):
    in_shape = a.shape

    def backward(g):
        return (g.reshape(in_shape),)

    return _make(a.data.reshape(shape), (a,), backward, "reshape")


def permute(a, order):
    """Transpose axes; materializes a contiguous copy."""
    order = tuple(order)
    inv = np.argsort(order)

    def backward(g):
        return (np.ascontiguousarray(np.transpose(g, inv)),)

    return _make(np.ascontiguousarray(np.transpose(a.data, order)), (a,), backward, "permute")


def concat(tensors, axis):
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat: need at least one tensor")
    axis = axis % tensors[0].data.ndim
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(
        np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat"
    )


def backward(loss):
    """Run reverse-mode accumulation from a scalar loss on its own tape."""
    if loss.node is None:
        raise ContractError("loss is not attached to any tape")
    loss.node.tape.backward(loss)
