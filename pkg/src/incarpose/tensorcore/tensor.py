"""A small reverse-mode autodiff engine over float64 numpy arrays.

Each op builds its output eagerly and, when any input requires a gradient,
records a backward closure on the output. ``backward`` walks the recorded
graph once in reverse topological order and then releases it; a second call
on the same loss raises :class:`StaleTapeError`.

Broadcasting is limited to a missing leading batch: one operand's shape must
equal the other's or be a suffix of it.
"""

import contextlib
import threading

import numpy as np
from scipy.special import erf

from ..errors import InvalidArgumentError, ShapeError, StaleTapeError

_state = threading.local()


def grad_enabled():
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def backward(self, grad=None, inputs=None):
        backward(self, grad, inputs)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _check_broadcast(a, b, opname):
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    short, long_ = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    if len(short) == 0 or long_[len(long_) - len(short):] == short:
        return
    raise ShapeError(f"{opname}: incompatible shapes {sa} and {sb} (only leading-batch broadcasting is supported)")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    if shape == ():
        return g.reshape(())
    return g.reshape(shape)


def backward(loss, grad=None, inputs=None):
    """Populate ``.grad`` on every leaf that requires it.

    Tensors listed in ``inputs`` that the loss does not depend on receive a
    zero gradient instead of keeping ``None``.
    """
    if loss._consumed:
        raise StaleTapeError("graph was already consumed by a previous backward(); re-run the forward pass")
    if grad is None:
        if loss.data.size != 1:
            raise InvalidArgumentError(f"backward() needs a scalar loss, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    if not loss.requires_grad:
        for t in inputs or ():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
        return

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    interior = [n for n in order if n._backward is not None]
    loss.grad = np.array(grad, dtype=np.float64).reshape(loss.shape)
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        node._backward(node.grad)
    for node in interior:
        node._consumed = True
        node._backward = None
        node._parents = ()
        node.grad = None
    for t in inputs or ():
        if t.grad is None:
            t.grad = np.zeros_like(t.data)


# --- elementwise -----------------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), bw)


def neg(a):
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: _accumulate(a, -g))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def gelu(a):
    """Exact GELU, x * Phi(x)."""
    a = as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))

    def bw(g):
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        _accumulate(a, g * (cdf + x * pdf))

    return _make(x * cdf, (a,), bw)


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: _accumulate(a, g * out))


# --- shape ops -----------------------------------------------------------------------------


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from exc
    return _make(out, (a,), lambda g: _accumulate(a, g.reshape(a.shape)))


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose: axes {axes} do not permute shape {a.shape}")
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: _accumulate(a, g.transpose(inv)))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat along axis {axis}: incompatible shapes {shapes}") from exc
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            _accumulate(t, piece)

    return _make(out, tuple(tensors), bw)


def slice_(a, idx):
    """Basic (non-fancy) indexing."""
    a = as_tensor(a)
    out = a.data[idx]

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accumulate(a, full)

    return _make(np.array(out), (a,), bw)


def take(a, indices, axis=-1):
    """Gather along ``axis`` with an integer index array; repeated indices accumulate."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    ax = axis % a.ndim

    def bw(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, ax, 0)
        np.add.at(moved, indices, np.moveaxis(g, ax, 0))
        _accumulate(a, full)

    return _make(np.take(a.data, indices, axis=ax), (a,), bw)


# --- reductions ---------------------------------------------------------------------------


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make(out, (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / max(out.size, 1) if a.data.size else 1.0

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape) / count)

    return _make(out, (a,), bw)


# --- linear algebra --------------------------------------------------------------------------


def matmul(a, b):
    """Batched matmul; a 2-D right operand is shared across a's batch dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    la, lb = a.shape[:-2], b.shape[:-2]
    if la != lb and not (len(lb) == 0 or len(la) == 0):
        raise ShapeError(f"matmul: batch dims {la} and {lb} differ")

    def bw(g):
        _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(a.data @ b.data, (a, b), bw)


def conv2d_1x1(x, weight, bias=None):
    """Pointwise convolution on (B, C_in, H, W) with weight (C_out, C_in)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d_1x1: input {x.shape} incompatible with weight {weight.shape}")
    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    out = np.einsum("oc,bchw->bohw", weight.data, x.data)
    if bias is not None:
        if parents[2].shape != (weight.shape[0],):
            raise ShapeError(f"conv2d_1x1: bias shape {parents[2].shape} != ({weight.shape[0]},)")
        out = out + parents[2].data[None, :, None, None]

    def bw(g):
        _accumulate(x, np.einsum("oc,bohw->bchw", weight.data, g))
        _accumulate(weight, np.einsum("bohw,bchw->oc", g, x.data))
        if bias is not None:
            _accumulate(parents[2], g.sum(axis=(0, 2, 3)))

    return _make(out, parents, bw)


# --- normalization / attention helpers --------------------------------------------------------


def softmax(a, axis=-1):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        _accumulate(a, s * (g - np.sum(g * s, axis=axis, keepdims=True)))

    return _make(s, (a,), bw)


def layer_norm(x, gain=None, bias=None, eps=1e-5):
    """Normalize over the last axis, then apply the optional affine (gain, bias)."""
    x = as_tensor(x)
    d = x.shape[-1]
    parents = [x]
    for p in (gain, bias):
        if p is not None:
            p = as_tensor(p)
            if p.shape != (d,):
                raise ShapeError(f"layer_norm: affine shape {p.shape} != ({d},)")
            parents.append(p)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat
    if gain is not None:
        out = out * as_tensor(gain).data
    if bias is not None:
        out = out + as_tensor(bias).data
    g_t = parents[1] if gain is not None else None
    b_t = parents[-1] if bias is not None else None

    def bw(g):
        lead = tuple(range(g.ndim - 1))
        if b_t is not None:
            _accumulate(b_t, g.sum(axis=lead))
        if g_t is not None:
            _accumulate(g_t, (g * xhat).sum(axis=lead))
            g = g * g_t.data
        dx = inv * (g - g.mean(axis=-1, keepdims=True) - xhat * np.mean(g * xhat, axis=-1, keepdims=True))
        _accumulate(x, dx)

    return _make(out, tuple(parents), bw)


def dropout_mask(shape, p, seed, layer_id, step):
    """Keep-mask scaled by 1/(1-p) from a counter-based generator keyed on (seed, layer, step)."""
    bitgen = np.random.Philox(np.random.SeedSequence([int(seed), int(layer_id), int(step)]))
    keep = np.random.Generator(bitgen).random(shape) >= p
    return keep / (1.0 - p)


def dropout(x, p, seed=0, layer_id=0, step=0, train=True):
    x = as_tensor(x)
    if not 0.0 <= p < 1.0:
        raise InvalidArgumentError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    return mul(x, Tensor(dropout_mask(x.shape, p, seed, layer_id, step)))
