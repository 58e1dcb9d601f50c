"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable primitive records its parents and a backward closure on
the output tensor.  ``backward`` rebuilds the tape (a topological ordering of
the recorded graph) from the loss and sweeps it in reverse, accumulating
gradients additively wherever a tensor fans out.

The engine is deliberately small: numpy arrays hold the data, operations
broadcast the way numpy does, and the graph is rebuilt on every forward pass.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError, DimensionError, NumericError

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """An n-dimensional float64 array that can take part in differentiation.

    Parameters
    ----------
    data : array_like
        Values; always stored as a float64 array.
    requires_grad : bool
        Whether gradients should be collected for this tensor.
    """

    __array_priority__ = 1000.0
    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- graph ---------------------------------------------------------
    def backward(self, retain_graph: bool = False) -> None:
        backward(self, retain_graph=retain_graph)

    # -- operators -----------------------------------------------------
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
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    # -- method forms --------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    @property
    def T(self) -> "Tensor":
        return self.swapaxes(-1, -2)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def relu(self) -> "Tensor":
        return relu(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)


def _raise_item(t: Tensor):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Iterable[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    out = Tensor(data)
    out.op = op
    parents = tuple(parents)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_check(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


# -- tape and backward -------------------------------------------------

def build_tape(root: Tensor) -> list[Tensor]:
    """Return the recorded graph under ``root`` in topological order.

    Inputs of every recorded op precede the op's output; ``root`` is last.
    """
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
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, retain_graph: bool = False) -> None:
    """Populate ``.grad`` on every requires-grad tensor reachable from ``loss``."""
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor with requires_grad=True")
    tape = build_tape(loss)
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            # leaves own their buffer; interior grads may alias the flowing array
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        node.grad = g if node.grad is None else node.grad + g
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + pg
            else:
                pending[key] = pg
        if not retain_graph:
            node._parents = ()
            node._backward = None


# -- elementwise arithmetic -------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "mul")
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g * bd, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(ad * bd, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a, b, "div")
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g / bd, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * ad / (bd * bd), b.shape) if b.requires_grad else None
        return ga, gb

    return _make(ad / bd, (a, b), bw, "div")


def power(a: Tensor, exponent: float) -> Tensor:
    a = as_tensor(a)
    p = float(exponent)
    ad = a.data

    def bw(g):
        return (g * p * ad ** (p - 1.0),)

    return _make(ad**p, (a,), bw, "pow")


def exp(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def bw(g):
        return (g * out,)

    return _make(out, (a,), bw, "exp")


def log(a: Tensor) -> Tensor:
    a = as_tensor(a)
    ad = a.data

    def bw(g):
        return (g / ad,)

    return _make(np.log(ad), (a,), bw, "log")


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def bw(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), bw, "tanh")


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def bw(g):
        return (g * mask,)

    return _make(np.where(mask, a.data, 0.0), (a,), bw, "relu")


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def bw(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), bw, "sigmoid")


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "tanh": tanh,
    "relu": relu,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
}


def elementwise(op: str, *operands) -> Tensor:
    """Dispatch a pointwise primitive by name (``add``, ``tanh``, ...)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}; choose from {sorted(_ELEMENTWISE)}") from None
    return fn(*operands)


# -- linear algebra ----------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs operands with ndim >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul batch dimensions differ: {a.shape} @ {b.shape}") from None
    ad, bd = a.data, b.data

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            if a.ndim == 2 and bd.ndim > 2:
                # contract the batch axes directly instead of summing a stacked product
                lead = tuple(range(bd.ndim - 2))
                ga = np.tensordot(g, bd, axes=(lead + (bd.ndim - 1,), lead + (bd.ndim - 1,)))
            else:
                ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), a.shape)
        if b.requires_grad:
            if b.ndim == 2 and ad.ndim > 2:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, b.shape)
        return ga, gb

    return _make(ad @ bd, (a, b), bw, "matmul")


# -- reductions and shape manipulation --------------------------------

def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    shape = a.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(a.data.sum(axis=axes, keepdims=keepdims), (a,), bw, "sum")


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return tsum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {old} to {shape}") from None

    def bw(g):
        return (g.reshape(old),)

    return _make(out, (a,), bw, "reshape")


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))

    def bw(g):
        return (np.transpose(g, inverse),)

    return _make(np.transpose(a.data, axes), (a,), bw, "transpose")


def getitem(a: Tensor, index) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    fancy = isinstance(index, (list, np.ndarray)) or (
        isinstance(index, tuple) and any(isinstance(i, (list, np.ndarray)) for i in index)
    )

    def bw(g):
        full = np.zeros(shape)
        if fancy:
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return _make(a.data[index], (a,), bw, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat along axis {axis} failed for shapes {shapes}: {exc}") from None
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _make(out, tensors, bw, "concat")


# -- normalizing and pooling ops --------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``."""
    x = as_tensor(x)
    if x.shape[axis] < 1:
        raise DimensionError(f"softmax over an empty axis, shape {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax received non-finite input")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise NumericError("log_softmax received non-finite input")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    probs = np.exp(out)

    def bw(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), bw, "log_softmax")


def mean_pool_time(x: Tensor, axis: int = -2) -> Tensor:
    """Average over the time axis (rows of a ``[T, F]`` matrix by default)."""
    x = as_tensor(x)
    if x.shape[axis] < 1:
        raise DimensionError(f"mean_pool_time needs T >= 1, got shape {x.shape}")
    return tmean(x, axis=axis)


def conv1d(x: Tensor, filters: Tensor, padding: int | str = 0) -> Tensor:
    """Cross-correlate ``x`` of shape ``[..., C_in, T]`` with ``filters[C_out, C_in, K]``.

    ``padding`` is a number of zeros added on both ends, or ``"same"`` to keep
    the output length equal to ``T`` (extra zero on the right for even K).
    """
    x, filters = as_tensor(x), as_tensor(filters)
    if filters.ndim != 3:
        raise DimensionError(f"conv1d filters must be [C_out, C_in, K], got {filters.shape}")
    c_out, c_in, k = filters.shape
    if x.ndim < 2 or x.shape[-2] != c_in:
        raise DimensionError(f"conv1d input {x.shape} does not match filters {filters.shape}")
    if padding == "same":
        left, right = (k - 1) // 2, k - 1 - (k - 1) // 2
    else:
        left = right = int(padding)
    t_in = x.shape[-1]
    if t_in + left + right < k:
        raise DimensionError(f"conv1d kernel {k} longer than padded input length {t_in + left + right}")
    xd = x.data
    if left or right:
        pad = [(0, 0)] * (xd.ndim - 1) + [(left, right)]
        xd = np.pad(xd, pad)
    t_out = xd.shape[-1] - k + 1
    windows = np.lib.stride_tricks.sliding_window_view(xd, k, axis=-1)  # [..., C_in, T', K]
    wd = filters.data
    lead = x.shape[:-2]
    flat = windows.reshape(-1, c_in, t_out, k)
    out = np.einsum("bctk,ock->bot", flat, wd, optimize=True).reshape(*lead, c_out, t_out)

    def bw(g):
        gf = g.reshape(-1, c_out, t_out)
        gw = np.einsum("bot,bctk->ock", gf, flat, optimize=True) if filters.requires_grad else None
        gx = None
        if x.requires_grad:
            gwin = np.einsum("bot,ock->bctk", gf, wd, optimize=True)
            gxp = np.zeros((gf.shape[0], c_in, t_out + k - 1))
            for j in range(k):
                gxp[:, :, j : j + t_out] += gwin[:, :, :, j]
            gxp = gxp[:, :, left : left + t_in]
            gx = gxp.reshape(x.shape)
        return gx, gw

    return _make(out, (x, filters), bw, "conv1d")


class BatchNormState:
    """Running statistics for one batch-norm layer."""

    def __init__(self, num_features: int, momentum: float = 0.9, eps: float = 1e-5):
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """Normalize each feature (last axis) over all leading axes.

    Training mode uses batch statistics and updates ``state``; evaluation mode
    uses the running statistics.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    nf = x.shape[-1]
    if gamma.shape != (nf,) or beta.shape != (nf,):
        raise DimensionError(f"batch_norm affine params must be ({nf},), got {gamma.shape}, {beta.shape}")
    axes = tuple(range(x.ndim - 1))
    eps = state.eps
    if training:
        if x.ndim < 2 or x.shape[0] < 2:
            raise ConfigurationError(f"batch_norm in train mode needs a batch of at least 2, got shape {x.shape}")
        n = int(np.prod(x.shape[:-1]))
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = state.momentum
        state.running_mean = m * state.running_mean + (1.0 - m) * mu
        unbiased = var * n / (n - 1) if n > 1 else var
        state.running_var = m * state.running_var + (1.0 - m) * unbiased
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * inv
        gd = gamma.data

        def bw(g):
            gg = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
            gb = g.sum(axis=axes) if beta.requires_grad else None
            gx = None
            if x.requires_grad:
                gxhat = g * gd
                gx = (inv / n) * (
                    n * gxhat - gxhat.sum(axis=axes) - xhat * (gxhat * xhat).sum(axis=axes)
                )
            return gx, gg, gb

        return _make(xhat * gamma.data + beta.data, (x, gamma, beta), bw, "batch_norm")

    inv = 1.0 / np.sqrt(state.running_var + eps)
    xhat = (x.data - state.running_mean) * inv
    gd = gamma.data

    def bw_eval(g):
        gx = g * gd * inv if x.requires_grad else None
        gg = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        gb = g.sum(axis=axes) if beta.requires_grad else None
        return gx, gg, gb

    return _make(xhat * gamma.data + beta.data, (x, gamma, beta), bw_eval, "batch_norm")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in training mode needs an rng")
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return mul(x, Tensor(mask))
