"""Dense float64 tensors with reverse-mode automatic differentiation.

The engine is deliberately small: a ``Tensor`` wraps a row-major numpy
array, and every operation that touches a grad-enabled tensor while a
``Tape`` is active appends one operation record to that tape.  Records are
appended in construction order, so the tape is topologically sorted by
construction and ``backward`` is a single reverse sweep.

Only the operations needed for MLPs, single-block attention, normalization
and the training losses are provided; there is no broadcasting beyond the
rank-2 + bias patterns those consumers use.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, DimensionError

_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))

_tls = threading.local()


def _tape_stack() -> list:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def _active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class OpRecord:
    """One tape entry: op kind, input tensors, and the backward rule.

    ``backward`` maps the upstream gradient to one gradient per input
    (``None`` for inputs that do not need one).  ``out_grad`` accumulates
    the gradient of the record's output during a sweep.
    """

    __slots__ = ("op", "inputs", "backward", "index", "out_grad")

    def __init__(self, op: str, inputs: tuple, backward: Callable):
        self.op = op
        self.inputs = inputs
        self.backward = backward
        self.index = -1
        self.out_grad: Optional[np.ndarray] = None


class Tape:
    """Ordered record of operations for one forward pass.

    Tapes nest via ``with``; operations record onto the innermost active
    tape.  A tape must not be shared across threads while being built or
    swept, and tensors must not flow between tapes.
    """

    def __init__(self):
        self.records: list[OpRecord] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tape_stack().pop()
        assert popped is self

    def _record(self, record: OpRecord) -> OpRecord:
        record.index = len(self.records)
        self.records.append(record)
        return record


class Tensor:
    """Dense 64-bit float value, optionally tracked for differentiation.

    ``grad`` is populated on grad-enabled leaves by :func:`backward`.
    ``tape_node`` points at the producing :class:`OpRecord`, or is ``None``
    for leaves and for values produced outside any active tape.
    """

    __slots__ = ("data", "grad_enabled", "tape_node", "grad")

    def __init__(self, data, grad_enabled: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.size == 0:
            raise DimensionError(
                f"zero-extent tensors are rejected (shape {arr.shape})"
            )
        self.data = arr
        self.grad_enabled = bool(grad_enabled)
        self.tape_node: Optional[OpRecord] = None
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad_enabled={self.grad_enabled})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _result(data: np.ndarray, op: str, inputs: tuple, backward: Callable) -> Tensor:
    """Wrap an op result, recording it when grads are both wanted and possible."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.tape_node = None
    out.grad = None
    out.grad_enabled = any(t.grad_enabled for t in inputs)
    if out.grad_enabled:
        tape = _active_tape()
        if tape is not None:
            out.tape_node = tape._record(OpRecord(op, inputs, backward))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, ext in enumerate(shape) if ext == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        ga = _unbroadcast(g, a.data.shape) if a.grad_enabled else None
        gb = _unbroadcast(g, b.data.shape) if b.grad_enabled else None
        return ga, gb

    return _result(data, "add", (a, b), backward)


def sub(a: Tensor, b) -> Tensor:
    b = _as_tensor(b)
    data = a.data - b.data

    def backward(g):
        ga = _unbroadcast(g, a.data.shape) if a.grad_enabled else None
        gb = -_unbroadcast(g, b.data.shape) if b.grad_enabled else None
        return ga, gb

    return _result(data, "sub", (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    b = _as_tensor(b)
    data = a.data * b.data
    a_data, b_data = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g * b_data, a_data.shape) if a.grad_enabled else None
        gb = _unbroadcast(g * a_data, b_data.shape) if b.grad_enabled else None
        return ga, gb

    return _result(data, "mul", (a, b), backward)


def div(a: Tensor, b) -> Tensor:
    b = _as_tensor(b)
    data = a.data / b.data
    a_data, b_data = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g / b_data, a_data.shape) if a.grad_enabled else None
        gb = (
            _unbroadcast(-g * a_data / (b_data * b_data), b_data.shape)
            if b.grad_enabled
            else None
        )
        return ga, gb

    return _result(data, "div", (a, b), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        return (g * data if a.grad_enabled else None,)

    return _result(data, "exp", (a,), backward)


def log(a: Tensor) -> Tensor:
    a_data = a.data
    data = np.log(a_data)

    def backward(g):
        return (g / a_data if a.grad_enabled else None,)

    return _result(data, "log", (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def backward(g):
        return (g * (0.5 / data) if a.grad_enabled else None,)

    return _result(data, "sqrt", (a,), backward)


# ---------------------------------------------------------------------------
# matrix products


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of stacked matrices.

    Supported shapes: both operands rank 2, both the same rank (>2) with
    identical leading batch dims, or a stacked left operand against a
    rank-2 right operand (the linear-layer pattern).
    """
    a = _as_tensor(a)
    b = _as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise DimensionError(
            f"matmul needs rank >= 2 operands, got {ad.shape} @ {bd.shape}"
        )
    if ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(f"matmul inner extents disagree: {ad.shape} @ {bd.shape}")
    if ad.ndim != bd.ndim and bd.ndim != 2:
        raise DimensionError(f"unsupported matmul ranks: {ad.shape} @ {bd.shape}")
    if ad.ndim == bd.ndim and ad.ndim > 2 and ad.shape[:-2] != bd.shape[:-2]:
        raise DimensionError(
            f"matmul batch extents disagree: {ad.shape} @ {bd.shape}"
        )
    data = np.matmul(ad, bd)

    def backward(g):
        ga = gb = None
        if a.grad_enabled:
            ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        if b.grad_enabled:
            if bd.ndim == 2 and ad.ndim > 2:
                k = ad.shape[-1]
                n = g.shape[-1]
                gb = ad.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return ga, gb

    return _result(data, "matmul", (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` as one tape record.

    ``weight`` is (fan_in, fan_out) or a stack of such matrices with
    leading dims matching ``x``; ``bias`` broadcasts over the row axis.
    """
    if bias is None:
        return matmul(x, weight)
    xd, wd, bd = x.data, weight.data, bias.data
    if xd.shape[-1] != wd.shape[-2]:
        raise DimensionError(f"linear inner extents disagree: {xd.shape} @ {wd.shape}")
    if xd.ndim != wd.ndim and wd.ndim != 2:
        raise DimensionError(f"unsupported linear ranks: {xd.shape} @ {wd.shape}")
    data = np.matmul(xd, wd)
    data += bd

    def backward(g):
        gx = gw = gb = None
        if x.grad_enabled:
            gx = np.matmul(g, np.swapaxes(wd, -1, -2))
        if weight.grad_enabled:
            if wd.ndim == 2 and xd.ndim > 2:
                k = xd.shape[-1]
                gw = xd.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
            else:
                gw = np.matmul(np.swapaxes(xd, -1, -2), g)
        if bias.grad_enabled:
            gb = _unbroadcast(g, bd.shape)
        return gx, gw, gb

    return _result(data, "linear", (x, weight, bias), backward)


def pair_dots(a: Tensor, b: Tensor) -> Tensor:
    """All pairwise row dot products: out[i, j] = <a_i, b_j>.

    Computed via einsum with a fixed inner summation order, so
    ``pair_dots(b, a)`` is the bitwise transpose of ``pair_dots(a, b)``
    (a plain BLAS matmul does not guarantee that).
    """
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[1]:
        raise DimensionError(f"pair_dots needs (n, p) x (m, p), got {ad.shape} x {bd.shape}")
    data = np.einsum("ik,jk->ij", ad, bd)

    def backward(g):
        ga = np.einsum("ij,jk->ik", g, bd) if a.grad_enabled else None
        gb = np.einsum("ij,ik->jk", g, ad) if b.grad_enabled else None
        return ga, gb

    return _result(data, "pair_dots", (a, b), backward)


# ---------------------------------------------------------------------------
# nonlinearities and normalization


def gelu(a: Tensor) -> Tensor:
    """Exact Gaussian-error-linear unit ``x * Phi(x)`` (erf form)."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    data = x * cdf

    def backward(g):
        if not a.grad_enabled:
            return (None,)
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return (g * (cdf + x * pdf),)

    return _result(data, "gelu", (a,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit (biased) variance, then affine."""
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise DimensionError(
            f"layer_norm affine shapes {gain.data.shape}/{bias.data.shape} "
            f"do not match last extent of {x.data.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data
    gain_data = gain.data

    def backward(g):
        gx = ggain = gbias = None
        if gain.grad_enabled:
            ggain = (g * xhat).reshape(-1, d).sum(axis=0)
        if bias.grad_enabled:
            gbias = g.reshape(-1, d).sum(axis=0)
        if x.grad_enabled:
            gxh = g * gain_data
            gx = inv * (
                gxh
                - gxh.mean(axis=-1, keepdims=True)
                - xhat * (gxh * xhat).mean(axis=-1, keepdims=True)
            )
        return gx, ggain, gbias

    return _result(data, "layer_norm", (x, gain, bias), backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, with max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if not x.grad_enabled:
            return (None,)
        dot = (g * data).sum(axis=-1, keepdims=True)
        return (data * (g - dot),)

    return _result(data, "softmax_rows", (x,), backward)


def logsumexp_rows(x: Tensor) -> Tensor:
    """Stable ``log(sum(exp(x)))`` over the last axis (the axis is dropped)."""
    m = x.data.max(axis=-1, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=-1, keepdims=True)
    data = (m + np.log(s))[..., 0]
    soft = e / s

    def backward(g):
        if not x.grad_enabled:
            return (None,)
        return (soft * g[..., None],)

    return _result(data, "logsumexp_rows", (x,), backward)


# ---------------------------------------------------------------------------
# shape manipulation and reductions


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.data.shape
    data = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(old) if a.grad_enabled else None,)

    return _result(data, "reshape", (a,), backward)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    # Contiguous copy, not a view: downstream reductions must round the same
    # way whether they run on a transposed result or on a fresh array.
    axes = tuple(axes)
    inverse = tuple(int(i) for i in np.argsort(axes))
    data = np.ascontiguousarray(np.transpose(a.data, axes))

    def backward(g):
        if not a.grad_enabled:
            return (None,)
        return (np.ascontiguousarray(np.transpose(g, inverse)),)

    return _result(data, "transpose", (a,), backward)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    parts = tuple(parts)
    data = np.concatenate([p.data for p in parts], axis=axis)
    extents = [p.data.shape[axis] for p in parts]
    offsets = np.concatenate(([0], np.cumsum(extents)))

    def backward(g):
        grads = []
        for i, p in enumerate(parts):
            if p.grad_enabled:
                index = [slice(None)] * g.ndim
                index[axis] = slice(offsets[i], offsets[i + 1])
                grads.append(np.ascontiguousarray(g[tuple(index)]))
            else:
                grads.append(None)
        return tuple(grads)

    return _result(data, "concat", parts, backward)


def narrow(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice ``[start, stop)`` along one axis."""
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    data = np.ascontiguousarray(a.data[tuple(index)])

    def backward(g):
        if not a.grad_enabled:
            return (None,)
        full = np.zeros_like(a.data)
        full[tuple(index)] = g
        return (full,)

    return _result(data, "narrow", (a,), backward)


def diagonal(a: Tensor) -> Tensor:
    """Main diagonal of a square matrix."""
    if a.data.ndim != 2 or a.data.shape[0] != a.data.shape[1]:
        raise DimensionError(f"diagonal needs a square matrix, got {a.data.shape}")

    data = np.ascontiguousarray(np.diagonal(a.data))

    def backward(g):
        if not a.grad_enabled:
            return (None,)
        full = np.zeros_like(a.data)
        np.fill_diagonal(full, g)
        return (full,)

    return _result(data, "diagonal", (a,), backward)


def sum_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.grad_enabled:
            return (None,)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _result(data, "sum_axis", (a,), backward)


def mean_axis(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    n = a.data.shape[axis]
    data = a.data.mean(axis=axis, keepdims=keepdims)

    def backward(g):
        if not a.grad_enabled:
            return (None,)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, a.data.shape).copy(),)

    return _result(data, "mean_axis", (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum())

    def backward(g):
        return (np.full_like(a.data, float(g)) if a.grad_enabled else None,)

    return _result(data, "sum_all", (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    data = np.asarray(a.data.mean())

    def backward(g):
        return (np.full_like(a.data, float(g) / n) if a.grad_enabled else None,)

    return _result(data, "mean_all", (a,), backward)


# ---------------------------------------------------------------------------
# backward sweep


def backward(tape: Tape, loss: Tensor) -> dict:
    """Reverse sweep: gradient of ``loss`` w.r.t. every grad-enabled leaf.

    Returns a ``{leaf Tensor: gradient array}`` mapping and mirrors it onto
    each leaf's ``.grad``.  Grad-enabled leaves on the tape that do not
    reach ``loss`` get zeros.  Two sweeps over the same tape produce
    bitwise-equal gradients because record order fixes accumulation order.
    """
    if loss.data.size != 1:
        raise ContractError(
            f"backward needs a scalar loss, got shape {loss.data.shape}"
        )

    leaves: dict[int, Tensor] = {}
    for record in tape.records:
        record.out_grad = None
        for t in record.inputs:
            if t.grad_enabled and t.tape_node is None:
                leaves.setdefault(id(t), t)

    leaf_grads: dict[int, np.ndarray] = {}
    if loss.tape_node is not None:
        loss.tape_node.out_grad = np.ones_like(loss.data)
        for record in reversed(tape.records):
            g = record.out_grad
            record.out_grad = None
            if g is None:
                continue
            for t, gt in zip(record.inputs, record.backward(g)):
                if gt is None or not t.grad_enabled:
                    continue
                node = t.tape_node
                if node is not None:
                    if node.out_grad is None:
                        node.out_grad = gt
                    else:
                        node.out_grad = node.out_grad + gt
                else:
                    acc = leaf_grads.get(id(t))
                    leaf_grads[id(t)] = gt if acc is None else acc + gt
    elif loss.grad_enabled:
        # Degenerate graph: the loss itself is a leaf.
        leaves.setdefault(id(loss), loss)
        leaf_grads[id(loss)] = np.ones_like(loss.data)

    result: dict[Tensor, np.ndarray] = {}
    for key, leaf in leaves.items():
        g = leaf_grads.get(key)
        if g is None:
            g = np.zeros_like(leaf.data)
        leaf.grad = g
        result[leaf] = g
    return result
