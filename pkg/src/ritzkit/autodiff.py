"""Reverse-mode differentiation on an append-only tape.

Records hold numpy arrays, so one record covers a whole sample batch.
Input gradients of a network are carried forward as tangent arrays of
shape ``(d, n, N_l)`` built from recorded ops, which makes any loss that
contains ``grad_x u`` differentiable with respect to the parameters by the
same reverse sweep (forward-over-reverse).  Activation masks are recorded
as constants: the derivative is exact wherever no pre-activation is zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .net import NetworkParams, ShapeError, relu_mask


class NumericError(ArithmeticError):
    """A recorded value or a back-propagated gradient is not finite."""

    def __init__(self, index: int, opcode: str, stage: str = "forward"):
        self.index = index
        self.opcode = opcode
        self.stage = stage
        super().__init__(f"non-finite value in {stage} pass at record {index} ({opcode})")


@dataclass
class _Record:
    opcode: str
    value: np.ndarray
    parents: tuple
    vjps: tuple


class Tape:
    """Append-only list of primitive records.

    Not thread-safe; use one tape per worker.
    """

    def __init__(self):
        self.records: list[_Record] = []

    def __len__(self):
        return len(self.records)

    def _push(self, opcode, value, parents=(), vjps=()) -> "Var":
        value = np.asarray(value, dtype=np.float64)
        index = len(self.records)
        if not np.all(np.isfinite(value)):
            raise NumericError(index, opcode)
        self.records.append(_Record(opcode, value, tuple(parents), tuple(vjps)))
        return Var(self, index)

    def variable(self, value) -> "Var":
        return self._push("leaf", np.array(value, dtype=np.float64))

    def watch(self, params: NetworkParams) -> "TracedNetwork":
        layers = tuple((self.variable(A), self.variable(b)) for A, b in params.layers)
        return TracedNetwork(self, params, layers)

    def gradients(self, out: "Var", wrt) -> list[np.ndarray]:
        """One reverse sweep from scalar ``out``; returns d out / d w for each ``w`` in ``wrt``."""
        if out.tape is not self:
            raise ValueError("output was recorded on another tape")
        if out.value.size != 1:
            raise ShapeError("can only differentiate a scalar")
        grads: list = [None] * (out.index + 1)
        grads[out.index] = np.ones_like(out.value)
        for i in range(out.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            rec = self.records[i]
            for parent, vjp in zip(rec.parents, rec.vjps):
                gp = vjp(g)
                if not np.all(np.isfinite(gp)):
                    raise NumericError(i, rec.opcode, stage="reverse")
                grads[parent] = gp if grads[parent] is None else grads[parent] + gp
        result = []
        for w in wrt:
            g = grads[w.index] if w.index <= out.index else None
            result.append(np.zeros_like(w.value) if g is None else g)
        return result


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _swap(a):
    return np.swapaxes(a, -1, -2)


class Var:
    """Handle to one tape record."""

    __slots__ = ("tape", "index")
    # make numpy operators return NotImplemented so the reflected Var method runs
    __array_ufunc__ = None

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.records[self.index].value

    @property
    def shape(self):
        return self.value.shape

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Var(#{self.index}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other) if isinstance(other, Var) else -np.asarray(other))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, e):
        return power(self, e)

    @property
    def T(self):
        return transpose(self)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise TypeError("at least one operand must be a Var")


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _binary(opcode, a, b, value, vjp_a, vjp_b):
    tape = _tape_of(a, b)
    parents, vjps = [], []
    if isinstance(a, Var):
        parents.append(a.index)
        vjps.append(vjp_a)
    if isinstance(b, Var):
        parents.append(b.index)
        vjps.append(vjp_b)
    return tape._push(opcode, value, parents, vjps)


def add(a, b) -> Var:
    va, vb = _val(a), _val(b)
    return _binary(
        "add", a, b, va + vb,
        lambda g: _unbroadcast(g, va.shape),
        lambda g: _unbroadcast(g, vb.shape),
    )


def mul(a, b) -> Var:
    va, vb = _val(a), _val(b)
    return _binary(
        "mul", a, b, va * vb,
        lambda g: _unbroadcast(g * vb, va.shape),
        lambda g: _unbroadcast(g * va, vb.shape),
    )


def div(a, b) -> Var:
    va, vb = _val(a), _val(b)
    return _binary(
        "div", a, b, va / vb,
        lambda g: _unbroadcast(g / vb, va.shape),
        lambda g: _unbroadcast(-g * va / (vb * vb), vb.shape),
    )


def matmul(a, b) -> Var:
    va, vb = _val(a), _val(b)
    if va.ndim < 2 or vb.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    return _binary(
        "matmul", a, b, va @ vb,
        lambda g: _unbroadcast(g @ _swap(vb), va.shape),
        lambda g: _unbroadcast(_swap(va) @ g, vb.shape),
    )


def maximum(a, b) -> Var:
    """Elementwise max; ties send the gradient to ``a``."""
    va, vb = _val(a), _val(b)
    pick_a = (va >= vb).astype(np.float64)
    return _binary(
        "max", a, b, np.maximum(va, vb),
        lambda g: _unbroadcast(g * pick_a, va.shape),
        lambda g: _unbroadcast(g * (1.0 - pick_a), vb.shape),
    )


def neg(a: Var) -> Var:
    return a.tape._push("neg", -a.value, (a.index,), (lambda g: -g,))


def transpose(a: Var) -> Var:
    return a.tape._push("transpose", _swap(a.value), (a.index,), (_swap,))


def reshape(a: Var, shape) -> Var:
    old = a.value.shape
    return a.tape._push("reshape", a.value.reshape(shape), (a.index,), (lambda g: g.reshape(old),))


def total(a: Var, axis=None) -> Var:
    """Sum over ``axis`` (all axes when ``None``)."""
    v = a.value
    out = v.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, v.shape).copy()
        return np.broadcast_to(np.expand_dims(g, axis), v.shape).copy()

    return a.tape._push("sum", out, (a.index,), (vjp,))


def relu(a: Var) -> Var:
    m = relu_mask(a.value)
    return a.tape._push("relu", a.value * m, (a.index,), (lambda g: g * m,))


def kink_kernel(z, width: float):
    """Gaussian density of standard deviation ``width`` evaluated at ``z``."""
    return np.exp(-0.5 * (z / width) ** 2) / (width * np.sqrt(2 * np.pi))


def masked_tangent(T: Var, z: Var, kink_width: float = 0.0) -> Var:
    """``T * 1[z > 0]``: input tangents through a ReLU, ``T`` of shape ``(d, n, N)``, ``z`` of ``(n, N)``.

    With ``kink_width == 0`` the mask is a constant and ``z`` gets no
    gradient.  With ``kink_width > 0`` the value is unchanged but the reverse
    pass treats the step's derivative as a Gaussian of that width, which
    estimates how moving kinks change an integral of a tangent-dependent
    integrand.
    """
    m = relu_mask(z.value)
    Tv = T.value
    if kink_width <= 0:
        return T.tape._push("mask", Tv * m, (T.index,), (lambda g: g * m,))
    eta = kink_kernel(z.value, kink_width)
    return T.tape._push(
        "mask", Tv * m, (T.index, z.index),
        (lambda g: g * m, lambda g: np.sum(g * Tv, axis=0) * eta),
    )


def abs_pow(a: Var, p: float) -> Var:
    """Elementwise ``|a|^p`` for ``p >= 1``."""
    v = a.value
    r = np.abs(v)
    coef = p * np.sign(v) * (r ** (p - 1) if p != 1 else np.ones_like(r))
    return a.tape._push("abs_pow", r ** p, (a.index,), (lambda g: g * coef,))


def norm_pow(a: Var, p: float, axis: int = -1) -> Var:
    """``(sum_axis a^2)^(p/2)``, the p-th power of the Euclidean norm along ``axis``.

    The derivative ``p |a|^(p-2) a`` is taken as zero where the norm vanishes.
    """
    v = a.value
    r = np.sqrt((v * v).sum(axis=axis))
    with np.errstate(divide="ignore"):
        coef = np.where(r > 0, p * r ** (p - 2.0) if p != 2 else 2.0, 0.0)
    return a.tape._push(
        "norm_pow", r ** p, (a.index,),
        (lambda g: np.expand_dims(g * coef, axis) * v,),
    )


def power(a: Var, e: float) -> Var:
    """``a^e`` for ``a >= 0``; the derivative at ``a == 0`` is taken as zero when ``e < 1``."""
    v = a.value
    if np.any(v < 0):
        raise ValueError("power expects a nonnegative base")
    at_zero = 1.0 if e == 1 else 0.0
    with np.errstate(divide="ignore"):
        coef = np.where(v > 0, e * v ** (e - 1.0), at_zero)
    return a.tape._push("pow", v ** e, (a.index,), (lambda g: g * coef,))


@dataclass(frozen=True)
class TracedNetwork:
    """Network parameters registered as tape leaves."""

    tape: Tape
    params: NetworkParams
    layers: tuple

    @property
    def input_dim(self) -> int:
        return self.params.input_dim

    def leaves(self) -> list[Var]:
        return [v for pair in self.layers for v in pair]


@dataclass(frozen=True)
class DualValue:
    """Network values and input gradients on a batch.

    ``primal`` has shape ``(n,)`` and ``tangent`` shape ``(n, d)``.  Both are
    tape records.
    """

    primal: Var
    tangent: Var


def _traced(params) -> TracedNetwork:
    if isinstance(params, TracedNetwork):
        return params
    if isinstance(params, NetworkParams):
        return Tape().watch(params)
    raise TypeError(f"expected NetworkParams or TracedNetwork, got {type(params).__name__}")


def _batch(net: TracedNetwork, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1 and net.input_dim == 1:
        X = X[:, None]
    elif X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ShapeError(f"input has shape {X.shape}, network expects dimension {net.input_dim}")
    return X


def forward_traced(params, X) -> Var:
    """Recorded realisation ``u_theta`` on a batch, shape ``(n,)``."""
    net = _traced(params)
    X = _batch(net, X)
    h = X
    for A, b in net.layers[:-1]:
        h = relu(h @ A.T + b)
    A, b = net.layers[-1]
    return reshape(h @ A.T + b, (X.shape[0],))


def forward_with_input_tangents(params, X, kink_width: float = 0.0) -> DualValue:
    """Recorded ``u_theta`` and ``grad_x u_theta`` on a batch.

    ``kink_width`` is passed to :func:`masked_tangent`; leave it at 0 for
    the exact (frozen-mask) derivative.
    """
    net = _traced(params)
    X = _batch(net, X)
    n, d = X.shape
    A, b = net.layers[0]
    At = A.T
    z = X @ At + b
    # tangent of the first pre-activation: rows of A_1 for every sample
    T = reshape(At, (d, 1, At.shape[1])) + np.zeros((d, n, 1))
    for A_next, b_next in net.layers[1:]:
        h = relu(z)
        T = masked_tangent(T, z, kink_width)
        At = A_next.T
        z = h @ At + b_next
        T = T @ At
    primal = reshape(z, (n,))
    tangent = transpose(reshape(T, (d, n)))
    return DualValue(primal, tangent)


def value_and_grad(loss_fn: Callable[[TracedNetwork], Var], params: NetworkParams):
    """Evaluate ``loss_fn`` on a fresh tape and return ``(value, flat gradient)``.

    The flat gradient follows :meth:`NetworkParams.flat` ordering.
    """
    tape = Tape()
    net = tape.watch(params)
    out = loss_fn(net)
    grads = tape.gradients(out, net.leaves())
    return float(out.value), np.concatenate([g.ravel() for g in grads])


def grad_params(loss_fn: Callable[[TracedNetwork], Var], params: NetworkParams) -> np.ndarray:
    return value_and_grad(loss_fn, params)[1]
