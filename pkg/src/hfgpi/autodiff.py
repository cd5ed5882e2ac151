"""Dense 2-D tensors with tape-based reverse-mode differentiation.

Every value is a float64 matrix. Operations record their parents and a
local backward rule; :func:`grad` walks the recorded graph in reverse
topological order and accumulates adjoints. Row and column vectors are
just ``1 x n`` and ``n x 1`` matrices.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, InputError

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def as_matrix(x, *, check_finite: bool = True) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"expected at most 2 dimensions, got shape {arr.shape}")
    if check_finite and not np.all(np.isfinite(arr)):
        raise InputError("matrix contains NaN or Inf entries")
    return arr


class Tensor:
    """A matrix value plus the tape entry that produced it."""

    __slots__ = ("value", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple["Tensor", ...] = (), _backward: BackwardFn | None = None,
                 _check: bool = True):
        self.value = as_matrix(value, check_finite=_check) if _check else value
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def numpy(self) -> np.ndarray:
        return self.value

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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def constant(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(x, name: str | None = None) -> Tensor:
    return Tensor(x, requires_grad=True, name=name)


def _make(value: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(value, True, None, parents, backward, _check=False)
    return Tensor(value, False, _check=False)


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    for ax in (0, 1):
        if a.shape[ax] != b.shape[ax] and 1 not in (a.shape[ax], b.shape[ax]):
            raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _make(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with row/column broadcasting."""
    a, b = constant(a), constant(b)
    _broadcast_shape(a, b, "mul")
    av, bv = a.value, b.value
    return _make(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.value * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    return _make(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a: Tensor) -> Tensor:
    return _make(a.value.T.copy(), (a,), lambda g: (g.T,))


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0.0  # subgradient 0 at the kink
    return _make(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    x = a.value
    if np.any(x <= 0.0):
        raise InputError("log of a non-positive entry")
    return _make(np.log(x), (a,), lambda g: (g / x,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp entries to [lo, hi]; the gradient is zero where clamping bites."""
    x = a.value
    inside = (x >= lo) & (x <= hi)
    return _make(np.clip(x, lo, hi), (a,), lambda g: (g * inside,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.value)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


# ---------------------------------------------------------------------------
# reductions


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _make(np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean_all(a: Tensor) -> Tensor:
    n = a.value.size
    return scale(sum_all(a), 1.0 / n)


def sum_rows(a: Tensor) -> Tensor:
    """Column-wise sum: ``n x m`` to ``1 x m``."""
    n = a.shape[0]
    return _make(a.value.sum(axis=0, keepdims=True), (a,), lambda g: (np.repeat(g, n, axis=0),))


def sum_cols(a: Tensor) -> Tensor:
    """Row-wise sum: ``n x m`` to ``n x 1``."""
    m = a.shape[1]
    return _make(a.value.sum(axis=1, keepdims=True), (a,), lambda g: (np.repeat(g, m, axis=1),))


def frobenius_sq(a: Tensor) -> Tensor:
    x = a.value
    return _make(np.array([[np.sum(x * x)]]), (a,), lambda g: (2.0 * g[0, 0] * x,))


def frobenius_norm(a: Tensor) -> Tensor:
    x = a.value
    nrm = float(np.sqrt(np.sum(x * x)))

    def back(g):
        if nrm == 0.0:
            return (np.zeros_like(x),)
        return (g[0, 0] * x / nrm,)

    return _make(np.array([[nrm]]), (a,), back)


# ---------------------------------------------------------------------------
# structured ops


def row_softmax(a: Tensor) -> Tensor:
    x = a.value
    z = np.exp(x - x.max(axis=1, keepdims=True))
    out = z / z.sum(axis=1, keepdims=True)

    def back(g):
        return (out * (g - np.sum(g * out, axis=1, keepdims=True)),)

    return _make(out, (a,), back)


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """``out[i, j] = cos(a_i, b_j)`` between the rows of ``a`` and ``b``."""
    a, b = constant(a), constant(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"cosine_similarity: widths differ, {a.shape} vs {b.shape}")
    na = np.linalg.norm(a.value, axis=1, keepdims=True)
    nb = np.linalg.norm(b.value, axis=1, keepdims=True)
    for label, norms in (("left", na), ("right", nb)):
        zero = np.flatnonzero(norms[:, 0] == 0.0)
        if zero.size:
            raise InputError(f"cosine_similarity: {label} row {int(zero[0])} has zero norm")
    ua, ub = a.value / na, b.value / nb
    out = ua @ ub.T

    def back(g):
        # d cos / d a_i = (ub_j - out_ij * ua_i) / |a_i|
        ga = (g @ ub - np.sum(g * out, axis=1, keepdims=True) * ua) / na
        gb = (g.T @ ua - np.sum(g * out, axis=0)[:, None] * ub) / nb
        return ga, gb

    return _make(out, (a, b), back)


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean / unit variance, then scale and shift."""
    x = a.value
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gv = gamma.value

    def back(g):
        gx = g * gv
        dx = inv * (gx - gx.mean(axis=1, keepdims=True)
                    - xhat * np.mean(gx * xhat, axis=1, keepdims=True))
        return dx, np.sum(g * xhat, axis=0, keepdims=True), np.sum(g, axis=0, keepdims=True)

    return _make(xhat * gv + beta.value, (a, gamma, beta), back)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        out[:, start:stop] = g
        return (out,)

    return _make(a.value[:, start:stop].copy(), (a,), back)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    widths = [p.shape[1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def back(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _make(np.concatenate([p.value for p in parts], axis=1), tuple(parts), back)


# ---------------------------------------------------------------------------
# reverse accumulation


def _topological(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(loss: Tensor, params: Iterable[Tensor]) -> list[np.ndarray]:
    """Return ``dloss/dparam`` for every parameter, zeros where unreached."""
    params = list(params)
    if loss.shape != (1, 1):
        raise ContractError(f"reverse accumulation needs a 1x1 loss, got {loss.shape}")
    adj: dict[int, np.ndarray] = {}
    if loss.requires_grad:
        adj[id(loss)] = np.ones((1, 1))
        for node in reversed(_topological(loss)):
            g = adj.get(id(node))
            if g is None or node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adj:
                    adj[key] = adj[key] + pg
                else:
                    adj[key] = pg
    return [adj.get(id(p), np.zeros(p.shape)).copy() for p in params]


reverse_accumulate = grad
