"""Vectorised forward-mode differentiation with dual numbers.

A :class:`Dual` holds a value array ``val`` and a tangent array ``eps`` whose
trailing axis indexes the seed directions, so a single forward pass yields the
full Jacobian with respect to a handful of inputs. The helpers in this module
(``sqrt``, ``where``, ``atan2`` ...) accept plain ndarrays as well, which lets
the colour-difference and loss code be written once and evaluated either for
values only or for values plus gradients.

Non-differentiable points follow the usual conventions: ``abs`` and ``sqrt``
get a zero derivative at zero, ``atan2`` at the origin, and ``where``
propagates the tangent of the selected branch.
"""

from __future__ import annotations

import numpy as np


class Dual:
    __slots__ = ("val", "eps")
    # make ``ndarray <op> Dual`` defer to the Dual reflected operators
    __array_priority__ = 1000

    def __init__(self, val, eps):
        self.val = np.asarray(val, dtype=float)
        self.eps = np.asarray(eps, dtype=float)
        if self.eps.shape[:-1] != self.val.shape:
            raise ValueError(f"tangent shape {self.eps.shape} does not match value shape {self.val.shape}")

    @classmethod
    def variables(cls, values) -> "Dual":
        """Seed a 1-D array of independent variables with the identity tangent."""
        v = np.asarray(values, dtype=float)
        if v.ndim != 1:
            raise ValueError("variables() expects a 1-D array")
        return cls(v, np.eye(v.size))

    @classmethod
    def constant(cls, values, nvar: int) -> "Dual":
        v = np.asarray(values, dtype=float)
        return cls(v, np.zeros(v.shape + (nvar,)))

    @property
    def shape(self) -> tuple:
        return self.val.shape

    @property
    def ndim(self) -> int:
        return self.val.ndim

    @property
    def nvar(self) -> int:
        return self.eps.shape[-1]

    def __len__(self) -> int:
        return len(self.val)

    def __repr__(self) -> str:
        return f"Dual(val={self.val!r}, nvar={self.nvar})"

    def __getitem__(self, idx) -> "Dual":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual(self.val[idx], self.eps[idx + (slice(None),)])

    def reshape(self, *shape) -> "Dual":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        val = self.val.reshape(shape)
        return Dual(val, self.eps.reshape(val.shape + (self.nvar,)))

    # arithmetic -----------------------------------------------------------

    def _broadcast(self, shape) -> np.ndarray:
        return np.broadcast_to(self.eps, tuple(shape) + (self.nvar,))

    def __add__(self, other) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.eps + other.eps)
        val = self.val + other
        return Dual(val, self._broadcast(val.shape))

    __radd__ = __add__

    def __sub__(self, other) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.eps - other.eps)
        val = self.val - other
        return Dual(val, self._broadcast(val.shape))

    def __rsub__(self, other) -> "Dual":
        val = other - self.val
        return Dual(val, -self._broadcast(val.shape))

    def __neg__(self) -> "Dual":
        return Dual(-self.val, -self.eps)

    def __mul__(self, other) -> "Dual":
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                self.eps * other.val[..., None] + other.eps * self.val[..., None],
            )
        other = np.asarray(other, dtype=float)
        return Dual(self.val * other, self.eps * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Dual":
        if isinstance(other, Dual):
            val = self.val / other.val
            return Dual(val, (self.eps - val[..., None] * other.eps) / other.val[..., None])
        other = np.asarray(other, dtype=float)
        return Dual(self.val / other, self.eps / other[..., None])

    def __rtruediv__(self, other) -> "Dual":
        other = np.asarray(other, dtype=float)
        val = other / self.val
        return Dual(val, -(val / self.val)[..., None] * self.eps)

    def __pow__(self, p) -> "Dual":
        if isinstance(p, Dual):
            raise TypeError("Dual exponents are not supported")
        p = float(p)
        if p == 2.0:
            return Dual(self.val * self.val, 2.0 * self.val[..., None] * self.eps)
        val = self.val**p
        return Dual(val, (p * self.val ** (p - 1.0))[..., None] * self.eps)

    def __abs__(self) -> "Dual":
        return Dual(np.abs(self.val), np.sign(self.val)[..., None] * self.eps)

    # comparisons act on values so they can feed ``where``
    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)


def value(x):
    """Strip tangents, returning the plain value."""
    return x.val if isinstance(x, Dual) else x


def _nvar(*args) -> int | None:
    for a in args:
        if isinstance(a, Dual):
            return a.nvar
    return None


def _lift(x, nvar: int) -> Dual:
    return x if isinstance(x, Dual) else Dual.constant(x, nvar)


def sqrt(x):
    if not isinstance(x, Dual):
        return np.sqrt(x)
    r = np.sqrt(x.val)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > 0, 0.5 / np.where(r > 0, r, 1.0), 0.0)
    return Dual(r, scale[..., None] * x.eps)


def exp(x):
    if not isinstance(x, Dual):
        return np.exp(x)
    e = np.exp(x.val)
    return Dual(e, e[..., None] * x.eps)


def sin(x):
    if not isinstance(x, Dual):
        return np.sin(x)
    return Dual(np.sin(x.val), np.cos(x.val)[..., None] * x.eps)


def cos(x):
    if not isinstance(x, Dual):
        return np.cos(x)
    return Dual(np.cos(x.val), -np.sin(x.val)[..., None] * x.eps)


def atan2(y, x):
    """Quadrant-aware arctangent in radians."""
    n = _nvar(y, x)
    if n is None:
        return np.arctan2(y, x)
    y, x = _lift(y, n), _lift(x, n)
    r2 = x.val**2 + y.val**2
    safe = np.where(r2 > 0, r2, 1.0)
    dx = np.where(r2 > 0, -y.val / safe, 0.0)
    dy = np.where(r2 > 0, x.val / safe, 0.0)
    return Dual(np.arctan2(y.val, x.val), dy[..., None] * y.eps + dx[..., None] * x.eps)


def where(cond, a, b):
    n = _nvar(a, b)
    if n is None:
        return np.where(cond, a, b)
    a, b = _lift(a, n), _lift(b, n)
    cond = np.asarray(cond)
    val = np.where(cond, a.val, b.val)
    eps = np.where(cond[..., None], a.eps, b.eps)
    return Dual(val, np.broadcast_to(eps, val.shape + (n,)))


def relu(x):
    return where(value(x) > 0, x, 0.0)


def minimum(x, bound):
    """Elementwise minimum; ties take ``x``."""
    return where(value(x) <= value(bound), x, bound)


def maximum(x, bound):
    return where(value(x) >= value(bound), x, bound)


def sum(x, axis=None):
    if not isinstance(x, Dual):
        return np.sum(x, axis=axis)
    if axis is None:
        return Dual(x.val.sum(), x.eps.reshape(-1, x.nvar).sum(axis=0))
    axis = axis % x.ndim
    return Dual(x.val.sum(axis=axis), x.eps.sum(axis=axis))


def mean(x, axis=None):
    if not isinstance(x, Dual):
        return np.mean(x, axis=axis)
    count = x.val.size if axis is None else x.val.shape[axis]
    return sum(x, axis) / count


def amin(x, axis: int = -1):
    """Minimum along one axis; the tangent follows the (first) argmin."""
    if not isinstance(x, Dual):
        return np.min(x, axis=axis)
    axis = axis % x.ndim
    idx = np.expand_dims(np.argmin(x.val, axis=axis), axis)
    val = np.take_along_axis(x.val, idx, axis=axis)
    eps = np.take_along_axis(x.eps, idx[..., None], axis=axis)
    return Dual(np.squeeze(val, axis), np.squeeze(eps, axis))


def stack(items, axis: int = -1):
    n = _nvar(*items)
    if n is None:
        return np.stack(items, axis=axis)
    items = [_lift(i, n) for i in items]
    val = np.stack([i.val for i in items], axis=axis)
    eps_axis = axis if axis >= 0 else axis - 1
    eps = np.stack([np.broadcast_to(i.eps, i.val.shape + (n,)) for i in items], axis=eps_axis)
    return Dual(val, eps)


def matmul(x, matrix):
    """``x @ matrix`` for a constant matrix; ``x`` may be a Dual."""
    matrix = np.asarray(matrix, dtype=float)
    if not isinstance(x, Dual):
        return np.asarray(x) @ matrix
    val = x.val @ matrix
    eps = np.einsum("...kn,km->...mn", x.eps, matrix)
    return Dual(val, eps)
