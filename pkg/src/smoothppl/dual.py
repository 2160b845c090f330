"""Vectorised forward-mode dual numbers.

A :class:`Dual` carries a value array of shape ``B`` (possibly ``()``) and a
gradient array of shape ``B + (m,)`` holding partials with respect to the
``m`` program parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised for log/inv of a nonpositive argument."""


@dataclass(eq=False)
class Dual:
    value: np.ndarray
    grad: np.ndarray

    __array_ufunc__ = None  # keep numpy from broadcasting over Dual objects

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=float)
        self.grad = np.asarray(self.grad, dtype=float)

    @property
    def nparams(self) -> int:
        return self.grad.shape[-1]

    def __repr__(self):
        return f"Dual(value={self.value!r}, grad={self.grad!r})"

    def __neg__(self):
        return Dual(-self.value, -self.grad)

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.grad + other.grad)
        other = np.asarray(other, dtype=float)
        return Dual(self.value + other, np.broadcast_to(self.grad, other.shape + self.grad.shape[-1:])
                    if other.ndim > self.value.ndim else self.grad)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value * other.value,
                        self.grad * other.value[..., None] + other.grad * self.value[..., None])
        other = np.asarray(other, dtype=float)
        return Dual(self.value * other, self.grad * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * inv(other)

    def __rtruediv__(self, other):
        return inv(self) * other


def lift(x, m: int):
    """Promote a plain number or array to a Dual with zero partials."""
    if isinstance(x, Dual):
        return x
    x = np.asarray(x, dtype=float)
    return Dual(x, np.zeros(x.shape + (m,)))


def value_of(x):
    return x.value if isinstance(x, Dual) else x


def variables(theta) -> list:
    """One Dual per coordinate of ``theta`` seeded with a unit partial."""
    theta = np.asarray(theta, dtype=float)
    eye = np.eye(len(theta))
    return [Dual(theta[i], eye[i]) for i in range(len(theta))]


def _unary(x, f, df):
    """Apply ``f`` with derivative ``df`` (a function of the value)."""
    if isinstance(x, Dual):
        v = x.value
        return Dual(f(v), x.grad * df(v)[..., None])
    return f(x)


def _check_pos(v, what):
    if np.any(np.asarray(v) <= 0):
        raise DomainError(f"domain violation: {what} of nonpositive value")


def inv(x):
    _check_pos(value_of(x), "inv")
    if isinstance(x, Dual):
        r = 1.0 / x.value
        return Dual(r, x.grad * (-(r * r))[..., None])
    return 1.0 / x


def exp(x):
    if isinstance(x, Dual):
        e = np.exp(x.value)
        return Dual(e, x.grad * e[..., None])
    return np.exp(x)


def log(x):
    _check_pos(value_of(x), "log")
    if isinstance(x, Dual):
        return Dual(np.log(x.value), x.grad * (1.0 / x.value)[..., None])
    return np.log(x)


def sigmoid(x):
    """Numerically stable logistic function on plain arrays."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def sigma_eta(x, eta: float):
    """``sigma(x / eta)`` with derivative ``s (1 - s) / eta``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if isinstance(x, Dual):
        s = sigmoid(x.value / eta)
        s = np.asarray(s)
        return Dual(s, x.grad * (s * (1.0 - s) / eta)[..., None])
    return sigmoid(np.asarray(x, dtype=float) / eta)


def softplus(x):
    """``log(1 + exp(x))`` computed stably."""
    return _unary(x, lambda v: np.logaddexp(0.0, v), lambda v: sigmoid(v) * np.ones_like(v))


def abs_(x):
    return _unary(x, np.abs, np.sign)


def where(mask, a, b):
    """Branch selection that propagates partials of the chosen branch only."""
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return np.where(mask, a, b)
    m = next(d.nparams for d in (a, b) if isinstance(d, Dual))
    a, b = lift(a, m), lift(b, m)
    mask = np.asarray(mask)
    val = np.where(mask, a.value, b.value)
    grad = np.where(mask[..., None], a.grad, b.grad)
    return Dual(val, grad)


PRIMITIVES = ("add", "mul", "neg", "inv", "exp", "log", "sigma")


def dual_apply(op: str, *args, eta: float | None = None):
    """Apply a primitive to dual (or plain) arguments."""
    if op == "add":
        return args[0] + args[1]
    if op == "mul":
        return args[0] * args[1]
    if op == "neg":
        return -args[0]
    if op == "inv":
        return inv(args[0])
    if op == "exp":
        return exp(args[0])
    if op == "log":
        return log(args[0])
    if op == "sigma":
        if eta is None:
            raise ValueError("sigma requires eta")
        return sigma_eta(args[0], eta)
    raise ValueError(f"unknown primitive {op!r}")
