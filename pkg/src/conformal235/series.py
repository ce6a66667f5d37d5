"""Truncated Taylor series in one variable.

A series is a coefficient array indexed by power (shape (n+1,) or (n+1, dim) for vector
series). Every operation takes the truncation order n explicitly.
"""
from __future__ import annotations
import math

import numpy as np
from numpy.polynomial import polynomial as P


def trunc(a, n: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    out = np.zeros((n + 1,) + a.shape[1:])
    m = min(len(a), n + 1)
    out[:m] = a[:m]
    return out


def factorials(n: int) -> np.ndarray:
    return np.array([math.factorial(j) for j in range(n + 1)], dtype=float)


def taylor(derivs) -> np.ndarray:
    """Derivative values at the base point -> Taylor coefficients."""
    d = np.asarray(derivs, dtype=float)
    f = factorials(len(d) - 1)
    return d / f.reshape((-1,) + (1,) * (d.ndim - 1))


def derivs(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    f = factorials(len(c) - 1)
    return c * f.reshape((-1,) + (1,) * (c.ndim - 1))


def mul(a, b, n: int) -> np.ndarray:
    """Product of a scalar series with a scalar or vector series."""
    a = trunc(a, n)
    b = trunc(b, n)
    if b.ndim == 1:
        return trunc(P.polymul(a, b), n)
    return np.column_stack([trunc(P.polymul(a, b[:, j]), n) for j in range(b.shape[1])])


def deriv(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if len(a) <= 1:
        return np.zeros((1,) + a.shape[1:])
    return a[1:] * np.arange(1, len(a)).reshape((-1,) + (1,) * (a.ndim - 1))


def integ(a, c0: float = 0.0) -> np.ndarray:
    return trunc(P.polyint(np.asarray(a, dtype=float), k=c0), len(a))


def inv(a, n: int) -> np.ndarray:
    a = trunc(a, n)
    if a[0] == 0:
        raise ZeroDivisionError("series with zero constant term has no inverse")
    b = np.zeros(n + 1)
    b[0] = 1.0 / a[0]
    for m in range(1, n + 1):
        b[m] = -np.dot(a[1:m + 1], b[m - 1::-1][:m]) / a[0]
    return b


def div(a, b, n: int) -> np.ndarray:
    return mul(inv(b, n), a, n)


def exp(a, n: int) -> np.ndarray:
    """exp of a series: f' = a' f, solved coefficient by coefficient."""
    a = trunc(a, n)
    da = np.arange(n + 1) * a     # j a_j
    f = np.zeros(n + 1)
    f[0] = math.exp(a[0])
    for m in range(1, n + 1):
        f[m] = np.dot(da[1:m + 1], f[m - 1::-1][:m]) / m
    return f


def compose(a, p, n: int) -> np.ndarray:
    """a(p(τ)) for an inner series with p(0) = 0; Horner in the inner series."""
    p = trunc(p, n)
    if p[0] != 0:
        raise ValueError("inner series must vanish at the base point")
    a = np.asarray(a, dtype=float)
    out = trunc(a[-1:], n)
    for j in range(len(a) - 2, -1, -1):
        out = mul(p, out, n)
        out[0] = out[0] + a[j]
    return out


def schwarzian_half(phi, n: int) -> np.ndarray:
    """(φ''/2φ')' − (φ''/2φ')², i.e. half the classical Schwarzian, as a series."""
    d1 = deriv(phi)
    d2 = deriv(d1)
    g = 0.5 * div(d2, d1, n + 1)
    return trunc(deriv(g) - mul(g, g, n + 1)[:-1], n)
