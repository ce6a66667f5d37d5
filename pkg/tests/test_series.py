from __future__ import annotations
import math

import numpy as np
import pytest

from src.conformal235 import series


def test_taylor_and_derivs_are_inverse():
    d = np.array([1.0, -2.0, 6.0, 24.0])
    np.testing.assert_allclose(series.taylor(d), [1.0, -2.0, 3.0, 4.0])
    np.testing.assert_allclose(series.derivs(series.taylor(d)), d)


def test_mul_vector_series():
    a = np.array([1.0, 1.0])                       # 1 + t
    b = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    np.testing.assert_allclose(series.mul(a, b, 2), [[1, 0], [1, 1], [0, 1]])


def test_inverse_and_division():
    a = np.array([1.0, -1.0])                      # 1 − t
    np.testing.assert_allclose(series.inv(a, 5), np.ones(6))
    np.testing.assert_allclose(series.div(np.array([0.0, 1.0]), a, 4), [0, 1, 1, 1, 1])
    with pytest.raises(ZeroDivisionError):
        series.inv(np.array([0.0, 1.0]), 3)


def test_exp():
    out = series.exp(np.array([0.0, 2.0]), 6)
    np.testing.assert_allclose(out, [2.0 ** j / math.factorial(j) for j in range(7)])


def test_compose_matches_closed_form():
    # exp(t) ∘ (t + t²) = 1 + t + (3/2)t² + (7/6)t³ + ...
    e = np.array([1 / math.factorial(j) for j in range(6)])
    p = np.array([0.0, 1.0, 1.0])
    np.testing.assert_allclose(series.compose(e, p, 3), [1.0, 1.0, 1.5, 7.0 / 6.0])
    with pytest.raises(ValueError):
        series.compose(e, np.array([1.0, 1.0]), 3)


def test_schwarzian_of_mobius_vanishes():
    a = 0.7
    mobius = np.array([0.0] + [a ** (j - 1) for j in range(1, 12)])   # τ / (1 − aτ)
    np.testing.assert_allclose(series.schwarzian_half(mobius, 6), 0.0, atol=1e-12)


def test_schwarzian_of_a_cubic():
    # φ = τ + τ³: (φ''/2φ')' − (φ''/2φ')² at 0 is φ'''/2 = 3
    out = series.schwarzian_half(np.array([0.0, 1.0, 0.0, 1.0]), 0)
    assert out[0] == pytest.approx(3.0)
