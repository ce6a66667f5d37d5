from __future__ import annotations
import gc
import math
import weakref

import numpy as np
import pytest

from src.conformal235.errors import (DimensionMismatchError, EvaluationError, ExpressionSyntaxError,
                                     UnknownIdentifierError)
from src.conformal235.exprcore import (BASE_VARIABLES, EXTENDED_VARIABLES, ZERO, VectorField, add,
                                       const, describe, differentiate, evaluate, evaluate_many,
                                       extend, lie_bracket, mul, parse_expression, sin, sub,
                                       substitute, to_source, tokenize, var)

P = {"x1": 3.0, "x2": -2.0, "x3": 0.5, "x4": 1.25, "x5": -0.75}


# ---------------------------
# Parsing
# ---------------------------

@pytest.mark.parametrize("source, expected", [
    ("1/2*x1", 1.5),
    ("2*x1^2", 18.0),
    ("-x1^2", -9.0),
    ("x1-x2-x3", 4.5),
    ("x1/x2/x4", 3.0 / -2.0 / 1.25),
    ("2^3", 8.0),
    ("x3^2^3", 0.5 ** 8),
    ("x1^(-2)", 1.0 / 9.0),
    ("x1^-1", 1.0 / 3.0),
    ("2*-x2", 4.0),
    ("(x1 + x2) * x3", 0.5),
    ("sin(x1) + cos(x2) * exp(x3)", math.sin(3.0) + math.cos(-2.0) * math.exp(0.5)),
    ("  x5\t", -0.75),
])
def test_parse_and_evaluate(source, expected):
    assert evaluate(parse_expression(source), P) == pytest.approx(expected, rel=1e-14)


def test_parse_is_hash_consed():
    assert parse_expression("x1*x2 + sin(x3)") is parse_expression("sin(x3) + x2 * x1")


def test_cancellation_gives_zero():
    e = parse_expression("x1*x2 - x2*x1")
    assert e is ZERO


@pytest.mark.parametrize("source, offset", [
    ("x1 + y", 5),
    ("x1 + 3*zz", 7),
])
def test_unknown_identifier_offset(source, offset):
    with pytest.raises(UnknownIdentifierError) as err:
        parse_expression(source)
    assert err.value.offset == offset


@pytest.mark.parametrize("source, offset", [
    ("x1 +", 4),
    ("X1", 0),
    ("x1 $ x2", 3),
    ("x1^x2", 3),
    ("x1^(1/2)", 3),
    ("sin x1", 4),
    ("(x1 + x2", 8),
    ("x1 x2", 3),
    ("", 0),
])
def test_syntax_error_offset(source, offset):
    with pytest.raises(ExpressionSyntaxError) as err:
        parse_expression(source)
    assert err.value.offset == offset
    assert err.value.source == source


def test_declared_variables_only():
    e = parse_expression("u4*x1", EXTENDED_VARIABLES)
    assert e.free == frozenset({"u4", "x1"})
    with pytest.raises(UnknownIdentifierError):
        parse_expression("u4*x1", BASE_VARIABLES)


def test_tokenize_offsets():
    toks = tokenize("x1 + 22*sin(x2)")
    assert [(t.kind, t.offset) for t in toks[:4]] == [("name", 0), ("op", 3), ("num", 5), ("op", 7)]
    assert toks[-1].kind == "end"


@pytest.mark.parametrize("source", [
    "x1 - 2*x2",
    "-(3*x1)",
    "x1^(-2) + x2^3",
    "(-1/2)*x1*x2",
    "sin(x1 - x2)/(1 + exp(x3))",
    "x1 - (x2 - x3)",
    "(x1 + x2)^2",
    "x1/(x2*x3)",
])
def test_printer_round_trip(source):
    e = parse_expression(source)
    assert parse_expression(to_source(e)) is e


# ---------------------------
# Differentiation and evaluation
# ---------------------------

@pytest.mark.parametrize("source, wrt, expected", [
    ("x1^3", "x1", 27.0),
    ("x1*x2", "x2", 3.0),
    ("x1/(1 + x3)", "x1", 1.0 / 1.5),
    ("x1/(1 + x3)", "x3", -3.0 / 1.5 ** 2),
    ("sin(x1*x2)", "x1", -2.0 * math.cos(-6.0)),
    ("cos(x3)^2", "x3", -2.0 * math.cos(0.5) * math.sin(0.5)),
    ("exp(x3^2)", "x3", 2 * 0.5 * math.exp(0.25)),
    ("x2^(-2)", "x2", -2.0 * (-2.0) ** -3),
])
def test_differentiate(source, wrt, expected):
    d = differentiate(parse_expression(source), wrt)
    assert evaluate(d, P) == pytest.approx(expected, rel=1e-13)


def test_derivative_of_absent_variable_is_zero():
    assert differentiate(parse_expression("sin(x1) * x2"), "x5") is ZERO


def test_deep_expression_is_handled_iteratively():
    e = var("x1")
    for _ in range(3000):
        e = sin(e)
    d = differentiate(e, "x1")
    value = evaluate(d, {"x1": 0.3})
    assert 0.0 < value < 1.0
    assert "x1" in describe(d)


ORACLE_SOURCE = "sin(x1*x2)^3/(2 + cos(x3)) - exp(x4/3)*x5^2 + x1^-2"


def _fd_partial(f, q: dict, v: str, h: float = 1e-3) -> float:
    """Five-point central difference of f in the variable v."""
    def at(s):
        return f({**q, v: q[v] + s * h})
    return (-at(2) + 8 * at(1) - 8 * at(-1) + at(-2)) / (12 * h)


def _oracle_points(rng, n: int) -> list[dict]:
    pts = rng.uniform(-1.0, 1.0, size=(n, 5))
    pts[:, 0] = rng.uniform(0.5, 1.5, size=n)   # keep x1^-2 tame
    return [dict(zip(BASE_VARIABLES, p)) for p in pts]


def test_derivative_matches_finite_differences(rng):
    e = parse_expression(ORACLE_SOURCE)
    for q in _oracle_points(rng, 10):
        for v in BASE_VARIABLES:
            fd = _fd_partial(lambda p: evaluate(e, p), q, v)
            assert evaluate(differentiate(e, v), q) == pytest.approx(fd, rel=1e-7, abs=1e-8)


def test_mixed_partials_commute(rng):
    e = parse_expression(ORACLE_SOURCE)
    for q in _oracle_points(rng, 5):
        for a in BASE_VARIABLES:
            for b in BASE_VARIABLES:
                ab = evaluate(differentiate(differentiate(e, a), b), q)
                ba = evaluate(differentiate(differentiate(e, b), a), q)
                assert ab == pytest.approx(ba, rel=1e-10, abs=1e-10)


def test_derivatives_are_memoized_on_the_node():
    e = parse_expression("x1^2*x3 + 12345")
    d = differentiate(e, "x1")
    assert e.derivs["x1"] is d
    assert differentiate(e, "x1") is d


def test_unreferenced_nodes_are_released():
    e = parse_expression("x1*x2 + sin(x3*987654321)")
    differentiate(e, "x3")
    ref = weakref.ref(e)
    del e
    gc.collect()
    assert ref() is None
    assert parse_expression("x1*x2 + sin(x3*987654321)").derivs == {}


def test_substitute():
    e = parse_expression("x1*x2 + x3")
    out = substitute(e, {"x2": 2, "x3": parse_expression("x1^2")})
    assert out is parse_expression("2*x1 + x1^2")


def test_division_by_zero_names_subtree():
    with pytest.raises(EvaluationError) as err:
        evaluate(parse_expression("x2 + 1/(x1 - 3)"), P)
    assert "x1" in err.value.subtree


def test_non_finite_value():
    with pytest.raises(EvaluationError):
        evaluate(parse_expression("exp(x1)"), {"x1": 1000.0})


def test_evaluate_many_broadcasts():
    exprs = [parse_expression("x1*x2"), parse_expression("x1 + 1")]
    x1 = np.linspace(0.0, 1.0, 7)
    out = evaluate_many(exprs, {"x1": x1, "x2": 2.0})
    assert out.shape == (2, 7)
    np.testing.assert_allclose(out[0], 2 * x1)
    np.testing.assert_allclose(out[1], x1 + 1)


def test_missing_variable():
    with pytest.raises(EvaluationError):
        evaluate(parse_expression("x1 + x2"), {"x1": 1.0})


# ---------------------------
# Vector fields
# ---------------------------

def _field(*sources) -> VectorField:
    return VectorField(BASE_VARIABLES, tuple(parse_expression(s) for s in sources))


def test_lie_bracket_of_flat_generators():
    X1 = _field("1", "0", "0", "0", "0")
    X2 = _field("0", "1", "x1", "x1^2/2", "x1*x2")
    X3 = lie_bracket(X1, X2)
    np.testing.assert_allclose(X3.evaluate(P), [0, 0, 1, 3.0, -2.0])


def test_lie_bracket_antisymmetry_and_jacobi(rng):
    A = _field("x2", "sin(x3)", "1", "x1*x5", "0")
    B = _field("0", "x1^2", "exp(x4)", "1", "x2 - x3")
    C = _field("x5", "0", "x1*x2", "cos(x1)", "1")
    q = dict(zip(BASE_VARIABLES, rng.uniform(-1, 1, 5)))
    ab, ba = lie_bracket(A, B), lie_bracket(B, A)
    np.testing.assert_allclose(ab.evaluate(q), -ba.evaluate(q), atol=1e-13)
    jac = (lie_bracket(A, lie_bracket(B, C)).evaluate(q)
           + lie_bracket(B, lie_bracket(C, A)).evaluate(q)
           + lie_bracket(C, lie_bracket(A, B)).evaluate(q))
    np.testing.assert_allclose(jac, 0.0, atol=1e-12)


def test_apply_is_directional_derivative():
    X = _field("1", "x1", "0", "0", "0")
    f = parse_expression("x1*x2^2")
    # X(f) = x2^2 + x1 * 2 x1 x2
    assert evaluate(X.apply(f), P) == pytest.approx(4.0 + 3.0 * 2 * 3.0 * -2.0)


def test_dimension_mismatch():
    X = _field("1", "0", "0", "0", "0")
    Y = extend(X, EXTENDED_VARIABLES)
    assert Y.dimension == 7
    with pytest.raises(DimensionMismatchError):
        lie_bracket(X, Y)
    with pytest.raises(DimensionMismatchError):
        VectorField(BASE_VARIABLES, (ZERO,) * 4)


def test_operators_build_the_same_nodes():
    x1, x2 = var("x1"), var("x2")
    assert x1 * 2 + x2 is add(mul(const(2), x1), x2)
    assert x1 - x1 is ZERO
    assert (x1 - x2) is sub(x1, x2)


def _fd_jacobian(X: VectorField, q: dict) -> np.ndarray:
    """J[i, j] = ∂X^i/∂x_j by central differences."""
    return np.column_stack([_fd_partial(X.evaluate, q, v) for v in BASE_VARIABLES])


def test_lie_bracket_matches_finite_differences(rng):
    A = _field("x2", "sin(x3)", "1", "x1*x5", "0")
    B = _field("0", "x1^2", "exp(x4)", "1", "x2 - x3")
    AB = lie_bracket(A, B)
    for q in _oracle_points(rng, 5):
        # [A, B]^i = A(B^i) − B(A^i)
        expected = _fd_jacobian(B, q) @ A.evaluate(q) - _fd_jacobian(A, q) @ B.evaluate(q)
        np.testing.assert_allclose(AB.evaluate(q), expected, rtol=1e-7, atol=1e-8)
