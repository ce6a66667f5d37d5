"""Expression DAG for vector-field coefficients.

Nodes are hash-consed: building the same operation on the same children returns the same
object, so `a is b` is structural equality. Constants are exact Fractions; evaluation turns
them into doubles at the leaves. Every pass over a DAG (differentiation, substitution,
evaluation) is iterative and memoized, so shared subtrees are visited once.
"""
from __future__ import annotations
import itertools
import re
import threading
import weakref
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (DimensionMismatchError, EvaluationError, ExpressionSyntaxError,
                     UnknownIdentifierError)

# ---------------------------
# Variables & grammar
# ---------------------------

BASE_VARIABLES = ("x1", "x2", "x3", "x4", "x5")
FIBER_VARIABLES = ("u4", "u5")
EXTENDED_VARIABLES = BASE_VARIABLES + FIBER_VARIABLES
FUNCTIONS = ("sin", "cos", "exp")

IDENTIFIER = re.compile(r"[a-z][a-z0-9]*\Z")

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


class Expr:
    """One interned node. Build through the module functions or Python operators."""

    __slots__ = ("op", "args", "free", "serial", "derivs", "__weakref__")

    def __init__(self, op: str, args: tuple, free: frozenset):
        self.op = op
        self.args = args
        self.free = free
        self.serial = next(_serial)
        self.derivs: dict[str, Expr] = {}   # variable -> ∂/∂variable, filled by differentiate

    @property
    def children(self) -> tuple[Expr, ...]:
        if self.op in ("const", "var"):
            return ()
        if self.op == "pow":
            return (self.args[0],)
        return self.args

    @property
    def value(self) -> Fraction:
        if self.op != "const":
            raise TypeError(f"{self.op} node has no constant value")
        return self.args[0]

    @property
    def name(self) -> str:
        if self.op != "var":
            raise TypeError(f"{self.op} node has no name")
        return self.args[0]

    def is_const(self, value=None) -> bool:
        return self.op == "const" and (value is None or self.args[0] == value)

    # operators
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __pow__(self, n: int): return power(self, n)

    def __str__(self) -> str:
        return to_source(self)

    def __repr__(self) -> str:
        return f"Expr({describe(self)!r})"


_serial = itertools.count()
# weak values: a node lives as long as something outside the table refers to it
_TABLE: weakref.WeakValueDictionary[tuple, Expr] = weakref.WeakValueDictionary()
_LOCK = threading.Lock()
_EMPTY: frozenset = frozenset()


def _node(op: str, args: tuple, free: frozenset) -> Expr:
    key = (op, *args)
    node = _TABLE.get(key)
    if node is None:
        with _LOCK:
            node = _TABLE.get(key)
            if node is None:
                node = Expr(op, args, free)
                _TABLE[key] = node
    return node


# ---------------------------
# Constructors (light simplification only)
# ---------------------------

def const(value) -> Expr:
    return _node("const", (Fraction(value),), _EMPTY)


ZERO = const(0)
ONE = const(1)


def var(name: str) -> Expr:
    if not IDENTIFIER.match(name) or name in FUNCTIONS:
        raise ValueError(f"invalid variable name {name!r}")
    return _node("var", (name,), frozenset((name,)))


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction, float)) and not isinstance(x, bool):
        return const(x)
    raise TypeError(f"cannot use {type(x).__name__} as an expression")


def add(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if a is ZERO:
        return b
    if b is ZERO:
        return a
    if a.op == "const" and b.op == "const":
        return const(a.value + b.value)
    if b.op == "neg":
        return sub(a, b.args[0])
    if a.op == "neg":
        return sub(b, a.args[0])
    if b.serial < a.serial:
        a, b = b, a
    return _node("add", (a, b), a.free | b.free)


def sub(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if b is ZERO:
        return a
    if a is ZERO:
        return neg(b)
    if a is b:
        return ZERO
    if a.op == "const" and b.op == "const":
        return const(a.value - b.value)
    if b.op == "neg":
        return add(a, b.args[0])
    if a.op == "neg":
        return neg(add(a.args[0], b))
    return _node("sub", (a, b), a.free | b.free)


def neg(a) -> Expr:
    a = as_expr(a)
    if a.op == "const":
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    if a.op == "sub":
        return sub(a.args[1], a.args[0])
    return _node("neg", (a,), a.free)


def mul(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if a is ZERO or b is ZERO:
        return ZERO
    if a is ONE:
        return b
    if b is ONE:
        return a
    if a.op == "const" and b.op == "const":
        return const(a.value * b.value)
    if b.op == "const":
        a, b = b, a
    if a.op == "neg":
        return neg(mul(a.args[0], b))
    if b.op == "neg":
        return neg(mul(a, b.args[0]))
    if a.op == "const":
        if a.value < 0:
            return neg(mul(const(-a.value), b))
        if b.op == "mul" and b.args[0].op == "const":
            return mul(const(a.value * b.args[0].value), b.args[1])
        return _node("mul", (a, b), b.free)
    if b.serial < a.serial:
        a, b = b, a
    return _node("mul", (a, b), a.free | b.free)


def div(a, b) -> Expr:
    a, b = as_expr(a), as_expr(b)
    if a is ZERO:
        return ZERO
    if b is ONE:
        return a
    if b.op == "const" and b.value != 0:
        return mul(const(1 / b.value), a)
    if a.op == "neg":
        return neg(div(a.args[0], b))
    if b.op == "neg":
        return neg(div(a, b.args[0]))
    return _node("div", (a, b), a.free | b.free)


def power(a, n: int) -> Expr:
    a = as_expr(a)
    if int(n) != n:
        raise ValueError("only integer exponents are supported")
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return a
    if a.op == "const" and not (a.value == 0 and n < 0):
        return const(a.value ** n)
    if a.op == "pow":
        return power(a.args[0], a.args[1] * n)
    if a.op == "neg":
        inner = power(a.args[0], n)
        return inner if n % 2 == 0 else neg(inner)
    return _node("pow", (a, n), a.free)


def sin(a) -> Expr:
    a = as_expr(a)
    if a is ZERO:
        return ZERO
    if a.op == "neg":
        return neg(sin(a.args[0]))
    return _node("sin", (a,), a.free)


def cos(a) -> Expr:
    a = as_expr(a)
    if a is ZERO:
        return ONE
    if a.op == "neg":
        return cos(a.args[0])
    return _node("cos", (a,), a.free)


def exp(a) -> Expr:
    a = as_expr(a)
    if a is ZERO:
        return ONE
    return _node("exp", (a,), a.free)


def total(terms: Iterable) -> Expr:
    out = ZERO
    for t in terms:
        out = add(out, t)
    return out


_REBUILD: dict[str, Callable] = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg,
    "sin": sin, "cos": cos, "exp": exp,
}


# ---------------------------
# Traversal
# ---------------------------

def _postorder(roots: Iterable[Expr], skip: Callable[[Expr], bool] = lambda n: False) -> list[Expr]:
    """Children before parents; nodes for which `skip` is true are not entered."""
    order: list[Expr] = []
    seen: set[Expr] = set()
    for root in roots:
        if root in seen or skip(root):
            continue
        stack = [(root, False)]
        while stack:
            node, ready = stack.pop()
            if ready:
                order.append(node)
                continue
            if node in seen:
                continue
            seen.add(node)
            stack.append((node, True))
            for child in node.children:
                if child not in seen and not skip(child):
                    stack.append((child, False))
    return order


def dag_size(roots: Iterable[Expr]) -> int:
    return len(_postorder(list(roots)))


# ---------------------------
# Differentiation
# ---------------------------

def _d(node: Expr, v: str) -> Expr:
    if v not in node.free:
        return ZERO
    return node.derivs[v]


def _derive(node: Expr, v: str) -> Expr:
    op = node.op
    if op == "var":
        return ONE
    if op == "add":
        return add(_d(node.args[0], v), _d(node.args[1], v))
    if op == "sub":
        return sub(_d(node.args[0], v), _d(node.args[1], v))
    if op == "neg":
        return neg(_d(node.args[0], v))
    if op == "mul":
        a, b = node.args
        return add(mul(_d(a, v), b), mul(a, _d(b, v)))
    if op == "div":
        a, b = node.args
        # (a/b)' = (a' - (a/b) b') / b keeps the quotient node shared
        return div(sub(_d(a, v), mul(node, _d(b, v))), b)
    if op == "pow":
        base, n = node.args
        return mul(mul(const(n), power(base, n - 1)), _d(base, v))
    x = node.args[0]
    if op == "sin":
        return mul(cos(x), _d(x, v))
    if op == "cos":
        return neg(mul(sin(x), _d(x, v)))
    if op == "exp":
        return mul(node, _d(x, v))
    raise AssertionError(f"unexpected node {op}")


def differentiate(e: Expr, v: str) -> Expr:
    """Exact partial derivative; the zero expression when e does not involve v."""
    e = as_expr(e)
    if v not in e.free:
        return ZERO
    hit = e.derivs.get(v)
    if hit is not None:
        return hit
    pending = _postorder([e], skip=lambda n: v not in n.free or v in n.derivs)
    for node in pending:
        d = _derive(node, v)
        with _LOCK:
            node.derivs.setdefault(v, d)
    return e.derivs[v]


def substitute(e: Expr, mapping: Mapping[str, object]) -> Expr:
    """Simultaneous replacement of variables by expressions (or numbers)."""
    repl = {k: as_expr(v) for k, v in mapping.items()}
    names = set(repl)
    done: dict[Expr, Expr] = {}
    for node in _postorder([as_expr(e)], skip=lambda n: not (n.free & names)):
        if node.op == "var":
            done[node] = repl[node.name]
            continue
        kids = [done.get(c, c) for c in node.children]
        if node.op == "pow":
            done[node] = power(kids[0], node.args[1])
        else:
            done[node] = _REBUILD[node.op](*kids)
    e = as_expr(e)
    return done.get(e, e)


# ---------------------------
# Evaluation
# ---------------------------

def as_point(point, variables: Sequence[str] | None = None) -> dict[str, object]:
    """Mapping name -> value from a mapping, or a sequence of 5 (base) or 7 (extended) values."""
    if isinstance(point, Mapping):
        return {k: np.asarray(v, dtype=float) if np.ndim(v) else float(v) for k, v in point.items()}
    values = list(point)
    if variables is None:
        if len(values) == len(BASE_VARIABLES):
            variables = BASE_VARIABLES
        elif len(values) == len(EXTENDED_VARIABLES):
            variables = EXTENDED_VARIABLES
        else:
            raise DimensionMismatchError(f"a point has 5 or 7 coordinates, got {len(values)}")
    if len(values) != len(variables):
        raise DimensionMismatchError(f"expected {len(variables)} coordinates, got {len(values)}")
    return {k: np.asarray(v, dtype=float) if np.ndim(v) else float(v) for k, v in zip(variables, values)}


@lru_cache(maxsize=256)
def _schedule(roots: tuple[Expr, ...]) -> tuple[Expr, ...]:
    return tuple(_postorder(roots))


def _apply(node: Expr, values: dict, point: Mapping[str, object]):
    op = node.op
    if op == "const":
        return float(node.value)
    if op == "var":
        try:
            return point[node.name]
        except KeyError:
            raise EvaluationError("no value for variable", node.name) from None
    a = values[node.args[0]]
    if op == "neg":
        return -a
    if op == "pow":
        n = node.args[1]
        if n < 0 and np.any(a == 0):
            raise EvaluationError("division by zero", describe(node))
        out = np.power(a, float(n)) if n < 0 else a ** n
    elif op == "sin":
        out = np.sin(a)
    elif op == "cos":
        out = np.cos(a)
    elif op == "exp":
        out = np.exp(a)
    else:
        b = values[node.args[1]]
        if op == "add":
            out = a + b
        elif op == "sub":
            out = a - b
        elif op == "mul":
            out = a * b
        else:
            if np.any(b == 0):
                raise EvaluationError("division by zero", describe(node))
            out = a / b
    if not np.all(np.isfinite(out)):
        raise EvaluationError("non-finite value", describe(node))
    return out


def evaluate_many(exprs: Sequence[Expr], point) -> np.ndarray:
    """Evaluate several expressions in one pass over their shared DAG.

    Point values may be arrays of a common shape; the result then has shape
    (len(exprs), *that shape). Complexity: O(distinct nodes · points).
    """
    exprs = tuple(as_expr(e) for e in exprs)
    pt = as_point(point)
    shape = np.broadcast(*[np.asarray(v) for v in pt.values()]).shape if pt else ()
    values: dict[Expr, object] = {}
    with np.errstate(all="ignore"):
        for node in _schedule(exprs):
            values[node] = _apply(node, values, pt)
    out = np.empty((len(exprs),) + shape)
    for i, e in enumerate(exprs):
        out[i] = values[e]
    return out


def evaluate(e: Expr, point) -> float:
    return float(evaluate_many([e], point)[0])


# ---------------------------
# Printing
# ---------------------------

class _Truncated(Exception):
    pass


def _prec(node: Expr) -> int:
    return _PREC.get(node.op, 5)


def _emit(node: Expr, out: list[str], budget: list[int]) -> None:
    budget[0] -= 1
    if budget[0] < 0:
        raise _Truncated
    op = node.op
    if op == "const":
        v = node.value
        out.append(str(v.numerator) if v.denominator == 1 and v >= 0 else f"({v})")
    elif op == "var":
        out.append(node.name)
    elif op in FUNCTIONS:
        out.append(f"{op}(")
        _emit(node.args[0], out, budget)
        out.append(")")
    elif op == "neg":
        out.append("-")
        _wrap(node.args[0], 3, out, budget)
    elif op == "pow":
        base, n = node.args
        _wrap(base, 5, out, budget)
        out.append(f"^{n}" if n >= 0 else f"^({n})")
    else:
        p = _PREC[op]
        _wrap(node.args[0], p, out, budget)
        out.append(f" {_SYMBOL[op]} ")
        _wrap(node.args[1], p + 1, out, budget)


def _wrap(node: Expr, need: int, out: list[str], budget: list[int]) -> None:
    if _prec(node) < need:
        out.append("(")
        _emit(node, out, budget)
        out.append(")")
    else:
        _emit(node, out, budget)


def to_source(e: Expr, max_nodes: int = 100_000) -> str:
    """Print in the parser's grammar; parse_expression(to_source(e)) is e."""
    out: list[str] = []
    _emit(as_expr(e), out, [max_nodes])
    return "".join(out)


def describe(e: Expr, limit: int = 160) -> str:
    """Short human-readable rendering for error messages."""
    try:
        text = to_source(e, max_nodes=limit)
    except (_Truncated, RecursionError):
        return f"<{e.op} node over {', '.join(sorted(e.free)) or 'constants'}>"
    return text if len(text) <= limit else text[:limit] + "…"


# ---------------------------
# Parsing (precedence climbing)
# ---------------------------

class Token(NamedTuple):
    kind: str
    text: str
    offset: int


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<name>[a-z][a-z0-9]*)|(?P<op>[-+*/^()])|(?P<bad>\S))")
_BINARY = {"+": (1, "left"), "-": (1, "left"), "*": (2, "left"), "/": (2, "left"), "^": (4, "right")}
_UNARY_MINUS = 3


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while True:
        m = _TOKEN.match(source, pos)
        if m is None:  # only trailing whitespace is left
            break
        kind = m.lastgroup
        if kind == "bad":
            raise ExpressionSyntaxError(f"unexpected character {m.group(kind)!r}", m.start(kind), source)
        tokens.append(Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(Token("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, variables: Sequence[str]):
        self.source = source
        self.variables = set(variables)
        self.tokens = tokenize(source)
        self.i = 0

    @property
    def peek(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message: str, tok: Token):
        raise ExpressionSyntaxError(message, tok.offset, self.source)

    def parse(self) -> Expr:
        e = self.expression(1)
        if self.peek.kind != "end":
            self.fail(f"unexpected {self.peek.text!r}", self.peek)
        return e

    def expression(self, min_prec: int) -> Expr:
        lhs = self.unary()
        while True:
            tok = self.peek
            if tok.kind != "op" or tok.text not in _BINARY:
                return lhs
            prec, assoc = _BINARY[tok.text]
            if prec < min_prec:
                return lhs
            self.advance()
            rhs_tok = self.peek
            rhs = self.expression(prec + 1 if assoc == "left" else prec)
            lhs = self.combine(tok, lhs, rhs, rhs_tok)

    def combine(self, tok: Token, lhs: Expr, rhs: Expr, rhs_tok: Token) -> Expr:
        if tok.text == "^":
            if rhs.op != "const" or rhs.value.denominator != 1:
                self.fail("exponent must be an integer constant", rhs_tok)
            return power(lhs, rhs.value.numerator)
        return {"+": add, "-": sub, "*": mul, "/": div}[tok.text](lhs, rhs)

    def unary(self) -> Expr:
        if self.peek.kind == "op" and self.peek.text == "-":
            self.advance()
            return neg(self.expression(_UNARY_MINUS))
        return self.primary()

    def primary(self) -> Expr:
        tok = self.advance()
        if tok.kind == "num":
            return const(int(tok.text))
        if tok.kind == "name":
            if tok.text in FUNCTIONS:
                if not (self.peek.kind == "op" and self.peek.text == "("):
                    self.fail(f"expected '(' after {tok.text}", self.peek)
                self.advance()
                inner = self.expression(1)
                self.expect_close()
                return _REBUILD[tok.text](inner)
            if tok.text not in self.variables:
                raise UnknownIdentifierError(f"unknown identifier {tok.text!r}", tok.offset, self.source)
            return var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            inner = self.expression(1)
            self.expect_close()
            return inner
        if tok.kind == "end":
            self.fail("unexpected end of input", tok)
        self.fail(f"unexpected {tok.text!r}", tok)

    def expect_close(self) -> None:
        if not (self.peek.kind == "op" and self.peek.text == ")"):
            self.fail("expected ')'", self.peek)
        self.advance()


def parse_expression(source: str, variables: Sequence[str] = BASE_VARIABLES) -> Expr:
    """Parse one expression over the declared variables.

    Grammar: integers, identifiers, + - * / ^ (integer exponents, right-associative),
    unary minus binding tighter than * and /, sin/cos/exp calls and parentheses.

    Examples:
        >>> evaluate(parse_expression("1/2*x1"), {"x1": 3.0})
        1.5
    """
    return _Parser(source, variables).parse()


# ---------------------------
# Vector fields
# ---------------------------

@dataclass(frozen=True, eq=False)
class VectorField:
    variables: tuple[str, ...]
    components: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "components", tuple(as_expr(c) for c in self.components))
        if len(self.components) != len(self.variables):
            raise DimensionMismatchError(
                f"{len(self.components)} components for {len(self.variables)} variables")

    @property
    def dimension(self) -> int:
        return len(self.variables)

    def __getitem__(self, i: int) -> Expr:
        return self.components[i]

    def apply(self, f: Expr) -> Expr:
        """Directional derivative V(f) = Σ V^i ∂f/∂x_i."""
        f = as_expr(f)
        return total(mul(c, differentiate(f, v))
                     for v, c in zip(self.variables, self.components)
                     if c is not ZERO and v in f.free)

    def scaled(self, g) -> VectorField:
        return VectorField(self.variables, tuple(mul(g, c) for c in self.components))

    def evaluate(self, point) -> np.ndarray:
        return evaluate_many(self.components, point)

    def is_zero(self) -> bool:
        return all(c is ZERO for c in self.components)


def zero_field(variables: Sequence[str]) -> VectorField:
    return VectorField(tuple(variables), (ZERO,) * len(variables))


def linear_combination(coeffs: Sequence, fields: Sequence[VectorField]) -> VectorField:
    variables = fields[0].variables
    if any(f.variables != variables for f in fields):
        raise DimensionMismatchError("fields live on different coordinate lists")
    comps = [total(mul(a, f.components[i]) for a, f in zip(coeffs, fields))
             for i in range(len(variables))]
    return VectorField(variables, tuple(comps))


def extend(field: VectorField, variables: Sequence[str]) -> VectorField:
    """Embed a field into a larger coordinate list; missing components are zero."""
    lookup = dict(zip(field.variables, field.components))
    missing = set(field.variables) - set(variables)
    if missing:
        raise DimensionMismatchError(f"variables {sorted(missing)} are not in the target list")
    return VectorField(tuple(variables), tuple(lookup.get(v, ZERO) for v in variables))


def lie_bracket(V: VectorField, W: VectorField) -> VectorField:
    """[V, W]^i = V(W^i) - W(V^i), exactly."""
    if V.variables != W.variables:
        raise DimensionMismatchError(
            f"bracket of fields on {V.dimension} and {W.dimension} variables")
    return VectorField(V.variables, tuple(sub(V.apply(w), W.apply(v))
                                          for v, w in zip(V.components, W.components)))
