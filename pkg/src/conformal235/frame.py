"""Adapted frame of a rank-2 distribution on a 5-manifold.

Convention: [X_i, X_j] = Σ_k c_{ji}^k X_k, with the reversed index pair first.
X3 = [X1, X2], X4 = [X1, X3], X5 = [X2, X3] exactly, so c_{21}^3 = c_{31}^4 = c_{32}^5 = 1
and the remaining brackets are resolved symbolically by Cramer's rule.
"""
from __future__ import annotations
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Callable, Sequence, TypeVar

import numpy as np

from .errors import DimensionMismatchError, GrowthVectorError
from .exprcore import (BASE_VARIABLES, ONE, ZERO, Expr, VectorField, as_point, dag_size, div,
                       evaluate_many, lie_bracket, linear_combination, mul, neg, total)
from .utils import CARTAN_FRAME_TOL, RANK_TOL, get_logger

log = get_logger(__name__)

EXACT_PAIRS = {(1, 2): 3, (1, 3): 4, (2, 3): 5}


@dataclass(frozen=True, eq=False)
class Distribution:
    X1: VectorField
    X2: VectorField
    name: str = ""

    def __post_init__(self):
        for X in (self.X1, self.X2):
            if X.variables != BASE_VARIABLES:
                raise DimensionMismatchError(
                    f"distribution fields must live on {BASE_VARIABLES}, got {X.variables}")


@dataclass(frozen=True, eq=False)
class AdaptedFrame:
    distribution: Distribution
    fields: tuple[VectorField, ...]
    structure: tuple            # structure[j-1][i-1][k-1] = c_{ji}^k
    brackets: dict = field(repr=False)   # (i, j) with i < j -> [X_i, X_j]
    memo: dict = field(default_factory=dict, repr=False)   # derived data, see frame_memo

    def X(self, i: int) -> VectorField:
        return self.fields[i - 1]

    def c(self, j: int, i: int, k: int) -> Expr:
        return self.structure[j - 1][i - 1][k - 1]

    @property
    def name(self) -> str:
        return self.distribution.name


T = TypeVar("T")
_MEMO_LOCK = threading.RLock()


def frame_memo(F: AdaptedFrame, key, build: Callable[[], T]) -> T:
    """Data derived from F, built on first use and kept on F so it is freed with the frame."""
    hit = F.memo.get(key)
    if hit is None:
        with _MEMO_LOCK:
            hit = F.memo.get(key)
            if hit is None:
                hit = F.memo[key] = build()
    return hit


class _Minors:
    """Determinants of square submatrices of a symbolic matrix, Laplace-expanded and memoized."""

    def __init__(self, m: Sequence[Sequence[Expr]]):
        self.m = m
        self.memo: dict[tuple, Expr] = {}

    def det(self, rows: tuple[int, ...], cols: tuple[int, ...]) -> Expr:
        if not rows:
            return ONE
        key = (rows, cols)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        c0, rest = cols[0], cols[1:]
        terms = []
        for idx, r in enumerate(rows):
            entry = self.m[r][c0]
            if entry is ZERO:
                continue
            sub = self.det(rows[:idx] + rows[idx + 1:], rest)
            term = mul(entry, sub)
            terms.append(neg(term) if idx % 2 else term)
        out = total(terms)
        self.memo[key] = out
        return out


def _solve_cramer(columns: Sequence[VectorField], rhs: Sequence[VectorField]) -> list[list[Expr]]:
    """Coefficients x with Σ_k x_k columns[k] = b for each b in rhs, as determinant ratios."""
    n = len(columns)
    m = [[columns[k].components[r] for k in range(n)] for r in range(n)]
    minors = _Minors(m)
    rows, cols = tuple(range(n)), tuple(range(n))
    det = minors.det(rows, cols)
    out = []
    for b in rhs:
        coeffs = []
        for k in range(n):
            # expand the k-replaced determinant along column k
            other = cols[:k] + cols[k + 1:]
            terms = []
            for r in rows:
                br = b.components[r]
                if br is ZERO:
                    continue
                term = mul(br, minors.det(rows[:r] + rows[r + 1:], other))
                terms.append(neg(term) if (r + k) % 2 else term)
            coeffs.append(div(total(terms), det))
        out.append(coeffs)
    return out


@lru_cache(maxsize=64)
def build_adapted_frame(D: Distribution) -> AdaptedFrame:
    X1, X2 = D.X1, D.X2
    X3 = lie_bracket(X1, X2)
    X4 = lie_bracket(X1, X3)
    X5 = lie_bracket(X2, X3)
    fields = (X1, X2, X3, X4, X5)

    brackets = {(1, 2): X3, (1, 3): X4, (2, 3): X5}
    pending = [p for p in combinations(range(1, 6), 2) if p not in EXACT_PAIRS]
    for i, j in pending:
        brackets[(i, j)] = lie_bracket(fields[i - 1], fields[j - 1])
    solved = _solve_cramer(fields, [brackets[p] for p in pending])

    table = [[[ZERO] * 5 for _ in range(5)] for _ in range(5)]
    for (i, j), k in EXACT_PAIRS.items():
        table[j - 1][i - 1][k - 1] = ONE
        table[i - 1][j - 1][k - 1] = neg(ONE)
    for (i, j), coeffs in zip(pending, solved):
        for k, ck in enumerate(coeffs):
            table[j - 1][i - 1][k] = ck
            table[i - 1][j - 1][k] = neg(ck)
    structure = tuple(tuple(tuple(row) for row in plane) for plane in table)

    log.info("adapted frame %s: %d expression nodes", D.name or "<anonymous>",
             dag_size(c for plane in structure for row in plane for c in row))
    return AdaptedFrame(D, fields, structure, brackets)


def frame_matrix(F: AdaptedFrame, q) -> np.ndarray:
    """5x5 array whose columns are X1(q)..X5(q)."""
    comps = [c for X in F.fields for c in X.components]
    return evaluate_many(comps, as_point(q, BASE_VARIABLES)).reshape(5, 5).T


def structure_at(F: AdaptedFrame, q) -> np.ndarray:
    """c[j-1, i-1, k-1] = c_{ji}^k(q)."""
    flat = [c for plane in F.structure for row in plane for c in row]
    return evaluate_many(flat, as_point(q, BASE_VARIABLES)).reshape(5, 5, 5)


def _rank(m: np.ndarray, tol: float) -> int:
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def growth_vector(F: AdaptedFrame, q, tol: float = RANK_TOL) -> tuple[int, int, int]:
    """(dim D, dim D², dim D³) at q from singular values of the frame columns."""
    m = frame_matrix(F, q)
    return (_rank(m[:, :2], tol), _rank(m[:, :3], tol), _rank(m, tol))


def require_generic(F: AdaptedFrame, q) -> tuple[int, int, int]:
    gv = growth_vector(F, q)
    if gv != (2, 3, 5):
        raise GrowthVectorError(gv, tuple(float(x) for x in q))
    return gv


def reconstruction_residual(F: AdaptedFrame, q) -> float:
    """max over i<j of ‖Σ_k c_{ji}^k X_k − [X_i, X_j]‖ / (1 + ‖[X_i, X_j]‖)."""
    pt = as_point(q, BASE_VARIABLES)
    m = frame_matrix(F, pt)
    c = structure_at(F, pt)
    worst = 0.0
    for (i, j), br in F.brackets.items():
        target = br.evaluate(pt)
        recon = m @ c[j - 1, i - 1]
        worst = max(worst, float(np.linalg.norm(recon - target) / (1.0 + np.linalg.norm(target))))
    return worst


def is_cartan_frame_at(F: AdaptedFrame, q, tol: float = CARTAN_FRAME_TOL) -> bool:
    """b1 ≡ b and Π ≡ −(4/3)α3 as forms in (u4, u5) at q, coefficient-wise.

    Differences are compared against tol · (1 + max |coefficient| of b and α3).
    """
    from .cone import fiber_coefficients_at   # cone builds on this module

    fc = fiber_coefficients_at(F, q)
    d_lin = fc["b1"] - fc["b"]
    d_quad = fc["Pi"] + (4.0 / 3.0) * fc["alpha3"]
    scale = max(float(np.max(np.abs(fc["b"]))), float(np.max(np.abs(fc["alpha3"]))))
    bound = tol * (1.0 + scale)
    return bool(np.all(np.abs(d_lin) <= bound) and np.all(np.abs(d_quad) <= bound))


def change_basis(D: Distribution, a, b, c, d, name: str | None = None) -> Distribution:
    """X1' = a X1 + b X2, X2' = c X1 + d X2; coefficients may be numbers or Expressions."""
    X1 = linear_combination((a, b), (D.X1, D.X2))
    X2 = linear_combination((c, d), (D.X1, D.X2))
    return Distribution(X1, X2, name if name is not None else D.name)
