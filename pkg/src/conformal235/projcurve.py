"""Jets of curves in projective spaces.

A CurveJet stores derivative vectors ε(t0), ε'(t0), ..., ε^(N)(t0) of a representative in
R^k. Everything here is pointwise in jets: rescaling and reparameterization are done on
truncated series, and each B-coefficient carries the order to which it is exact
(B_i of a canonicalized order-N jet is exact to order N − 2k + 1 + i).
"""
from __future__ import annotations
import math
from dataclasses import dataclass

import numpy as np

from . import series
from .errors import ConventionError, JetOrderError, NormalizationError, RegularityError
from .utils import COND_MAX, NORMALIZATION_TOL, REDUCTION_TOL, W1_VANISH_TOL


@dataclass(frozen=True, eq=False)
class CurveJet:
    derivs: np.ndarray      # (N+1, k); row j is ε^(j)(t0)
    t0: float = 0.0

    def __post_init__(self):
        d = np.array(self.derivs, dtype=float)
        if d.ndim != 2 or d.shape[1] < 2:
            raise ValueError(f"a curve jet is an (N+1, k) array with k >= 2, got shape {d.shape}")
        d.setflags(write=False)
        object.__setattr__(self, "derivs", d)

    @property
    def k(self) -> int:
        return self.derivs.shape[1]

    @property
    def order(self) -> int:
        return self.derivs.shape[0] - 1

    @property
    def coeffs(self) -> np.ndarray:
        return series.taylor(self.derivs)

    @classmethod
    def from_coeffs(cls, coeffs, t0: float = 0.0) -> CurveJet:
        return cls(series.derivs(coeffs), t0)

    def basis(self) -> np.ndarray:
        """k x k matrix whose columns are ε, ε', ..., ε^(k-1)."""
        return self.derivs[:self.k].T


@dataclass(frozen=True, eq=False)
class DecompJet:
    """Taylor coefficients of B_0..B_{k-1} in ε^(k) = Σ B_i ε^(i), with per-coefficient validity."""
    coeffs: tuple
    valid: tuple

    def value(self, i: int, order: int = 0) -> float:
        """B_i^(order)(t0)."""
        if order > self.valid[i]:
            raise JetOrderError(f"B_{i}^({order}) needs a longer jet (exact to order {self.valid[i]})")
        return float(self.coeffs[i][order] * math.factorial(order))

    def jet(self, i: int) -> np.ndarray:
        """Derivative values of B_i at t0, up to its validity order."""
        return series.derivs(self.coeffs[i][:self.valid[i] + 1])


@dataclass(frozen=True, eq=False)
class ReparamJet:
    """Jet of τ ↦ φ(τ) at τ0 = 0: derivs[j] = φ^(j)(0); missing higher derivatives are zero."""
    derivs: np.ndarray

    def __post_init__(self):
        d = np.array(self.derivs, dtype=float)
        if d.ndim != 1 or len(d) < 2 or d[1] == 0:
            raise ValueError("a reparameterization jet needs φ'(0) != 0")
        d.setflags(write=False)
        object.__setattr__(self, "derivs", d)

    @classmethod
    def identity(cls, t0: float = 0.0) -> ReparamJet:
        return cls(np.array([t0, 1.0]))

    @classmethod
    def affine(cls, c: float, t0: float = 0.0) -> ReparamJet:
        return cls(np.array([t0, c]))

    def series(self, n: int) -> np.ndarray:
        """Taylor series of φ(τ) − φ(0), truncated at n."""
        c = series.trunc(series.taylor(self.derivs), n)
        c[0] = 0.0
        return c


def schwarzian_law_coefficient(k: int) -> float:
    """c in B̃_{k-2} = φ'² B_{k-2}(φ) − c·((φ''/2φ')' − (φ''/2φ')²)."""
    return k * (k * k - 1) / 6.0


def regularity_cond(jet: CurveJet) -> float:
    if jet.order < jet.k - 1:
        raise JetOrderError(f"regularity needs {jet.k - 1} derivatives, jet has {jet.order}")
    return float(np.linalg.cond(jet.basis()))


def _require_regular(jet: CurveJet) -> None:
    cond = regularity_cond(jet)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise RegularityError(f"ε, ..., ε^({jet.k - 1}) are not independent (cond={cond:.3g})")


# ---------------------------
# Decomposition & canonical representative
# ---------------------------

def decompose(jet: CurveJet) -> np.ndarray:
    """Taylor coefficients a[m, i] of ε^(k) = Σ_{i<k} a_i ε^(i), valid to order N − k.

    Complexity: O((N−k)² k²) after one k x k factorization.
    """
    k, N = jet.k, jet.order
    if N < k:
        raise JetOrderError(f"decomposition needs order >= {k}, jet has {N}")
    _require_regular(jet)
    D = jet.derivs
    M = N - k
    E = [np.column_stack([D[i + m] for i in range(k)]) / math.factorial(m) for m in range(M + 1)]
    R = [D[k + m] / math.factorial(m) for m in range(M + 1)]
    E0_inv = np.linalg.inv(E[0])
    a = np.zeros((M + 1, k))
    for m in range(M + 1):
        rhs = R[m] - sum((E[l] @ a[m - l] for l in range(1, m + 1)), np.zeros(k))
        a[m] = E0_inv @ rhs
    return a


def canonicalize(jet: CurveJet) -> tuple[CurveJet, DecompJet]:
    """Rescale ε by f(t) so that the ε^(k-1) coefficient of ε^(k) vanishes; f'/f = −a_{k-1}/k."""
    k, N = jet.k, jet.order
    a = decompose(jet)
    rho = -a[:, k - 1] / k
    f = series.exp(series.integ(rho), N)
    rescaled = CurveJet.from_coeffs(series.mul(f, jet.coeffs, N), jet.t0)
    b = decompose(rescaled)
    valid = tuple(N - 2 * k + 1 + i for i in range(k))
    coeffs = tuple(b[:, i].copy() for i in range(k))
    return rescaled, DecompJet(coeffs, valid)


def integrate_jet(B, initial, N: int, t0: float = 0.0) -> CurveJet:
    """Jet of the solution of ε^(k) = Σ_i B_i ε^(i) with ε^(j)(t0) = initial[j], j < k.

    B is a sequence of derivative-value arrays (B_i^(r)(t0) for r = 0, 1, ...), one per i;
    missing entries are zero.
    """
    initial = np.asarray(initial, dtype=float)
    k = initial.shape[1]
    if initial.shape[0] != k:
        raise ValueError("initial data must be k derivative vectors in R^k")
    Bd = [np.asarray(b, dtype=float) for b in B]

    def b(i: int, r: int) -> float:
        if i >= len(Bd) or r >= len(Bd[i]):
            return 0.0
        return float(Bd[i][r])

    D = np.zeros((N + 1, k))
    D[:min(k, N + 1)] = initial[:N + 1]
    for n in range(0, N - k + 1):
        acc = np.zeros(k)
        for i in range(k):
            for r in range(n + 1):
                coef = b(i, r)
                if coef:
                    acc += math.comb(n, r) * coef * D[i + n - r]
        D[n + k] = acc
    return CurveJet(D, t0)


# ---------------------------
# Reduction by a point
# ---------------------------

def reduce_by_point(jet: CurveJet, complement: np.ndarray | None = None) -> CurveJet:
    """Jet of ε̃ = Π(ε)/t in R^k / ℓ, ℓ = span ε(t0): ε̃^(j)(t0) = Π(ε^(j+1)(t0)) / (j+1).

    The quotient is realized as coordinates in the basis [ε(t0) | complement]; the default
    complement is ε', ..., ε^(k-1).
    """
    k, N = jet.k, jet.order
    if N < 2:
        raise JetOrderError("reduction needs a jet of order >= 2")
    D = jet.derivs
    if complement is None:
        if N < k - 1:
            raise JetOrderError(f"default complement needs order >= {k - 1}")
        complement = D[1:k].T
    basis = np.column_stack([D[0], np.asarray(complement, dtype=float)])
    if basis.shape != (k, k):
        raise ValueError(f"complement must have {k - 1} columns in R^{k}")
    cond = np.linalg.cond(basis)
    if not np.isfinite(cond) or cond > COND_MAX:
        raise RegularityError("complement does not span a complement of ℓ")
    coords = np.linalg.solve(basis, D[1:].T).T[:, 1:]
    coords /= np.arange(1, N + 1).reshape(-1, 1)
    if np.linalg.norm(coords[0]) <= REDUCTION_TOL * max(1.0, np.linalg.norm(D[1])):
        raise RegularityError("ε'(t0) lies in ℓ; the reduction is not regular")
    return CurveJet(coords, jet.t0)


# ---------------------------
# Osculating quadrics (plane curves)
# ---------------------------

def osculating_quadric_normalized(alpha) -> np.ndarray:
    """Quadric with 4th-order contact to a normalized plane curve, on (Y0, Y1, Y2).

    alpha[j] = (α1^(j)(0), α2^(j)(0)) for j = 0..4 with α(0) = 0, α1' = 1/2, α2' = 0,
    α1'' = 0, α2'' = 1/3. Equation in y = Y/Y0:
    (2/3)y1² + 2α2''' y1 y2 − (4α1''' + 6α2'''² − (3/2)α2'''') y2² − y2 = 0.
    """
    a = np.asarray(alpha, dtype=float)
    if a.shape[0] < 5 or a.shape[1] != 2:
        raise JetOrderError("the osculating quadric needs the 4-jet of a plane curve")
    expected = {(0, 0): 0.0, (0, 1): 0.0, (1, 0): 0.5, (1, 1): 0.0, (2, 0): 0.0, (2, 1): 1.0 / 3.0}
    for (j, c), v in expected.items():
        if abs(a[j, c] - v) > NORMALIZATION_TOL:
            raise NormalizationError(f"α{c + 1}^({j})(0) = {a[j, c]!r}, expected {v!r}")
    a13, a23, a24 = a[3, 0], a[3, 1], a[4, 1]
    K = 4 * a13 + 6 * a23 ** 2 - 1.5 * a24
    return np.array([[0.0, 0.0, -0.5],
                     [0.0, 2.0 / 3.0, a23],
                     [-0.5, a23, -K]])


def osculating_quadric(jet: CurveJet) -> np.ndarray:
    """Osculating quadric of a regular plane-curve jet, in the jet's own coordinates."""
    if jet.k != 3:
        raise ValueError("osculating quadrics are defined for plane curves (k = 3)")
    if jet.order < 4:
        raise JetOrderError("the osculating quadric needs a jet of order >= 4")
    _require_regular(jet)
    D = jet.derivs
    basis = np.column_stack([D[0], 2 * D[1], 3 * D[2]])
    Y = series.taylor(np.linalg.solve(basis, D[:5].T).T)   # (5, 3) series of (Y0, Y1, Y2)
    alpha = np.column_stack([series.div(Y[:, 1], Y[:, 0], 4), series.div(Y[:, 2], Y[:, 0], 4)])
    M = osculating_quadric_normalized(series.derivs(alpha))
    Binv = np.linalg.inv(basis)
    return Binv.T @ M @ Binv


def osculating_cone_from_B(B2: float) -> np.ndarray:
    """(2/3)Y1² − (7/10)B2·Y2² − Y0·Y2 on (Y0, Y1, Y2) = coordinates in (Πε', Πε'', Πε''')."""
    return np.array([[0.0, 0.0, -0.5],
                     [0.0, 2.0 / 3.0, 0.0],
                     [-0.5, 0.0, -0.7 * B2]])


def contact_defect(Q: np.ndarray, jet: CurveJet) -> np.ndarray:
    """Taylor coefficients of εᵀ Q ε along the jet (order = jet order)."""
    c = jet.coeffs
    N = jet.order
    Qc = c @ Q
    return np.array([sum(float(c[i] @ Qc[m - i]) for i in range(m + 1)) for m in range(N + 1)])


# ---------------------------
# Reparameterization & projective parameters
# ---------------------------

def reparameterize(jet: CurveJet, phi: ReparamJet) -> CurveJet:
    """Jet of ε∘φ at τ0 = 0 (Faà di Bruno through series composition); φ(0) must be t0."""
    if abs(phi.derivs[0] - jet.t0) > 1e-15 * max(1.0, abs(jet.t0)):
        raise ValueError("φ(0) must equal the jet's base parameter")
    N = jet.order
    out = series.compose(jet.coeffs, phi.series(N), N)
    return CurveJet.from_coeffs(out, 0.0)


def transformed_top_B(B_jet: np.ndarray, phi: ReparamJet, k: int, n: int) -> np.ndarray:
    """Series of φ'² B_{k-2}(φ) − c·𝕊(φ) to order n, from B_{k-2} derivative values at t0."""
    p = phi.series(n + 3)
    B_of_phi = series.compose(series.taylor(B_jet)[:n + 1], p[:n + 1], n)
    d1 = series.deriv(p)
    lead = series.mul(series.mul(d1, d1, n), B_of_phi, n)
    return lead - schwarzian_law_coefficient(k) * series.schwarzian_half(p, n)


def projective_normalize(jet: CurveJet, kill_order: int, phi2: float = 0.0) -> tuple[CurveJet, ReparamJet]:
    """φ with φ(0)=t0, φ'(0)=1, φ''(0)=phi2 making B̃_{k-2} vanish at orders 0..kill_order.

    B̃_{k-2}^(m)(0) is affine in φ^(m+3)(0) with slope −c/2, so the derivatives are fixed
    one after another.
    """
    k = jet.k
    _, dec = canonicalize(jet)
    top = k - 2
    if kill_order > dec.valid[top]:
        raise JetOrderError(f"killing B_{top} to order {kill_order} needs a longer jet "
                            f"(exact to order {dec.valid[top]})")
    B_jet = dec.jet(top)[:kill_order + 1]
    c = schwarzian_law_coefficient(k)
    d = np.zeros(kill_order + 4)
    d[0], d[1], d[2] = jet.t0, 1.0, phi2
    for m in range(kill_order + 1):
        phi = ReparamJet(d)
        r = transformed_top_B(B_jet, phi, k, m)[m] * math.factorial(m)
        d[m + 3] += 2.0 * r / c
    phi = ReparamJet(d)
    return reparameterize(jet, phi), phi


def wilczynski(jet: CurveJet, i: int, phi2: float = 0.0) -> float:
    """First or second invariant on the unit shift of a projective parameter tangent to t.

    i = 1: B_{k-3}(0); i = 2: B_{k-4}(0) − ((k−3)/4) B'_{k-3}(0).
    """
    if i not in (1, 2):
        raise ValueError("only the first two invariants are supported; see wilczynski_general")
    k = jet.k
    if k < i + 2:
        raise ValueError(f"invariant {i} needs k >= {i + 2}")
    need = k + 1 + i
    if jet.order < need:
        raise JetOrderError(f"invariant {i} needs a jet of order >= {need}, got {jet.order}")
    normalized, _ = projective_normalize(jet, kill_order=i, phi2=phi2)
    _, dec = canonicalize(normalized)
    if i == 1:
        return dec.value(k - 3)
    return dec.value(k - 4) - (k - 3) / 4.0 * dec.value(k - 3, 1)


def wilczynski_general(jet: CurveJet, i: int) -> float:
    """Experimental general-i invariant in a projective parameter (agrees with i = 1, 2 at k = 4)."""
    k = jet.k
    if k - 2 - i < 0:
        raise ValueError(f"invariant {i} is not defined for k = {k}")
    normalized, _ = projective_normalize(jet, kill_order=i)
    _, dec = canonicalize(normalized)
    f = math.factorial
    total = 0.0
    for j in range(1, i + 1):
        weight = f(2 * i - j + 3) * f(k - i + j - 3) / (f(i + 2 - j) * f(j))
        total += (-1) ** (j - 1) * weight * dec.value(k - 3 - i + j, j - 1)
    return f(i + 1) / f(2 * i + 2) * total


def w1_derivative(jet: CurveJet) -> float:
    """B̃0'(0) of a plane curve whose first invariant vanishes at the point."""
    if jet.k != 3:
        raise ValueError("the derivative of the first invariant is taken for plane curves (k = 3)")
    if jet.order < 6:
        raise JetOrderError(f"needs a plane-curve jet of order >= 6, got {jet.order}")
    normalized, _ = projective_normalize(jet, kill_order=2)
    _, dec = canonicalize(normalized)
    w1 = dec.value(0)
    value = dec.value(0, 1)
    if abs(w1) > W1_VANISH_TOL * (1.0 + abs(value)):
        raise ConventionError(f"first invariant does not vanish at the point ({w1:.3e})")
    return value
