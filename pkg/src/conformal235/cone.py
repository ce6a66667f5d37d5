"""The conformal cone Ξ_q in T_qM, by two routes.

Closed form: built from the structure functions through the fiber forms b, b1 (linear in
u4, u5) and α3, Π, Q, ℬ2 (quadratic). Geometric: the osculating cones Con(λ) over a sample
of the fiber, lifted to T_qM and fitted by a single quadric. Coordinates are always with
respect to the adapted frame X1..X5 at q unless converted with to_ambient.
"""
from __future__ import annotations
from dataclasses import dataclass, field

import numpy as np

from .abnormal import U4, U5, ad_powers_fiber, build_h_field, choose_chart, CotangentPoint
from .errors import DegeneratePointError, ZeroFormError
from .exprcore import (BASE_VARIABLES, Expr, add, as_point, const, evaluate_many, mul, neg, sub,
                       substitute, total)
from .frame import AdaptedFrame, frame_matrix, frame_memo, require_generic
from .projcurve import osculating_cone_from_B
from .utils import (COND_MAX, CONE_TOL, FIT_GAP_MIN, FIT_RANK_TOL, N_CONE, N_FIBER,
                    SIGNATURE_TOL, get_logger)

log = get_logger(__name__)

LINEAR_FORMS = ("b", "b1", "l1", "l2")
QUADRATIC_FORMS = ("alpha3", "Pi", "hb", "hb1", "Q", "B2")


# ---------------------------
# Fiber forms
# ---------------------------

@dataclass(frozen=True, eq=False)
class FiberFunctions:
    """Forms on the fiber (u4, u5): full expressions and their x-dependent coefficients.

    Linear forms store (c4, c5) of c4·u4 + c5·u5; quadratic forms (c44, c45, c55) of
    c44·u4² + c45·u4·u5 + c55·u5².
    """
    exprs: dict
    coeffs: dict


def _linear(c4, c5) -> Expr:
    return add(mul(c4, U4), mul(c5, U5))


def _quadratic(c44, c45, c55) -> Expr:
    return total((mul(c44, mul(U4, U4)), mul(c45, mul(U4, U5)), mul(c55, mul(U5, U5))))


def _linear_coeffs(e: Expr) -> tuple[Expr, Expr]:
    return substitute(e, {"u4": 1, "u5": 0}), substitute(e, {"u4": 0, "u5": 1})


def _quadratic_coeffs(e: Expr) -> tuple[Expr, Expr, Expr]:
    a = substitute(e, {"u4": 1, "u5": 0})
    c = substitute(e, {"u4": 0, "u5": 1})
    both = substitute(e, {"u4": 1, "u5": 1})
    return a, sub(sub(both, a), c), c


def fiber_functions(F: AdaptedFrame) -> FiberFunctions:
    return frame_memo(F, "fiber_functions", lambda: _fiber_functions(F))


def _fiber_functions(F: AdaptedFrame) -> FiberFunctions:
    c = F.c
    third = const(1) / 3
    b = _linear(mul(third, add(c(4, 2, 4), c(5, 2, 5))),
                mul(third, neg(add(c(4, 1, 4), c(5, 1, 5)))))
    b1 = _linear(c(3, 2, 3), neg(c(3, 1, 3)))
    alpha3 = _quadratic(c(5, 2, 3), neg(add(c(4, 2, 3), c(5, 1, 3))), c(4, 1, 3))
    Pi = _quadratic(add(c(3, 2, 1), c(5, 3, 4)),
                    total((c(3, 2, 2), neg(c(3, 1, 1)), neg(c(4, 3, 4)),
                           c(5, 3, 5))),
                    neg(add(c(3, 1, 2), c(4, 3, 5))))

    h = build_h_field(F)
    hb, hb1 = h.apply(b), h.apply(b1)
    Q = total((mul(6, hb), hb1, Pi, neg(alpha3), neg(mul(b1, b1)),
               neg(mul(3, mul(b, b1))), neg(mul(9, mul(b, b)))))
    B2 = total((mul(2, alpha3), neg(Pi), neg(hb1), neg(mul(9, hb)),
                mul(b1, b1), mul(9, mul(b, b))))
    l1 = add(b1, mul(3, b))
    l2 = mul(-3, b)

    exprs = {"b": b, "b1": b1, "l1": l1, "l2": l2, "alpha3": alpha3, "Pi": Pi,
             "hb": hb, "hb1": hb1, "Q": Q, "B2": B2}
    coeffs = {name: _linear_coeffs(exprs[name]) for name in LINEAR_FORMS}
    coeffs.update({name: _quadratic_coeffs(exprs[name]) for name in QUADRATIC_FORMS})
    return FiberFunctions(exprs, coeffs)


def fiber_coefficients_at(F: AdaptedFrame, q) -> dict[str, np.ndarray]:
    """Numeric coefficients of every fiber form at the base point q."""
    ff = fiber_functions(F)
    names = list(ff.coeffs)
    flat = [e for n in names for e in ff.coeffs[n]]
    vals = evaluate_many(flat, as_point(q, BASE_VARIABLES))
    out, pos = {}, 0
    for n in names:
        width = len(ff.coeffs[n])
        out[n] = vals[pos:pos + width]
        pos += width
    return out


def eval_linear(c, u4: float, u5: float) -> float:
    return float(c[0] * u4 + c[1] * u5)


def eval_quadratic(c, u4: float, u5: float) -> float:
    return float(c[0] * u4 * u4 + c[1] * u4 * u5 + c[2] * u5 * u5)


def _product(a, b) -> np.ndarray:
    return np.array([a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[1] * b[1]])


# ---------------------------
# Closed forms
# ---------------------------

def _cone_matrix(lin, quad) -> np.ndarray:
    """x1x5 − x2x4 + (2/3)(x3 − lin(x5, −x4))² − quad(x5, −x4), as a symmetric matrix."""
    M = np.zeros((5, 5))
    M[0, 4] = M[4, 0] = 0.5
    M[1, 3] = M[3, 1] = -0.5
    v = np.array([0.0, 0.0, 1.0, lin[1], -lin[0]])
    M += (2.0 / 3.0) * np.outer(v, v)
    # quad(x5, −x4) = q44·x5² − q45·x4·x5 + q55·x4²
    M[4, 4] -= quad[0]
    M[3, 3] -= quad[2]
    M[3, 4] += quad[1] / 2
    M[4, 3] += quad[1] / 2
    return M


FLAT_CONE = _cone_matrix((0.0, 0.0), (0.0, 0.0, 0.0))


def xi_closed_form(F: AdaptedFrame, q) -> np.ndarray:
    """Ξ_q from structure functions:
    x1x5 − x2x4 + (2/3)(x3 − (3/4)L(x5,−x4))² − (3/10)(Π + (4/3)α3 + h(L) + (1/4)L·(b1 − 9b))(x5,−x4)
    with L = b1 − b.
    """
    require_generic(F, q)
    fc = fiber_coefficients_at(F, q)
    L = fc["b1"] - fc["b"]
    P = fc["Pi"] + (4.0 / 3.0) * fc["alpha3"] + (fc["hb1"] - fc["hb"]) \
        + 0.25 * _product(L, fc["b1"] - 9.0 * fc["b"])
    return _cone_matrix(0.75 * L, 0.3 * P)


def xi_from_kisa(F: AdaptedFrame, q) -> np.ndarray:
    """Ξ_q written through l1, l2, Q and ℬ2:
    x1x5 − x2x4 + (2/3)(x3 − l2 − (3/4)l1)² − ((7/10)ℬ2 + Q + (3/8)l1²), forms at (x5, −x4).
    """
    require_generic(F, q)
    fc = fiber_coefficients_at(F, q)
    lin = fc["l2"] + 0.75 * fc["l1"]
    quad = 0.7 * fc["B2"] + fc["Q"] + 0.375 * _product(fc["l1"], fc["l1"])
    return _cone_matrix(lin, quad)


# ---------------------------
# Osculating cones over the fiber
# ---------------------------

@dataclass(frozen=True, eq=False)
class ConLambda:
    lam: CotangentPoint
    chart: str
    basis: np.ndarray        # rows: π_*h, π_*w1, π_*w2, π_*w3 in frame coordinates
    quadric: np.ndarray      # on (Y0, Y1, Y2)
    B2: float
    residual: float

    @property
    def degenerate_direction(self) -> np.ndarray:
        return self.basis[0]

    def point(self, s: float, Y) -> np.ndarray:
        """s·π_*h + Σ Y_i π_*w_{i+1}, frame coordinates."""
        return s * self.basis[0] + np.asarray(Y) @ self.basis[1:]


def _con_lambda_batch(F: AdaptedFrame, q, u4: np.ndarray, u5: np.ndarray, chart: str,
                      Fm: np.ndarray) -> list[ConLambda]:
    w = ad_powers_fiber(F, q, u4, u5, 4, chart)                     # (n, 5, 7)
    point = dict(zip(BASE_VARIABLES, (float(x) for x in q)))
    point.update(u4=u4, u5=u5)
    hv = np.moveaxis(build_h_field(F).evaluate(point), -1, 0)       # (n, 7)
    out = []
    for i in range(len(u4)):
        e = np.zeros(7)
        e[5], e[6] = u4[i], u5[i]
        A = np.column_stack([w[i, 0], w[i, 1], w[i, 2], w[i, 3], hv[i], e])
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > COND_MAX:
            raise DegeneratePointError(f"decomposition system is ill-conditioned (cond={cond:.3g})",
                                       {"cond": float(cond), "u": (float(u4[i]), float(u5[i]))})
        x, *_ = np.linalg.lstsq(A, w[i, 4], rcond=None)
        scale = float(np.max(np.linalg.norm(w[i], axis=1)))
        residual = float(np.linalg.norm(A @ x - w[i, 4]) / scale)
        ambient = np.stack([hv[i, :5], w[i, 1, :5], w[i, 2, :5], w[i, 3, :5]])
        basis = np.linalg.solve(Fm, ambient.T).T
        lam = CotangentPoint(tuple(q), u4[i], u5[i])
        out.append(ConLambda(lam, chart, basis, osculating_cone_from_B(x[2]), float(x[2]), residual))
    return out


def con_lambda(F: AdaptedFrame, lam: CotangentPoint, chart: str | None = None) -> ConLambda:
    """Con(λ): (2/3)Y1² − (7/10)B2·Y2² − Y0·Y2 = 0 in the basis (π_*h, π_*w1, π_*w2, π_*w3)."""
    require_generic(F, lam.q)
    chart = chart or choose_chart(lam)
    Fm = frame_matrix(F, lam.q)
    return _con_lambda_batch(F, lam.q, np.array([lam.u4]), np.array([lam.u5]), chart, Fm)[0]


def fiber_angles(n_fiber: int) -> np.ndarray:
    """Half-circle angles; (u4, u5) and −(u4, u5) carry the same cone."""
    return np.pi * (np.arange(n_fiber) + 0.5) / n_fiber


def con_lambda_fiber(F: AdaptedFrame, q, n_fiber: int = N_FIBER) -> list[ConLambda]:
    require_generic(F, q)
    Fm = frame_matrix(F, q)
    theta = fiber_angles(n_fiber)
    u4, u5 = np.cos(theta), np.sin(theta)
    use5 = np.abs(u5) >= np.abs(u4)
    cones: dict[int, ConLambda] = {}
    for chart, mask in (("U5", use5), ("U4", ~use5)):
        idx = np.flatnonzero(mask)
        if idx.size:
            for j, c in zip(idx, _con_lambda_batch(F, q, u4[idx], u5[idx], chart, Fm)):
                cones[int(j)] = c
    return [cones[j] for j in range(n_fiber)]


# ---------------------------
# Quadric fit
# ---------------------------

@dataclass(frozen=True)
class FitReport:
    singular_values: tuple
    null_dim: int
    gap: float
    n_points: int
    B2: tuple = field(default=())


_PAIRS = [(a, b) for a in range(5) for b in range(a, 5)]


def cone_points(cones: list[ConLambda], n_cone: int = N_CONE) -> np.ndarray:
    """n_cone points on each Con(λ): Y = ((2/3)τ² − κ, τ, 1), κ = (7/10)B2, s swept along π_*h."""
    tau = np.linspace(-2.0, 2.0, n_cone)
    s = np.linspace(1.0, -1.0, n_cone)
    pts = []
    for c in cones:
        kappa = 0.7 * c.B2
        Y = np.column_stack([(2.0 / 3.0) * tau ** 2 - kappa, tau, np.ones_like(tau)])
        pts.append(s[:, None] * c.basis[0] + Y @ c.basis[1:])
    return np.vstack(pts)


def fit_quadric(points: np.ndarray) -> tuple[np.ndarray, FitReport]:
    """Unique quadric through the points from the null space of the 15-monomial design matrix."""
    P = points / np.linalg.norm(points, axis=1, keepdims=True)
    design = np.column_stack([P[:, a] * P[:, b] for a, b in _PAIRS])
    _, s, Vt = np.linalg.svd(design, full_matrices=False)
    null_dim = int(np.sum(s <= FIT_RANK_TOL * s[0]))
    gap = float(s[-2] / s[-1]) if s[-1] > 0 else float("inf")
    report = FitReport(tuple(float(x) for x in s), null_dim, gap, len(points))
    if null_dim != 1 or gap < FIT_GAP_MIN:
        raise DegeneratePointError(
            f"sampled cones do not lie on a single quadric (null dim {null_dim}, gap {gap:.3g})",
            {"singular_values": report.singular_values})
    coef = Vt[-1]
    M = np.zeros((5, 5))
    for c, (a, b) in zip(coef, _PAIRS):
        if a == b:
            M[a, a] = c
        else:
            M[a, b] = M[b, a] = c / 2
    return M, report


def xi_geometric(F: AdaptedFrame, q, n_fiber: int = N_FIBER, n_cone: int = N_CONE
                 ) -> tuple[np.ndarray, FitReport]:
    """Ξ_q as the quadric through the osculating cones of n_fiber fiber samples."""
    cones = con_lambda_fiber(F, q, n_fiber)
    M, report = fit_quadric(cone_points(cones, n_cone))
    log.info("quadric fit at %s: gap %.3g over %d points", tuple(q), report.gap, report.n_points)
    return M, FitReport(report.singular_values, report.null_dim, report.gap, report.n_points,
                        tuple(c.B2 for c in cones))


# ---------------------------
# Comparisons
# ---------------------------

def signature(M: np.ndarray, tol: float = SIGNATURE_TOL) -> tuple[int, int, int]:
    ev = np.linalg.eigvalsh((M + M.T) / 2)
    radius = float(np.max(np.abs(ev))) if ev.size else 0.0
    if radius == 0.0:
        return (0, 0, len(ev))
    pos = int(np.sum(ev > tol * radius))
    neg = int(np.sum(ev < -tol * radius))
    return (pos, neg, len(ev) - pos - neg)


def conformal_residual(A: np.ndarray, B: np.ndarray) -> float:
    """min over ± of ‖A/‖A‖ ± B/‖B‖‖ (Frobenius)."""
    na, nb = np.linalg.norm(A), np.linalg.norm(B)
    if na == 0 or nb == 0:
        raise ZeroFormError("conformal comparison of a zero form")
    a, b = A / na, B / nb
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def conformal_equal(A: np.ndarray, B: np.ndarray, tol: float = CONE_TOL) -> bool:
    return conformal_residual(A, B) <= tol


def to_ambient(M: np.ndarray, Fm: np.ndarray) -> np.ndarray:
    """Frame-coordinate form -> ambient coordinates: F^{-T} M F^{-1}."""
    Finv = np.linalg.inv(Fm)
    return Finv.T @ M @ Finv
