"""Cartan's binary quartic on D(q).

For a direction v = v1 X1 + v2 X2 the covector λ̃ = (q; v2, −v1) makes π_*h(λ̃) = v, so the
h-flow parameter is tied to v. Two routes evaluate the quartic at v:
  w1     −(1/5) × derivative of the first invariant of the reduced plane curve,
  w2     −(1/25) × second invariant of the fiber curve itself.
"""
from __future__ import annotations
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .abnormal import Chart, CotangentPoint, curve_jet
from .errors import DegeneratePointError
from .frame import AdaptedFrame, require_generic
from .projcurve import reduce_by_point, w1_derivative, wilczynski
from .utils import HELDOUT_TOL, JET_ORDER, QUARTIC_ZERO_TOL, get_logger, scaled

log = get_logger(__name__)

Route = Literal["w1", "w2"]

FIT_ANGLES = np.pi * (np.arange(5) + 0.5) / 5
HELDOUT_ANGLES = np.pi * np.array([0.13, 0.47, 0.81])


@dataclass(frozen=True)
class BinaryQuartic:
    """a0 v1⁴ + a1 v1³v2 + a2 v1²v2² + a3 v1 v2³ + a4 v2⁴ on D(q) in the basis (X1, X2)."""
    coeffs: tuple
    heldout_residual: float = 0.0
    route: str = "w1"

    def __call__(self, v) -> float:
        v1, v2 = float(v[0]), float(v[1])
        return float(sum(a * v1 ** (4 - j) * v2 ** j for j, a in enumerate(self.coeffs)))

    def is_zero(self, tol: float = QUARTIC_ZERO_TOL) -> bool:
        return max(abs(a) for a in self.coeffs) <= tol

    def rescaled(self, a: float, d: float) -> BinaryQuartic:
        """Coefficients after X1 -> a X1, X2 -> d X2."""
        return BinaryQuartic(tuple(c * a ** (4 - j) * d ** j for j, c in enumerate(self.coeffs)),
                             self.heldout_residual, self.route)


def lambda_for_direction(F: AdaptedFrame, q, v) -> CotangentPoint:
    v1, v2 = float(v[0]), float(v[1])
    if v1 == 0.0 and v2 == 0.0:
        raise ValueError("direction must be nonzero")
    return CotangentPoint(tuple(q), v2, -v1)


def cartan_quartic_at(F: AdaptedFrame, q, v, chart: Chart | None = None) -> float:
    require_generic(F, q)
    lam = lambda_for_direction(F, q, v)
    jet = curve_jet(F, lam, JET_ORDER, chart)
    return -w1_derivative(reduce_by_point(jet)) / 5.0


def cartan_quartic_via_w2(F: AdaptedFrame, q, v, chart: Chart | None = None) -> float:
    require_generic(F, q)
    lam = lambda_for_direction(F, q, v)
    jet = curve_jet(F, lam, JET_ORDER, chart)
    return -wilczynski(jet, 2) / 25.0


ROUTES = {"w1": cartan_quartic_at, "w2": cartan_quartic_via_w2}


def route_gap(F: AdaptedFrame, q, v) -> float:
    """Relative disagreement of the two routes at one direction."""
    a = cartan_quartic_at(F, q, v)
    b = cartan_quartic_via_w2(F, q, v)
    return scaled(a - b, max(abs(a), abs(b)))


def _monomials(theta: np.ndarray) -> np.ndarray:
    v1, v2 = np.cos(theta), np.sin(theta)
    return np.column_stack([v1 ** (4 - j) * v2 ** j for j in range(5)])


def quartic_polynomial(F: AdaptedFrame, q, route: Route = "w1") -> BinaryQuartic:
    """Fit a0..a4 through five fixed directions; report the misfit on three more.

    A misfit above HELDOUT_TOL is only logged. Callers that need a hard check compare
    `heldout_residual` against HELDOUT_TOL themselves, as the quartic and corpus commands do.
    """
    value = ROUTES[route]
    fit_vals = np.array([value(F, q, (np.cos(t), np.sin(t))) for t in FIT_ANGLES])
    V = _monomials(FIT_ANGLES)
    cond = np.linalg.cond(V)
    if cond > 1e8:
        raise DegeneratePointError("direction set is ill-conditioned", {"cond": float(cond)})
    coeffs = np.linalg.solve(V, fit_vals)

    held_vals = np.array([value(F, q, (np.cos(t), np.sin(t))) for t in HELDOUT_ANGLES])
    pred = _monomials(HELDOUT_ANGLES) @ coeffs
    scale = float(max(np.max(np.abs(fit_vals)), np.max(np.abs(held_vals))))
    residual = float(np.max(np.abs(pred - held_vals)) / (1.0 + scale))
    if residual > HELDOUT_TOL:
        log.warning("quartic fit misses held-out directions at %s (%.2e)", tuple(q), residual)
    return BinaryQuartic(tuple(float(a) for a in coeffs), residual, route)
