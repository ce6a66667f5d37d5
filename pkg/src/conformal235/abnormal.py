"""Dynamics on the annihilator of D² in coordinates (x1..x5, u4, u5).

h = u4·u⃗2 − u5·u⃗1 generates the abnormal extremals; u⃗_i acts on the base as X_i and on
fiber coordinates by u⃗_i(u_j) = Σ_{k=4,5} c_{ji}^k u_k. The vertical field ε1 is fixed up to
a constant by γ4·u5 − γ5·u4 = 1; the curve t ↦ (e^{−th})_* ε1 has derivatives (ad h)^j ε1.
"""
from __future__ import annotations
import math
import threading
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ChartPoleError, DegeneratePointError, DimensionMismatchError, JetOrderError
from .exprcore import (BASE_VARIABLES, EXTENDED_VARIABLES, ONE, ZERO, VectorField, div,
                       evaluate_many, extend, lie_bracket, mul, neg, sub, total, var)
from .frame import AdaptedFrame, frame_memo
from .projcurve import CurveJet
from .utils import COND_MAX, JET_ORDER, MAX_AD_ORDER, RK4_STEPS_PER_UNIT, get_logger

log = get_logger(__name__)

Chart = Literal["U4", "U5"]
CHARTS: tuple[Chart, ...] = ("U5", "U4")

U4 = var("u4")
U5 = var("u5")


@dataclass(frozen=True)
class CotangentPoint:
    """λ̃ = (q; u4, u5) on the annihilator of D², away from the zero section."""
    q: tuple[float, ...]
    u4: float
    u5: float

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(x) for x in self.q))
        object.__setattr__(self, "u4", float(self.u4))
        object.__setattr__(self, "u5", float(self.u5))
        if len(self.q) != 5:
            raise DimensionMismatchError(f"base point needs 5 coordinates, got {len(self.q)}")
        if self.u4 == 0.0 and self.u5 == 0.0:
            raise DegeneratePointError("(u4, u5) = (0, 0) lies on the zero section")

    def as_array(self) -> np.ndarray:
        return np.array(self.q + (self.u4, self.u5))

    def point(self) -> dict[str, float]:
        return dict(zip(EXTENDED_VARIABLES, self.q + (self.u4, self.u5)))

    def scaled(self, c: float) -> CotangentPoint:
        return CotangentPoint(self.q, c * self.u4, c * self.u5)

    @classmethod
    def from_array(cls, state) -> CotangentPoint:
        state = np.asarray(state, dtype=float)
        return cls(tuple(state[:5]), state[5], state[6])


@dataclass(frozen=True)
class BCoefficients:
    B0: float
    B1: float
    B2: float
    B3: float           # coefficient on (ad h)^3 ε1; zero for the canonical representative
    alpha: float        # on h
    beta: float         # on the Euler field
    residual: float     # ‖w4 − fit‖ / max‖w_i‖
    scale: float        # max‖w_i‖, i ≤ 4
    cond: float
    chart: str

    @property
    def canonicity_defect(self) -> float:
        return abs(self.B3)


# ---------------------------
# Fields
# ---------------------------

def build_h_field(F: AdaptedFrame) -> VectorField:
    return frame_memo(F, "h", lambda: _h_field(F))


def _h_field(F: AdaptedFrame) -> VectorField:
    X1, X2 = F.X(1), F.X(2)
    base = [sub(mul(U4, a2), mul(U5, a1)) for a1, a2 in zip(X1.components, X2.components)]

    def lift(j: int):
        # h(u_j) = u4 Σ_k c_{j2}^k u_k − u5 Σ_k c_{j1}^k u_k, with u1 = u2 = u3 = 0
        via2 = total(mul(F.c(j, 2, k), u) for k, u in ((4, U4), (5, U5)))
        via1 = total(mul(F.c(j, 1, k), u) for k, u in ((4, U4), (5, U5)))
        return sub(mul(U4, via2), mul(U5, via1))

    return VectorField(EXTENDED_VARIABLES, tuple(base) + (lift(4), lift(5)))


def tangency_defects(F: AdaptedFrame) -> tuple:
    """h(u_j) for j = 1, 2, 3 on u1 = u2 = u3 = 0; these vanish for a correct lift."""
    out = []
    for j in (1, 2, 3):
        via2 = total(mul(F.c(j, 2, k), u) for k, u in ((4, U4), (5, U5)))
        via1 = total(mul(F.c(j, 1, k), u) for k, u in ((4, U4), (5, U5)))
        out.append(sub(mul(U4, via2), mul(U5, via1)))
    return tuple(out)


def euler_field() -> VectorField:
    return VectorField(EXTENDED_VARIABLES, (ZERO,) * 5 + (U4, U5))


def eps1_field(chart: Chart) -> VectorField:
    """U5: (1/u5)∂u4; U4: −(1/u4)∂u5. Both satisfy γ4·u5 − γ5·u4 = 1."""
    if chart == "U5":
        return VectorField(EXTENDED_VARIABLES, (ZERO,) * 5 + (div(ONE, U5), ZERO))
    if chart == "U4":
        return VectorField(EXTENDED_VARIABLES, (ZERO,) * 5 + (ZERO, neg(div(ONE, U4))))
    raise ValueError(f"unknown chart {chart!r}")


def choose_chart(lam: CotangentPoint) -> Chart:
    return "U5" if abs(lam.u5) >= abs(lam.u4) else "U4"


def base_field(V: VectorField) -> VectorField:
    """Extend a base field to the extended coordinates (no fiber part)."""
    return extend(V, EXTENDED_VARIABLES)


_AD_LOCK = threading.Lock()


def ad_fields(F: AdaptedFrame, chart: Chart, order: int) -> tuple[VectorField, ...]:
    """Symbolic (ad h)^i ε1 for i = 0..order, kept on the frame and extended on demand."""
    if order > MAX_AD_ORDER:
        raise JetOrderError(f"ad-powers beyond order {MAX_AD_ORDER} are not supported (asked {order})")
    h = build_h_field(F)
    with _AD_LOCK:
        fields = F.memo.setdefault(("ad", chart), [eps1_field(chart)])
        while len(fields) <= order:
            fields.append(lie_bracket(h, fields[-1]))
            log.debug("%s chart %s: ad-power %d built", F.name, chart, len(fields) - 1)
        return tuple(fields[:order + 1])


# ---------------------------
# Numerics at points
# ---------------------------

def _check_chart(chart: Chart, u4, u5) -> None:
    if chart == "U5" and np.any(np.asarray(u5) == 0):
        raise ChartPoleError("chart U5 needs u5 != 0", "1/u5")
    if chart == "U4" and np.any(np.asarray(u4) == 0):
        raise ChartPoleError("chart U4 needs u4 != 0", "1/u4")


def evaluate_fields(fields, point) -> np.ndarray:
    """Stack of field values, shape (len(fields), 7, *point shape)."""
    comps = [c for V in fields for c in V.components]
    vals = evaluate_many(comps, point)
    return vals.reshape((len(fields), len(EXTENDED_VARIABLES)) + vals.shape[1:])


def ad_powers(F: AdaptedFrame, lam: CotangentPoint, N: int, chart: Chart | None = None) -> np.ndarray:
    """w_0..w_N at λ̃ as an (N+1, 7) array."""
    chart = chart or choose_chart(lam)
    _check_chart(chart, lam.u4, lam.u5)
    return evaluate_fields(ad_fields(F, chart, N), lam.point())


def ad_powers_fiber(F: AdaptedFrame, q, u4, u5, N: int, chart: Chart) -> np.ndarray:
    """Vectorized over fiber samples at one base point; shape (n, N+1, 7)."""
    u4 = np.asarray(u4, dtype=float)
    u5 = np.asarray(u5, dtype=float)
    _check_chart(chart, u4, u5)
    point = dict(zip(BASE_VARIABLES, (float(x) for x in q)))
    point.update(u4=u4, u5=u5)
    vals = evaluate_fields(ad_fields(F, chart, N), point)
    return np.moveaxis(vals, -1, 0)


def h_at(F: AdaptedFrame, lam: CotangentPoint) -> np.ndarray:
    return build_h_field(F).evaluate(lam.point())


def euler_at(lam: CotangentPoint) -> np.ndarray:
    return np.array([0.0] * 5 + [lam.u4, lam.u5])


def _span_basis(w: np.ndarray, h: np.ndarray, e: np.ndarray) -> np.ndarray:
    return np.column_stack([w[0], w[1], w[2], w[3], h, e])


def canonical_B(F: AdaptedFrame, lam: CotangentPoint, chart: Chart | None = None) -> BCoefficients:
    """Least-squares solve of w4 = B0 w0 + B1 w1 + B2 w2 + B3 w3 + α h + β e."""
    chart = chart or choose_chart(lam)
    w = ad_powers(F, lam, 4, chart)
    A = _span_basis(w, h_at(F, lam), euler_at(lam))
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > COND_MAX:
        raise DegeneratePointError(f"decomposition system is ill-conditioned (cond={cond:.3g})",
                                   {"cond": cond, "point": lam})
    x, *_ = np.linalg.lstsq(A, w[4], rcond=None)
    scale = float(np.max(np.linalg.norm(w, axis=1)))
    residual = float(np.linalg.norm(A @ x - w[4]) / max(scale, 1e-300))
    return BCoefficients(*(float(v) for v in x), residual=residual, scale=scale, cond=cond,
                         chart=chart)


def curve_jet(F: AdaptedFrame, lam: CotangentPoint, N: int = JET_ORDER,
              chart: Chart | None = None) -> CurveJet:
    """k=4 jet of t ↦ (e^{−th})_* ε1 modulo span{h, e}, coordinates in the basis w0..w3."""
    chart = chart or choose_chart(lam)
    w = ad_powers(F, lam, N, chart)
    A = _span_basis(w, h_at(F, lam), euler_at(lam))
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > COND_MAX:
        raise DegeneratePointError(f"fiber curve basis is ill-conditioned (cond={cond:.3g})",
                                   {"cond": cond, "point": lam})
    coords, *_ = np.linalg.lstsq(A, w.T, rcond=None)
    fit = np.linalg.norm(A @ coords - w.T) / max(float(np.max(np.linalg.norm(w, axis=1))), 1e-300)
    if fit > 1e-8:
        log.warning("fiber curve leaves span{w0..w3, h, e} at %s (residual %.2e)", lam, fit)
    return CurveJet(coords[:4].T)


# ---------------------------
# Flow
# ---------------------------

def _rhs(F: AdaptedFrame, state: np.ndarray) -> np.ndarray:
    return build_h_field(F).evaluate(dict(zip(EXTENDED_VARIABLES, state)))


def flow(F: AdaptedFrame, lam: CotangentPoint, t: float, steps: int | None = None) -> CotangentPoint:
    """e^{t h}(λ̃) by classical fixed-step RK4."""
    if steps is None:
        steps = max(1, math.ceil(abs(t) * RK4_STEPS_PER_UNIT))
    y = lam.as_array()
    if t == 0:
        return lam
    dt = t / steps
    for _ in range(steps):
        k1 = _rhs(F, y)
        k2 = _rhs(F, y + 0.5 * dt * k1)
        k3 = _rhs(F, y + 0.5 * dt * k2)
        k4 = _rhs(F, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(y)):
        raise DegeneratePointError("flow left the finite domain", {"t": t, "steps": steps})
    return CotangentPoint.from_array(y)


def pullback_eps1(F: AdaptedFrame, lam: CotangentPoint, t: float, chart: Chart | None = None,
                  delta: float = 1e-5, steps_per_unit: int = RK4_STEPS_PER_UNIT) -> np.ndarray:
    """(e^{−th})_* ε1 at λ̃ by finite differences of the RK4 flow map (test oracle)."""
    chart = chart or choose_chart(lam)
    steps = max(1, math.ceil(abs(t) * steps_per_unit))
    mu = flow(F, lam, t, steps)
    direction = eps1_field(chart).evaluate(mu.point())
    plus = flow(F, CotangentPoint.from_array(mu.as_array() + delta * direction), -t, steps)
    minus = flow(F, CotangentPoint.from_array(mu.as_array() - delta * direction), -t, steps)
    return (plus.as_array() - minus.as_array()) / (2 * delta)
