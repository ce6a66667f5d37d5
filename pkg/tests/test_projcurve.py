from __future__ import annotations

import numpy as np
import pytest

from src.conformal235 import series
from src.conformal235.cone import conformal_residual
from src.conformal235.errors import JetOrderError, NormalizationError, RegularityError
from src.conformal235.projcurve import (CurveJet, ReparamJet, canonicalize, contact_defect,
                                        integrate_jet, osculating_cone_from_B, osculating_quadric,
                                        osculating_quadric_normalized, projective_normalize,
                                        reduce_by_point, reparameterize, schwarzian_law_coefficient,
                                        w1_derivative, wilczynski, wilczynski_general)


def moment_curve(k: int, N: int) -> CurveJet:
    """Jet at 0 of t ↦ (1, t, ..., t^(k-1))."""
    coeffs = np.zeros((N + 1, k))
    for j in range(min(k, N + 1)):
        coeffs[j, j] = 1.0
    return CurveJet.from_coeffs(coeffs)


def random_canonical(rng, k: int, N: int, symplectic: bool = False) -> CurveJet:
    """Jet of a solution of ε^(k) = Σ_{i<k-1} B_i ε^(i) with random B-jets and initial frame."""
    B = [rng.uniform(-1, 1, N + 1) for _ in range(k - 1)] + [np.zeros(N + 1)]
    if symplectic:
        # k = 4: B1 = B2' makes the operator self-adjoint
        B[1] = np.append(B[2][1:], 0.0)
    initial = rng.normal(size=(k, k)) + 2 * np.eye(k)
    return integrate_jet(B, initial, N)


def test_integrate_jet_harmonic_oscillator():
    jet = integrate_jet([[-1.0]], np.eye(2), 4)
    np.testing.assert_allclose(jet.derivs, [[1, 0], [0, 1], [-1, 0], [0, -1], [1, 0]])


@pytest.mark.parametrize("k, coefficient", [(2, 1.0), (3, 4.0), (4, 10.0)])
def test_schwarzian_law_coefficient(k, coefficient):
    assert schwarzian_law_coefficient(k) == coefficient


@pytest.mark.parametrize("k", [3, 4])
def test_moment_curve_has_trivial_coefficients(k):
    _, dec = canonicalize(moment_curve(k, 2 * k + 1))
    for i in range(k):
        assert dec.value(i) == pytest.approx(0.0, abs=1e-13)


@pytest.mark.parametrize("k", [3, 4])
def test_canonical_jet_reproduces_its_coefficients(k, rng):
    N = 10
    B = [rng.uniform(-1, 1, N + 1) for _ in range(k - 1)] + [np.zeros(N + 1)]
    jet = integrate_jet(B, rng.normal(size=(k, k)) + 2 * np.eye(k), N)
    _, dec = canonicalize(jet)
    for i in range(k - 1):
        np.testing.assert_allclose(dec.jet(i), B[i][:dec.valid[i] + 1], rtol=1e-7, atol=1e-7)


def test_validity_orders():
    _, dec = canonicalize(moment_curve(4, 9))
    assert dec.valid == (2, 3, 4, 5)
    with pytest.raises(JetOrderError):
        dec.value(0, 3)


@pytest.mark.parametrize("k", [3, 4])
def test_coefficients_ignore_rescaling(k, rng):
    jet = random_canonical(rng, k, 10)
    f = np.array([1.0, 0.5, -0.3, 0.2] + [0.0] * 7)
    rescaled = CurveJet.from_coeffs(series.mul(f, jet.coeffs, jet.order))
    _, a = canonicalize(jet)
    _, b = canonicalize(rescaled)
    for i in range(k - 1):
        assert b.value(i) == pytest.approx(a.value(i), rel=1e-8, abs=1e-10)


def test_singular_jet_is_rejected():
    d = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [0, 0, 0]])
    with pytest.raises(RegularityError):
        canonicalize(CurveJet(d))


def test_short_jet_is_rejected():
    with pytest.raises(JetOrderError):
        canonicalize(moment_curve(4, 3))


# ---------------------------
# Reparameterization
# ---------------------------

def test_reparameterize_identity_and_affine(rng):
    jet = random_canonical(rng, 3, 6)
    same = reparameterize(jet, ReparamJet.identity())
    np.testing.assert_allclose(same.derivs, jet.derivs, atol=1e-14)
    doubled = reparameterize(jet, ReparamJet.affine(2.0))
    scale = 2.0 ** np.arange(7)
    np.testing.assert_allclose(doubled.derivs, jet.derivs * scale[:, None], rtol=1e-13, atol=1e-13)


def test_reparam_jet_needs_nonzero_speed():
    with pytest.raises(ValueError):
        ReparamJet(np.array([0.0, 0.0, 1.0]))


@pytest.mark.parametrize("k", [3, 4])
def test_top_coefficient_transformation_law(k, rng):
    jet = random_canonical(rng, k, 10)
    _, dec = canonicalize(jet)
    for _ in range(20):
        c = rng.uniform(0.5, 2.0)
        d2, d3 = rng.uniform(-1, 1, 2)
        phi = ReparamJet(np.array([0.0, c, d2, d3]))
        _, new = canonicalize(reparameterize(jet, phi))
        schwarzian = d3 / (2 * c) - 0.75 * (d2 / c) ** 2
        expected = c ** 2 * dec.value(k - 2) - schwarzian_law_coefficient(k) * schwarzian
        assert new.value(k - 2) == pytest.approx(expected, rel=1e-8, abs=1e-9)


@pytest.mark.parametrize("k, kill", [(3, 2), (4, 1), (4, 2)])
def test_projective_normalization_kills_top_coefficient(k, kill, rng):
    jet = random_canonical(rng, k, 10)
    normalized, phi = projective_normalize(jet, kill)
    assert phi.derivs[1] == 1.0
    _, dec = canonicalize(normalized)
    for m in range(kill + 1):
        assert dec.value(k - 2, m) == pytest.approx(0.0, abs=1e-8)


def test_projective_parameter_of_vanishing_top_coefficient_is_trivial():
    _, phi = projective_normalize(moment_curve(4, 9), 2)
    np.testing.assert_allclose(phi.derivs[2:], 0.0, atol=1e-13)


# ---------------------------
# Invariants
# ---------------------------

def test_moment_curve_invariants_vanish():
    jet = moment_curve(4, 9)
    assert wilczynski(jet, 1) == pytest.approx(0.0, abs=1e-12)
    assert wilczynski(jet, 2) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("i", [1, 2])
def test_invariant_ignores_mobius_tail(i, rng):
    jet = random_canonical(rng, 4, 10)
    assert wilczynski(jet, i, phi2=0.3) == pytest.approx(wilczynski(jet, i), rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("i", [1, 2])
def test_invariant_weight(i, rng):
    jet = random_canonical(rng, 4, 10)
    c = 1.7
    scaled = reparameterize(jet, ReparamJet.affine(c))
    assert wilczynski(scaled, i) == pytest.approx(c ** (i + 2) * wilczynski(jet, i), rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("i", [1, 2])
def test_general_formula_agrees_in_space(i, rng):
    jet = random_canonical(rng, 4, 10)
    assert wilczynski_general(jet, i) == pytest.approx(wilczynski(jet, i), rel=1e-10, abs=1e-12)


def test_invariant_needs_order():
    with pytest.raises(JetOrderError):
        wilczynski(moment_curve(4, 6), 2)
    with pytest.raises(ValueError):
        wilczynski(moment_curve(3, 8), 2)


def test_self_adjoint_curves(rng):
    for _ in range(20):
        jet = random_canonical(rng, 4, 10, symplectic=True)
        W2 = wilczynski(jet, 2)
        assert wilczynski(jet, 1) == pytest.approx(0.0, abs=1e-9)
        assert w1_derivative(reduce_by_point(jet)) == pytest.approx(W2 / 5.0, rel=1e-7, abs=1e-9)


# ---------------------------
# Reduction and osculating quadrics
# ---------------------------

def test_reduction_of_the_twisted_cubic():
    reduced = reduce_by_point(moment_curve(4, 7))
    assert reduced.k == 3 and reduced.order == 6
    expected = np.zeros((7, 3))
    expected[0, 0], expected[1, 1], expected[2, 2] = 1.0, 0.5, 1.0 / 3.0
    np.testing.assert_allclose(reduced.derivs, expected, atol=1e-14)


def test_reduction_does_not_depend_on_the_complement(rng):
    jet = random_canonical(rng, 4, 9)
    a = reduce_by_point(jet)
    b = reduce_by_point(jet, rng.normal(size=(4, 3)))
    _, da = canonicalize(a)
    _, db = canonicalize(b)
    for i in (0, 1):
        assert db.value(i) == pytest.approx(da.value(i), rel=1e-8, abs=1e-10)


def _jet_with_velocity(v: np.ndarray) -> CurveJet:
    d = np.zeros((4, 3))
    d[0, 0], d[2, 1], d[3, 2] = 1.0, 1.0, 1.0
    d[1] = v
    return CurveJet(d)


@pytest.mark.parametrize("drift", [0.0, 1e-13])
def test_reduction_rejects_a_velocity_in_the_line(drift):
    jet = _jet_with_velocity(np.array([2.0, drift, 0.0]))
    with pytest.raises(RegularityError, match="lies in"):
        reduce_by_point(jet, np.eye(3)[:, 1:])


def test_reduction_accepts_a_small_transverse_velocity():
    reduced = reduce_by_point(_jet_with_velocity(np.array([2.0, 1e-6, 0.0])), np.eye(3)[:, 1:])
    np.testing.assert_allclose(reduced.derivs[0], [1e-6, 0.0], atol=1e-18)


def test_normalized_quadric_of_a_parabola():
    alpha = np.zeros((5, 2))
    alpha[1, 0], alpha[2, 1] = 0.5, 1.0 / 3.0
    M = osculating_quadric_normalized(alpha)
    np.testing.assert_allclose(M, [[0, 0, -0.5], [0, 2 / 3, 0], [-0.5, 0, 0]])
    alpha[1, 0] = 1.0
    with pytest.raises(NormalizationError):
        osculating_quadric_normalized(alpha)


def test_osculating_quadric_has_fourth_order_contact(rng):
    for _ in range(20):
        d = rng.normal(size=(7, 3))
        d[:3] += 2 * np.eye(3)
        jet = CurveJet(d)
        Q = osculating_quadric(jet)
        defect = contact_defect(Q, jet)
        scale = np.linalg.norm(Q) * np.max(np.abs(jet.coeffs)) ** 2
        np.testing.assert_allclose(defect[:5], 0.0, atol=1e-9 * scale)


@pytest.mark.parametrize("B2", [0.0, 10.0 / 7.0, -2.5])
def test_cone_from_B(B2):
    M = osculating_cone_from_B(B2)
    assert M[2, 2] == pytest.approx(-0.7 * B2)
    assert M[1, 1] == pytest.approx(2.0 / 3.0)


def test_reduced_quadric_matches_cone_from_B(rng):
    for _ in range(20):
        jet = random_canonical(rng, 4, 8)
        _, dec = canonicalize(jet)
        Q = osculating_quadric(reduce_by_point(jet))
        assert conformal_residual(Q, osculating_cone_from_B(dec.value(2))) <= 1e-9
