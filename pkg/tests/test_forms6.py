from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from calib6.forms6 import (
    DIM, KForm, KVector, LinearMap6, alternating_tensor, basis, complex_structure_pullback, compound,
    compound_batch, evaluate, exterior_derivative_coeffs, imaginary_sl_form, interior, interior_coeffs,
    pullback, pullback_coeffs, random_form, realify, special_lagrangian_form, wedge, wedge_coeffs,
)
from conftest import phi_oracle, random_su3

PHI = special_lagrangian_form()
E = np.eye(DIM)
seeds = st.integers(0, 2**32 - 1)


def test_phi_coefficients():
    phi = special_lagrangian_form(exact=True)
    assert phi["x1", "x2", "x3"] == 1
    assert phi["y1", "y2", "y3"] == 0
    nz = phi.terms()
    assert len(nz) == 4 and all(abs(c) == 1 for c in nz.values())
    assert phi["y1", "y2", "x3"] == -1 and phi["x1", "y2", "y3"] == -1 and phi["y1", "x2", "y3"] == -1


def test_phi_matches_complex_determinant(rng):
    for _ in range(50):
        u, v, w = rng.standard_normal((3, DIM))
        assert PHI(u, v, w) == pytest.approx(phi_oracle(u, v, w), abs=1e-12)


def test_imaginary_part_matches_oracle(rng):
    im = imaginary_sl_form()
    for _ in range(20):
        u, v, w = rng.standard_normal((3, DIM))
        z = np.stack([u[:3] + 1j * u[3:], v[:3] + 1j * v[3:], w[:3] + 1j * w[3:]], axis=-1)
        assert im(u, v, w) == pytest.approx(np.linalg.det(z).imag, abs=1e-12)


def test_wedge_examples():
    dx1, dx2, dx3 = (KForm.basic(i, exact=True) for i in range(3))
    assert wedge(dx1, dx1) == KForm.zero(2, exact=True)
    assert wedge(dx1, dx2)[0, 1] == 1
    assert wedge(wedge(dx1, dx2), dx3) == KForm.basic(0, 1, 2, exact=True)
    with pytest.raises(ValueError):
        wedge(random_form(4, np.random.default_rng(0)), random_form(3, np.random.default_rng(1)))


def test_interior_examples():
    contracted = interior(E[2], PHI)
    expected = KForm.basic(0, 1) - KForm.basic(3, 4)
    assert contracted.allclose(expected)
    assert interior(E[5], KForm.basic(0, 1, 2)).max_abs() == 0


def test_pullback_examples():
    assert pullback(np.eye(DIM), PHI).allclose(PHI)
    assert pullback(2 * np.eye(DIM), PHI).allclose(8 * PHI)
    d = realify(np.diag([np.exp(0.7j), 1, np.exp(-0.7j)]))
    moved = pullback(d, PHI)
    # brute force over the 20 basis 3-vectors
    for idx in basis(3):
        assert moved.coeffs[basis(3).index(idx)] == pytest.approx(PHI(*(d @ E[list(idx)].T).T), abs=1e-14)
    assert moved.allclose(PHI)


def test_j_pullback():
    jphi = complex_structure_pullback(special_lagrangian_form(exact=True))
    four = jphi
    for _ in range(3):
        four = complex_structure_pullback(four)
    assert four == special_lagrangian_form(exact=True)
    assert jphi(E[0], E[1], E[2]) == 0
    th = 0.0
    assert (np.cos(th) * PHI - np.sin(th) * jphi.to_float()).allclose(PHI)


def test_evaluate_examples():
    assert evaluate(PHI, KVector.from_vectors(E[:3])) == pytest.approx(1)
    assert evaluate(PHI, KVector.from_vectors(E[3:])) == 0
    assert evaluate(KForm.basic(0, 1, 2), KVector.from_vectors(E[:3])) == 1
    with pytest.raises(ValueError):
        evaluate(PHI, KVector.from_vectors(E[:2]))


def test_exact_backend_uses_fractions():
    phi = special_lagrangian_form(exact=True)
    h = LinearMap6(np.eye(DIM, dtype=int) * 2)
    out = pullback(h, phi)
    assert out.exact and out["x1", "x2", "x3"] == Fraction(8)


@given(seeds, st.integers(0, 3), st.integers(0, 3))
def test_graded_anticommutativity(seed, k, l):
    rng = np.random.default_rng(seed)
    a, b = random_form(k, rng), random_form(l, rng)
    assert wedge(a, b).allclose((-1) ** (k * l) * wedge(b, a), atol=1e-12)


@given(seeds)
def test_graded_anticommutativity_exact(seed):
    rng = np.random.default_rng(seed)
    a = KForm(2, np.array([Fraction(int(x)) for x in rng.integers(-5, 5, 15)], dtype=object))
    b = KForm(3, np.array([Fraction(int(x)) for x in rng.integers(-5, 5, 20)], dtype=object))
    assert wedge(a, b) == wedge(b, a)


@given(seeds)
def test_wedge_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = random_form(1, rng), random_form(2, rng), random_form(2, rng)
    assert wedge(wedge(a, b), c).allclose(wedge(a, wedge(b, c)), atol=1e-11)


@given(seeds)
def test_pullback_contravariant(seed):
    rng = np.random.default_rng(seed)
    g, h = rng.standard_normal((2, DIM, DIM))
    a = random_form(3, rng)
    lhs = pullback(g @ h, a)
    rhs = pullback(h, pullback(g, a))
    assert (lhs - rhs).max_abs() <= 1e-10 * max(1.0, lhs.max_abs())


@given(seeds, st.integers(1, 3), st.integers(1, 2))
def test_interior_antiderivation(seed, k, l):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(DIM)
    a, b = random_form(k, rng), random_form(l, rng)
    lhs = interior(v, wedge(a, b))
    rhs = wedge(interior(v, a), b) + (-1) ** k * wedge(a, interior(v, b))
    assert lhs.allclose(rhs, atol=1e-11)


@given(seeds)
def test_interior_twice_vanishes(seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(DIM)
    assert interior(v, interior(v, random_form(3, rng))).max_abs() <= 1e-12


def test_su3_invariance(rng):
    for _ in range(100):
        u = random_su3(rng)
        assert pullback(realify(u), PHI).allclose(PHI, atol=1e-10)


def test_u1_phase_rotates_phi():
    # det e^{it} = e^{3it}: the pullback is cos(3t) phi - sin(3t) Im
    t = 0.2
    moved = pullback(realify(np.exp(1j * t) * np.eye(3)), PHI)
    assert moved.allclose(np.cos(3 * t) * PHI - np.sin(3 * t) * imaginary_sl_form(), atol=1e-14)


def test_realify_is_homomorphism(rng):
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    assert np.allclose(realify(a @ b), realify(a) @ realify(b))
    z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    w = a @ z
    assert np.allclose(realify(a) @ np.concatenate([z.real, z.imag]), np.concatenate([w.real, w.imag]))


def test_batched_helpers_match_single(rng):
    hs = rng.standard_normal((4, DIM, DIM))
    a = rng.standard_normal((4, 20))
    for k in (2, 3):
        assert np.allclose(compound_batch(hs, k), np.array([compound(h, k) for h in hs]))
    pb = pullback_coeffs(hs, a, 3)
    for i in range(4):
        assert np.allclose(pb[i], pullback(hs[i], KForm(3, a[i])).coeffs)
    b1, b2 = rng.standard_normal((4, 6)), rng.standard_normal((4, 15))
    w = wedge_coeffs(b1, b2, 1, 2)
    v = rng.standard_normal((4, 6))
    ic = interior_coeffs(v, a, 3)
    for i in range(4):
        assert np.allclose(w[i], wedge(KForm(1, b1[i]), KForm(2, b2[i])).coeffs)
        assert np.allclose(ic[i], interior(v[i], KForm(3, a[i])).coeffs)


def test_alternating_tensor_evaluates(rng):
    a = random_form(3, rng)
    t = alternating_tensor(a.coeffs, 3)
    u, v, w = rng.standard_normal((3, DIM))
    assert np.einsum("ijk,i,j,k->", t, u, v, w) == pytest.approx(a(u, v, w), abs=1e-12)


def test_exterior_derivative_of_linear_field_is_constant_wedge(rng):
    # a(x) = <c, x> b has da = c ^ b
    c, b = rng.standard_normal(DIM), rng.standard_normal(15)
    grad = np.einsum("i,j->ij", c, b)[None]
    d = exterior_derivative_coeffs(grad, 2)[0]
    assert np.allclose(d, wedge(KForm(1, c), KForm(2, b)).coeffs)


def test_plucker_defect():
    rng = np.random.default_rng(3)
    assert KVector.from_vectors(rng.standard_normal((3, DIM))).plucker_defect() < 1e-12
    xi = KVector.from_vectors(E[[0, 1, 2]]) + KVector.from_vectors(E[[3, 4, 5]])
    assert xi.plucker_defect() > 0.5


def test_su3_exponential_fixture_is_special_unitary(rng):
    u = random_su3(rng)
    assert np.allclose(u.conj().T @ u, np.eye(3)) and abs(np.linalg.det(u) - 1) < 1e-12
    assert np.allclose(expm(np.zeros((3, 3))), np.eye(3))
