import time
import warnings

import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from calib6.form_orbit import (
    FactorizationError, exact_rank, factorize_batch, factorize_near_phi, image_of, kappa, kappa_mismatches,
    kappa_table, kernel_contains_sl3c, orbit_differential, sl3c_basis, smallest_singular_value,
    stabilizer_dimension,
)
from calib6.forms6 import DIM, KForm, basis, pullback, realify, special_lagrangian_form

PHI = special_lagrangian_form()


def _col(a, b):
    return DIM * a + b


def test_row_123():
    d = orbit_differential(special_lagrangian_form(exact=True))
    row = d.matrix[basis(3).index((0, 1, 2))]
    assert set(np.nonzero(row)[0]) == {_col(0, 0), _col(1, 1), _col(2, 2)}
    assert all(row[c] == 1 for c in (_col(0, 0), _col(1, 1), _col(2, 2)))
    assert d.equations()[0] == "123: h1,1 + h2,2 + h3,3"


def test_row_12I():
    d = orbit_differential(special_lagrangian_form(exact=True))
    row = d.matrix[basis(3).index((0, 1, 3))]
    assert set(np.nonzero(row)[0]) == {_col(5, 0), _col(2, 3)}
    assert d.equations()[basis(3).index((0, 1, 3))] == "12I: h3,I + hIII,1"


def test_row_labels_are_unambiguous():
    d = orbit_differential(special_lagrangian_form(exact=True))
    labels = [d.row_label(r) for r in range(20)]
    assert len(set(labels)) == 20
    assert labels[basis(3).index((0, 3, 4))] == "1I(II)"
    assert labels[basis(3).index((3, 4, 5))] == "I(II)(III)"


def _row_from_oracle(idx):
    """Row of the differential from phi evaluated on basis vectors, via the complex determinant."""
    from conftest import phi_oracle

    e = np.eye(DIM)
    out = np.zeros(DIM * DIM)
    for a in range(DIM):
        for b in range(DIM):
            vecs = [e[i] for i in idx]
            for slot, i in enumerate(idx):
                if i == b:
                    moved = list(vecs)
                    moved[slot] = e[a]
                    out[_col(a, b)] += phi_oracle(*moved)
    return out


def test_all_rows_against_determinant_oracle():
    d = orbit_differential(special_lagrangian_form(exact=True)).matrix
    for r, idx in enumerate(basis(3)):
        assert np.array_equal(d[r].astype(float), np.rint(_row_from_oracle(idx)))


def test_rows_with_corrected_signs():
    # hand evaluation: phi(e1, e3, e2) = -1 and phi(e3, eII, eI) = +1
    eq = orbit_differential(special_lagrangian_form(exact=True)).equations()
    assert eq[basis(3).index((0, 2, 3))] == "13I: - h2,I - hII,1"
    assert eq[basis(3).index((2, 4, 5))] == "3II(III): - h1,3 + hI,III"


def test_entries_are_signs():
    d = orbit_differential(special_lagrangian_form(exact=True)).matrix
    assert d.shape == (20, 36) and set(np.unique(d)) <= {-1, 0, 1}


def test_zero_form():
    z = KForm.zero(3, exact=True)
    assert not np.any(orbit_differential(z).matrix)
    assert stabilizer_dimension(z) == (0, 36)


def test_stabilizer_rank_is_fast():
    t = time.perf_counter()
    assert stabilizer_dimension(special_lagrangian_form(exact=True)) == (20, 16)
    assert time.perf_counter() - t < 1.0


def test_rank_matches_sympy_oracle():
    d = orbit_differential(special_lagrangian_form(exact=True)).matrix
    assert sympy.Matrix(d.tolist()).rank() == exact_rank(d) == 20
    vol = KForm.basic(0, 1, 2, exact=True)
    dv = orbit_differential(vol).matrix
    svd_rank = int(np.sum(np.linalg.svd(dv.astype(float), compute_uv=False) > 1e-9))
    assert exact_rank(dv) == svd_rank == sympy.Matrix(dv.tolist()).rank()


@given(st.integers(0, 2**32 - 1))
def test_exact_rank_matches_sympy_on_random_integer_matrices(seed):
    rng = np.random.default_rng(seed)
    m = rng.integers(-3, 4, size=(rng.integers(1, 8), rng.integers(1, 8)))
    m[rng.random(m.shape) < 0.4] = 0
    assert exact_rank(m) == sympy.Matrix(m.tolist()).rank()


def test_sl3c_in_kernel():
    assert len(sl3c_basis()) == 16
    assert kernel_contains_sl3c(special_lagrangian_form(exact=True))
    assert not np.any(image_of(special_lagrangian_form(exact=True), np.diag([1, -1, 0])))
    assert np.any(image_of(special_lagrangian_form(exact=True), 1j * np.eye(3)))


def test_sl3c_kernel_by_derivative_of_pullback():
    # d/dt exp(t m)* phi at t = 0 vanishes for traceless complex m (central differences)
    for m in sl3c_basis():
        h = 1e-5
        plus = pullback(expm(h * realify(m)), PHI)
        minus = pullback(expm(-h * realify(m)), PHI)
        assert ((plus - minus) * (1 / (2 * h))).max_abs() < 1e-8


def test_kernel_is_exactly_sl3c():
    d = orbit_differential(special_lagrangian_form(exact=True)).matrix
    k = np.array([realify(m).ravel() for m in sl3c_basis()])
    assert exact_rank(np.rint(k).astype(int)) == 16
    assert DIM * DIM - exact_rank(d) == 16


def test_submersion_conditioning():
    assert smallest_singular_value(PHI) > 0.1


def test_kappa_values():
    assert kappa(3, 6) == 16
    assert kappa(4, 8) == -6
    for n in range(2, 13):
        assert kappa(0, n) == n * n - 1 > 0


def test_kappa_mismatches_only_in_dimension_one():
    bad = kappa_mismatches(12)
    assert {(e.n, e.k) for e in bad} == {(1, 0), (1, 1)}
    assert all(e.agrees for e in kappa_table(12) if e.n >= 2)
    with pytest.raises(ValueError):
        kappa_table(0)


def test_factorize_identity():
    f = factorize_near_phi(PHI)
    assert f.iterations == 0 and np.array_equal(f.h.matrix, np.eye(DIM))


def test_factorize_known_pullback(rng):
    for _ in range(10):
        g = np.eye(DIM) + 0.01 * rng.uniform(-1, 1, (DIM, DIM))
        tau = pullback(g, PHI)
        f = factorize_near_phi(tau)
        assert (pullback(f.h.matrix, PHI) - tau).max_abs() <= 1e-12


def test_factorize_off_orbit_direction():
    tau = PHI + 0.02 * KForm.basic(3, 4, 5)
    f = factorize_near_phi(tau)
    assert f.residual <= 1e-12


def test_factorize_warns_outside_basin():
    tau = PHI + 0.06 * KForm.basic(3, 4, 5)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        try:
            factorize_near_phi(tau)
        except FactorizationError:
            pass
    assert any("basin" in str(x.message) for x in w)


def test_factorize_rejects_wrong_degree():
    with pytest.raises(ValueError):
        factorize_near_phi(KForm.basic(0, 1))


def test_factorization_is_lipschitz_along_a_ray(rng):
    delta = KForm(3, rng.uniform(-1, 1, 20))
    s = np.linspace(0, 0.03, 16)
    hs = [factorize_near_phi(PHI + si * delta).h.matrix for si in s]
    slopes = [np.abs(hs[i + 1] - hs[i]).max() / (s[i + 1] - s[i]) for i in range(len(s) - 1)]
    assert np.isfinite(max(slopes)) and max(slopes) < 10 * (min(slopes) + 1)


def test_batch_agrees_with_single(rng):
    taus = PHI.coeffs + rng.uniform(-0.03, 0.03, (20, 20))
    h, res, _ = factorize_batch(taus)
    assert res.max() <= 1e-12
    for i in range(3):
        single = factorize_near_phi(KForm(3, taus[i]))
        assert (pullback(single.h.matrix, PHI) - KForm(3, taus[i])).max_abs() <= 1e-12
        assert (pullback(h[i], PHI) - KForm(3, taus[i])).max_abs() <= 1e-12
