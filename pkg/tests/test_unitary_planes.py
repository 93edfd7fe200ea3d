import numpy as np
import pytest

from calib6.forms6 import realify
from calib6.unitary_planes import (
    ComplexMatrix3, OrientedPlane3, align_pair, complex_line_slope, coordinate_plane, family_plane,
    intersection_dimension, is_lagrangian, is_special_lagrangian, phi_value, pi0, plane_from_complex,
    r_diag, random_u3, rho, slope_plane,
)
from conftest import random_su3

E3 = np.array([0.0, 0, 1, 0, 0, 0])
Y1Y2X3 = coordinate_plane("y1", "y2", "x3")


def test_plane_from_complex_examples():
    assert plane_from_complex(np.eye(3)).same_span(coordinate_plane("x1", "x2", "x3"))
    assert plane_from_complex(np.eye(3)).orientation_against(coordinate_plane("x1", "x2", "x3")) == 1
    assert plane_from_complex(1j * np.eye(3)).same_span(coordinate_plane("y1", "y2", "y3"))
    rows = plane_from_complex(pi0()).rows
    s2, s3, s6 = np.sqrt(2), np.sqrt(3), np.sqrt(6)
    expected = np.array([[1 / s3, 1 / s3, 1 / s3, 0, 0, 0],
                         [0, 0, 0, 1 / s2, 0, -1 / s2],
                         [0, 0, 0, 1 / s6, -np.sqrt(2 / 3), 1 / s6]])
    assert np.allclose(rows, expected, atol=1e-15)
    with pytest.raises(ValueError):
        plane_from_complex(np.array([[1, 0, 0], [1, 0, 0], [0, 0, 1]]))


def test_pi0():
    p = pi0()
    assert abs(np.linalg.det(p.entries) - 1) < 1e-14
    assert np.allclose(p.entries[0], np.ones(3) / np.sqrt(3))
    rows = plane_from_complex(p).rows
    assert np.allclose(rows @ rows.T, np.eye(3), atol=1e-15)
    assert p.is_special_unitary()


def test_rho_and_r_diag():
    assert np.allclose(rho(0, 0).entries, np.eye(3))
    r = rho(0, np.pi / 2).entries
    assert r[1, 1] == pytest.approx(1j) and r[2, 2] == pytest.approx(-1j)
    for a, b in [(0.3, -1.1), (2.0, 0.5)]:
        assert abs(np.linalg.det(r_diag(a, b).entries) - 1) < 1e-15


def test_lagrangian_predicates(rng):
    for _ in range(10):
        assert is_lagrangian(plane_from_complex(random_u3(rng)))
    assert is_special_lagrangian(plane_from_complex(pi0()))
    assert not is_lagrangian(coordinate_plane("x1", "y1", "x2"))
    for r in (-2, -1, 0, 0.5, 3):
        assert is_special_lagrangian(slope_plane(r))


def test_left_su3_preserves_special_lagrangian(rng):
    for _ in range(20):
        u = random_su3(rng)
        assert is_special_lagrangian(plane_from_complex(u @ pi0().entries))


def test_intersection_dimension_examples():
    p = plane_from_complex(family_plane(0, np.pi / 4))
    assert intersection_dimension(p, p) == 3
    assert intersection_dimension(plane_from_complex(np.eye(3)), plane_from_complex(1j * np.eye(3))) == 0
    q = plane_from_complex(family_plane(0, np.pi / 4).entries @ r_diag(np.pi / 4, np.pi / 4).entries)
    assert intersection_dimension(p, q) == 0


def test_intersection_dimension_symmetric_and_invariant(rng):
    for _ in range(100):
        a = plane_from_complex(random_u3(rng))
        # planes sharing a line, or generic
        b = plane_from_complex(random_u3(rng)) if rng.random() < 0.5 else a.act(r_diag(*rng.uniform(-3, 3, 2)))
        u = random_su3(rng)
        d = intersection_dimension(a, b)
        assert d == intersection_dimension(b, a)
        assert d == intersection_dimension(a.act(u), b.act(u))


def test_align_pair_identity_case():
    al = align_pair(slope_plane(0.5), Y1Y2X3, E3)
    assert np.allclose(al.S.entries, np.eye(3), atol=1e-12)
    assert al.rho == pytest.approx(0.5)


def test_align_pair_random_inputs(rng):
    for _ in range(100):
        r = rng.uniform(-3, 3)
        u = random_su3(rng)
        c, p = slope_plane(r).act(u), Y1Y2X3.act(u)
        ray = realify(u.T) @ E3
        al = align_pair(c, p, ray)
        s = al.S
        assert s.is_special_unitary(1e-12)
        assert p.act(s).same_span(Y1Y2X3, 1e-10)
        assert np.allclose(s.row_action() @ ray, E3, atol=1e-10)
        assert c.act(s).same_span(slope_plane(al.rho), 1e-10)
        assert abs(al.rho) == pytest.approx(abs(r), abs=1e-9)


def test_align_pair_flip_keeps_normal_form():
    flip = np.diag([-1.0, 1, -1]).astype(complex)
    assert Y1Y2X3.act(flip).same_span(Y1Y2X3)
    assert slope_plane(0.7).act(flip).same_span(slope_plane(0.7))
    assert np.allclose(realify(flip.T) @ E3, -E3)


def test_align_pair_rejects_tangential():
    with pytest.raises(ValueError):
        align_pair(Y1Y2X3, Y1Y2X3, E3)


def test_complex_line_characterization(rng):
    # every special Lagrangian plane through the x3 axis is the axis plus a line w2 = mu w1
    for _ in range(20):
        a = rng.uniform(-np.pi, np.pi)
        d = np.diag([np.exp(1j * a), np.exp(-1j * a), 1])
        p = slope_plane(rng.uniform(-2, 2)).act(d)
        _, resid = complex_line_slope(p)
        assert resid < 1e-10


def test_phi_value_orientation():
    assert phi_value(plane_from_complex(np.eye(3))) == pytest.approx(1)
    assert phi_value(OrientedPlane3(np.eye(6)[[1, 0, 2]])) == pytest.approx(-1)


def test_complex_matrix_is_immutable():
    m = ComplexMatrix3(np.eye(3))
    with pytest.raises(ValueError):
        m.entries[0, 0] = 2
