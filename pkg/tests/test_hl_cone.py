import numpy as np
import pytest

from calib6.hl_cone import (
    RAY_TABLE, HLLink, RootError, base_plane, coefficient_matrix, count_family_rays, count_rays, det_A,
    det_roots, det_stacked, fibonacci_sphere, has_antipodal_pair, min_nonzero_root, realizing_collection,
)
from calib6.unitary_planes import family_plane, intersection_dimension, plane_from_complex, r_diag, real_to_complex

DET_QUARTER = (3024 * np.sqrt(2) - 4752) / 15552


@pytest.fixture(scope="module")
def table_reports():
    return {tt: count_family_rays(*tt, seeds=20_000) for tt, _ in RAY_TABLE}


def test_ray_table_counts(table_reports):
    assert [table_reports[tt].count for tt, _ in RAY_TABLE] == [1, 1, 1, 1, 2, 2, 4]
    for rep in table_reports.values():
        assert rep.agrees_with_table
        assert rep.stats["resolution_stable"]


def test_found_rays_lie_on_link_and_plane(table_reports):
    for (tau, theta), rep in table_reports.items():
        plane = plane_from_complex(family_plane(tau, theta))
        for r, res in zip(rep.rays, rep.residuals):
            assert res <= 1e-10
            assert np.linalg.norm(r - plane.projector() @ r) <= 1e-10
            z = real_to_complex(r) / np.linalg.norm(r)
            # unit link point: equal moduli, product on the positive real axis
            assert np.allclose(np.abs(z) ** 2, 1 / 3, atol=1e-10)
            prod = np.prod(z)
            assert prod.real > 0 and abs(prod.imag) < 1e-10


def test_no_antipodal_rays(table_reports):
    for rep in table_reports.values():
        assert not has_antipodal_pair(rep.rays)


def test_tetrahedron(table_reports):
    rep = table_reports[(0.0, np.pi / 2)]
    cos = rep.cosines()[np.triu_indices(4, 1)]
    assert np.allclose(cos, -1 / 3, atol=1e-8)


def test_cone_tangent_plane_meets_in_one_ray():
    # the plane pi0 is tangent to the cone along (1,1,1)/sqrt(3)
    rep = count_rays(plane_from_complex(family_plane(0, 0)), seeds=5000, check_resolution=False)
    assert rep.count == 1
    # tangential contact is a double root: position is only determined to about sqrt(eps)
    assert np.allclose(rep.rays[0], np.r_[np.ones(3) / np.sqrt(3), np.zeros(3)], atol=1e-7)


def test_rotation_invariance():
    rng = np.random.default_rng(5)
    base_m = family_plane(np.pi / 4, np.pi / 4)
    base = count_rays(plane_from_complex(base_m), seeds=5000, check_resolution=False).count
    for a, b in rng.uniform(-np.pi, np.pi, (20, 2)):
        p = plane_from_complex(base_m @ r_diag(a, b).entries)
        assert count_rays(p, seeds=5000, check_resolution=False).count == base


def test_link_residual_components():
    link = HLLink(plane_from_complex(np.eye(3)))
    c = np.ones(3) / np.sqrt(3)
    assert np.allclose(link.residual(c[None]), 0, atol=1e-15)
    jac = link.jacobian(c[None])[0]
    h = 1e-7
    fd = np.stack([(link.residual((c + h * e)[None])[0] - link.residual((c - h * e)[None])[0]) / (2 * h)
                   for e in np.eye(3)], axis=1)
    assert np.allclose(jac, fd, atol=1e-7)


def test_fibonacci_sphere_unit():
    pts = fibonacci_sphere(1000)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1)


def test_det_a_reference_value():
    assert det_A(base_plane(), np.pi / 4) == pytest.approx(DET_QUARTER, abs=1e-12)
    assert DET_QUARTER == pytest.approx(-3.0569e-2, abs=1e-6)


def test_det_a_vanishes_at_zero(rng):
    for _ in range(5):
        tau, theta = rng.uniform(-np.pi, np.pi, 2)
        assert abs(det_A(plane_from_complex(family_plane(tau, theta)), 0.0)) < 1e-14


def test_det_a_two_assemblies_agree(rng):
    p = base_plane()
    for t in rng.uniform(-np.pi, np.pi, 20):
        assert abs(det_A(p, t)) == pytest.approx(abs(det_stacked(p, t)), abs=1e-12)
        assert det_A(p, t) == pytest.approx(np.linalg.det(coefficient_matrix(p, t)), abs=1e-12)


def test_det_roots_match_dense_scan():
    p = base_plane()
    roots = det_roots(p)
    ts = np.arange(-np.pi, np.pi, 1e-4)
    v = det_A(p, ts)
    changes = ts[:-1][np.sign(v[:-1]) * np.sign(v[1:]) < 0]
    # every dense sign change lies next to a reported root
    for c in changes:
        assert min(abs(c - r) for r in roots) < 2e-3
    for r in roots:
        assert abs(det_A(p, r)) <= 1e-9


def test_m0_two_resolutions_and_half_step():
    p = base_plane()
    m0 = min_nonzero_root(p)
    assert 0 < m0 <= np.pi
    assert min_nonzero_root(p, step=5e-4) == pytest.approx(m0, abs=1e-10)
    q = plane_from_complex(family_plane(0, np.pi / 4).entries @ r_diag(m0 / 2, m0 / 2).entries)
    assert intersection_dimension(p, q) == 0


def test_identically_zero_determinant_is_rejected():
    # the complex x1-line is invariant under R(t, t), so the plane meets all its rotations
    p = plane_from_complex(np.array([[1, 0, 0], [1j, 0, 0], [0, 0, 1]]))
    with pytest.raises(RootError):
        det_roots(p)


@pytest.mark.parametrize("n", [1, 4, 7, 10])
def test_realizing_collection(n):
    col = realizing_collection(n)
    assert len(col.planes) == n
    assert all(d == 0 for d in col.intersection_dims.values())
    assert len(col.intersection_dims) == n * (n - 1) // 2
    assert col.ray_counts == [1] * n
    if n == 1:
        assert col.planes[0].same_span(plane_from_complex(family_plane(0, np.pi / 4)))


def test_realizing_collection_rejects_zero():
    with pytest.raises(ValueError):
        realizing_collection(0)
