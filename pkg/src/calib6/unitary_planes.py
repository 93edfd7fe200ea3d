"""Oriented 3-planes in C^3 = R^6 given as real row spans of complex matrices.

Conventions used throughout the package:

* a complex 3x3 matrix M describes the plane {c . M : c in R^3}; its real
  rows are (Re M_i, Im M_i) in (x1, x2, x3, y1, y2, y3) order, and the
  orientation is row1 ^ row2 ^ row3;
* unitary matrices act on points as row vectors, z -> z . S, so a plane
  with matrix M is carried to the plane with matrix M . S.  The
  corresponding real 6x6 map on column vectors is ``realify(S.T)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .forms6 import KVector, evaluate, realify, special_lagrangian_form

PLANE_TOL = 1e-10
RANK_RTOL = 1e-9

_PHI = special_lagrangian_form()


@dataclass(frozen=True, eq=False)
class ComplexMatrix3:
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (3, 3):
            raise ValueError(f"expected 3x3 matrix, got {m.shape}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    def __matmul__(self, other):
        o = other.entries if isinstance(other, ComplexMatrix3) else np.asarray(other)
        return ComplexMatrix3(self.entries @ o)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def is_unitary(self, tol: float = 1e-12) -> bool:
        m = self.entries
        return bool(np.max(np.abs(m.conj().T @ m - np.eye(3))) <= tol)

    def is_special_unitary(self, tol: float = 1e-12) -> bool:
        return self.is_unitary(tol) and abs(np.linalg.det(self.entries) - 1) <= tol

    def realified(self) -> np.ndarray:
        """Real 6x6 matrix of the column action z -> M z."""
        return realify(self.entries)

    def row_action(self) -> np.ndarray:
        """Real 6x6 matrix (on columns) of the row action z -> z . M."""
        return realify(self.entries.T)


def _entries(m) -> np.ndarray:
    return m.entries if isinstance(m, ComplexMatrix3) else np.asarray(m, dtype=complex)


def complex_to_real(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return np.concatenate([z.real, z.imag], axis=-1)


def real_to_complex(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v[..., :3] + 1j * v[..., 3:]


@dataclass(frozen=True, eq=False)
class OrientedPlane3:
    """Real 3-plane in R^6 spanned by ``rows``, oriented by row1^row2^row3."""

    rows: np.ndarray
    origin: Optional[np.ndarray] = None

    def __post_init__(self):
        r = np.array(self.rows, dtype=float)
        if r.shape != (3, 6):
            raise ValueError(f"plane needs 3 rows in R^6, got shape {r.shape}")
        norms = np.linalg.norm(r, axis=1)
        if np.any(norms == 0):
            raise ValueError("plane rows must be nonzero")
        unit = r / norms[:, None]
        if np.linalg.det(unit @ unit.T) <= 1e-12:
            raise ValueError("plane rows are linearly dependent")
        r.setflags(write=False)
        object.__setattr__(self, "rows", r)

    def frame(self) -> np.ndarray:
        """Orthonormal rows with the same span and orientation (Gram-Schmidt)."""
        q, r = np.linalg.qr(self.rows.T)
        q = q * np.sign(np.diag(r))
        return q.T

    def projector(self) -> np.ndarray:
        f = self.frame()
        return f.T @ f

    def kvector(self) -> KVector:
        return KVector.from_vectors(self.frame())

    def contains(self, v, tol: float = PLANE_TOL) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.linalg.norm(v - self.projector() @ v) <= tol * max(1.0, np.linalg.norm(v)))

    def same_span(self, other: "OrientedPlane3", tol: float = PLANE_TOL) -> bool:
        return bool(np.max(np.abs(self.projector() - other.projector())) <= tol)

    def orientation_against(self, other: "OrientedPlane3") -> int:
        """+1/-1 if spans agree and orientations agree/disagree; 0 otherwise."""
        if not self.same_span(other, 1e-8):
            return 0
        d = np.linalg.det(self.frame() @ other.frame().T)
        return 1 if d > 0 else -1

    def transformed(self, real_map: np.ndarray) -> "OrientedPlane3":
        """Image under a real 6x6 map acting on column vectors."""
        return OrientedPlane3(self.rows @ np.asarray(real_map).T)

    def act(self, s) -> "OrientedPlane3":
        """Image under the row action z -> z . S of a complex 3x3 matrix."""
        return self.transformed(realify(_entries(s).T))

    def complex_frame(self) -> np.ndarray:
        return real_to_complex(self.frame())

    def __repr__(self):
        return f"OrientedPlane3(rows={np.array2string(self.rows, precision=4)})"


def plane_from_complex(m) -> OrientedPlane3:
    m = _entries(m)
    return OrientedPlane3(complex_to_real(m))


def coordinate_plane(*labels: str) -> OrientedPlane3:
    """Oriented coordinate plane, e.g. coordinate_plane('y1', 'y2', 'x3')."""
    from .forms6 import LABELS

    rows = np.zeros((3, 6))
    for i, name in enumerate(labels):
        sign = -1.0 if name.startswith("-") else 1.0
        rows[i, LABELS.index(name.lstrip("-"))] = sign
    return OrientedPlane3(rows)


def pi0() -> ComplexMatrix3:
    s2, s3, s6 = np.sqrt(2), np.sqrt(3), np.sqrt(6)
    return ComplexMatrix3(np.array([
        [1 / s3, 1 / s3, 1 / s3],
        [1j / s2, 0, -1j / s2],
        [1j / s6, -1j * np.sqrt(2 / 3), 1j / s6],
    ]))


def rho(tau: float, theta: float) -> ComplexMatrix3:
    e = np.exp(1j * theta)
    c, s = np.cos(tau), np.sin(tau)
    return ComplexMatrix3(np.array([
        [1, 0, 0],
        [0, e * c, e * s],
        [0, -s / e, c / e],
    ]))


def r_diag(a: float, b: float) -> ComplexMatrix3:
    return ComplexMatrix3(np.diag([np.exp(1j * a), np.exp(1j * b), np.exp(-1j * (a + b))]))


def family_plane(tau: float, theta: float) -> ComplexMatrix3:
    """Matrix rho(tau, theta) . pi0 whose row span is the plane P(tau, theta)."""
    return rho(tau, theta) @ pi0()


def slope_plane(r: float) -> OrientedPlane3:
    """The special Lagrangian plane {(x1, x2, x3, r x1, -r x2, 0)}."""
    return OrientedPlane3(np.array([
        [1, 0, 0, r, 0, 0],
        [0, 1, 0, 0, -r, 0],
        [0, 0, 1, 0, 0, 0],
    ], dtype=float))


def symplectic_defect(p: OrientedPlane3) -> float:
    f = p.frame()
    x, y = f[:, :3], f[:, 3:]
    omega = x @ y.T - y @ x.T
    return float(np.max(np.abs(omega)))


def is_lagrangian(p: OrientedPlane3, tol: float = PLANE_TOL) -> bool:
    return symplectic_defect(p) <= tol


def phi_value(p: OrientedPlane3) -> float:
    return float(evaluate(_PHI, p.kvector()))


def is_special_lagrangian(p: OrientedPlane3, tol: float = PLANE_TOL) -> bool:
    return is_lagrangian(p, tol) and abs(phi_value(p) - 1.0) <= tol


def numerical_rank(m: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def intersection_dimension(p: OrientedPlane3, q: OrientedPlane3) -> int:
    stacked = np.vstack([p.frame(), q.frame()])
    return 6 - numerical_rank(stacked)


# --- alignment ----------------------------------------------------------

# target for the constraint plane: y1, -y2, x3 (phi-positive orientation)
_TARGET = np.diag([1j, -1j, 1.0 + 0j])


class Alignment(NamedTuple):
    S: ComplexMatrix3
    rho: float


def so2_rotation(lam: float) -> np.ndarray:
    """Real rotation of the (z1, z2) coordinates, acting on row vectors."""
    c, s = np.cos(lam), np.sin(lam)
    return np.array([[c, s, 0], [-s, c, 0], [0, 0, 1]], dtype=complex)


def _su3_frame(p: OrientedPlane3, last: np.ndarray) -> np.ndarray:
    """Unitary frame matrix of a special Lagrangian plane with third row ``last``."""
    base = p.frame()
    v3 = last / np.linalg.norm(last)
    rest = []
    for b in base:
        w = b - v3 * (v3 @ b) - sum(r * (r @ b) for r in rest)
        if np.linalg.norm(w) > 1e-6:
            rest.append(w / np.linalg.norm(w))
        if len(rest) == 2:
            break
    f = real_to_complex(np.array([rest[0], rest[1], v3]))
    d = np.linalg.det(f)
    if abs(abs(d) - 1) > 1e-8 or abs(d.imag) > 1e-8:
        raise ValueError(f"plane is not special Lagrangian (frame determinant {d})")
    if d.real < 0:
        f[0] = -f[0]
    return f


def complex_line_slope(p: OrientedPlane3) -> tuple[complex, float]:
    """Slope mu and residual of w2 = mu w1 for the part of p orthogonal to x3.

    With w1 = x1 + i x2 and w2 = y1 - i y2, a special Lagrangian 3-plane
    containing the x3-axis is the x3-axis plus a complex line of this form.
    """
    f = p.frame()
    e3 = np.zeros(6)
    e3[2] = 1.0
    vecs = [b - e3 * b[2] for b in f]
    w1 = np.array([v[0] + 1j * v[1] for v in vecs])
    w2 = np.array([v[3] - 1j * v[4] for v in vecs])
    denom = np.vdot(w1, w1).real
    if denom < 1e-12:
        raise ValueError("plane contains the y1y2-directions; no graphical slope")
    mu = np.vdot(w1, w2) / denom
    resid = float(np.max(np.abs(w2 - mu * w1)))
    resid = max(resid, float(np.max(np.abs([v[5] for v in vecs]))))
    return complex(mu), resid


def align_pair(c_tangent: OrientedPlane3, p: OrientedPlane3, ray) -> Alignment:
    """Find S in SU(3) normalizing a transverse pair of special Lagrangian planes.

    Under the row action z -> z . S the plane ``p`` goes to the y1y2x3-plane,
    ``ray`` to the positive x3-axis and ``c_tangent`` to the slope plane
    {(x1, x2, x3, r x1, -r x2, 0)}.  Returns S and r.
    """
    ray = np.asarray(ray, dtype=float)
    ray = ray / np.linalg.norm(ray)
    if intersection_dimension(c_tangent, p) >= 2:
        raise ValueError("planes intersect tangentially (intersection dimension >= 2)")
    if not (p.contains(ray, 1e-8) and c_tangent.contains(ray, 1e-8)):
        raise ValueError("ray does not lie in both planes")
    frame = _su3_frame(p, ray)
    u = np.linalg.inv(frame) @ _TARGET  # frame rows -> target rows
    moved = c_tangent.act(u)
    mu, resid = complex_line_slope(moved)
    if resid > 1e-8:
        raise ValueError(f"tangent plane is not a complex line in (w1, w2); residual {resid:.3e}")
    lam0 = np.angle(mu) / 2 if abs(mu) > 1e-14 else 0.0
    # mu transforms as exp(-2 i lam) mu under so2_rotation(lam)
    if abs(mu) > 1e-14:
        candidates = [(lam0 + k * np.pi / 2, abs(mu) * (-1) ** k) for k in range(4)]
    else:
        # any rotation works; take the one closest to the identity in closed form
        cos_coef = (u[0, 0] + u[1, 1]).real
        sin_coef = (u[1, 0] - u[0, 1]).real
        candidates = [(float(np.arctan2(sin_coef, cos_coef)), 0.0)]
    best = None
    for lam, r in candidates:
        s = u @ so2_rotation(lam)
        dist = np.linalg.norm(s - np.eye(3))
        if best is None or dist < best[0] - 1e-12:
            best = (dist, s, r)
    _, s, r = best
    return Alignment(ComplexMatrix3(s), float(r))


def random_su3(rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """exp of a random traceless antihermitian matrix."""
    from scipy.linalg import expm

    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    x = (a - a.conj().T) / 2
    x -= np.trace(x) / 3 * np.eye(3)
    return expm(scale * x)


def random_u3(rng: np.random.Generator) -> np.ndarray:
    from scipy.stats import unitary_group

    return unitary_group.rvs(3, random_state=rng)
