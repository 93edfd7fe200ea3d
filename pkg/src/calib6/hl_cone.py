"""Intersections of special Lagrangian planes with the Harvey-Lawson cone.

The cone is the real cone over the torus
    {|z1| = |z2| = |z3| = 1/sqrt(3),  z1 z2 z3 = 1/(3 sqrt(3))}
in the unit sphere of C^3.  A ray of the cone lies in a plane with
orthonormal complex frame F exactly when v = (a, b, c) . F, a^2+b^2+c^2 = 1,
solves the four real equations of ``link_residual``.  The unit vectors of
the plane already have norm one, so searching the 2-sphere of coefficients
is enough.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .unitary_planes import (
    OrientedPlane3,
    family_plane,
    intersection_dimension,
    is_special_lagrangian,
    plane_from_complex,
    r_diag,
    real_to_complex,
)

log = logging.getLogger(__name__)

LINK_CONST = 1.0 / (3.0 * np.sqrt(3.0))
RESIDUAL_TOL = 1e-10
DEDUPE_ANGLE = 1e-5

# the seven planes of the reference table: (tau, theta) -> number of rays
RAY_TABLE = (
    ((0.0, 0.0), 1),
    ((0.0, np.pi / 6), 1),
    ((0.0, np.pi / 4), 1),
    ((0.0, np.pi / 3), 1),
    ((np.pi / 4, np.pi / 4), 2),
    ((np.pi / 4, np.pi / 3), 2),
    ((0.0, np.pi / 2), 4),
)


class RayCountError(RuntimeError):
    pass


class HLLink:
    """Residual map of the link torus restricted to a plane."""

    def __init__(self, plane: OrientedPlane3):
        self.plane = plane
        self.frame = real_to_complex(plane.frame())  # 3x3 complex, rows orthonormal

    def points(self, coef: np.ndarray) -> np.ndarray:
        return coef @ self.frame

    def residual(self, coef: np.ndarray) -> np.ndarray:
        v = self.points(coef)
        p = v[..., 0] * v[..., 1] * v[..., 2]
        return np.stack([
            np.abs(v[..., 0]) ** 2 - 1 / 3,
            np.abs(v[..., 1]) ** 2 - 1 / 3,
            p.real - LINK_CONST,
            p.imag,
        ], axis=-1)

    def jacobian(self, coef: np.ndarray) -> np.ndarray:
        f = self.frame
        v = self.points(coef)
        v1, v2, v3 = v[..., 0:1], v[..., 1:2], v[..., 2:3]
        g1 = 2 * (np.conj(v1) * f[:, 0]).real
        g2 = 2 * (np.conj(v2) * f[:, 1]).real
        dp = f[:, 0] * (v2 * v3) + f[:, 1] * (v1 * v3) + f[:, 2] * (v1 * v2)
        return np.stack([g1, g2, dp.real, dp.imag], axis=-2)  # (..., 4, 3)


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z * z)
    ang = np.pi * (3 - np.sqrt(5)) * i
    return np.stack([r * np.cos(ang), r * np.sin(ang), z], axis=1)


def _gauss_newton(link: HLLink, x: np.ndarray, iters: int = 100, halvings: int = 30):
    """Damped Gauss-Newton on the unit sphere, vectorized over seeds."""
    x = x / np.linalg.norm(x, axis=1, keepdims=True)
    res = link.residual(x)
    cost = np.sum(res ** 2, axis=1)
    active = np.ones(len(x), dtype=bool)
    stalled = np.zeros(len(x), dtype=bool)
    for it in range(iters):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        xa, ra = x[idx], res[idx]
        jac = link.jacobian(xa)
        proj = np.eye(3) - xa[:, :, None] * xa[:, None, :]
        jt = jac @ proj
        lhs = np.swapaxes(jt, 1, 2) @ jt + xa[:, :, None] * xa[:, None, :]
        rhs = -np.einsum("nij,ni->nj", jt, ra)
        try:
            step = np.linalg.solve(lhs, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(lhs.reshape(-1, 3), rhs.reshape(-1), rcond=None)[0]
        t = np.ones(idx.size)
        base = cost[idx]
        improved = np.zeros(idx.size, dtype=bool)
        new_x = xa.copy()
        new_r = ra.copy()
        new_c = base.copy()
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(halvings + 1):
            p = np.nonzero(pending)[0]
            if p.size == 0:
                break
            trial = xa[p] + t[p, None] * step[p]
            trial /= np.linalg.norm(trial, axis=1, keepdims=True)
            tr = link.residual(trial)
            tc = np.sum(tr ** 2, axis=1)
            ok = tc < base[p]
            good = p[ok]
            new_x[good], new_r[good], new_c[good] = trial[ok], tr[ok], tc[ok]
            improved[good] = True
            pending[good] = False
            t[p[~ok]] *= 0.5
        x[idx], res[idx], cost[idx] = new_x, new_r, new_c
        done = np.max(np.abs(new_r), axis=1) <= 1e-14
        small_gain = improved & (base - new_c <= 1e-30 + 1e-12 * base)
        # roots, even degenerate ones, shrink the cost by a fixed factor per
        # step; a crawl of < 1% at a large cost is a nonzero stationary point
        crawling = (it >= 5) & (base - new_c <= 1e-2 * base) & (new_c > RESIDUAL_TOL ** 2)
        stuck = ~improved | small_gain | crawling
        stalled[idx[stuck & ~done]] = True
        active[idx[done | stuck]] = False
    maxres = np.max(np.abs(res), axis=1)
    return x, maxres, active


def _polish(link: HLLink, x: np.ndarray, steps: int = 8) -> np.ndarray:
    for _ in range(steps):
        jac = link.jacobian(x[None])[0]
        proj = np.eye(3) - np.outer(x, x)
        jt = jac @ proj
        r = link.residual(x[None])[0]
        step = np.linalg.lstsq(np.vstack([jt, x[None]]), np.concatenate([-r, [0.0]]), rcond=None)[0]
        trial = x + step
        trial /= np.linalg.norm(trial)
        if np.max(np.abs(link.residual(trial[None])[0])) < np.max(np.abs(r)):
            x = trial
        else:
            break
    return x


@dataclass
class RayCountReport:
    tau_theta: Optional[tuple[float, float]]
    count: int
    rays: list[np.ndarray]
    residuals: list[float]
    angles_deg: list[list[float]]
    stats: dict = field(default_factory=dict)
    expected: Optional[int] = None

    @property
    def agrees_with_table(self) -> Optional[bool]:
        return None if self.expected is None else self.count == self.expected

    def cosines(self) -> np.ndarray:
        r = np.array(self.rays)
        return r @ r.T if len(r) else np.zeros((0, 0))

    def to_dict(self) -> dict:
        return {
            "tau_theta": list(self.tau_theta) if self.tau_theta else None,
            "count": self.count,
            "expected": self.expected,
            "rays": [list(map(float, r)) for r in self.rays],
            "residuals": [float(x) for x in self.residuals],
            "angles_deg": self.angles_deg,
            "stats": self.stats,
        }


def _solve_once(link: HLLink, seeds: int):
    x0 = fibonacci_sphere(seeds)
    x, maxres, unfinished = _gauss_newton(link, x0)
    accepted = maxres <= RESIDUAL_TOL
    stats = {
        "seeds": int(seeds),
        "accepted": int(accepted.sum()),
        "stationary_nonzero": int((~accepted & ~unfinished).sum()),
        "unconverged": int((~accepted & unfinished).sum()),
    }
    pts = link.points(x[accepted])
    dirs = np.concatenate([pts.real, pts.imag], axis=1)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    coefs = x[accepted]
    res = maxres[accepted]
    reps = []
    if len(dirs):
        # leader cover at half the merge radius, then single linkage of the
        # leaders: tangential roots smear into chains longer than the radius
        half = np.cos(DEDUPE_ANGLE / 2)
        leaders, owner = [], np.full(len(dirs), -1)
        order = np.argsort(res, kind="stable")
        for i in order:
            if owner[i] >= 0:
                continue
            close = (owner < 0) & (dirs @ dirs[i] >= half)
            owner[close] = len(leaders)
            leaders.append(i)
        lead = dirs[leaders]
        adj = np.clip(lead @ lead.T, -1, 1) >= np.cos(DEDUPE_ANGLE)
        ncomp, labels = connected_components(csr_matrix(adj), directed=False)
        for c in range(ncomp):
            members = np.nonzero(labels[owner] == c)[0]
            reps.append(coefs[members[np.argmin(res[members])]])
    return reps, stats


def count_rays(
    plane: OrientedPlane3,
    seeds: int = 50_000,
    check_resolution: bool = True,
    tau_theta: Optional[tuple[float, float]] = None,
    expected: Optional[int] = None,
) -> RayCountReport:
    """Count the rays of the cone inside ``plane`` by multistart Gauss-Newton."""
    if not is_special_lagrangian(plane, 1e-8):
        log.warning("plane is not special Lagrangian; counting anyway")
    link = HLLink(plane)
    reps, stats = _solve_once(link, seeds)
    if stats["unconverged"] > 0.5 * seeds:
        raise RayCountError(
            f"{stats['unconverged']} of {seeds} seeds did not converge; plane may be degenerate"
        )
    rays, residuals = [], []
    for c in reps:
        c = _polish(link, c)
        v = link.points(c[None])[0]
        r = np.concatenate([v.real, v.imag])
        rays.append(r / np.linalg.norm(r))
        residuals.append(float(np.max(np.abs(link.residual(c[None])[0]))))
    order = np.lexsort(np.array(rays).T[::-1]) if rays else []
    rays = [rays[i] for i in order]
    residuals = [residuals[i] for i in order]
    cos = np.clip(np.array(rays) @ np.array(rays).T, -1, 1) if rays else np.zeros((0, 0))
    angles = np.degrees(np.arccos(cos)).tolist()
    if check_resolution:
        reps4, stats4 = _solve_once(link, 4 * seeds)
        stats["count_at_4x"] = len(reps4)
        stats["resolution_stable"] = len(reps4) == len(rays)
    return RayCountReport(tau_theta, len(rays), rays, residuals, angles, stats, expected)


def count_family_rays(tau: float, theta: float, **kw) -> RayCountReport:
    p = plane_from_complex(family_plane(tau, theta))
    expected = dict(RAY_TABLE).get((tau, theta))
    return count_rays(p, tau_theta=(tau, theta), expected=expected, **kw)


def has_antipodal_pair(rays, angle: float = DEDUPE_ANGLE) -> bool:
    r = np.array(rays)
    if len(r) < 2:
        return False
    return bool(np.any(r @ r.T <= -np.cos(angle)))


# --- det A(t) and plane families ----------------------------------------


def _complex_rows(plane) -> np.ndarray:
    if isinstance(plane, OrientedPlane3):
        return real_to_complex(plane.rows)
    return np.asarray(getattr(plane, "entries", plane), dtype=complex)


def coefficient_matrix(plane, t: float) -> np.ndarray:
    """6x6 real system of c . P = c' . P . R(t, t) in the unknowns (c, c').

    Rows are the real and imaginary parts of the three complex equations,
    interleaved; columns are c1, c2, c3, c4, c5, c6.
    """
    p = _complex_rows(plane)
    q = p @ r_diag(t, t).entries
    m = np.hstack([p.T, -q.T])
    a = np.empty((6, 6))
    a[0::2] = m.real
    a[1::2] = m.imag
    return a


def det_A(plane, t) -> np.ndarray | float:
    """det of ``coefficient_matrix``; vectorized over an array of t."""
    p = _complex_rows(plane)
    t = np.asarray(t, dtype=float)
    ph = np.exp(1j * t)[..., None] * np.array([1, 1, 0]) + np.exp(-2j * t)[..., None] * np.array([0, 0, 1])
    q = p[None] * ph.reshape(-1, 1, 3)
    top = np.broadcast_to(p.T, q.shape)
    m = np.concatenate([top, -np.swapaxes(q, 1, 2)], axis=2)
    a = np.empty(m.shape[:1] + (6, 6))
    a[:, 0::2] = m.real
    a[:, 1::2] = m.imag
    d = np.linalg.det(a)
    return float(d[0]) if t.ndim == 0 else d.reshape(t.shape)


def det_stacked(plane, t: float) -> float:
    """Same determinant assembled as the stacked real rows of P and P . R(t, t)."""
    p = _complex_rows(plane)
    q = p @ r_diag(t, t).entries
    return float(np.linalg.det(np.vstack([
        np.hstack([p.real, p.imag]),
        np.hstack([q.real, q.imag]),
    ])))


class RootError(RuntimeError):
    pass


def det_roots(plane, step: float = 1e-3, xtol: float = 1e-12) -> list[float]:
    """Zeros of det_A(plane, .) on [-pi, pi), including t = 0."""
    from scipy.optimize import brentq, minimize_scalar

    probe = det_A(plane, np.linspace(-np.pi, np.pi, 32, endpoint=False) + 0.0123)
    if np.max(np.abs(probe)) < 1e-12:
        raise RootError("det A vanishes identically")
    ts = np.arange(-np.pi, np.pi, step)
    vals = det_A(plane, ts)
    f = lambda s: det_A(plane, s)
    roots = []
    for i in range(len(ts) - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0:
            roots.append(ts[i])
        elif a * b < 0:
            roots.append(brentq(f, ts[i], ts[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps))
    # even-order zeros show up as local minima of |det| touching zero
    absv = np.abs(vals)
    scale = np.max(absv)
    for i in range(1, len(ts) - 1):
        if absv[i] <= absv[i - 1] and absv[i] <= absv[i + 1] and vals[i - 1] * vals[i + 1] > 0:
            r = minimize_scalar(lambda s: abs(f(s)), bracket=(ts[i - 1], ts[i], ts[i + 1]),
                                method="brent", tol=1e-14)
            if abs(r.fun) <= 1e-12 * scale:
                roots.append(float(r.x))
    roots = sorted(roots)
    merged: list[float] = []
    for r in roots:
        if not merged or abs(r - merged[-1]) > 10 * step:
            merged.append(float(r))
    return merged


def min_nonzero_root(plane, step: float = 1e-3) -> float:
    roots = [r for r in det_roots(plane, step) if abs(r) > 1e-6]
    if not roots:
        raise RootError("det A has no nonzero root on [-pi, pi)")
    return float(min(abs(r) for r in roots))


@dataclass
class RealizingCollection:
    degree: int
    base: OrientedPlane3
    step: float
    planes: list[OrientedPlane3]
    m0: float
    intersection_dims: dict = field(default_factory=dict)
    ray_counts: list[int] = field(default_factory=list)
    rays: list[np.ndarray] = field(default_factory=list)


class CertificationError(RuntimeError):
    pass


def base_plane() -> OrientedPlane3:
    return plane_from_complex(family_plane(0.0, np.pi / 4))


def realizing_collection(n: int, seeds: int = 2_000, m0: Optional[float] = None) -> RealizingCollection:
    """n special Lagrangian planes, each meeting the cone in one ray, pairwise transverse."""
    if n < 1:
        raise ValueError("degree must be at least 1")
    base_m = family_plane(0.0, np.pi / 4)
    base = plane_from_complex(base_m)
    if m0 is None:
        m0 = min_nonzero_root(base)
    step = m0 / (2 * n)
    planes = [plane_from_complex(base_m @ r_diag(j * step, j * step)) for j in range(n)]
    dims = {}
    for j in range(n):
        for k in range(j + 1, n):
            d = intersection_dimension(planes[j], planes[k])
            dims[(j, k)] = d
            if d != 0:
                raise CertificationError(f"planes {j} and {k} meet in dimension {d}")
    counts, rays = [], []
    for j, p in enumerate(planes):
        rep = count_rays(p, seeds=seeds, check_resolution=False)
        if rep.count != 1:
            raise CertificationError(f"plane {j} meets the cone in {rep.count} rays")
        counts.append(rep.count)
        rays.append(rep.rays[0])
    return RealizingCollection(n, base, step, planes, m0, dims, counts, rays)
