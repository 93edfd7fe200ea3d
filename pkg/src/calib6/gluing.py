"""Gluing special Lagrangian pieces along a segment and calibrating the result.

Every surface handled here is, near a segment gamma of the x3-axis, the
graph y = grad F(x) of a potential F on a box around gamma.  The pipeline

    potential F  ->  tangent frames h(x) in U(3), Lagrangian angle theta
                 ->  modified form phi_bar = (h^-1)* phi
                 ->  closed form psi = phi_bar - I(d phi_bar)
                 ->  metric g making psi a calibration

is evaluated pointwise.  Points of the tube are written as
Q(X, Y) = (X, grad F(X)) + N Y with a constant normal frame N, so every
field depends on X only, except psi, which is affine in Y.  I is the
homotopy operator of the retraction (t, X, Y) -> (X, t Y).
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Optional, Sequence

import numpy as np

from .form_orbit import factorize_batch
from .forms6 import (
    DIM,
    basis,
    exterior_derivative_coeffs,
    imaginary_sl_form,
    interior_coeffs,
    pullback_coeffs,
    realify,
    special_lagrangian_form,
    wedge_coeffs,
    alternating_tensor,
)
from .unitary_planes import pi0, slope_plane

log = logging.getLogger(__name__)

PHI = special_lagrangian_form().to_float().coeffs
IM_PHI = imaginary_sl_form().to_float().coeffs
# axis-wise weight t^(number of Y slots) used by the homotopy operator
_Y_SLOTS = {k: np.array([sum(1 for i in idx if i >= 3) for idx in basis(k)]) for k in range(7)}


class GluingError(RuntimeError):
    """A certificate of the gluing pipeline failed."""


# --- cutoffs ----------------------------------------------------------------


def _bump(t: np.ndarray) -> tuple[np.ndarray, ...]:
    """exp(-1/t) for t > 0 (zero otherwise) and its first three derivatives."""
    t = np.asarray(t, dtype=float)
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    e = np.where(pos, np.exp(-1.0 / ts), 0.0)
    d1 = e / ts**2
    d2 = e * (1 / ts**4 - 2 / ts**3)
    d3 = e * (1 / ts**6 - 6 / ts**5 + 6 / ts**4)
    return e, np.where(pos, d1, 0.0), np.where(pos, d2, 0.0), np.where(pos, d3, 0.0)


def smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1; returns (4, ...) value and derivatives."""
    a = _bump(u)
    b = _bump(1.0 - np.asarray(u, dtype=float))
    b = (b[0], -b[1], b[2], -b[3])  # chain rule for 1 - u
    d = [a[i] + b[i] for i in range(4)]
    s0 = a[0] / d[0]
    s1 = (a[1] - s0 * d[1]) / d[0]
    s2 = (a[2] - 2 * s1 * d[1] - s0 * d[2]) / d[0]
    s3 = (a[3] - 3 * s2 * d[1] - 3 * s1 * d[2] - s0 * d[3]) / d[0]
    return np.array([s0, s1, s2, s3])


@dataclass(frozen=True)
class Cutoff:
    """Function of x3 equal to 1 below ``start`` and 0 above ``stop``."""

    start: float
    stop: float

    def __post_init__(self):
        if not self.stop > self.start:
            raise ValueError("cutoff needs start < stop")

    def jet(self, x3: np.ndarray) -> np.ndarray:
        """(4, ...) array: value and first three x3-derivatives."""
        w = self.stop - self.start
        s = smooth_step((np.asarray(x3, dtype=float) - self.start) / w)
        scale = np.array([1.0, 1 / w, 1 / w**2, 1 / w**3]).reshape((4,) + (1,) * (s.ndim - 1))
        out = -s * scale
        out[0] += 1.0
        return out

    def __call__(self, x3):
        return self.jet(x3)[0]


# --- potentials -------------------------------------------------------------


@dataclass
class PotentialJet:
    """Value and derivatives of a potential at a stack of points x (n, 3)."""

    value: np.ndarray  # (n,)
    grad: np.ndarray  # (n, 3)
    hess: np.ndarray  # (n, 3, 3)
    third: np.ndarray  # (n, 3, 3, 3)


@dataclass
class PotentialPatch:
    """A potential on a box of x-space, evaluated through ``jet``."""

    kind: str
    lo: np.ndarray
    hi: np.ndarray
    evaluator: Callable[[np.ndarray], PotentialJet]
    info: dict = field(default_factory=dict)

    def jet(self, x: np.ndarray) -> PotentialJet:
        return self.evaluator(np.atleast_2d(np.asarray(x, dtype=float)))

    def graph_points(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.concatenate([x, self.jet(x).grad], axis=1)


def quadratic_potential(rho_fn: Callable[[np.ndarray], np.ndarray], lo, hi, kind="slopes") -> PotentialPatch:
    """F = rho(x3) (x1^2 - x2^2) / 2 with rho_fn returning (4, n) value and derivatives."""

    def ev(x):
        r = rho_fn(x[:, 2])
        q = 0.5 * (x[:, 0] ** 2 - x[:, 1] ** 2)
        qg = np.stack([x[:, 0], -x[:, 1], np.zeros(len(x))], axis=1)
        n = len(x)
        val = r[0] * q
        grad = r[0][:, None] * qg
        grad[:, 2] = r[1] * q
        hess = np.zeros((n, 3, 3))
        hess[:, 0, 0] = r[0]
        hess[:, 1, 1] = -r[0]
        hess[:, 0, 2] = hess[:, 2, 0] = r[1] * x[:, 0]
        hess[:, 1, 2] = hess[:, 2, 1] = -r[1] * x[:, 1]
        hess[:, 2, 2] = r[2] * q
        third = np.zeros((n, 3, 3, 3))
        for p in set(permutations((0, 0, 2))):
            third[(slice(None),) + p] = r[1]
        for p in set(permutations((1, 1, 2))):
            third[(slice(None),) + p] = -r[1]
        for p in set(permutations((0, 2, 2))):
            third[(slice(None),) + p] = r[2] * x[:, 0]
        for p in set(permutations((1, 2, 2))):
            third[(slice(None),) + p] = -r[2] * x[:, 1]
        third[:, 2, 2, 2] = r[3] * q
        return PotentialJet(val, grad, hess, third)

    return PotentialPatch(kind, np.asarray(lo, float), np.asarray(hi, float), ev)


def zero_potential(lo, hi) -> PotentialPatch:
    def ev(x):
        n = len(x)
        return PotentialJet(np.zeros(n), np.zeros((n, 3)), np.zeros((n, 3, 3)), np.zeros((n, 3, 3, 3)))

    return PotentialPatch("flat", np.asarray(lo, float), np.asarray(hi, float), ev)


# cone equations |z1|^2 - |z2|^2, |z2|^2 - |z3|^2, Im(z1 z2 z3) as polynomial tensors
def _cubic_tensor() -> np.ndarray:
    def c(j, a):
        if a < 3:
            return 1.0 if a == j else 0.0
        return 1j if a - 3 == j else 0.0

    t = np.zeros((DIM, DIM, DIM))
    for a in range(DIM):
        for b in range(DIM):
            for d in range(DIM):
                s = sum(c(0, p[0]) * c(1, p[1]) * c(2, p[2]) for p in permutations((a, b, d)))
                t[a, b, d] = np.imag(s)
    return t


_H1 = 2 * np.diag([1.0, -1, 0, 1, -1, 0])
_H2 = 2 * np.diag([0.0, 1, -1, 0, 1, -1])
_T3 = _cubic_tensor()


def cone_alignment() -> np.ndarray:
    """Unitary S (row action) taking the reference plane's ray to +x3.

    The rows (v1, v2, v3) of pi0 go to (e3, e1, e2): the cone's tangent plane
    along the ray becomes the x1x2x3-plane, and P(0, theta) becomes the plane
    spanned by e3, e^{i theta} e1, e^{-i theta} e2.
    """
    v = pi0().entries
    frame = np.array([v[1], v[2], v[0]])
    return np.conj(frame).T


class ConeEquations:
    """The cone written in aligned coordinates w, with u_orig = L w."""

    def __init__(self, alignment: np.ndarray):
        inv = np.linalg.inv(alignment)  # z_orig = z_aligned . inv
        self.L = realify(inv.T)
        L = self.L
        self.h = np.array([L.T @ _H1 @ L, L.T @ _H2 @ L])  # (2, 6, 6)
        self.t = np.einsum("abc,ai,bj,ck->ijk", _T3, L, L, L)

    def value(self, w):
        q = 0.5 * np.einsum("...i,kij,...j->...k", w, self.h, w)
        tw = self._tww(w)
        c = np.einsum("...i,...i->...", tw, w) / 6.0
        return np.concatenate([q, c[..., None]], axis=-1)

    def _tw(self, w):  # T[., ., w]
        return (w @ self.t.reshape(DIM * DIM, DIM).T).reshape(w.shape[:-1] + (DIM, DIM))

    def _tww(self, w):  # T[., w, w]
        return np.einsum("...ij,...j->...i", self._tw(w), w)

    def gradient(self, w):  # (..., 3, 6)
        gq = np.einsum("kij,...j->...ki", self.h, w)
        gc = 0.5 * self._tww(w)
        return np.concatenate([gq, gc[..., None, :]], axis=-2)

    def hessian(self, w):  # (..., 3, 6, 6)
        hq = np.broadcast_to(self.h, w.shape[:-1] + self.h.shape)
        hc = self._tw(w)
        return np.concatenate([hq, hc[..., None, :, :]], axis=-3)

    def real_triple(self, w):
        z = (self.L @ w[..., None])[..., 0]
        zc = z[..., :3] + 1j * z[..., 3:]
        return (zc[..., 0] * zc[..., 1] * zc[..., 2]).real


def _line_integral(grad_fn, x, nodes: int = 16):
    # F(x) = int_0^1 f(p + s (x - p)) . (x - p) ds from p = (0, 0, x3) on the ray
    s, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (s + 1)
    w = 0.5 * w
    p = np.zeros_like(x)
    p[:, 2] = x[:, 2]
    d = x - p
    pts = p[None] + s[:, None, None] * d[None]
    f = grad_fn(pts.reshape(-1, 3)).reshape(nodes, len(x), 3)
    return np.einsum("k,kni,ni->n", w, f, d)


def cone_graph_potential(lo, hi, newton_tol: float = 1e-14, max_iter: int = 40) -> PotentialPatch:
    """Potential of the cone as a graph over its tangent plane along the +x3 ray.

    The gradient y = f(x) solves the cone equations by Newton's method started
    from y = 0 and higher derivatives follow by implicit differentiation.  The
    value uses degree-2 homogeneity; ``info["line_value"]`` recovers it
    independently by integrating f along segments orthogonal to the ray.
    """
    eq = ConeEquations(cone_alignment())

    def solve(x):
        y = np.zeros_like(x)
        for _ in range(max_iter):
            w = np.concatenate([x, y], axis=-1)
            g = eq.value(w)
            scale = np.array([1.0, 1.0, 1.0]) * np.maximum(np.abs(x[:, 2:3]), 1e-300) ** np.array([1, 1, 2])
            if np.all(np.abs(g) <= newton_tol * scale):
                break
            gy = eq.gradient(w)[..., 3:]
            y = y - np.linalg.solve(gy, g[..., None])[..., 0]
        else:
            raise GluingError("cone projection did not converge; point outside the graphical region")
        w = np.concatenate([x, y], axis=-1)
        if np.any(eq.real_triple(w) <= 0):
            raise GluingError("cone projection landed on the wrong branch")
        return y

    def ev(x):
        y = solve(x)
        w = np.concatenate([x, y], axis=-1)
        grad = eq.gradient(w)
        hs = eq.hessian(w)
        gy_inv = np.linalg.inv(grad[..., 3:])
        n = len(x)
        W = np.zeros((n, 6, 3))
        W[:, :3, :] = np.eye(3)
        W[:, 3:, :] = -gy_inv @ grad[..., :3]
        d2 = np.einsum("naij,nib,njc->nabc", hs, W, W)
        f2 = -np.einsum("nka,nabc->nkbc", gy_inv, d2)  # f_k,bc
        # F is homogeneous of degree 2 with the apex at the origin: F = x . f(x) / 2
        val = 0.5 * np.einsum("ni,ni->n", x, y)
        return PotentialJet(val, y, W[:, 3:, :], f2)

    def line_value(x):
        return _line_integral(solve, np.atleast_2d(np.asarray(x, dtype=float)))

    return PotentialPatch("cone-graph", np.asarray(lo, float), np.asarray(hi, float), ev,
                          info={"equations": eq, "solve": solve, "line_value": line_value})


def reflected_potential(base: PotentialPatch, p3: float) -> PotentialPatch:
    """F'(x) = F(-x1, x2, 2 p3 - x3): the reflection fixing P and reversing the ray."""
    sgn = np.array([-1.0, 1.0, -1.0])

    def ev(x):
        j = base.jet(x * sgn + np.array([0, 0, 2 * p3]))
        return PotentialJet(
            j.value,
            j.grad * sgn,
            j.hess * sgn[:, None] * sgn[None, :],
            j.third * sgn[:, None, None] * sgn[None, :, None] * sgn[None, None, :],
        )

    return PotentialPatch("reflected", base.lo, base.hi, ev)


def bridge_potentials(F: PotentialPatch, Fp: PotentialPatch, chi: Cutoff) -> PotentialPatch:
    """F_bar = chi F + (1 - chi) F' with chi a function of x3 alone."""

    def ev(x):
        c = chi.jet(x[:, 2])  # (4, n)
        a = F.jet(x)
        b = Fp.jet(x)
        d0 = a.value - b.value
        d1 = a.grad - b.grad
        d2 = a.hess - b.hess
        val = b.value + c[0] * d0
        grad = b.grad + c[0][:, None] * d1
        grad[:, 2] += c[1] * d0
        e3 = np.array([0.0, 0, 1])
        hess = b.hess + c[0][:, None, None] * d2
        hess += c[1][:, None, None] * (d1[:, :, None] * e3 + e3[:, None] * d1[:, None, :])
        hess[:, 2, 2] += c[2] * d0
        third = b.third + c[0][:, None, None, None] * (a.third - b.third)
        # terms with one, two and three x3-derivatives of chi
        t1 = np.einsum("nij,k->nijk", d2, e3)
        third += c[1][:, None, None, None] * (t1 + t1.transpose(0, 1, 3, 2) + t1.transpose(0, 3, 1, 2))
        t2 = np.einsum("ni,j,k->nijk", d1, e3, e3)
        third += c[2][:, None, None, None] * (t2 + t2.transpose(0, 2, 1, 3) + t2.transpose(0, 2, 3, 1))
        third[:, 2, 2, 2] += c[3] * d0
        return PotentialJet(val, grad, hess, third)

    return PotentialPatch("bridged", F.lo, F.hi, ev, info={"parts": (F.kind, Fp.kind)})


# --- tangent frames and the modified form -----------------------------------


@dataclass
class TangentFrameField:
    """Unitary frames of a graph y = grad F(x) at a stack of base points.

    ``h`` (n, 3, 3) is the unitary polar part of I + iA with A = Hess F; it
    is symmetric, so its row and column actions agree, and as a real map it
    sends the x1x2x3-plane onto the tangent plane.  ``theta`` is the
    Lagrangian angle with h* ... = e^{-i theta} conventions fixed by
    ``modified_form``; ``dtheta`` (n, 3) is its x-gradient.
    """

    x: np.ndarray
    hess: np.ndarray
    h: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray

    @property
    def real_maps(self) -> np.ndarray:
        return realify(np.swapaxes(self.h, -1, -2))


def tangent_frame_field(x: np.ndarray, jet: PotentialJet) -> TangentFrameField:
    a = jet.hess
    lam, v = np.linalg.eigh(a)
    phase = (1 + 1j * lam) / np.sqrt(1 + lam**2)
    h = np.einsum("nij,nj,nkj->nik", v, phase, v)
    theta = -np.arctan(lam).sum(axis=1)
    inv = np.linalg.inv(np.eye(3) + a @ a)
    dtheta = -np.einsum("nij,njik->nk", inv, jet.third)
    return TangentFrameField(np.asarray(x), a, h, theta, dtheta)


@dataclass
class ModifiedForm:
    """phi_bar = cos(theta) phi - sin(theta) Im(dz123) and its exterior derivative."""

    coeffs: np.ndarray  # (n, 20)
    via_pullback: np.ndarray  # (n, 20): (h^-1)* phi computed independently
    companion: np.ndarray  # (n, 20): sin(theta) phi + cos(theta) Im(dz123)

    @property
    def route_gap(self) -> float:
        return float(np.abs(self.coeffs - self.via_pullback).max(initial=0.0))


def modified_form(frames: TangentFrameField) -> ModifiedForm:
    c, s = np.cos(frames.theta)[:, None], np.sin(frames.theta)[:, None]
    coeffs = c * PHI - s * IM_PHI
    hinv = np.linalg.inv(frames.real_maps)
    via = pullback_coeffs(hinv, PHI, 3)
    return ModifiedForm(coeffs, via, s * PHI + c * IM_PHI)


# --- the homotopy operator --------------------------------------------------


def homotopy_primitive(tau_fn: Callable[[np.ndarray, np.ndarray], np.ndarray], X: np.ndarray,
                       Y: np.ndarray, k: int, nodes: int = 32) -> np.ndarray:
    """I(tau)(X, Y) = int_0^1 iota_{d/dt} G* tau dt for G(t, X, Y) = (X, t Y).

    ``tau_fn(X, Y)`` returns coefficients (n, C(6, k)) of a k-form in the
    coordinates (X, Y); the result is a (k-1)-form field.  Gauss-Legendre
    quadrature in t is exact for forms polynomial of degree < 2 nodes in Y.
    """
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (t + 1)
    w = 0.5 * w
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    E = np.concatenate([np.zeros_like(Y), Y], axis=1)
    out = 0.0
    for tk, wk in zip(t, w):
        contracted = interior_coeffs(E, tau_fn(X, tk * Y), k)
        out = out + wk * contracted * tk ** _Y_SLOTS[k - 1]
    return out


# --- comass -----------------------------------------------------------------


def _stiefel_qr(m: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(m)
    return q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[..., None, :]


def _contract_first(t: np.ndarray, v: np.ndarray) -> np.ndarray:
    # T(v, ., .) for a stack of vectors v (n, 6)
    return (v @ t.reshape(DIM, DIM * DIM)).reshape(-1, DIM, DIM)


def _frame_values(t: np.ndarray, u: np.ndarray) -> np.ndarray:
    m = _contract_first(t, u[..., 0])
    return np.einsum("nb,nb->n", u[..., 1], (m @ u[..., 2:3])[..., 0])


def comass(form: np.ndarray, metric: Optional[np.ndarray] = None, starts: int = 2000,
           sweep: int = 100_000, iters: int = 400, seed: int = 0) -> tuple[float, np.ndarray]:
    """Maximum of a 3-form on metric-orthonormal 3-frames.

    Projected gradient ascent on the Stiefel manifold from ``starts`` random
    frames plus a deterministic random sweep of ``sweep`` frames.  Returns the
    maximum and the maximizing frame (columns, in the original coordinates).
    """
    rng = np.random.default_rng(seed)
    form = np.asarray(form, dtype=float)
    if metric is None:
        k = np.eye(DIM)
    else:
        k = np.linalg.cholesky(np.asarray(metric, dtype=float)).T  # |v|_g = |k v|
    kinv = np.linalg.inv(k)
    alpha = pullback_coeffs(kinv, form, 3)
    t = alternating_tensor(alpha, 3)
    best, best_u = -np.inf, None
    for lo in range(0, sweep, 20_000):
        u = _stiefel_qr(rng.standard_normal((min(20_000, sweep - lo), DIM, 3)))
        vals = _frame_values(t, u)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, best_u = float(vals[i]), u[i]
    u = _stiefel_qr(rng.standard_normal((starts, DIM, 3)))
    step = 0.5 / max(np.abs(alpha).sum(), 1e-300) * 3
    for _ in range(iters):
        m0 = _contract_first(t, u[..., 0])  # T(u1, ., .)
        m2 = _contract_first(t, u[..., 2])  # T(u3, ., .); T(., u2, u3) = T(u3, ., u2)
        g = np.stack([
            (m2 @ u[..., 1:2])[..., 0],
            (m0 @ u[..., 2:3])[..., 0],
            (np.swapaxes(m0, 1, 2) @ u[..., 1:2])[..., 0],
        ], axis=-1)
        sym = np.swapaxes(u, 1, 2) @ g
        sym = 0.5 * (sym + np.swapaxes(sym, 1, 2))
        u = _stiefel_qr(u + step * (g - u @ sym))
    vals = _frame_values(t, u)
    i = int(np.argmax(vals))
    if vals[i] > best:
        best, best_u = float(vals[i]), u[i]
    return best, kinv @ best_u


# --- the tube model ---------------------------------------------------------


def normal_frame(theta_p: float) -> np.ndarray:
    """Columns n1, n2, n3: n1, n2 span P with d/dx3, n3 completes P + x1x2x3.

    P is spanned by e3, e^{i t} e1 and e^{-i t} e2 with t = ``theta_p``.
    """
    c, s = np.cos(theta_p), np.sin(theta_p)
    n = np.zeros((DIM, 3))
    n[:, 0] = [c, 0, 0, s, 0, 0]
    n[:, 1] = [0, c, 0, 0, -s, 0]
    n[:, 2] = [0, 0, 0, 0, 0, 1]
    return n


def p_plane_rows(theta_p: float) -> np.ndarray:
    """Oriented rows (n1, n2, e3) of P in real coordinates."""
    n = normal_frame(theta_p)
    e3 = np.zeros(DIM)
    e3[2] = 1
    return np.array([n[:, 0], n[:, 1], e3])


@dataclass
class PointFields:
    """Everything known at tube points written as (X, Y)."""

    X: np.ndarray
    Y: np.ndarray
    jet: PotentialJet
    frames: TangentFrameField
    phi_bar: ModifiedForm
    dQ: np.ndarray  # (n, 6, 6)
    psi_q: np.ndarray  # psi in (X, Y) coordinates
    psi: np.ndarray  # psi in standard coordinates
    phi_bar_std: np.ndarray


class GluingModel:
    """Tube coordinates Q(X, Y) = (X, grad F(X)) + N Y and the fields built on them."""

    def __init__(self, potential: PotentialPatch, normals: np.ndarray, homotopy_nodes: int = 32):
        self.potential = potential
        self.N = np.asarray(normals, dtype=float)
        self.nodes = homotopy_nodes

    def jacobian(self, hess: np.ndarray) -> np.ndarray:
        n = len(hess)
        dq = np.zeros((n, DIM, DIM))
        dq[:, :3, :3] = np.eye(3)
        dq[:, 3:, :3] = hess
        dq[:, :, 3:] = self.N
        return dq

    def to_standard(self, X: np.ndarray, Y: np.ndarray, grad: Optional[np.ndarray] = None) -> np.ndarray:
        if grad is None:
            grad = self.potential.jet(X).grad
        return np.concatenate([X, grad], axis=1) + Y @ self.N.T

    def to_tube(self, q: np.ndarray, tol: float = 1e-15, max_iter: int = 30) -> tuple[np.ndarray, np.ndarray]:
        """Invert Q by Newton's method."""
        q = np.atleast_2d(q)
        X = q[:, :3].copy()
        Y = np.zeros_like(X)
        for _ in range(max_iter):
            j = self.potential.jet(X)
            res = self.to_standard(X, Y, j.grad) - q
            if np.abs(res).max(initial=0.0) <= tol * max(1.0, np.abs(q).max()):
                return X, Y
            step = np.linalg.solve(self.jacobian(j.hess), res[..., None])[..., 0]
            X = X - step[:, :3]
            Y = Y - step[:, 3:]
        res = np.abs(self.to_standard(X, Y) - q).max()
        if res > 1e-12:
            raise GluingError(f"tube coordinates did not converge (residual {res:.2e})")
        return X, Y

    def fields(self, X: np.ndarray, Y: np.ndarray) -> PointFields:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        jet = self.potential.jet(X)
        frames = tangent_frame_field(X, jet)
        mf = modified_form(frames)
        dq = self.jacobian(jet.hess)
        phibar_q = pullback_coeffs(dq, mf.coeffs, 3)
        # d phi_bar = -d theta ^ (sin theta phi + cos theta Im dz123), pulled back to (X, Y)
        dtheta_q = np.concatenate([frames.dtheta, np.zeros_like(frames.dtheta)], axis=1)
        tau_q = -wedge_coeffs(dtheta_q, pullback_coeffs(dq, mf.companion, 3), 1, 3)
        prim = homotopy_primitive(lambda _x, _y: tau_q, X, Y, 4, self.nodes)
        psi_q = phibar_q - prim
        psi = pullback_coeffs(np.linalg.inv(dq), psi_q, 3)
        return PointFields(X, Y, jet, frames, mf, dq, psi_q, psi, mf.coeffs)

    def psi_at(self, q: np.ndarray) -> np.ndarray:
        X, Y = self.to_tube(q)
        return self.fields(X, Y).psi

    def metric(self, f: PointFields) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(K, g, basin, h') with psi = K* phi, g = K^T K, basin = |H* psi - phi|.

        h' solves h'* phi = H* psi and K = h' H^-1.
        """
        H = f.frames.real_maps
        sigma = pullback_coeffs(H, f.psi, 3)
        basin = np.abs(sigma - PHI).max(axis=1)
        hp, _, _ = factorize_batch(sigma)
        K = hp @ np.linalg.inv(H)
        return K, np.swapaxes(K, 1, 2) @ K, basin, hp


def exterior_derivative_fd(fn: Callable[[np.ndarray], np.ndarray], q: np.ndarray, steps: np.ndarray,
                           k: int = 3) -> np.ndarray:
    """d of a k-form field at points q by fourth-order central differences.

    ``steps`` (n, 6) gives the step per point and axis.
    """
    q = np.atleast_2d(q)
    n = len(q)
    offsets = (-2, -1, 1, 2)
    weights = np.array([1, -8, 8, -1]) / 12.0
    pts = []
    for ax in range(DIM):
        for o in offsets:
            p = q.copy()
            p[:, ax] += o * steps[:, ax]
            pts.append(p)
    vals = fn(np.concatenate(pts)).reshape(DIM, len(offsets), n, -1)
    grad = np.einsum("o,aonc->nac", weights, vals) / steps[:, :, None]
    return exterior_derivative_coeffs(grad, k)


# --- grid, mean curvature and the rotating bridge ----------------------------


@dataclass(frozen=True)
class TubeGrid:
    """Base grid of the tube: a box |x1|, |x2| <= r and x3 in [r0, 2 p3 - r0].

    The x3 nodes cluster towards both ends, x3(u) = p3 + (p3 - r0) tanh(k u) / tanh(k),
    because the cone pieces vary on the scale of the distance to their apex.
    ``stretch = 0`` gives uniform nodes.
    """

    p3: float = 1.0
    r0: float = 2.0**-5
    r: float = 2.0**-6
    n_perp: int = 33
    n_axial: int = 33
    stretch: float = 2.4

    def __post_init__(self):
        if self.n_perp % 2 == 0:
            raise ValueError("n_perp must be odd so the segment is a grid line")
        if not 0 < self.r0 < self.p3:
            raise ValueError("need 0 < r0 < p3")
        if self.r <= 0 or self.n_axial < 3:
            raise ValueError("need r > 0 and at least 3 axial nodes")

    @property
    def perp(self) -> np.ndarray:
        return np.linspace(-self.r, self.r, self.n_perp)

    def _map(self, u):
        k = self.stretch
        if k == 0:
            return self.p3 + (self.p3 - self.r0) * u
        return self.p3 + (self.p3 - self.r0) * np.tanh(k * u) / np.tanh(k)

    def _map_derivative(self, u):
        k = self.stretch
        if k == 0:
            return np.full_like(np.asarray(u, dtype=float), self.p3 - self.r0)
        return (self.p3 - self.r0) * k / np.cosh(k * u) ** 2 / np.tanh(k)

    def _unmap(self, x3):
        k = self.stretch
        t = (np.asarray(x3, dtype=float) - self.p3) / (self.p3 - self.r0)
        if k == 0:
            return t
        return np.arctanh(np.clip(t * np.tanh(k), -1 + 1e-16, 1 - 1e-16)) / k

    @property
    def axial_u(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.n_axial)

    @property
    def axial(self) -> np.ndarray:
        return self._map(self.axial_u)

    def axial_spacing(self, x3: np.ndarray) -> np.ndarray:
        return self._map_derivative(self._unmap(x3)) * 2.0 / (self.n_axial - 1)

    @property
    def perp_spacing(self) -> float:
        return 2 * self.r / (self.n_perp - 1)

    @property
    def nodes(self) -> np.ndarray:
        a, b, c = np.meshgrid(self.perp, self.perp, self.axial, indexing="ij")
        return np.stack([a.ravel(), b.ravel(), c.ravel()], axis=1)

    @property
    def size(self) -> int:
        return self.n_perp**2 * self.n_axial

    @property
    def segment(self) -> np.ndarray:
        x = np.zeros((self.n_axial, 3))
        x[:, 2] = self.axial
        return x

    def end_zone_mask(self, x3: np.ndarray) -> np.ndarray:
        lo = 1.5 * self.r0
        return (x3 <= lo) | (x3 >= 2 * self.p3 - lo)

    def refined(self) -> "TubeGrid":
        return TubeGrid(self.p3, self.r0, self.r, 2 * self.n_perp - 1, 2 * self.n_axial - 1, self.stretch)

    def with_radius(self, r: float) -> "TubeGrid":
        return TubeGrid(self.p3, self.r0, r, self.n_perp, self.n_axial, self.stretch)


def mean_curvature(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Mean curvature vector of an immersion from its derivatives.

    ``first`` (n, 6, 3) holds d_i f and ``second`` (n, 6, 3, 3) holds d_i d_j f;
    H is the normal part of g^{ij} d_i d_j f.
    """
    g = np.swapaxes(first, 1, 2) @ first
    ginv = np.linalg.inv(g)
    trace = np.einsum("nij,nkij->nk", ginv, second)
    proj = np.eye(DIM) - first @ ginv @ np.swapaxes(first, 1, 2)
    return np.einsum("nab,nb->na", proj, trace)


def graph_derivatives(jet: PotentialJet) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of x -> (x, grad F(x))."""
    n = len(jet.grad)
    first = np.zeros((n, DIM, 3))
    first[:, :3] = np.eye(3)
    first[:, 3:] = jet.hess
    second = np.zeros((n, DIM, 3, 3))
    second[:, 3:] = jet.third
    return first, second


def _plane_projectors(rows: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(np.swapaxes(rows, -1, -2))
    return q @ np.swapaxes(q, -1, -2)


def tangent_planes(jet: PotentialJet) -> np.ndarray:
    first, _ = graph_derivatives(jet)
    return np.swapaxes(first, 1, 2)  # rows spanning the tangent plane


@dataclass
class BridgeSurface:
    """Graph of rho(x3) grad (x1^2 - x2^2)/2 joining two tangent planes."""

    rho1: float
    rho2: float
    potential: PotentialPatch
    samples: np.ndarray  # (n, 6) graph points on the grid
    certificates: dict


def slope_profile(rho1: float, rho2: float, profile: Cutoff) -> Callable[[np.ndarray], np.ndarray]:
    def fn(x3):
        c = profile.jet(x3)
        out = (rho1 - rho2) * c
        out[0] += rho2
        return out

    return fn


def rotating_tangent_bridge(rho1: float, rho2: float, profile: Cutoff, grid: TubeGrid) -> BridgeSurface:
    """Special Lagrangian tangent data rotating from slope rho1 to slope rho2 along the segment.

    Along the segment the tangent plane is the slope plane of rho(x3); off the
    segment its distance to that plane is fitted against r |rho'| + r^2 |rho''|.
    """
    rho_fn = slope_profile(rho1, rho2, profile)
    x3 = np.linspace(grid.r0, 2 * grid.p3 - grid.r0, 4001)
    drho = rho_fn(x3)[1]
    if (rho2 - rho1) * drho.min() < -1e-14 or (rho2 - rho1) * drho.max() < -1e-14:
        raise GluingError("slope profile is not monotone")
    lo = np.array([-grid.r, -grid.r, grid.r0])
    hi = np.array([grid.r, grid.r, 2 * grid.p3 - grid.r0])
    pot = quadratic_potential(rho_fn, lo, hi)
    nodes = grid.nodes
    jet = pot.jet(nodes)
    rows = tangent_planes(jet)
    rho = rho_fn(nodes[:, 2])
    model = np.stack([slope_plane(v).rows for v in rho[0]])
    gap = np.linalg.norm(_plane_projectors(rows) - _plane_projectors(model), ord=2, axis=(1, 2))
    on = (nodes[:, 0] == 0) & (nodes[:, 1] == 0)
    off = ~on
    radius = np.hypot(nodes[:, 0], nodes[:, 1])
    scale = radius * np.abs(rho[1]) + radius**2 * np.abs(rho[2])
    fit = gap[off] / np.maximum(scale[off], 1e-300)
    fit = fit[scale[off] > 1e-12]
    pts = np.concatenate([nodes, jet.grad], axis=1)
    p_proj = _plane_projectors(p_plane_rows(np.pi / 2)[None])[0]
    dist = np.linalg.norm(pts - pts @ p_proj, axis=1)
    certs = {
        "tangent_on_segment": float(gap[on].max()),
        "off_segment_constant": float(fit.max()) if fit.size else 0.0,
        "meets_P_only_on_segment": float((dist[off] / radius[off]).min()),
    }
    if certs["tangent_on_segment"] > 1e-10:
        raise GluingError("tangent plane along the segment is not the slope plane")
    if certs["meets_P_only_on_segment"] <= 0:
        raise GluingError("bridge meets P away from the segment")
    return BridgeSurface(rho1, rho2, pot, pts, certs)


# --- assembling and certifying ---------------------------------------------

MODES = ("reflected", "slopes", "tangent")
THRESHOLDS = {
    "potential_on_segment": 1e-8,
    "mean_curvature_on_segment": 1e-8,
    "angle_on_segment": 1e-8,
    "angle_derivative_on_P": 1e-6,
    "closedness": 5e-6,
    "calibrates_sigma": 1e-8,
    "calibrates_P": 1e-8,
    "end_zone_psi": 1e-12,
    "end_zone_metric": 1e-12,
    "comass_excess": 1e-6,
    "basin": 0.05,
    "modified_form_routes": 1e-12,
    "chart_nondegenerate": 1e-6,  # lower bound on |det dQ|
    "metric_positive": 0.0,  # lower bound on the smallest eigenvalue of g
    "psi_metric_route": 1e-10,
    "correction_identity": 1e-8,
}
# finite differences whose error falls below C * eps / h are at the rounding floor
ROUNDOFF_FLOOR_FACTOR = 1e3


@dataclass
class Certificate:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "threshold": self.threshold, "passed": self.passed, **self.detail}


@dataclass
class CalibrationPackage:
    """A certified closed form psi and metric g on a tube around the segment."""

    mode: str
    grid: TubeGrid
    model: GluingModel
    theta_p: float
    certificates: dict[str, Certificate]
    summary: dict
    timings: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.certificates.values())

    def failed(self) -> list[str]:
        return [n for n, c in self.certificates.items() if not c.passed]

    def psi(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return self.model.fields(X, Y).psi

    def metric(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return self.model.metric(self.model.fields(X, Y))[1]

    def to_dict(self) -> dict:
        g = self.grid
        return {
            "mode": self.mode,
            "grid": {"p3": g.p3, "r0": g.r0, "r": g.r, "n_perp": g.n_perp, "n_axial": g.n_axial,
                     "stretch": g.stretch, "nodes": g.size},
            "plane_angle": self.theta_p,
            "passed": self.passed,
            "certificates": {n: c.to_dict() for n, c in self.certificates.items()},
            "summary": self.summary,
            "timings": self.timings,
        }

    def export_json(self, path: str) -> None:
        atomic_write(path, json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def export_obj(self, path: str) -> str:
        """Slices x2 = 0 of Sigma and P (triangulated) and the segment, as one OBJ file.

        Vertices are projected to (x1, x3, y1).
        """
        g = self.grid
        a, c = np.meshgrid(g.perp, g.axial, indexing="ij")
        X = np.stack([a.ravel(), np.zeros(a.size), c.ravel()], axis=1)
        sigma = self.model.to_standard(X, np.zeros_like(X))
        Y = np.stack([a.ravel(), np.zeros(a.size), np.zeros(a.size)], axis=1)
        Xp = np.stack([np.zeros(a.size), np.zeros(a.size), c.ravel()], axis=1)
        p = self.model.to_standard(Xp, Y)
        seg = self.model.to_standard(g.segment, np.zeros_like(g.segment))
        lines = [f"# {self.mode} configuration, slices x2 = 0, vertices (x1, x3, y1)"]
        offset = 0
        for name, pts in (("sigma", sigma), ("P", p)):
            lines += _obj_surface(pts[:, [0, 2, 3]], g.n_perp, g.n_axial, name, offset)
            offset += len(pts)
        lines.append("o segment")
        lines += [f"v {v[0]:.12g} {v[2]:.12g} {v[3]:.12g}" for v in seg]
        lines.append("l " + " ".join(str(offset + i + 1) for i in range(len(seg))))
        atomic_write(path, "\n".join(lines) + "\n")
        return path


def _obj_surface(v: np.ndarray, n_a: int, n_b: int, name: str, offset: int = 0) -> list[str]:
    lines = [f"o {name}"]
    lines += [f"v {p[0]:.12g} {p[1]:.12g} {p[2]:.12g}" for p in v]
    for i in range(n_a - 1):
        for j in range(n_b - 1):
            a = offset + i * n_b + j + 1
            b, c, d = a + 1, a + n_b, a + n_b + 1
            lines.append(f"f {a} {c} {d}")
            lines.append(f"f {a} {d} {b}")
    return lines


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _PointwiseChecks:
    """Running extrema of the pointwise chart, metric and factorization checks."""

    def __init__(self):
        self.det_min = np.inf
        self.eig_min = np.inf
        self.route = 0.0
        self.hp_model = 0.0  # on Sigma, P and the end zones, where h' must be the identity
        self.hp_all = 0.0
        self.points = 0

    def add(self, f: PointFields, K, g, hp, on_model: bool = False) -> None:
        if len(K) == 0:
            return
        self.det_min = min(self.det_min, float(np.abs(np.linalg.det(f.dQ)).min()))
        self.eig_min = min(self.eig_min, float(np.linalg.eigvalsh(g).min()))
        self.route = max(self.route, float(np.abs(pullback_coeffs(K, PHI, 3) - f.psi).max()))
        dev = float(np.abs(hp - np.eye(DIM)).max())
        self.hp_all = max(self.hp_all, dev)
        if on_model:
            self.hp_model = max(self.hp_model, dev)
        self.points += len(K)

    def certificates(self) -> dict:
        return {
            "chart_nondegenerate": _cert("chart_nondegenerate", self.det_min, {"points": self.points},
                                         passed=self.det_min > THRESHOLDS["chart_nondegenerate"]),
            "metric_positive": _cert("metric_positive", self.eig_min,
                                     passed=self.eig_min > THRESHOLDS["metric_positive"]),
            "psi_metric_route": _cert("psi_metric_route", self.route),
            "correction_identity": _cert("correction_identity", self.hp_model,
                                         {"anywhere": self.hp_all}),
        }


def _cert(name, value, detail=None, passed=None) -> Certificate:
    thr = THRESHOLDS[name]
    ok = bool(value <= thr) if passed is None else bool(passed)
    return Certificate(name, float(value), thr, ok, detail or {})


def _ball(rng, n, radius, dim=3):
    v = rng.standard_normal((n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius * rng.uniform(0, 1, (n, 1)) ** (1.0 / dim)


def _oriented_volume(form: np.ndarray, frame: np.ndarray, metric: np.ndarray) -> np.ndarray:
    """form(v1, v2, v3) / |v1 ^ v2 ^ v3|_g for frames (n, 6, 3)."""
    idx = np.array(basis(3))
    minors = np.linalg.det(frame[:, idx, :])  # (n, 20, 3, 3) -> (n, 20)
    val = np.einsum("ni,ni->n", form, minors)
    gram = np.swapaxes(frame, 1, 2) @ metric @ frame
    return val / np.sqrt(np.linalg.det(gram))


def _chunked(fn, n, size=4000):
    parts = [fn(slice(i, min(i + size, n))) for i in range(0, n, size)]
    return parts


def assemble_calibration(model: GluingModel, grid: TubeGrid, mode: str, theta_p: float,
                         model_hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                         closedness_samples: int = 400, comass_points: int = 20,
                         comass_starts: int = 2000, comass_sweep: int = 100_000,
                         seed: int = 0) -> CalibrationPackage:
    """Evaluate psi and g on the tube and run every certificate.

    ``model_hessian(x3)`` is the expected Hessian of the potential on the
    segment (zero when omitted).
    """
    rng = np.random.default_rng(seed)
    t_start = time.perf_counter()
    timings = {}
    certs: dict[str, Certificate] = {}
    summary: dict = {}
    checks = _PointwiseChecks()
    nodes = grid.nodes
    n = len(nodes)
    seg = grid.segment

    # segment certificates
    jet_seg = model.potential.jet(seg)
    expected = np.zeros((len(seg), 3, 3)) if model_hessian is None else model_hessian(seg[:, 2])
    pot = max(np.abs(jet_seg.value).max(), np.abs(jet_seg.grad).max(), np.abs(jet_seg.hess - expected).max())
    certs["potential_on_segment"] = _cert("potential_on_segment", pot)
    H = mean_curvature(*graph_derivatives(jet_seg))
    certs["mean_curvature_on_segment"] = _cert("mean_curvature_on_segment", np.abs(H).max())
    fr_seg = tangent_frame_field(seg, jet_seg)
    certs["angle_on_segment"] = _cert("angle_on_segment", np.abs(fr_seg.theta).max())
    # fourth-order differences of theta in every base direction at segment nodes
    # the axial stencil must stay clear of both cone apexes on coarse grids
    room = np.minimum(seg[:, 2] - grid.r0 / 2, 2 * grid.p3 - grid.r0 / 2 - seg[:, 2]) / 2
    steps = np.stack([np.full(len(seg), grid.perp_spacing), np.full(len(seg), grid.perp_spacing),
                      np.minimum(grid.axial_spacing(seg[:, 2]), room)], axis=1)
    dth = np.zeros((len(seg), 3))
    for ax in range(3):
        vals = []
        for o in (-2, -1, 1, 2):
            x = seg.copy()
            x[:, ax] += o * steps[:, ax]
            vals.append(tangent_frame_field(x, model.potential.jet(x)).theta)
        dth[:, ax] = (vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * steps[:, ax])
    certs["angle_derivative_on_P"] = _cert("angle_derivative_on_P", np.abs(dth).max(),
                                           {"analytic": float(np.abs(fr_seg.dtheta).max())})
    timings["segment"] = time.perf_counter() - t_start

    # Sigma: every grid node with Y = 0
    t0 = time.perf_counter()
    sig_cal, sig_basin, sig_route, phibar_gap = [], [], [], []
    end_psi, end_metric, end_basin = [], [], []
    end = grid.end_zone_mask(nodes[:, 2])
    theta_max = 0.0
    for part in _chunked(lambda s: s, n):
        X = nodes[part]
        f = model.fields(X, np.zeros_like(X))
        K, g, basin, hp = model.metric(f)
        checks.add(f, K, g, hp, on_model=True)
        frame = f.dQ[:, :, :3]
        sig_cal.append(np.abs(_oriented_volume(f.psi, frame, g) - 1).max(initial=0.0))
        sig_basin.append(basin.max(initial=0.0))
        sig_route.append(f.phi_bar.route_gap)
        phibar_gap.append(np.abs(f.psi - f.phi_bar_std).max(initial=0.0))
        theta_max = max(theta_max, float(np.abs(f.frames.theta).max()))
    timings["sigma"] = time.perf_counter() - t0
    certs["calibrates_sigma"] = _cert("calibrates_sigma", max(sig_cal),
                                      {"psi_minus_phi_bar": float(max(phibar_gap))})
    certs["modified_form_routes"] = _cert("modified_form_routes", max(sig_route))
    summary["max_angle"] = theta_max

    # end zones: Y samples in the ball of radius r
    t0 = time.perf_counter()
    Xe = nodes[end]
    Ye = _ball(rng, len(Xe), grid.r)
    for part in _chunked(lambda s: s, len(Xe)):
        f = model.fields(Xe[part], Ye[part])
        K, g, basin, hp = model.metric(f)
        checks.add(f, K, g, hp, on_model=True)
        end_psi.append(np.abs(f.psi - PHI).max(initial=0.0))
        end_metric.append(np.abs(g - np.eye(DIM)).max(initial=0.0))
        end_basin.append(basin.max(initial=0.0))
    certs["end_zone_psi"] = _cert("end_zone_psi", max(end_psi, default=0.0), {"points": int(len(Xe))})
    certs["end_zone_metric"] = _cert("end_zone_metric", max(end_metric, default=0.0))
    timings["end_zones"] = time.perf_counter() - t0

    # P: segment nodes times a disc of Y = (Y1, Y2, 0)
    t0 = time.perf_counter()
    rad, ang = np.meshgrid(np.linspace(0, grid.r, 5), np.linspace(0, 2 * np.pi, 8, endpoint=False))
    disc = np.unique(np.stack([(rad * np.cos(ang)).ravel(), (rad * np.sin(ang)).ravel()], 1), axis=0)
    Xp = np.repeat(seg, len(disc), axis=0)
    Yp = np.zeros_like(Xp)
    Yp[:, :2] = np.tile(disc, (len(seg), 1))
    f = model.fields(Xp, Yp)
    K, g, basin, hp = model.metric(f)
    checks.add(f, K, g, hp, on_model=True)
    frame = np.stack([f.dQ[:, :, 3], f.dQ[:, :, 4], f.dQ[:, :, 2]], axis=2)
    p_cal = np.abs(_oriented_volume(f.psi, frame, g) - 1).max()
    certs["calibrates_P"] = _cert("calibrates_P", p_cal, {"psi_minus_phi_on_P": float(np.abs(f.psi - PHI).max())})
    p_rows = p_plane_rows(theta_p)
    pts = model.to_standard(Xp, Yp)
    summary["P_points_off_plane"] = float(np.abs(pts - pts @ _plane_projectors(p_rows[None])[0]).max())
    timings["P"] = time.perf_counter() - t0

    # closedness by finite differences in standard coordinates, step tied to the grid
    t0 = time.perf_counter()
    pick = rng.choice(n, size=min(closedness_samples, n), replace=False)
    Xc = nodes[pick]
    Yc = _ball(rng, len(Xc), grid.r)
    qc = model.to_standard(Xc, Yc)
    base_steps = np.full((len(qc), DIM), grid.perp_spacing)
    base_steps[:, 2] = np.minimum(grid.axial_spacing(Xc[:, 2]),
                                  np.minimum(Xc[:, 2] - grid.r0 / 2, 2 * grid.p3 - grid.r0 / 2 - Xc[:, 2]) / 2)
    errs, instrument = [], []
    fc = model.fields(Xc, Yc)
    Kc, gc, _, hpc = model.metric(fc)
    checks.add(fc, Kc, gc, hpc)
    tau_std = _analytic_dphibar(model, fc)
    # size of the correction relative to r |d phi_bar|, the constant of the norm estimate
    summary["correction_constant"] = float(
        np.abs(fc.psi - fc.phi_bar_std).max() / (grid.r * max(np.abs(tau_std).max(), 1e-300)))
    for factor in (1.0, 0.5):
        st = base_steps * factor
        d = exterior_derivative_fd(model.psi_at, qc, st)
        errs.append(float(np.abs(d).max()))
        dpb = exterior_derivative_fd(lambda q: _phibar_at(model, q), qc, st)
        instrument.append(float(np.abs(dpb - tau_std).max()))
    floor = ROUNDOFF_FLOOR_FACTOR * np.finfo(float).eps / (0.5 * base_steps.min())
    converging = errs[1] <= 0.5 * errs[0] or max(errs) <= floor
    certs["closedness"] = _cert(
        "closedness", errs[0],
        {"refined": errs[1], "roundoff_floor": float(floor), "converging": bool(converging),
         "d_phi_bar_fd_error": instrument, "d_phi_bar_size": float(np.abs(tau_std).max()),
         "samples": int(len(qc))},
        passed=errs[0] <= THRESHOLDS["closedness"] and converging)
    timings["closedness"] = time.perf_counter() - t0

    # comass at random tube points
    t0 = time.perf_counter()
    pick = rng.choice(n, size=comass_points, replace=False)
    Xm = nodes[pick]
    Ym = _ball(rng, comass_points, grid.r)
    f = model.fields(Xm, Ym)
    K, g, basin, hp = model.metric(f)
    checks.add(f, K, g, hp)
    values = [comass(f.psi[i], g[i], starts=comass_starts, sweep=comass_sweep, seed=seed + i)[0]
              for i in range(comass_points)]
    certs["comass_excess"] = _cert("comass_excess", max(values) - 1.0,
                                   {"min": float(min(values)), "max": float(max(values)), "points": comass_points})
    timings["comass"] = time.perf_counter() - t0

    certs.update(checks.certificates())
    summary["correction_factor_deviation"] = checks.hp_all
    basin_all = max(max(sig_basin), max(end_basin, default=0.0), float(basin.max()))
    certs["basin"] = _cert("basin", basin_all)
    timings["total"] = time.perf_counter() - t_start
    return CalibrationPackage(mode, grid, model, theta_p, certs, summary, timings)


def _phibar_at(model: GluingModel, q: np.ndarray) -> np.ndarray:
    X, _ = model.to_tube(q)
    jet = model.potential.jet(X)
    return modified_form(tangent_frame_field(X, jet)).coeffs


def _analytic_dphibar(model: GluingModel, f: PointFields) -> np.ndarray:
    """d phi_bar in standard coordinates: -d theta ^ companion, d theta pulled through Q^-1."""
    inv = np.linalg.inv(f.dQ)
    dtheta_q = np.concatenate([f.frames.dtheta, np.zeros_like(f.frames.dtheta)], axis=1)
    dtheta = np.einsum("na,nab->nb", dtheta_q, inv)
    return -wedge_coeffs(dtheta, f.phi_bar.companion, 1, 3)


# --- the three configurations ------------------------------------------------


def build_model(mode: str, grid: TubeGrid, theta_p: float = np.pi / 4,
                rho1: float = 0.3, rho2: float = 0.9):
    """Potential, tube model and expected segment Hessian for a configuration."""
    lo = np.array([-grid.r, -grid.r, grid.r0])
    hi = np.array([grid.r, grid.r, 2 * grid.p3 - grid.r0])
    chi = Cutoff(1.5 * grid.r0, 2 * grid.p3 - 1.5 * grid.r0)
    if mode == "reflected":
        F = cone_graph_potential(lo, hi)
        pot = bridge_potentials(F, reflected_potential(F, grid.p3), chi)
        return GluingModel(pot, normal_frame(theta_p)), None, theta_p
    if mode == "tangent":
        F = cone_graph_potential(lo, hi)
        pot = bridge_potentials(F, zero_potential(lo, hi), chi)
        return GluingModel(pot, normal_frame(theta_p)), None, theta_p
    if mode == "slopes":
        bridge = rotating_tangent_bridge(rho1, rho2, chi, grid)
        rho_fn = slope_profile(rho1, rho2, chi)

        def expected(x3):
            r = rho_fn(x3)[0]
            out = np.zeros((len(x3), 3, 3))
            out[:, 0, 0], out[:, 1, 1] = r, -r
            return out

        model = GluingModel(bridge.potential, normal_frame(np.pi / 2))
        model.bridge = bridge
        return model, expected, np.pi / 2
    raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")


# axial grid per configuration: the cone pieces need nodes clustered at the
# ends, the slope profile changes in the middle
GRID_DEFAULTS = {
    "reflected": {"n_axial": 33, "stretch": 2.4},
    "tangent": {"n_axial": 33, "stretch": 2.4},
    "slopes": {"n_axial": 129, "stretch": 0.0},
}


def glue_segment(mode: str, p3: float = 1.0, r0: float = 2.0**-5, r: Optional[float] = None,
                 n_perp: int = 33, n_axial: Optional[int] = None, stretch: Optional[float] = None,
                 theta_p: float = np.pi / 4, rho1: float = 0.3, rho2: float = 0.9, seed: int = 0,
                 max_shrink: int = 6, **kw) -> CalibrationPackage:
    """Build and certify one configuration, halving the tube radius until psi stays in the basin."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    r = r0 / 2 if r is None else r
    n_axial = GRID_DEFAULTS[mode]["n_axial"] if n_axial is None else n_axial
    stretch = GRID_DEFAULTS[mode]["stretch"] if stretch is None else stretch
    last_error = None
    for _ in range(max_shrink + 1):
        grid = TubeGrid(p3, r0, r, n_perp, n_axial, stretch)
        try:
            model, expected, tp = build_model(mode, grid, theta_p, rho1, rho2)
            pkg = assemble_calibration(model, grid, mode, tp, expected, seed=seed, **kw)
        except GluingError as exc:
            last_error = exc
            log.info("radius %.3g failed (%s); shrinking", r, exc)
            r /= 2
            continue
        if pkg.certificates["basin"].passed:
            if mode == "slopes":
                pkg.summary["bridge"] = model.bridge.certificates
            if mode in ("reflected", "tangent"):
                pkg.summary["cone_value_routes"] = _cone_value_gap(model, grid)
            return pkg
        log.info("radius %.3g leaves the factorization basin; shrinking", r)
        r /= 2
    raise GluingError(f"no admissible tube radius found ({last_error})")


def _cone_value_gap(model: GluingModel, grid: TubeGrid) -> float:
    """Homogeneity value of the cone potential against its line integral."""
    parts = model.potential.info.get("parts")
    rng = np.random.default_rng(1)
    x = np.column_stack([rng.uniform(-grid.r, grid.r, (64, 2)), rng.uniform(grid.r0, grid.p3, 64)])
    F = cone_graph_potential(model.potential.lo, model.potential.hi)
    return float(np.abs(F.info["line_value"](x) - F.jet(x).value).max()) if parts else 0.0


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


def correction_norms(mode: str, radii: Sequence[float], p3: float = 1.0, r0: float = 2.0**-5,
                     samples: int = 2000, seed: int = 0, **model_kw) -> list[dict]:
    """Sup of |h' - id| and |psi - phi_bar| over random tube points, for each tube radius."""
    rng = np.random.default_rng(seed)
    out = []
    for r in radii:
        grid = TubeGrid(p3, r0, r, 9, GRID_DEFAULTS[mode]["n_axial"], GRID_DEFAULTS[mode]["stretch"])
        model, _, _ = build_model(mode, grid, **model_kw)
        nodes = grid.nodes
        X = nodes[rng.choice(len(nodes), size=samples, replace=True)]
        Y = _ball(rng, samples, r)
        f = model.fields(X, Y)
        _, _, basin, hp = model.metric(f)
        out.append({"r": float(r), "correction": float(np.abs(hp - np.eye(DIM)).max()),
                    "psi_minus_phi_bar": float(np.abs(f.psi - f.phi_bar_std).max()),
                    "basin": float(basin.max())})
    return out
