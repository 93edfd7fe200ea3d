"""GL(6) orbit of the special Lagrangian form.

The differential of h -> h* phi at the identity is a linear map
gl(6) -> Lambda^3 (R^6), written here as a 20 x 36 matrix whose column
6a + b is the image of the elementary matrix E_ab (entry h_{a,b}).  Its
exact rank decides whether nearby 3-forms are all pullbacks of phi.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Sequence

import numpy as np

from .forms6 import DIM, KForm, LinearMap6, basis, normalize_index, pullback, realify

# names used for basis 3-vectors in printed equation lists
_SHORT = ("1", "2", "3", "I", "II", "III")


def index_label(idx: Sequence[int]) -> str:
    """'12I', '1I(II)': a numeral following another numeral is parenthesized."""
    out = ""
    for pos, i in enumerate(idx):
        roman = i >= 3
        out += f"({_SHORT[i]})" if roman and pos and idx[pos - 1] >= 3 else _SHORT[i]
    return out


@dataclass(frozen=True)
class OrbitDifferential:
    matrix: np.ndarray  # 20 x 36, int or object (Fraction) or float entries

    def row_label(self, r: int) -> str:
        return index_label(basis(3)[r])

    @staticmethod
    def column_label(c: int) -> str:
        a, b = divmod(c, DIM)
        return f"h{_SHORT[a]},{_SHORT[b]}"

    def equations(self) -> list[str]:
        """Human-readable rows, e.g. '123: h1,1 + h2,2 + h3,3'."""
        out = []
        for r in range(self.matrix.shape[0]):
            terms = []
            for c in np.nonzero(np.asarray(self.matrix[r] != 0))[0]:
                v = self.matrix[r, c]
                sign = "-" if v < 0 else "+"
                mag = "" if abs(v) == 1 else f"{abs(v)}*"
                terms.append(f"{sign} {mag}{self.column_label(c)}")
            body = " ".join(terms).lstrip("+ ") if terms else "0"
            out.append(f"{self.row_label(r)}: {body}")
        return out


def orbit_differential(phi: KForm) -> OrbitDifferential:
    """Matrix of h -> sum over slots of phi(.., h v_i, ..) on basis 3-vectors."""
    if phi.degree != 3:
        raise ValueError("orbit differential is implemented for 3-forms")
    exact = phi.exact
    rows = basis(3)
    mat = np.zeros((len(rows), DIM * DIM), dtype=object if exact else float)
    if exact:
        mat[:] = 0
    for r, idx in enumerate(rows):
        for slot, b in enumerate(idx):
            for a in range(DIM):
                replaced = idx[:slot] + (a,) + idx[slot + 1:]
                sign, norm = normalize_index(replaced)
                if sign:
                    mat[r, DIM * a + b] += sign * phi[norm]
    if exact and all(Fraction(x).denominator == 1 for x in mat.ravel()):
        mat = np.array([[int(x) for x in row] for row in mat], dtype=np.int64)
    return OrbitDifferential(mat)


def exact_rank(matrix) -> int:
    """Rank over Q by fraction-free (Bareiss) elimination."""
    a = [[Fraction(x) for x in row] for row in np.asarray(matrix, dtype=object)]
    if a and all(x.denominator == 1 for row in a for x in row):
        a = [[int(x) for x in row] for row in a]
    nrows = len(a)
    ncols = len(a[0]) if nrows else 0
    rank, prev = 0, 1
    for col in range(ncols):
        piv = next((r for r in range(rank, nrows) if a[r][col] != 0), None)
        if piv is None:
            continue
        a[rank], a[piv] = a[piv], a[rank]
        p = a[rank][col]
        for r in range(rank + 1, nrows):
            for c in range(col + 1, ncols):
                val = a[r][c] * p - a[r][col] * a[rank][c]
                a[r][c] = val // prev if isinstance(val, int) else val / prev
            a[r][col] = 0
        prev = p
        rank += 1
        if rank == nrows:
            break
    return rank


def stabilizer_dimension(phi: KForm) -> tuple[int, int]:
    """(rank, kernel dimension) of the orbit differential, computed exactly."""
    d = orbit_differential(phi if phi.exact else _exactify(phi))
    r = exact_rank(d.matrix)
    return r, DIM * DIM - r


def _exactify(phi: KForm) -> KForm:
    return KForm(phi.degree, np.array([Fraction(float(c)) for c in phi.coeffs], dtype=object))


def sl3c_basis() -> list[np.ndarray]:
    """16 real basis elements of sl(3, C) as complex 3x3 matrices."""
    out = []
    for j in range(3):
        for k in range(3):
            if j != k:
                e = np.zeros((3, 3), dtype=complex)
                e[j, k] = 1
                out += [e, 1j * e]
    for d in (np.diag([1, -1, 0]), np.diag([0, 1, -1])):
        out += [d.astype(complex), 1j * d]
    return out


def _as_column(h: np.ndarray) -> np.ndarray:
    return np.asarray(h).reshape(-1)


def kernel_contains_sl3c(phi: KForm) -> bool:
    d = orbit_differential(phi if phi.exact else _exactify(phi)).matrix
    for m in sl3c_basis():
        h = np.rint(realify(m)).astype(np.int64)
        if np.any(d.dot(_as_column(h)) != 0):
            return False
    return True


def image_of(phi: KForm, m: np.ndarray) -> np.ndarray:
    """Orbit differential applied to the realification of a complex matrix."""
    d = orbit_differential(phi).matrix
    return d.dot(_as_column(realify(m)))


# --- kappa(k, n) --------------------------------------------------------


@dataclass(frozen=True)
class KappaEntry:
    n: int
    k: int
    kappa: int
    positive: bool
    predicted_positive: bool

    @property
    def agrees(self) -> bool:
        return self.positive == self.predicted_positive


def kappa(k: int, n: int) -> int:
    """dim GL(R^n) - dim Lambda^k(R^n)."""
    return n * n - comb(n, k)


def predicted_positive(k: int, n: int) -> bool:
    return n <= 7 or k in (0, 1, 2, n - 2, n - 1, n) or (n == 8 and k != 4)


def kappa_table(n_max: int) -> list[KappaEntry]:
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    out = []
    for n in range(1, n_max + 1):
        for k in range(n + 1):
            kap = kappa(k, n)
            out.append(KappaEntry(n, k, kap, kap > 0, predicted_positive(k, n)))
    return out


def kappa_mismatches(n_max: int) -> list[KappaEntry]:
    return [e for e in kappa_table(n_max) if not e.agrees]


# --- local factorization ------------------------------------------------


class FactorizationError(RuntimeError):
    pass


@dataclass
class Factorization:
    h: LinearMap6
    residual: float
    iterations: int


def factorize_near_phi(tau: KForm, tol: float = 1e-12, max_iter: int = 50,
                       phi: KForm | None = None) -> Factorization:
    """Newton solve for h with h* phi = tau, starting from the identity.

    Each step writes h <- h (I + X) with X the minimum-norm solution of the
    linearized equation at the current form h* phi.
    """
    import warnings

    from .forms6 import special_lagrangian_form

    if tau.degree != 3:
        raise ValueError("tau must be a 3-form")
    phi = special_lagrangian_form() if phi is None else phi.to_float()
    tau = tau.to_float()
    if (tau - phi).max_abs() > 0.05:
        warnings.warn("tau is outside the documented basin |tau - phi| <= 0.05", stacklevel=2)
    h = np.eye(DIM)
    current = phi
    resid = (tau - current).max_abs()
    it = 0
    while resid > tol:
        if it >= max_iter:
            raise FactorizationError(f"no convergence after {max_iter} iterations, residual {resid:.3e}")
        d = orbit_differential(current).matrix.astype(float)
        x = np.linalg.lstsq(d, tau.coeffs - current.coeffs, rcond=None)[0]
        h = h @ (np.eye(DIM) + x.reshape(DIM, DIM))
        current = pullback(h, phi)
        new = (tau - current).max_abs()
        it += 1
        if not np.isfinite(new) or (it > 5 and new > resid):
            raise FactorizationError(f"Newton iteration diverged at step {it}, residual {new:.3e}")
        resid = new
    return Factorization(LinearMap6(h), resid, it)


def smallest_singular_value(phi: KForm) -> float:
    d = orbit_differential(phi.to_float()).matrix.astype(float)
    return float(np.linalg.svd(d, compute_uv=False)[-1])


_DIFF_BASIS: np.ndarray | None = None


def _differential_basis() -> np.ndarray:
    # the orbit differential is linear in the form: D(sigma) = sum_I sigma_I D(e_I)
    global _DIFF_BASIS
    if _DIFF_BASIS is None:
        mats = []
        for n in range(comb(DIM, 3)):
            e = np.zeros(comb(DIM, 3))
            e[n] = 1.0
            mats.append(orbit_differential(KForm(3, e)).matrix.astype(float))
        _DIFF_BASIS = np.array(mats)
    return _DIFF_BASIS


def factorize_batch(taus: np.ndarray, tol: float = 1e-12, max_iter: int = 50,
                    phi: KForm | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """Vectorized ``factorize_near_phi`` over a stack of coefficient arrays (n, 20).

    Returns (h (n, 6, 6), residuals (n,), iterations used).
    """
    from .forms6 import pullback_coeffs, special_lagrangian_form

    phi_c = (special_lagrangian_form() if phi is None else phi).to_float().coeffs
    taus = np.atleast_2d(np.asarray(taus, dtype=float))
    n = len(taus)
    h = np.broadcast_to(np.eye(DIM), (n, DIM, DIM)).copy()
    current = np.broadcast_to(phi_c, taus.shape).copy()
    resid = np.abs(taus - current).max(axis=1)
    basis_d = _differential_basis()
    it = 0
    while resid.max(initial=0.0) > tol:
        if it >= max_iter:
            raise FactorizationError(
                f"no convergence after {max_iter} iterations, residual {resid.max():.3e}")
        act = resid > tol
        d = np.einsum("ni,irc->nrc", current[act], basis_d)
        rhs = taus[act] - current[act]
        # minimum-norm solution X = D^T (D D^T)^{-1} rhs
        y = np.linalg.solve(d @ np.swapaxes(d, 1, 2), rhs[..., None])
        x = (np.swapaxes(d, 1, 2) @ y)[..., 0].reshape(-1, DIM, DIM)
        h[act] = h[act] @ (np.eye(DIM) + x)
        current[act] = pullback_coeffs(h[act], phi_c, 3)
        new = np.abs(taus[act] - current[act]).max(axis=1)
        it += 1
        if not np.all(np.isfinite(new)) or (it > 5 and np.any(new > resid[act])):
            raise FactorizationError(f"Newton iteration diverged at step {it}")
        resid[act] = new
    return h, resid, it
