"""Exterior algebra on R^6.

Coordinates are ordered (x1, x2, x3, y1, y2, y3) with z_j = x_j + i y_j.
Forms and multivectors are stored densely over the lexicographic basis of
strictly increasing multi-indices.  Coefficient arrays are either float64
(numeric backend) or object arrays of ``fractions.Fraction`` (exact backend);
every operation keeps the backend of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from math import comb
from typing import Iterable, Sequence, Union

import numpy as np

DIM = 6
LABELS = ("x1", "x2", "x3", "y1", "y2", "y3")
_LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}


def _perm_sign(seq: Sequence[int]) -> int:
    # parity by counting inversions; sequences here have length <= 6
    sign = 1
    s = list(seq)
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            if s[i] > s[j]:
                sign = -sign
            elif s[i] == s[j]:
                return 0
    return sign


@lru_cache(maxsize=None)
def basis(k: int) -> tuple[tuple[int, ...], ...]:
    """Strictly increasing index tuples of length k, lexicographic."""
    if not 0 <= k <= DIM:
        raise ValueError(f"degree {k} outside 0..{DIM}")
    return tuple(combinations(range(DIM), k))


@lru_cache(maxsize=None)
def basis_position(k: int) -> dict[tuple[int, ...], int]:
    return {idx: n for n, idx in enumerate(basis(k))}


class MultiIndex(tuple):
    """Strictly increasing tuple of axis positions in 0..5.

    Accepts integers or the labels ``x1 .. y3``.
    """

    def __new__(cls, indices: Iterable[Union[int, str]]):
        items = [(_LABEL_INDEX[i] if isinstance(i, str) else int(i)) for i in indices]
        if any(not 0 <= i < DIM for i in items):
            raise ValueError(f"axis out of range in {items}")
        if any(a >= b for a, b in zip(items, items[1:])):
            raise ValueError(f"multi-index must be strictly increasing: {items}")
        return super().__new__(cls, items)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(LABELS[i] for i in self)

    def __repr__(self) -> str:
        return "MultiIndex(" + ",".join(self.labels) + ")"


def normalize_index(indices: Iterable[Union[int, str]]) -> tuple[int, MultiIndex | None]:
    """Sort an arbitrary index sequence; return (sign, sorted index) or (0, None)."""
    items = [(_LABEL_INDEX[i] if isinstance(i, str) else int(i)) for i in indices]
    sign = _perm_sign(items)
    if sign == 0:
        return 0, None
    return sign, MultiIndex(sorted(items))


def _as_coeff_array(values, exact: bool) -> np.ndarray:
    if exact:
        arr = np.empty(len(values), dtype=object)
        for n, v in enumerate(values):
            arr[n] = Fraction(v)
        return arr
    return np.asarray(values, dtype=float).copy()


def _is_exact(arr: np.ndarray) -> bool:
    return arr.dtype == object


@dataclass(frozen=True, eq=False)
class _Alternating:
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != comb(DIM, self.degree):
            raise ValueError(
                f"degree {self.degree} needs {comb(DIM, self.degree)} coefficients, "
                f"got {len(self.coeffs)}"
            )
        self.coeffs.setflags(write=False)

    @property
    def exact(self) -> bool:
        return _is_exact(self.coeffs)

    def __getitem__(self, indices) -> float:
        sign, idx = normalize_index(indices)
        if sign == 0:
            return 0
        if len(idx) != self.degree:
            raise ValueError(f"index {idx} has wrong length for degree {self.degree}")
        return sign * self.coeffs[basis_position(self.degree)[tuple(idx)]]

    def terms(self) -> dict[MultiIndex, object]:
        """Nonzero coefficients keyed by multi-index."""
        return {
            MultiIndex(idx): c
            for idx, c in zip(basis(self.degree), self.coeffs)
            if c != 0
        }

    def to_float(self):
        return type(self)(self.degree, np.asarray(self.coeffs, dtype=float))

    def _combine(self, other, op):
        if not isinstance(other, type(self)) or other.degree != self.degree:
            return NotImplemented
        return type(self)(self.degree, op(self.coeffs, other.coeffs))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __neg__(self):
        return type(self)(self.degree, -self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, _Alternating):
            return NotImplemented
        return type(self)(self.degree, self.coeffs * scalar)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, type(self)) or other.degree != self.degree:
            return NotImplemented
        return bool(np.all(self.coeffs == other.coeffs))

    def __hash__(self):
        return hash((type(self).__name__, self.degree, tuple(self.coeffs.tolist())))

    def max_abs(self) -> float:
        if len(self.coeffs) == 0:
            return 0.0
        return float(np.max(np.abs(np.asarray(self.coeffs, dtype=float))))

    def allclose(self, other, atol: float = 1e-12) -> bool:
        return (self - other).max_abs() <= atol

    def __repr__(self):
        parts = []
        for idx, c in self.terms().items():
            parts.append(f"{c}*{'^'.join(idx.labels)}")
        body = " + ".join(parts) if parts else "0"
        return f"{type(self).__name__}[{self.degree}]({body})"


class KForm(_Alternating):
    """Alternating k-form on R^6 with coefficients on d(x_I) for increasing I."""

    @classmethod
    def zero(cls, k: int, exact: bool = False) -> "KForm":
        return cls(k, _as_coeff_array([0] * comb(DIM, k), exact))

    @classmethod
    def from_terms(cls, k: int, terms: dict, exact: bool = False) -> "KForm":
        """Build from {index sequence: coefficient}; unsorted indices carry their sign."""
        values = [0] * comb(DIM, k)
        pos = basis_position(k)
        for raw, c in terms.items():
            sign, idx = normalize_index(raw)
            if len(idx or raw) != k:
                raise ValueError(f"index {raw} does not have length {k}")
            if sign:
                values[pos[tuple(idx)]] += sign * (Fraction(c) if exact else c)
        return cls(k, _as_coeff_array(values, exact))

    @classmethod
    def basic(cls, *indices, exact: bool = False) -> "KForm":
        """The monomial dx_{i1} ^ ... ^ dx_{ik}."""
        return cls.from_terms(len(indices), {tuple(indices): 1}, exact=exact)

    def __call__(self, *vectors) -> float:
        return evaluate(self, KVector.from_vectors(vectors))


class KVector(_Alternating):
    """k-vector on R^6; simple ones come from ``from_vectors``."""

    @classmethod
    def from_vectors(cls, vectors) -> "KVector":
        vecs = list(vectors)
        k = len(vecs)
        exact = any(isinstance(x, Fraction) for v in vecs for x in np.asarray(v, dtype=object).ravel())
        if exact:
            cols = [[Fraction(x) for x in v] for v in vecs]
            values = [_det_exact([[cols[c][r] for c in range(k)] for r in idx]) for idx in basis(k)]
            return cls(k, _as_coeff_array(values, True))
        mat = np.array(vecs, dtype=float).T  # 6 x k
        if k == 0:
            return cls(0, np.ones(1))
        rows = np.array(basis(k))
        minors = mat[rows]  # (C(6,k), k, k)
        return cls(k, np.linalg.det(minors))

    def plucker_defect(self) -> float:
        """Residual of the decomposability test, 0 for simple 3-vectors.

        Uses the fact that a k-vector xi is simple iff its contraction by any
        (k-1)-form, wedged with xi, vanishes.
        """
        k = self.degree
        if k in (0, 1, 5, 6):
            return 0.0
        xi = self.to_float()
        worst = 0.0
        as_form = KForm(k, np.asarray(xi.coeffs, dtype=float))
        for idx in basis(k - 1):
            # contraction of xi by dx_idx gives a vector; wedge with xi as forms
            vec = np.zeros(DIM)
            for j in range(DIM):
                sign, full = normalize_index(idx + (j,))
                if sign:
                    vec[j] = sign * as_form[full]
            if np.any(vec):
                worst = max(worst, wedge(KForm(1, vec), as_form).max_abs())
        return worst


def _det_exact(m: list[list[Fraction]]) -> Fraction:
    n = len(m)
    if n == 0:
        return Fraction(1)
    a = [row[:] for row in m]
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if a[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            if f:
                for cc in range(c, n):
                    a[r][cc] -= f * a[c][cc]
    return det


@dataclass(frozen=True, eq=False)
class LinearMap6:
    """Linear map of R^6 acting on column vectors."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.shape != (DIM, DIM):
            raise ValueError(f"expected 6x6 matrix, got {m.shape}")
        if m.dtype != object and not np.all(np.isfinite(m)):
            raise ValueError("matrix has non-finite entries")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "LinearMap6":
        return cls(np.eye(DIM))

    def __matmul__(self, other: "LinearMap6") -> "LinearMap6":
        return LinearMap6(self.matrix @ other.matrix)

    def inverse(self) -> "LinearMap6":
        return LinearMap6(np.linalg.inv(np.asarray(self.matrix, dtype=float)))


def _matrix(h) -> np.ndarray:
    return h.matrix if isinstance(h, LinearMap6) else np.asarray(h)


def realify(m: np.ndarray) -> np.ndarray:
    """6x6 real matrix of a complex 3x3 matrix acting on columns."""
    m = np.asarray(m, dtype=complex)
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


J_MATRIX = realify(1j * np.eye(3))


# --- tables -------------------------------------------------------------


@lru_cache(maxsize=None)
def wedge_table(k: int, l: int):
    """Arrays (i, j, target, sign) with e_I ^ e_J = sign * e_target."""
    if k + l > DIM:
        raise ValueError(f"wedge degree {k}+{l} exceeds {DIM}")
    out_pos = basis_position(k + l)
    ii, jj, tt, ss = [], [], [], []
    for i, a in enumerate(basis(k)):
        sa = set(a)
        for j, b in enumerate(basis(l)):
            if sa.intersection(b):
                continue
            merged = a + b
            ii.append(i)
            jj.append(j)
            tt.append(out_pos[tuple(sorted(merged))])
            ss.append(_perm_sign(merged))
    return (np.array(ii, dtype=int), np.array(jj, dtype=int),
            np.array(tt, dtype=int), np.array(ss, dtype=int))


@lru_cache(maxsize=None)
def interior_table(k: int):
    """Arrays (axis, source, target, sign): i_{e_axis} e_source = sign * e_target."""
    if k < 1:
        raise ValueError("interior product needs degree >= 1")
    low = basis_position(k - 1)
    ax, src, tgt, sg = [], [], [], []
    for s, idx in enumerate(basis(k)):
        for p, axis in enumerate(idx):
            ax.append(axis)
            src.append(s)
            tgt.append(low[idx[:p] + idx[p + 1:]])
            sg.append(-1 if p % 2 else 1)
    return (np.array(ax), np.array(src), np.array(tgt), np.array(sg))


@lru_cache(maxsize=None)
def exterior_derivative_table(k: int):
    """Arrays (axis, source, target, sign): d(f e_source) picks up sign * df/dx_axis on e_target."""
    up = basis_position(k + 1)
    ax, src, tgt, sg = [], [], [], []
    for s, idx in enumerate(basis(k)):
        for axis in range(DIM):
            if axis in idx:
                continue
            merged = (axis,) + idx
            ax.append(axis)
            src.append(s)
            tgt.append(up[tuple(sorted(merged))])
            sg.append(_perm_sign(merged))
    return (np.array(ax), np.array(src), np.array(tgt), np.array(sg))


# --- operations ---------------------------------------------------------


def special_lagrangian_form(exact: bool = False) -> KForm:
    """Re dz1^dz2^dz3 = dx123 - dy1 dy2 dx3 - dx1 dy2 dy3 - dy1 dx2 dy3."""
    return KForm.from_terms(3, {
        ("x1", "x2", "x3"): 1,
        ("y1", "y2", "x3"): -1,
        ("x1", "y2", "y3"): -1,
        ("y1", "x2", "y3"): -1,
    }, exact=exact)


def imaginary_sl_form(exact: bool = False) -> KForm:
    """Im dz1^dz2^dz3, computed as the J-pullback of the real part."""
    return complex_structure_pullback(special_lagrangian_form(exact))


def wedge(a: KForm, b: KForm) -> KForm:
    if a.degree + b.degree > DIM:
        raise ValueError(f"wedge of degrees {a.degree} and {b.degree} overflows dimension {DIM}")
    i, j, t, s = wedge_table(a.degree, b.degree)
    exact = a.exact or b.exact
    out = KForm.zero(a.degree + b.degree, exact).coeffs.copy()
    prod = a.coeffs[i] * b.coeffs[j] * s
    if exact:
        for target, val in zip(t, prod):
            out[target] += val
    else:
        np.add.at(out, t, prod.astype(float))
    return KForm(a.degree + b.degree, out)


def interior(v, a: KForm) -> KForm:
    """Contraction of ``a`` by the vector v in the first slot."""
    if a.degree < 1:
        raise ValueError("interior product of a 0-form is undefined")
    ax, src, tgt, sg = interior_table(a.degree)
    exact = a.exact
    vv = np.array([Fraction(x) for x in v], dtype=object) if exact else np.asarray(v, dtype=float)
    out = KForm.zero(a.degree - 1, exact).coeffs.copy()
    contrib = vv[ax] * a.coeffs[src] * sg
    if exact:
        for target, val in zip(tgt, contrib):
            out[target] += val
    else:
        np.add.at(out, tgt, contrib)
    return KForm(a.degree - 1, out)


def compound(h, k: int) -> np.ndarray:
    """k-th compound matrix: entry [J, I] = det h[J rows, I cols].

    Works on a single 6x6 matrix or a stack (..., 6, 6) of float matrices.
    """
    m = np.asarray(h)
    rows = np.array(basis(k))
    if k == 0:
        return np.ones(m.shape[:-2] + (1, 1))
    if m.dtype == object:
        return np.array(
            [[_det_exact([[Fraction(m[r, c]) for c in cols] for r in rws]) for cols in rows]
             for rws in rows],
            dtype=object,
        )
    sub = m[..., rows[:, None, :, None], rows[None, :, None, :]]
    return np.linalg.det(sub)


def pullback(h, a: KForm) -> KForm:
    """(h* a)(v1..vk) = a(h v1, .., h vk)."""
    m = _matrix(h)
    if a.exact and m.dtype != object:
        if np.all(np.asarray(m) == np.round(m)):
            m = np.array([[Fraction(int(x)) for x in row] for row in np.round(m)], dtype=object)
        else:
            a = a.to_float()
    if not a.exact and m.dtype == object:
        m = np.asarray(m, dtype=float)
    c = compound(m, a.degree)
    return KForm(a.degree, c.T.dot(a.coeffs))


def complex_structure_pullback(a: KForm) -> KForm:
    """Pullback by J, where J dx_j-direction goes to dy_j: J d/dx_j = d/dy_j."""
    jm = J_MATRIX.astype(int)
    if a.exact:
        jm = np.array([[Fraction(int(x)) for x in row] for row in jm], dtype=object)
    return pullback(jm, a)


def evaluate(a: KForm, v: KVector) -> float:
    if a.degree != v.degree:
        raise ValueError(f"cannot pair a {a.degree}-form with a {v.degree}-vector")
    return a.coeffs.dot(v.coeffs)


def random_form(k: int, rng: np.random.Generator, scale: float = 1.0) -> KForm:
    return KForm(k, scale * rng.standard_normal(comb(DIM, k)))


# --- batched coefficient arrays (form fields sampled at many points) -----
#
# A field of k-forms is an array of shape (..., C(6, k)); a field of linear
# maps is (..., 6, 6).  These helpers mirror the single-form operations.


def _det3(m: np.ndarray) -> np.ndarray:
    return (m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
            - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
            + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0]))


def compound_batch(h: np.ndarray, k: int) -> np.ndarray:
    """Stack of k-th compound matrices, shape (..., C(6,k), C(6,k))."""
    h = np.asarray(h, dtype=float)
    if k == 1:
        return h.copy()
    if k != 3:
        return compound(h, k)
    rows = np.array(basis(3))
    out = np.empty(h.shape[:-2] + (20, 20))
    # build one row block at a time to bound memory
    for j, rj in enumerate(rows):
        sub = h[..., rj, :][..., :, rows]  # (..., 3, 20, 3)
        sub = np.moveaxis(sub, -2, -3)  # (..., 20, 3, 3)
        out[..., j, :] = _det3(sub)
    return out


def pullback_coeffs(h: np.ndarray, a: np.ndarray, k: int) -> np.ndarray:
    """Batched pullback: (h* a) for h (..., 6, 6) and coefficients a (..., C(6,k))."""
    c = compound_batch(h, k)
    return np.einsum("...ji,...j->...i", c, a)


def wedge_coeffs(a: np.ndarray, b: np.ndarray, k: int, l: int) -> np.ndarray:
    i, j, t, s = wedge_table(k, l)
    a = np.asarray(a)
    b = np.asarray(b)
    shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    out = np.zeros(shape + (comb(DIM, k + l),))
    prod = a[..., i] * b[..., j] * s
    for target in np.unique(t):
        sel = t == target
        out[..., target] = prod[..., sel].sum(axis=-1)
    return out


def interior_coeffs(v: np.ndarray, a: np.ndarray, k: int) -> np.ndarray:
    ax, src, tgt, sg = interior_table(k)
    contrib = np.asarray(v)[..., ax] * np.asarray(a)[..., src] * sg
    out = np.zeros(contrib.shape[:-1] + (comb(DIM, k - 1),))
    for target in np.unique(tgt):
        sel = tgt == target
        out[..., target] = contrib[..., sel].sum(axis=-1)
    return out


def exterior_derivative_coeffs(grad: np.ndarray, k: int) -> np.ndarray:
    """d of a k-form field given its coefficient gradients grad[..., axis, I]."""
    ax, src, tgt, sg = exterior_derivative_table(k)
    contrib = grad[..., ax, src] * sg
    out = np.zeros(grad.shape[:-2] + (comb(DIM, k + 1),))
    for target in np.unique(tgt):
        sel = tgt == target
        out[..., target] = contrib[..., sel].sum(axis=-1)
    return out


def alternating_tensor(a: np.ndarray, k: int) -> np.ndarray:
    """Dense (..., 6, ..., 6) antisymmetric tensor with T[I] = a_I on sorted I."""
    from itertools import permutations

    a = np.asarray(a, dtype=float)
    out = np.zeros(a.shape[:-1] + (DIM,) * k)
    for n, idx in enumerate(basis(k)):
        for perm in permutations(range(k)):
            p = tuple(idx[q] for q in perm)
            out[(Ellipsis,) + p] = _perm_sign(perm) * a[..., n]
    return out
