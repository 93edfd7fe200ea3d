"""Embedding a finite graph in R^6 as the singular set of glued cones.

Vertices sit on the x3-axis (the spine) at (0, 0, 2 k p3), each carrying a
realizing collection: the cone plus deg(v) planes meeting it in one ray each.
An edge (l, m) is drawn by two flows:

  U  rotates the collections at v_l and v_m (generator (x - v) . rho0 on an
     inner ball, cut off smoothly) so the chosen rays lie on the spine and
     point at each other;
  W  pushes everything away from the two vertices along a page normal nu.

The edge curve is the preimage (W_t o U_1)^-1 of the straight spine segment
from v_l to v_m.  Near its ends it is the chosen ray; away from them it runs
in the page spanned by the spine and nu at distance t from the spine.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm, schur
from scipy.stats import qmc

from .forms6 import realify
from .gluing import GluingError, atomic_write, cone_alignment, glue_segment, smooth_step
from .hl_cone import RealizingCollection, realizing_collection
from .unitary_planes import align_pair, pi0, plane_from_complex, r_diag

log = logging.getLogger(__name__)

E3 = np.array([0.0, 0, 1, 0, 0, 0])
# complex-linear reflection z -> (-z1, z2, -z3): reverses the ray, keeps P
FLIP = np.diag([-1.0, 1.0, -1.0]).astype(complex)


class EmbeddingError(RuntimeError):
    """A clause of the embedding certificate failed."""


# --- graphs ----------------------------------------------------------------


@dataclass(frozen=True)
class GraphSpec:
    vertices: tuple
    edges: tuple  # pairs of vertex ids, in insertion order

    def __post_init__(self):
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("vertex ids must be unique")
        ids = set(self.vertices)
        for a, b in self.edges:
            if a not in ids or b not in ids:
                raise ValueError(f"edge ({a}, {b}) uses an unknown vertex")
            if a == b:
                raise ValueError(f"self-loop at {a} is not allowed")

    @classmethod
    def from_edges(cls, edges: Sequence[Sequence], vertices: Optional[Sequence] = None) -> "GraphSpec":
        edges = tuple((a, b) for a, b in edges)
        if vertices is None:
            seen = []
            for e in edges:
                for v in e:
                    if v not in seen:
                        seen.append(v)
            vertices = seen
        return cls(tuple(vertices), edges)

    @classmethod
    def from_json(cls, text: str) -> "GraphSpec":
        data = json.loads(text)
        return cls.from_edges(data["edges"], data.get("vertices"))

    def to_json(self) -> str:
        return json.dumps({"vertices": list(self.vertices), "edges": [list(e) for e in self.edges]})

    def degree(self, v) -> int:
        return sum((a == v) + (b == v) for a, b in self.edges)

    @property
    def degrees(self) -> dict:
        return {v: self.degree(v) for v in self.vertices}


def path_graph(n: int) -> GraphSpec:
    return GraphSpec.from_edges([(i, i + 1) for i in range(n - 1)], list(range(n)))


def complete_graph(n: int) -> GraphSpec:
    return GraphSpec.from_edges([(i, j) for i in range(n) for j in range(i + 1, n)], list(range(n)))


def star_graph(leaves: int) -> GraphSpec:
    return GraphSpec.from_edges([(0, i) for i in range(1, leaves + 1)], list(range(leaves + 1)))


def random_multigraph(n_vertices: int, n_edges: int, seed: int = 0) -> GraphSpec:
    """Connected random multigraph: a random spanning tree plus random extra edges."""
    rng = np.random.default_rng(seed)
    edges = []
    for v in range(1, n_vertices):
        edges.append((int(rng.integers(v)), v))
    while len(edges) < n_edges:
        a, b = rng.choice(n_vertices, size=2, replace=False)
        edges.append((int(a), int(b)))
    return GraphSpec.from_edges(edges, list(range(n_vertices)))


# --- su(3) logarithm and flows -------------------------------------------------


def su3_log(target: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Traceless antihermitian X with exp(X) = target for target in SU(3).

    Eigen-angles are taken in (-pi, pi]; when they sum to +-2 pi the angle
    farthest in that direction moves to the neighbouring branch.
    """
    target = np.asarray(getattr(target, "entries", target), dtype=complex)
    if np.abs(target.conj().T @ target - np.eye(3)).max() > tol or abs(np.linalg.det(target) - 1) > tol:
        raise ValueError("target is not in SU(3)")
    t, z = schur(target, output="complex")
    ang = np.angle(np.diag(t))
    turns = int(np.rint(ang.sum() / (2 * np.pi)))
    for _ in range(abs(turns)):
        k = int(np.argmax(ang)) if turns > 0 else int(np.argmin(ang))
        ang[k] -= 2 * np.pi * np.sign(turns)
    x = z @ np.diag(1j * ang) @ z.conj().T
    x = 0.5 * (x - x.conj().T)  # remove rounding in the hermitian part
    x -= np.trace(x) / 3 * np.eye(3)
    if np.abs(expm(x) - target).max() > tol:
        raise ValueError("logarithm failed to reproduce the target")
    return x


def row_action_matrix(a: np.ndarray) -> np.ndarray:
    """Real 6x6 matrix of z -> z . a on column vectors (x1..x3, y1..y3)."""
    return realify(np.asarray(a).T)


def cutoff_b(s: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """1 for |s| <= inner, 0 for |s| >= outer, smooth in between."""
    u = (np.abs(s) - inner) / (outer - inner)
    return 1.0 - smooth_step(u)[0]


@dataclass
class FlowField:
    """Closed-form generator of a rotation or push flow.

    kind "rotate": sum_c b(|x - c|^2) M_c (x - c) with M_c the real matrix of rho0_c.
    kind "push":   prod_c (1 - b(|x - c|^2)) nu.
    """

    kind: str
    centers: np.ndarray  # (k, 6)
    inner: float  # squared radius where b = 1
    outer: float  # squared radius where b = 0
    generators: Optional[np.ndarray] = None  # (k, 6, 6) for rotations
    direction: Optional[np.ndarray] = None  # (6,) for pushes
    rtol: float = 1e-10
    atol: float = 1e-12

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "rotate":
            out = np.zeros_like(x)
            for c, m in zip(self.centers, self.generators):
                d = x - c
                out += cutoff_b((d * d).sum(1), self.inner, self.outer)[:, None] * (d @ m.T)
            return out
        w = np.ones(len(x))
        for c in self.centers:
            d = x - c
            w *= 1 - cutoff_b((d * d).sum(1), self.inner, self.outer)
        return w[:, None] * self.direction

    @property
    def support_radius(self) -> float:
        return float(np.sqrt(self.outer))


def rotation_flow(centers: Sequence[np.ndarray], logs: Sequence[np.ndarray], p3: float) -> FlowField:
    gens = np.array([row_action_matrix(x) for x in logs])
    return FlowField("rotate", np.array(centers, dtype=float), p3**2 / 4, 9 * p3**2 / 16, generators=gens)


def push_flow(centers: Sequence[np.ndarray], nu: np.ndarray, p3: float, eps: float) -> FlowField:
    return FlowField("push", np.array(centers, dtype=float), p3**2 / 4, (p3 + eps) ** 2 / 4,
                     direction=np.asarray(nu, dtype=float))


def integrate_flow(field: FlowField, x0: np.ndarray, t: float) -> np.ndarray:
    """Time-t map of the flow (adaptive Runge-Kutta 4(5)) applied to each row of x0."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if t == 0:
        return x0.copy()
    shape = x0.shape

    def rhs(_t, y):
        return field(y.reshape(shape)).ravel()

    sol = solve_ivp(rhs, (0.0, t), x0.ravel(), method="RK45", rtol=field.rtol, atol=field.atol)
    if not sol.success:
        raise EmbeddingError(f"flow integration failed: {sol.message}")
    return sol.y[:, -1].reshape(shape)


# --- page selection ---------------------------------------------------------


def _sphere_candidates(n: int) -> np.ndarray:
    """Deterministic low-discrepancy unit vectors in the 4-sphere orthogonal to x3."""
    from scipy.stats import norm

    m = max(int(np.ceil(np.log2(max(n, 2)))), 1)
    sob = qmc.Sobol(d=5, scramble=True, seed=0).random_base2(m)[:n]
    g = norm.ppf(np.clip(sob, 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    out = np.zeros((n, 6))
    out[:, [0, 1, 3, 4, 5]] = g
    return out


def _line_angles(nu: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Angle between the line of nu and each line in ``dirs`` (rows unit)."""
    return np.arccos(np.clip(np.abs(dirs @ nu), 0.0, 1.0))


def select_page_normal(occupied: np.ndarray, delta: float = 1e-2, candidates: int = 4096,
                       axis_tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Unit normal nu (orthogonal to x3) whose page stays >= delta away from the occupied cloud.

    Points are projected orthogonally to the spine and then to lines through the
    origin; points on the spine are ignored.  Returns nu and its angular clearance.
    """
    occ = np.atleast_2d(np.asarray(occupied, dtype=float)) if len(occupied) else np.zeros((0, 6))
    proj = occ.copy()
    if len(proj):
        proj[:, 2] = 0.0
        norms = np.linalg.norm(proj, axis=1)
        proj = proj[norms > axis_tol] / norms[norms > axis_tol, None]
    cands = _sphere_candidates(candidates)
    if len(proj) == 0:
        return cands[0], float(np.pi / 2)
    best, best_clear = None, -1.0
    for nu in cands:
        clear = float(_line_angles(nu, proj).min())
        if clear >= delta:
            return nu, clear
        if clear > best_clear:
            best, best_clear = nu, clear
    raise EmbeddingError(
        f"no page normal with clearance {delta} among {candidates} candidates "
        f"(best {best_clear:.3g}); increase the candidate count")


# --- planning ----------------------------------------------------------------


@dataclass
class VertexData:
    vid: object
    index: int
    position: np.ndarray
    collection: Optional[RealizingCollection]
    alignments: list  # per plane: complex 3x3 S with plane . S in normal form
    slopes: list  # per plane: slope from the independent pair normalization


@dataclass
class EdgePlan:
    ends: tuple  # (lower vertex id, upper vertex id) along the spine
    planes: tuple  # plane index used at each end
    rays: tuple  # unit ray directions (6,) at each end
    logs: tuple  # rho0 at each end (3x3 complex)
    nu: np.ndarray
    page_clearance: float
    eps: float
    push: float
    polyline: np.ndarray  # (samples, 6)
    certificates: dict = field(default_factory=dict)
    package: Optional[dict] = None


@dataclass
class EmbeddingPlan:
    graph: GraphSpec
    p3: float
    vertices: dict
    edges: list
    certificates: dict
    settings: dict

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.certificates.values())

    def to_dict(self, polyline_stride: int = 1) -> dict:
        def cm(a):
            a = np.asarray(a)
            return {"re": a.real.tolist(), "im": a.imag.tolist()}

        return {
            "p3": self.p3,
            "settings": self.settings,
            "graph": json.loads(self.graph.to_json()),
            "vertices": [
                {"id": v.vid, "position": v.position.tolist(),
                 "degree": 0 if v.collection is None else v.collection.degree,
                 "planes": [] if v.collection is None else [p.rows.tolist() for p in v.collection.planes],
                 "alignments": [cm(s) for s in v.alignments]}
                for v in self.vertices.values()
            ],
            "edges": [
                {"ends": list(e.ends), "planes": list(e.planes), "rays": [r.tolist() for r in e.rays],
                 "rho0": [cm(x) for x in e.logs], "page_normal": e.nu.tolist(),
                 "page_clearance": e.page_clearance, "eps": e.eps, "push": e.push,
                 "polyline": e.polyline[::polyline_stride].tolist(), "certificates": e.certificates,
                 "gluing": e.package}
                for e in self.edges
            ],
            "certificates": self.certificates,
            "passed": self.passed,
        }

    def export_json(self, path: str) -> None:
        atomic_write(path, json.dumps(self.to_dict(), indent=1, sort_keys=True))

    def export_obj(self, path: str) -> None:
        """Edge polylines projected to (x3, first two page-normal directions)."""
        normals = np.array([e.nu for e in self.edges]) if self.edges else np.zeros((0, 6))
        basis = np.zeros((3, 6))
        basis[0] = E3
        if len(normals):
            q, _ = np.linalg.qr(normals.T)
            basis[1] = q[:, 0]
            if q.shape[1] > 1:
                basis[2] = q[:, 1]
        lines = ["# edge curves projected to (x3, page directions)"]
        count = 0
        for e in self.edges:
            pts = e.polyline @ basis.T
            lines.append(f"o edge_{e.ends[0]}_{e.ends[1]}")
            lines += [f"v {p[0]:.10g} {p[1]:.10g} {p[2]:.10g}" for p in pts]
            lines.append("l " + " ".join(str(count + i + 1) for i in range(len(pts))))
            count += len(pts)
        atomic_write(path, "\n".join(lines) + "\n")


def _collection_alignments(col: RealizingCollection) -> tuple[list, list]:
    """Per plane, S with (cone, plane, ray) . S equal to the reflected gluing normal form."""
    s_ref = cone_alignment()
    al, slopes = [], []
    for j, plane in enumerate(col.planes):
        r = r_diag(j * col.step, j * col.step).entries
        s = np.linalg.inv(r) @ s_ref
        moved = plane.act(s)
        target = plane_from_complex(np.array([[0, 0, 1], [np.exp(1j * np.pi / 4), 0, 0],
                                              [0, np.exp(-1j * np.pi / 4), 0]]))
        if not moved.same_span(target):
            raise EmbeddingError(f"plane {j} does not reach the normal form")
        ray = col.rays[j]
        moved_ray = row_action_matrix(s) @ ray
        if abs(moved_ray @ E3) < 1 - 1e-8:
            raise EmbeddingError(f"ray of plane {j} is not sent to the spine")
        if moved_ray @ E3 < 0:
            ray = -ray
        tangent = plane_from_complex(pi0().entries @ r)
        slopes.append(align_pair(tangent, plane, ray).rho)
        al.append(s)
    return al, slopes


_COLLECTIONS: dict = {}


def _collection(n: int, seeds: int) -> RealizingCollection:
    key = (n, seeds)
    if key not in _COLLECTIONS:
        _COLLECTIONS[key] = realizing_collection(n, seeds=seeds)
    return _COLLECTIONS[key]


def _occupancy(vertices: dict, edges: list, p3: float, rng_seed: int = 0, per_piece: int = 400) -> np.ndarray:
    """Point samples of every realizing collection (inside B_{p3/2}) and every edge curve."""
    rng = np.random.default_rng(rng_seed)
    pts = []
    for v in vertices.values():
        if v.collection is None:
            continue
        for plane in v.collection.planes:
            c = rng.standard_normal((per_piece, 3))
            c *= (p3 / 2) * rng.uniform(0, 1, (per_piece, 1)) / np.linalg.norm(c, axis=1, keepdims=True)
            pts.append(v.position + c @ plane.frame())
        # cone: rays through points of the link torus
        a, b = rng.uniform(0, 2 * np.pi, (2, per_piece))
        z = np.stack([np.exp(1j * a), np.exp(1j * b), np.exp(-1j * (a + b))], 1) / np.sqrt(3)
        w = np.concatenate([z.real, z.imag], 1) * (p3 / 2) * rng.uniform(0, 1, (per_piece, 1))
        pts.append(v.position + w)
    for e in edges:
        pts.append(e.polyline)
    return np.concatenate(pts) if pts else np.zeros((0, 6))


def _edge_curve(p3: float, lo: VertexData, hi: VertexData, rot: FlowField, push: FlowField,
                t_push: float, samples: int) -> np.ndarray:
    s = np.linspace(0.0, 1.0, samples)
    seg = lo.position[None] + s[:, None] * (hi.position - lo.position)[None]
    back_push = FlowField(push.kind, push.centers, push.inner, push.outer, direction=-push.direction)
    mid = integrate_flow(back_push, seg, t_push)
    back_rot = FlowField(rot.kind, rot.centers, rot.inner, rot.outer, generators=-rot.generators)
    return integrate_flow(back_rot, mid, 1.0)


def _segment_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum distance between two polylines (segment to segment, exact)."""
    p0, p1 = a[:-1], a[1:]
    q0, q1 = b[:-1], b[1:]
    best = np.inf
    for i in range(0, len(p0), 256):
        u = (p1 - p0)[i:i + 256, None, :]
        v = (q1 - q0)[None]
        w = p0[i:i + 256, None, :] - q0[None]
        a_ = (u * u).sum(-1)
        b_ = (u * v).sum(-1)
        c_ = (v * v).sum(-1)
        d_ = (u * w).sum(-1)
        e_ = (v * w).sum(-1)
        den = a_ * c_ - b_ * b_
        sc = np.where(den > 1e-300, (b_ * e_ - c_ * d_) / np.where(den > 1e-300, den, 1), 0.0)
        sc = np.clip(sc, 0, 1)
        tc = np.clip((b_ * sc + e_) / np.where(c_ > 0, c_, 1), 0, 1)
        sc = np.clip((b_ * tc - d_) / np.where(a_ > 0, a_, 1), 0, 1)
        diff = w + sc[..., None] * u - tc[..., None] * v
        best = min(best, float(np.sqrt((diff * diff).sum(-1)).min()))
    return best


def plan_embedding(graph: GraphSpec, p3: float = 1.0, samples: int = 1000, seeds: int = 2000,
                   delta_page: float = 1e-2, glue_edges="auto", glue_options: Optional[dict] = None,
                   strict: bool = True) -> EmbeddingPlan:
    """Place the graph on the spine and construct and certify every edge curve.

    ``glue_edges`` is "all", "none", an integer k (first k edges) or "auto"
    (all edges when the graph has at most 8 of them).  With ``strict`` a failed
    certificate raises EmbeddingError; otherwise the plan records it.
    """
    if any(a == b for a, b in graph.edges):
        raise ValueError("self-loops are not allowed")
    vertices = {}
    for k, vid in enumerate(graph.vertices):
        pos = 2 * k * p3 * E3
        deg = graph.degree(vid)
        col = _collection(deg, seeds) if deg > 0 else None
        al, sl = _collection_alignments(col) if col is not None else ([], [])
        vertices[vid] = VertexData(vid, k, pos, col, al, sl)
    used = {vid: 0 for vid in graph.vertices}
    edges: list[EdgePlan] = []
    if glue_edges == "auto":
        glue_edges = "all" if len(graph.edges) <= 8 else "none"
    n_glue = len(graph.edges) if glue_edges == "all" else 0 if glue_edges == "none" else int(glue_edges)
    packages: dict = {}
    for n_edge, (a, b) in enumerate(graph.edges):
        lo, hi = sorted((vertices[a], vertices[b]), key=lambda v: v.index)
        ja, jb = used[lo.vid], used[hi.vid]
        used[lo.vid] += 1
        used[hi.vid] += 1
        s_lo = lo.alignments[ja]
        s_hi = hi.alignments[jb] @ FLIP
        logs = (su3_log(s_lo), su3_log(s_hi))
        rot = rotation_flow([lo.position, hi.position], logs, p3)
        occupied = _occupancy(vertices, edges, p3, rng_seed=n_edge)
        nu, clear = select_page_normal(occupied, delta_page)
        eps = _page_eps(occupied, nu, lo, hi, p3, delta_page)
        push = push_flow([lo.position, hi.position], nu, p3, eps)
        t_push = 2 * p3
        curve = _edge_curve(p3, lo, hi, rot, push, t_push, samples)
        rays = (_oriented_ray(lo, ja), _oriented_ray(hi, jb))
        e = EdgePlan((lo.vid, hi.vid), (ja, jb), rays, logs, nu, clear, eps, t_push, curve)
        e.certificates = _edge_certificates(e, lo, hi, rot, vertices, p3)
        if n_edge < n_glue:
            e.package = _edge_package(packages, hi.index - lo.index, p3, glue_options or {})
        edges.append(e)
    certs = _plan_certificates(graph, vertices, edges, p3)
    settings = {"samples": samples, "seeds": seeds, "delta_page": delta_page,
                "glued_edges": n_glue, "edge_order": [list(e.ends) for e in edges]}
    plan = EmbeddingPlan(graph, p3, vertices, edges, certs, settings)
    if strict and not plan.passed:
        raise EmbeddingError("; ".join(_failure_messages(certs)))
    return plan


def _failure_messages(certs: dict) -> list[str]:
    out = []
    for name, c in certs.items():
        if c["passed"]:
            continue
        if name == "edge_clauses":
            out += [f"edge {e} violates {clause}" for clause, edges in c["violations"].items() for e in edges]
        elif name == "disjoint_edges":
            out.append(f"edges {c['closest_pair']} intersect")
        else:
            out.append(f"{name} failed (value {c['value']})")
    return out


def _oriented_ray(v: VertexData, j: int) -> np.ndarray:
    ray = np.asarray(v.collection.rays[j], dtype=float)
    if (row_action_matrix(v.alignments[j]) @ ray) @ E3 < 0:
        ray = -ray
    return ray


def _page_eps(occupied, nu, lo, hi, p3, delta) -> float:
    """Distance from the occupied points lying near the page to the two spine rays.

    Used to size the push cutoff; capped at p3 / 2, the radius of the first edge's cutoff.
    """
    proj = occupied.copy()
    proj[:, 2] = 0
    r = np.linalg.norm(proj, axis=1)
    near = r <= 1e-9
    off = ~near
    ang = np.full(len(occupied), np.pi / 2)
    ang[off] = np.arccos(np.clip(np.abs(proj[off] @ nu) / r[off], 0, 1))
    in_page = near | (ang < delta)
    pts = occupied[in_page]
    far = (np.linalg.norm(pts - lo.position, axis=1) > p3 / 2) & (np.linalg.norm(pts - hi.position, axis=1) > p3 / 2)
    pts = pts[far]
    if len(pts) == 0:
        return p3 / 2
    seg_lo = np.linalg.norm(pts - lo.position, axis=1) - p3 / 2
    seg_hi = np.linalg.norm(pts - hi.position, axis=1) - p3 / 2
    return float(min(p3 / 2, np.minimum(seg_lo, seg_hi).min()))


def _edge_certificates(e: EdgePlan, lo: VertexData, hi: VertexData, rot: FlowField, vertices: dict, p3: float) -> dict:
    curve = e.polyline
    out = {}
    out["antihermitian"] = float(max(np.abs(x + x.conj().T).max() for x in e.logs))
    out["traceless"] = float(max(abs(np.trace(x)) for x in e.logs))
    out["page_normal_unit"] = float(abs(np.linalg.norm(e.nu) - 1) + abs(e.nu @ E3))
    # ends of the curve leave along the chosen rays
    d_lo = np.linalg.norm(curve - lo.position, axis=1)
    d_hi = np.linalg.norm(curve - hi.position, axis=1)
    inner_lo = (d_lo > 0) & (d_lo < p3 / 2 - 1e-9)
    inner_hi = (d_hi > 0) & (d_hi < p3 / 2 - 1e-9)
    dev_lo = curve[inner_lo] - lo.position - np.outer(d_lo[inner_lo], e.rays[0])
    dev_hi = curve[inner_hi] - hi.position - np.outer(d_hi[inner_hi], e.rays[1])
    out["leaves_along_rays"] = float(max(np.abs(dev_lo).max(initial=0), np.abs(dev_hi).max(initial=0)))
    # the fully pushed part (segment points outside the push cutoff balls) stays >= p3 from the spine
    s = np.linspace(0.0, 1.0, len(curve))
    length = np.linalg.norm(hi.position - lo.position)
    ball = (p3 + e.eps) / 2
    outside = (s * length >= ball) & ((1 - s) * length >= ball)
    radial = curve[outside].copy()
    radial[:, 2] = 0
    out["spine_clearance"] = float(np.linalg.norm(radial, axis=1).min(initial=np.inf))
    others = [v.position for v in vertices.values() if v.vid not in (lo.vid, hi.vid)]
    out["vertex_clearance"] = float(min((np.linalg.norm(curve - c, axis=1).min() for c in others), default=np.inf))
    # the rotation flow is the exact rotation on the inner balls
    test = lo.position + 0.4 * p3 * e.rays[0]
    exact = lo.position + row_action_matrix(expm(e.logs[0])) @ (test - lo.position)
    out["rotation_exact"] = float(np.abs(integrate_flow(rot, test, 1.0)[0] - exact).max())
    out["endpoints"] = float(max(np.abs(curve[0] - lo.position).max(), np.abs(curve[-1] - hi.position).max()))
    return out


EDGE_LIMITS = {
    "antihermitian": 1e-14,
    "traceless": 1e-14,
    "page_normal_unit": 1e-12,
    "leaves_along_rays": 1e-8,
    "rotation_exact": 1e-8,
    "endpoints": 1e-8,
}


def _edge_package(cache: dict, span: int, p3: float, options: dict) -> dict:
    """Certified gluing along a spine segment of half-length span * p3 (cached per span)."""
    if span not in cache:
        opts = {"comass_points": 4, "comass_starts": 500, "comass_sweep": 20_000, "closedness_samples": 200}
        opts.update(options)
        pkg = glue_segment("reflected", p3=span * p3, r0=p3 * 2**-5, **opts)
        cache[span] = {"passed": pkg.passed, "failed": pkg.failed(), "radius": pkg.grid.r,
                       "half_length": span * p3,
                       "certificates": {n: c.to_dict() for n, c in pkg.certificates.items()}}
    return cache[span]


def _turning_angle(a: np.ndarray, b: np.ndarray) -> float:
    c = np.clip(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)), -1, 1)
    return float(np.arccos(c))


def _plan_certificates(graph: GraphSpec, vertices: dict, edges: list, p3: float) -> dict:
    certs = {}

    def put(name, value, ok, **detail):
        certs[name] = {"value": value, "passed": bool(ok), **detail}

    pos = np.array([v.position for v in vertices.values()])
    sep = min((np.linalg.norm(pos[i] - pos[j]) for i in range(len(pos)) for j in range(i + 1, len(pos))), default=np.inf)
    put("distinct_vertices", float(sep), sep > 0)

    # degree realization: collection size = degree, one ray per plane, transverse planes
    bad = []
    for v in vertices.values():
        deg = graph.degree(v.vid)
        col = v.collection
        if deg == 0:
            continue
        if col is None or len(col.planes) != deg or any(c != 1 for c in col.ray_counts) \
                or any(d != 0 for d in col.intersection_dims.values()):
            bad.append(v.vid)
    put("degree_realization", len(bad), not bad, vertices=[str(b) for b in bad])

    slopes = [abs(s) for v in vertices.values() for s in v.slopes]
    spread = float(max(slopes) - min(slopes)) if slopes else 0.0
    put("common_slope", spread, spread <= 1e-8, slope=float(np.mean(slopes)) if slopes else None)

    # pairwise disjointness away from shared vertices
    min_gap, worst = np.inf, None
    for i in range(len(edges)):
        for j in range(i + 1, len(edges)):
            a, b = edges[i], edges[j]
            shared = set(a.ends) & set(b.ends)
            pa, pb = a.polyline, b.polyline
            for vid in shared:
                c = vertices[vid].position
                pa = pa[np.linalg.norm(pa - c, axis=1) > p3 / 4]
                pb = pb[np.linalg.norm(pb - c, axis=1) > p3 / 4]
            if len(pa) < 2 or len(pb) < 2:
                continue
            d = _segment_distance(pa, pb)
            if d < min_gap:
                min_gap, worst = d, (list(a.ends), list(b.ends))
    put("disjoint_edges", float(min_gap), min_gap > 0, closest_pair=worst)

    # near a shared vertex the curves are rays; distinct directions and a positive angle
    min_angle = np.pi
    for vid, v in vertices.items():
        tangents = []
        for e in edges:
            for end, ray in zip(e.ends, e.rays):
                if end == vid:
                    tangents.append(ray)
        for i in range(len(tangents)):
            for j in range(i + 1, len(tangents)):
                min_angle = min(min_angle, _turning_angle(tangents[i], tangents[j]))
    put("non_tangential", float(min_angle), min_angle > 1e-3)

    worst_edge = {}
    for e in edges:
        for name, lim in EDGE_LIMITS.items():
            if not e.certificates[name] <= lim:
                worst_edge.setdefault(name, []).append(list(e.ends))
        if not e.certificates["spine_clearance"] >= p3:
            worst_edge.setdefault("spine_clearance", []).append(list(e.ends))
        if not e.certificates["vertex_clearance"] >= p3:
            worst_edge.setdefault("vertex_clearance", []).append(list(e.ends))
    put("edge_clauses", len(worst_edge), not worst_edge, violations=worst_edge)

    glued = [e.package for e in edges if e.package is not None]
    put("gluing_packages", len(glued), all(p["passed"] for p in glued),
        failed=[f for p in glued for f in p["failed"]])
    return certs
