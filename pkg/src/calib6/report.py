"""Versioned JSON reports for every verification command."""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .form_orbit import kappa_mismatches, kappa_table, kernel_contains_sl3c, stabilizer_dimension
from .forms6 import special_lagrangian_form
from .gluing import MODES, THRESHOLDS, atomic_write, config_hash, glue_segment
from .graph_embed import GraphSpec, plan_embedding
from .hl_cone import RAY_TABLE, RESIDUAL_TOL, RayCountError, count_family_rays, has_antipodal_pair

SCHEMA = "calib6/1"

# what each gluing certificate measures, echoed into the report
GLUING_REFS = {
    "potential_on_segment": "potential, gradient and Hessian deviation on the segment",
    "mean_curvature_on_segment": "mean curvature of Sigma on the segment",
    "angle_on_segment": "Lagrangian angle on the segment",
    "angle_derivative_on_P": "derivative of the Lagrangian angle along the segment",
    "closedness": "finite-difference exterior derivative of psi",
    "calibrates_sigma": "psi on unit tangent 3-vectors of Sigma",
    "calibrates_P": "psi on unit tangent 3-vectors of P",
    "end_zone_psi": "psi equals phi near the segment ends",
    "end_zone_metric": "g equals the Euclidean metric near the segment ends",
    "comass_excess": "sampled comass of psi in g",
    "basin": "distance of the frame-pulled form to phi",
    "modified_form_routes": "two constructions of the rotated form agree",
    "chart_nondegenerate": "tube chart Jacobian determinant",
    "metric_positive": "smallest eigenvalue of g",
    "psi_metric_route": "psi against the pullback of phi by the metric frame",
    "correction_identity": "factorization correction on Sigma, P and end zones",
}


@dataclass
class Check:
    name: str
    passed: bool
    value: object
    tol: object
    ref: str
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"name": self.name, "status": "pass" if self.passed else "fail",
               "value": _plain(self.value), "tol": _plain(self.tol), "paper_ref": self.ref}
        if self.detail:
            out["detail"] = _plain(self.detail)
        return out


@dataclass
class Report:
    command: str
    config: dict
    checks: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, value, tol, ref: str, **detail) -> Check:
        c = Check(name, bool(passed), value, tol, ref, detail)
        self.checks.append(c)
        return c

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "command": self.command,
            "config": _plain(self.config),
            "config_hash": config_hash(self.config),
            "status": "pass" if self.passed else "fail",
            "checks": [c.to_dict() for c in self.checks],
            "data": _plain(self.data),
            "timings": self.timings,
            "files": self.files,
        }

    def write(self, path: str) -> None:
        atomic_write(path, json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def summary_lines(self) -> list[str]:
        lines = [f"{self.command}: {'PASS' if self.passed else 'FAIL'} ({len(self.checks)} checks)"]
        for c in self.checks:
            lines.append(f"  [{'pass' if c.passed else 'FAIL'}] {c.name}: {_short(c.value)} (tol {_short(c.tol)})")
        return lines


def _plain(x):
    """JSON-friendly copy: numpy scalars and arrays become Python numbers and lists."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, (list, tuple)) and len(v) > 8:
        return f"[{len(v)} items]"
    return str(v)


def validate_report(data: dict) -> list[str]:
    """Structural problems with a report dictionary (empty when valid)."""
    problems = []
    for key, kind in (("schema", str), ("command", str), ("config", dict), ("checks", list), ("files", list)):
        if not isinstance(data.get(key), kind):
            problems.append(f"missing or malformed field {key!r}")
    if data.get("schema") != SCHEMA:
        problems.append(f"schema is {data.get('schema')!r}, expected {SCHEMA!r}")
    for i, c in enumerate(data.get("checks", [])):
        for key in ("name", "status", "value", "tol", "paper_ref"):
            if key not in c:
                problems.append(f"check {i} lacks {key!r}")
        if c.get("status") not in ("pass", "fail"):
            problems.append(f"check {i} has status {c.get('status')!r}")
    return problems


# --- commands ----------------------------------------------------------------


def verify_rays(seeds: int = 50_000, check_resolution: bool = True) -> Report:
    rep = Report("verify-rays", {"seeds": seeds, "check_resolution": check_resolution})
    t0 = time.perf_counter()
    rows = []
    for (tau, theta), expected in RAY_TABLE:
        label = f"rays({tau:.4f},{theta:.4f})"
        ref = f"ray table row tau={tau:.4f} theta={theta:.4f}"
        try:
            r = count_family_rays(tau, theta, seeds=seeds, check_resolution=check_resolution)
        except RayCountError as exc:
            rep.add(label, False, None, expected, ref, error=str(exc))
            rows.append({"tau": tau, "theta": theta, "count": None, "expected": expected})
            continue
        rows.append({"tau": tau, "theta": theta, "count": r.count, "expected": expected,
                     "rays": r.rays, "residuals": r.residuals, "stats": r.stats})
        rep.add(label, r.count == expected, r.count, expected, ref)
        worst = max(r.residuals, default=0.0)
        rep.add(f"{label}.residual", worst <= RESIDUAL_TOL, worst, RESIDUAL_TOL, ref)
        if check_resolution:
            rep.add(f"{label}.resolution", r.stats["resolution_stable"], r.stats["count_at_4x"], r.count, ref)
        rep.add(f"{label}.no_antipodal_pair", not has_antipodal_pair(r.rays), r.count, None, ref)
        if r.count == 4:
            cos = r.cosines()[np.triu_indices(4, 1)]
            dev = float(np.abs(cos + 1 / 3).max())
            rep.add("tetrahedron_cosines", dev <= 1e-8, dev, 1e-8, "four rays at regular tetrahedron vertices",
                    cosines=cos)
    rep.data["rows"] = rows
    rep.data["counts"] = [row["count"] for row in rows]
    rep.timings["total"] = time.perf_counter() - t0
    return rep


def verify_orbit(nmax: int = 12) -> Report:
    rep = Report("verify-orbit", {"nmax": nmax})
    t0 = time.perf_counter()
    rank, kernel = stabilizer_dimension(special_lagrangian_form())
    rep.add("orbit_rank", rank == 20, rank, 20, "rank of the 20 linear stabilizer equations")
    rep.add("stabilizer_dimension", kernel == 16, kernel, 16, "kernel of the orbit differential")
    rep.add("kernel_contains_sl3c", kernel_contains_sl3c(special_lagrangian_form()), True, True,
            "complex special linear algebra fixes phi")
    rep.timings["orbit"] = time.perf_counter() - t0
    _kappa_checks(rep, nmax)
    rep.timings["total"] = time.perf_counter() - t0
    return rep


def kappa_report(nmax: int = 12) -> Report:
    rep = Report("kappa", {"nmax": nmax})
    _kappa_checks(rep, nmax)
    rep.data["table"] = [{"n": e.n, "k": e.k, "kappa": e.kappa, "positive": e.positive,
                          "predicted_positive": e.predicted_positive} for e in kappa_table(nmax)]
    return rep


def _kappa_checks(rep: Report, nmax: int) -> None:
    bad = kappa_mismatches(nmax)
    rep.add(f"kappa_trichotomy_n<={nmax}", not bad, len(bad), 0, "sign pattern of n^2 - C(n,k)",
            mismatches=[{"n": e.n, "k": e.k, "kappa": e.kappa} for e in bad])
    if nmax >= 2:
        bad2 = [e for e in bad if e.n >= 2]
        rep.add(f"kappa_trichotomy_2<=n<={nmax}", not bad2, len(bad2), 0, "sign pattern of n^2 - C(n,k)")
    two = [e for e in kappa_table(nmax) if e.k == 2 and e.n >= 2]
    rep.add("kappa_k2_positive", all(e.positive for e in two), len(two), len(two), "degree-two forms")


def glue_report(mode: str, mesh: Optional[str] = None, package_json: Optional[str] = None, **options) -> Report:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    rep = Report("glue-segment", {"mode": mode, **options})
    t0 = time.perf_counter()
    pkg = glue_segment(mode, **options)
    for name, c in pkg.certificates.items():
        rep.add(name, c.passed, c.value, THRESHOLDS[name], GLUING_REFS.get(name, name), **c.detail)
    rep.data["grid"] = pkg.to_dict()["grid"]
    rep.data["summary"] = pkg.summary
    rep.timings.update(pkg.timings)
    if mesh:
        rep.files.append(pkg.export_obj(mesh))
    if package_json:
        pkg.export_json(package_json)
        rep.files.append(package_json)
    rep.timings["total"] = time.perf_counter() - t0
    return rep


def embed_report(graph: GraphSpec, out_dir: Optional[str] = None, **options) -> Report:
    rep = Report("embed-graph", {"graph": {"vertices": list(graph.vertices), "edges": [list(e) for e in graph.edges]},
                                 **options})
    t0 = time.perf_counter()
    plan = plan_embedding(graph, strict=False, **options)
    for name, c in plan.certificates.items():
        tol = {"disjoint_edges": 0.0, "non_tangential": 1e-3}.get(name)
        detail = {k: v for k, v in c.items() if k not in ("value", "passed")}
        rep.add(name, c["passed"], c["value"], tol, f"embedding clause: {name.replace('_', ' ')}", **detail)
    for e in plan.edges:
        rep.data.setdefault("edges", []).append({
            "ends": list(e.ends), "planes": list(e.planes), "page_clearance": e.page_clearance,
            "eps": e.eps, "certificates": e.certificates,
            "gluing_passed": None if e.package is None else e.package["passed"]})
    rep.data["pages"] = len({tuple(np.round(e.nu, 12)) for e in plan.edges})
    rep.data["edge_order"] = plan.settings["edge_order"]
    if out_dir:
        pj = os.path.join(out_dir, "plan.json")
        po = os.path.join(out_dir, "edges.obj")
        plan.export_json(pj)
        plan.export_obj(po)
        rep.files += [pj, po]
    rep.timings["total"] = time.perf_counter() - t0
    return rep
