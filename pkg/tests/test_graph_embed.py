import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from calib6 import graph_embed
from calib6.graph_embed import (
    E3, FLIP, EmbeddingError, GraphSpec, complete_graph, cutoff_b, integrate_flow, path_graph, plan_embedding,
    push_flow, random_multigraph, rotation_flow, row_action_matrix, select_page_normal, star_graph, su3_log,
)


def _random_su3(rng):
    z = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return q / np.linalg.det(q) ** (1 / 3)


# --- graphs -------------------------------------------------------------------


def test_graph_constructors():
    assert path_graph(3).edges == ((0, 1), (1, 2))
    assert len(complete_graph(4).edges) == 6
    s = star_graph(7)
    assert s.degree(0) == 7 and all(s.degree(v) == 1 for v in range(1, 8))
    g = random_multigraph(6, 10, seed=3)
    assert len(g.edges) == 10 and sum(g.degrees.values()) == 20
    assert random_multigraph(6, 10, seed=3) == g


def test_graph_json_round_trip():
    g = GraphSpec.from_edges([("a", "b"), ("b", "c"), ("a", "b")])
    assert GraphSpec.from_json(g.to_json()) == g
    assert g.degree("b") == 3


def test_graph_rejects_bad_input():
    with pytest.raises(ValueError):
        GraphSpec.from_edges([(0, 0)])
    with pytest.raises(ValueError):
        GraphSpec((0, 1), ((0, 2),))


# --- su(3) logarithm ------------------------------------------------------------


def test_su3_log_examples():
    assert np.allclose(su3_log(np.eye(3)), 0, atol=1e-15)
    x = su3_log(np.diag([np.exp(0.3j), np.exp(-0.3j), 1]))
    assert np.allclose(x, np.diag([0.3j, -0.3j, 0]), atol=1e-14)
    x = su3_log(FLIP)
    assert np.allclose(expm(x), FLIP, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_su3_log_round_trip(seed):
    u = _random_su3(np.random.default_rng(seed))
    x = su3_log(u)
    assert np.abs(x + x.conj().T).max() <= 1e-14
    assert abs(np.trace(x)) <= 1e-14
    assert np.abs(expm(x) - u).max() <= 1e-10


def test_su3_log_rejects_non_special():
    with pytest.raises(ValueError):
        su3_log(np.diag([1j, 1, 1]))


def test_row_action_matrix_matches_complex_product(rng):
    a = _random_su3(rng)
    z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    w = z @ a
    assert np.allclose(row_action_matrix(a) @ np.r_[z.real, z.imag], np.r_[w.real, w.imag])


# --- flows -------------------------------------------------------------------


@pytest.fixture(scope="module")
def rotation():
    rng = np.random.default_rng(7)
    c = [np.zeros(6), 2 * E3]
    logs = [su3_log(_random_su3(rng)), su3_log(_random_su3(rng))]
    return rotation_flow(c, logs, 1.0), logs


def test_cutoff_b():
    s = np.array([0.0, 0.25, 0.5625, 1.0])
    assert np.allclose(cutoff_b(s, 0.25, 0.5625), [1, 1, 0, 0])


def test_rotation_is_exact_in_inner_ball(rotation, rng):
    field, logs = rotation
    x = rng.standard_normal((10, 6))
    x *= 0.45 / np.linalg.norm(x, axis=1, keepdims=True)
    moved = integrate_flow(field, x, 1.0)
    assert np.abs(moved - x @ row_action_matrix(expm(logs[0])).T).max() <= 1e-8


def test_rotation_preserves_spheres(rotation, rng):
    field, _ = rotation
    x = rng.standard_normal((20, 6)) * 0.3
    moved = integrate_flow(field, x, 1.0)
    assert np.allclose(np.linalg.norm(moved, axis=1), np.linalg.norm(x, axis=1), atol=1e-8)
    # the generator is tangent to spheres about each center
    assert np.abs((field(x) * x).sum(1)).max() <= 1e-14


def test_flows_vanish_outside_support(rotation, rng):
    field, _ = rotation
    push = push_flow([np.zeros(6), 2 * E3], np.r_[1.0, 0, 0, 0, 0, 0], 1.0, 0.2)
    x = rng.standard_normal((100, 6))
    x *= (0.8 + rng.uniform(0, 1, (100, 1))) / np.linalg.norm(x, axis=1, keepdims=True)
    assert np.all(field(x) == 0)
    assert np.array_equal(integrate_flow(field, x, 1.0), x)
    # push is zero inside the inner balls and nu outside both outer balls
    inner = rng.standard_normal((20, 6))
    inner *= 0.49 / np.linalg.norm(inner, axis=1, keepdims=True)
    assert np.all(push(inner) == 0)
    assert np.allclose(push(np.array([[5.0, 0, 1, 0, 0, 0]])), [[1, 0, 0, 0, 0, 0]])


# --- page selection -------------------------------------------------------------


def test_page_normal_with_empty_occupancy():
    nu, clear = select_page_normal(np.zeros((0, 6)))
    assert abs(np.linalg.norm(nu) - 1) < 1e-12 and nu[2] == 0 and clear == pytest.approx(np.pi / 2)


def test_page_normal_avoids_points():
    pts = np.array([[1.0, 0, 3, 0, 0, 0], [0, 1.0, -2, 0, 0, 0], [0, 0, 5, 0, 0, 0]])
    nu, clear = select_page_normal(pts, delta=0.1)
    assert nu[2] == 0 and clear >= 0.1
    dirs = pts[:2].copy()
    dirs[:, 2] = 0
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    assert np.arccos(np.abs(dirs @ nu)).min() >= 0.1


def test_page_normal_impossible_clearance_raises():
    with pytest.raises(EmbeddingError):
        select_page_normal(np.array([[1.0, 0, 0, 0, 0, 0]]), delta=2.0, candidates=64)


# --- plans ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def k4_plan():
    return plan_embedding(complete_graph(4), glue_edges="none")


def test_star_plan(rng):
    plan = plan_embedding(star_graph(4), glue_edges="none", samples=400)
    assert plan.passed, plan.certificates
    rays = [e.rays[0] for e in plan.edges]
    assert len(rays) == 4 and plan.certificates["non_tangential"]["value"] > 1e-3


@pytest.mark.slow
def test_path_plan_with_gluing():
    plan = plan_embedding(path_graph(3), samples=400)
    assert plan.passed, plan.certificates
    assert all(e.package is not None and e.package["passed"] for e in plan.edges)
    assert plan.settings["glued_edges"] == 2


def test_k4_plan_certificates(k4_plan):
    c = k4_plan.certificates
    assert k4_plan.passed, c
    assert c["disjoint_edges"]["value"] > 0
    assert c["common_slope"]["value"] <= 1e-8
    for e in k4_plan.edges:
        assert e.certificates["spine_clearance"] >= k4_plan.p3
        assert e.certificates["leaves_along_rays"] <= 1e-8
        for x in e.logs:
            assert np.abs(expm(x).conj().T @ expm(x) - np.eye(3)).max() <= 1e-12


def test_k4_curves_pass_through_vertices_along_rays(k4_plan):
    for e in k4_plan.edges:
        lo = k4_plan.vertices[e.ends[0]].position
        d = np.linalg.norm(e.polyline - lo, axis=1)
        near = (d > 0) & (d < 0.4)
        unit = (e.polyline[near] - lo) / d[near, None]
        assert np.allclose(unit, e.rays[0], atol=1e-8)


def test_plan_is_deterministic(k4_plan, tmp_path):
    again = plan_embedding(complete_graph(4), glue_edges="none")
    k4_plan.export_json(str(tmp_path / "a.json"))
    again.export_json(str(tmp_path / "b.json"))
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_plan_exports(k4_plan, tmp_path):
    k4_plan.export_obj(str(tmp_path / "e.obj"))
    text = (tmp_path / "e.obj").read_text()
    assert text.count("\no edge_") == 6
    data = json.loads(json.dumps(k4_plan.to_dict()))
    assert data["passed"] and len(data["edges"]) == 6


def test_strict_mode_raises_on_failed_clause(monkeypatch):
    monkeypatch.setitem(graph_embed.EDGE_LIMITS, "endpoints", -1.0)
    with pytest.raises(EmbeddingError, match="endpoints"):
        plan_embedding(path_graph(2), glue_edges="none", samples=200)
    plan = plan_embedding(path_graph(2), glue_edges="none", samples=200, strict=False)
    assert not plan.passed and plan.certificates["edge_clauses"]["violations"]["endpoints"]


def test_plan_rejects_self_loops():
    with pytest.raises(ValueError):
        plan_embedding(GraphSpec((0,), ((0, 0),)))
