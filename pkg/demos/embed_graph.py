"""Embed K4 as the singular set: one page per edge, certified clearances."""
from calib6.graph_embed import complete_graph, plan_embedding

plan = plan_embedding(complete_graph(4), glue_edges="none")
for e in plan.edges:
    c = e.certificates
    print(f"edge {e.ends}: planes {e.planes}, page clearance {e.page_clearance:.3f}, "
          f"spine clearance {c['spine_clearance']:.3f}")
for name, c in plan.certificates.items():
    print(f"{'pass' if c['passed'] else 'FAIL'}  {name}: {c['value']}")
plan.export_obj("k4_edges.obj")
