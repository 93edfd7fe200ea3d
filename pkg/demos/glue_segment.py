"""Glue two opposite cones along a segment and print the certificate table.

Pass "slopes" or "tangent" as the first argument for the other configurations.
"""
import sys

from calib6.gluing import glue_segment

mode = sys.argv[1] if len(sys.argv) > 1 else "reflected"
pkg = glue_segment(mode, comass_points=4)
for name, c in pkg.certificates.items():
    print(f"{'pass' if c.passed else 'FAIL'}  {name:28s} {c.value:.3e}")
print("correction constant", round(pkg.summary["correction_constant"], 3))
pkg.export_obj(f"{mode}.obj")
print(f"wrote {mode}.obj")
