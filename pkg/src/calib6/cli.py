"""Command line entry point: ``calib6 <command> [options]``.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .form_orbit import FactorizationError
from .gluing import GluingError
from .graph_embed import EmbeddingError, GraphSpec
from .hl_cone import CertificationError, RayCountError, RootError
from .report import embed_report, glue_report, kappa_report, verify_orbit, verify_rays

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (RayCountError, RootError, CertificationError, FactorizationError, GluingError,
                  EmbeddingError, np.linalg.LinAlgError, FloatingPointError)

# defaults per command; a JSON config file overrides these, explicit flags override both
DEFAULTS = {
    "verify-rays": {"seeds": 50_000, "no_resolution_check": False},
    "verify-orbit": {"nmax": 12},
    "kappa": {"nmax": 12},
    "glue-segment": {"mode": None, "rho1": 0.3, "rho2": 0.9, "p3": 1.0, "r0": 2.0**-5, "radius": None,
                     "grid": 33, "axial": None, "comass_points": 20, "seed": 0, "mesh": None,
                     "package": None},
    "embed-graph": {"graph": None, "glue_edges": "auto", "p3": 1.0, "samples": 1000, "seeds": 2000,
                    "delta_page": 1e-2},
}
MINIMA = {"seeds": 100, "grid": 9, "axial": 9, "samples": 10, "nmax": 1, "comass_points": 1}


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="calib6", description="Certify special Lagrangian calibration constructions.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of option values (flags take precedence)")
        sp.add_argument("--out", help="write the JSON report here (embed-graph: output directory)")
        sp.add_argument("--quiet", action="store_true", help="print only the overall status")

    sp = sub.add_parser("verify-rays", help="count cone rays in the seven reference planes")
    sp.add_argument("--seeds", type=int)
    sp.add_argument("--no-resolution-check", action="store_true", default=None)
    common(sp)

    for name, helptext in (("verify-orbit", "stabilizer rank of phi and the kappa sign pattern"),
                           ("kappa", "kappa(k, n) sign table only")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--nmax", type=int)
        common(sp)

    sp = sub.add_parser("glue-segment", help="build and certify a calibration on a tube around a segment")
    sp.add_argument("--mode", choices=("reflected", "slopes", "tangent"))
    sp.add_argument("--rho1", type=float)
    sp.add_argument("--rho2", type=float)
    sp.add_argument("--p3", type=float, help="half-length of the segment")
    sp.add_argument("--r0", type=float, help="end-zone scale")
    sp.add_argument("--radius", type=float, help="tube radius (default r0 / 2)")
    sp.add_argument("--grid", type=int, help="nodes per transverse direction")
    sp.add_argument("--axial", type=int, help="nodes along the segment (default per mode)")
    sp.add_argument("--comass-points", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mesh", help="write an OBJ of Sigma, P and the segment")
    sp.add_argument("--package", help="write the full certificate package as JSON")
    common(sp)

    sp = sub.add_parser("embed-graph", help="embed a graph as the singular set of glued cones")
    sp.add_argument("--graph", help='JSON file {"vertices": [...], "edges": [[a, b], ...]}')
    sp.add_argument("--glue-edges", help="all, none, auto or a number of edges")
    sp.add_argument("--p3", type=float)
    sp.add_argument("--samples", type=int, help="polyline samples per edge")
    sp.add_argument("--seeds", type=int, help="seed lattice size for ray counting")
    sp.add_argument("--delta-page", type=float)
    common(sp)
    return p


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key, low in MINIMA.items():
        if cfg.get(key) is not None and cfg[key] < low:
            raise UsageError(f"--{key.replace('_', '-')} must be at least {low}")
    for key in ("p3", "r0", "radius", "delta_page"):
        if cfg.get(key) is not None and not cfg[key] > 0:
            raise UsageError(f"--{key.replace('_', '-')} must be positive")
    return cfg


def run(args: argparse.Namespace):
    cfg = resolve_config(args)
    cmd = args.command
    if cmd == "verify-rays":
        return verify_rays(cfg["seeds"], not cfg["no_resolution_check"])
    if cmd == "verify-orbit":
        return verify_orbit(cfg["nmax"])
    if cmd == "kappa":
        return kappa_report(cfg["nmax"])
    if cmd == "glue-segment":
        if cfg["mode"] is None:
            raise UsageError("--mode is required")
        opts = {"p3": cfg["p3"], "r0": cfg["r0"], "r": cfg["radius"], "n_perp": cfg["grid"],
                "n_axial": cfg["axial"] or _axial_default(cfg["mode"], cfg["grid"]),
                "comass_points": cfg["comass_points"], "seed": cfg["seed"]}
        if cfg["mode"] == "slopes":
            opts.update(rho1=cfg["rho1"], rho2=cfg["rho2"])
        return glue_report(cfg["mode"], mesh=cfg["mesh"], package_json=cfg["package"], **opts)
    if cmd == "embed-graph":
        if cfg["graph"] is None:
            raise UsageError("--graph is required")
        try:
            with open(cfg["graph"]) as fh:
                graph = GraphSpec.from_json(fh.read())
        except (OSError, json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise UsageError(f"invalid graph file: {exc}") from exc
        glue = cfg["glue_edges"]
        if glue not in ("all", "none", "auto"):
            try:
                glue = int(glue)
            except ValueError:
                raise UsageError("--glue-edges must be all, none, auto or an integer") from None
        return embed_report(graph, out_dir=args.out, p3=cfg["p3"], samples=cfg["samples"], seeds=cfg["seeds"],
                            delta_page=cfg["delta_page"], glue_edges=glue)
    raise UsageError(f"unknown command {cmd!r}")


def _axial_default(mode: str, grid: int) -> int:
    # the slope profile needs four times the transverse density along the segment
    return 4 * (grid - 1) + 1 if mode == "slopes" else grid


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        report = run(args)
    except UsageError as exc:
        print(f"calib6: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"calib6: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.out:
        path = os.path.join(args.out, "report.json") if args.command == "embed-graph" else args.out
        report.write(path)
        report.files.append(path)
    lines = report.summary_lines()
    print(lines[0] if args.quiet else "\n".join(lines))
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
