"""Command-line interface.

Subcommands: certify a given region, grow regions from seed points, propose
seed regions, rasterize a 2-DOF TC space, and re-verify a stored bundle.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import yaml

from .bundle import RegionBundle, verify_bundle
from .certifier import CertifyOptions, certify_polytope, enumerate_pairs
from .pipeline import (PipelineOptions, coverage_fraction, emit_plots,
                       rasterize_tcspace, run_pipeline, seed_region_polytope)
from .polytope import TcPolytope
from .regions import max_inscribed_ellipsoid
from .scenefile import parse_scene
from .seeding import SeedingOptions


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--plane-degree", type=int, default=1,
                   help="degree of the separating-plane polynomials in s "
                        "(default: 1, affine)")
    p.add_argument("--mult-degree", type=int, default=1,
                   help="per-variable degree of multiplier Gram bases "
                        "(default: 1; multipliers get twice this)")
    p.add_argument("--no-escalate", action="store_true",
                   help="disable the one-step degree escalation retry")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel workers for per-pair certification "
                        "(default: 1)")
    p.add_argument("--eig-tol", type=float, default=1e-7,
                   help="Gram eigenvalue tolerance of the verification gate "
                        "(default: 1e-7)")
    p.add_argument("--res-tol", type=float, default=1e-6,
                   help="identity residual tolerance of the verification "
                        "gate (default: 1e-6)")
    p.add_argument("--solver-seed", type=int, default=0,
                   help="seed for the randomized parts of seeding "
                        "(default: 0; the SDP solver itself is "
                        "deterministic)")


def _certify_options(args) -> CertifyOptions:
    return CertifyOptions(plane_degree=args.plane_degree,
                          mult_coord_degree=args.mult_degree,
                          escalate=not args.no_escalate,
                          workers=args.workers,
                          eig_tol=args.eig_tol, res_tol=args.res_tol)


def _load_region(path: str) -> TcPolytope:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return TcPolytope(np.array(doc["C"], dtype=float),
                      np.array(doc["d"], dtype=float),
                      list(doc.get("row_tags", [])))


def cmd_certify(args) -> int:
    scene = parse_scene(args.scene)
    P = _load_region(args.region)
    report = certify_polytope(scene, P, _certify_options(args))
    print(f"pairs: {report.n_pairs}")
    print(f"largest PSD block rows: {report.largest_gram}")
    for pid, r in report.pair_results.items():
        print(f"  {pid[0]} / {pid[1]}: {r.status} ({r.solve_time:.3f}s)")
    print(f"verdict: {report.verdict}")
    return 0 if report.certified else 1


def cmd_grow(args) -> int:
    scene = parse_scene(args.scene)
    seeds = [np.array([float(x) for x in s.split(",")]) for s in args.seed]
    opts = PipelineOptions(
        certify=_certify_options(args),
        seeding=SeedingOptions(seed=args.solver_seed),
        seed_mode="octagon" if args.octagon else "iris",
        octagon_side=args.octagon_side,
        alternation_tol=args.tol, max_iters=args.max_iters,
        delta_max=args.delta_max)
    result = run_pipeline(scene, seeds, opts)
    os.makedirs(args.out, exist_ok=True)
    for k, outcome in enumerate(result.outcomes):
        if outcome.bundle is None:
            continue
        path = os.path.join(args.out, f"region_{k:02d}.json")
        outcome.bundle.save(path)
        outcome.log.to_csv(os.path.join(args.out, f"region_{k:02d}_log.csv"))
        print(f"wrote {path}")
    raster = None
    if scene.chain.tc_limits().dim == 2 and args.plots:
        raster = rasterize_tcspace(scene, resolution=args.raster_resolution)
        cov = coverage_fraction(raster, [b.polytope for b in result.bundles])
        print(f"coverage of oracle-free cells: {100 * cov:.1f}%")
    if args.plots:
        for path in emit_plots(args.out, result, raster):
            print(f"wrote {path}")
    print(result.summary())
    return 0 if result.all_ok else 1


def cmd_seed(args) -> int:
    scene = parse_scene(args.scene)
    opts = PipelineOptions(seeding=SeedingOptions(seed=args.solver_seed))
    os.makedirs(args.out, exist_ok=True)
    status = 0
    for k, text in enumerate(args.point):
        s = np.array([float(x) for x in text.split(",")])
        try:
            P = seed_region_polytope(scene, s, opts)
        except (ValueError, RuntimeError) as exc:
            print(f"seed {text}: FAILED ({exc})")
            status = 1
            continue
        det = max_inscribed_ellipsoid(P).volume_proxy()
        path = os.path.join(args.out, f"seed_{k:02d}.yaml")
        with open(path, "w") as fh:
            yaml.safe_dump({"C": P.C.tolist(), "d": P.d.tolist(),
                            "row_tags": P.row_tags}, fh)
        print(f"seed {text}: rows={P.nrows} ellipsoid-det={det:.4g} -> {path}")
    return status


def cmd_raster(args) -> int:
    scene = parse_scene(args.scene)
    raster = rasterize_tcspace(scene, resolution=args.resolution)
    raster.to_csv(args.out)
    free = float(raster.free.mean())
    print(f"wrote {args.out}; free fraction {free:.3f}")
    return 0


def cmd_verify(args) -> int:
    bundle = RegionBundle.load(args.bundle)
    report = verify_bundle(bundle, eig_tol=args.eig_tol, res_tol=args.res_tol)
    print(f"max identity residual: {report.max_residual:.3e}")
    print(f"min Gram eigenvalue:  {report.min_gram_eig:.3e}")
    for issue in report.issues:
        print(f"  issue: {issue}")
    print("verdict:", "verified" if report.ok else "NOT verified")
    return 0 if report.ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tcfree",
        description="Certified collision-free polytopes in tangent "
                    "configuration space")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="certify a region file against a scene")
    p.add_argument("scene")
    p.add_argument("region", help="YAML file with C, d (and optional row_tags)")
    _add_common(p)
    p.set_defaults(fn=cmd_certify)

    p = sub.add_parser("grow", help="grow certified regions from seed points")
    p.add_argument("scene")
    p.add_argument("seed", nargs="+",
                   help="seed point(s) in TC space, comma-separated, e.g. "
                        "'0.0,0.1'")
    p.add_argument("--out", default="regions",
                   help="output directory (default: regions)")
    p.add_argument("--octagon", action="store_true",
                   help="seed with a small octagon instead of nonlinear "
                        "inflation")
    p.add_argument("--octagon-side", type=float, default=0.01,
                   help="octagon side length (default: 0.01)")
    p.add_argument("--tol", type=float, default=0.02,
                   help="relative ellipsoid-volume convergence tolerance "
                        "(default: 0.02)")
    p.add_argument("--max-iters", type=int, default=30,
                   help="alternation iteration cap (default: 30)")
    p.add_argument("--delta-max", type=float, default=0.3,
                   help="largest uniform contraction tried (default: 0.3)")
    p.add_argument("--plots", action="store_true",
                   help="emit SVG/CSV plots next to the bundles")
    p.add_argument("--raster-resolution", type=int, default=120,
                   help="raster resolution for the coverage report "
                        "(default: 120)")
    _add_common(p)
    p.set_defaults(fn=cmd_grow)

    p = sub.add_parser("seed", help="propose (uncertified) seed regions")
    p.add_argument("scene")
    p.add_argument("point", nargs="+",
                   help="seed point(s) in TC space, comma-separated")
    p.add_argument("--out", default="seeds",
                   help="output directory (default: seeds)")
    _add_common(p)
    p.set_defaults(fn=cmd_seed)

    p = sub.add_parser("raster", help="rasterize a 2-DOF TC space")
    p.add_argument("scene")
    p.add_argument("--resolution", type=int, default=120,
                   help="cells per axis (default: 120)")
    p.add_argument("--out", default="raster.csv",
                   help="output CSV (default: raster.csv)")
    p.set_defaults(fn=cmd_raster)

    p = sub.add_parser("verify", help="re-verify a stored region bundle")
    p.add_argument("bundle")
    p.add_argument("--eig-tol", type=float, default=1e-7)
    p.add_argument("--res-tol", type=float, default=1e-6)
    p.set_defaults(fn=cmd_verify)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
