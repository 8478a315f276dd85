"""End-to-end pipeline: seed, contract, alternate, verify, plus TC-space
rasterization and plot/report emission for 2-DOF scenes."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .bundle import RegionBundle, verify_bundle
from .certifier import CertifyOptions, certify_polytope, enumerate_pairs
from .geometry import Sphere, VPolytope, fixed_intersection_point
from .polytope import Ellipsoid, RegionError, TcPolytope, regular_octagon
from .regions import (AlternationLog, bilinear_alternation,
                      contract_to_feasible, max_inscribed_ellipsoid)
from .scenefile import Scene
from .seeding import SeedingOptions, nonlinear_iris

__all__ = ["PipelineOptions", "PipelineResult", "run_pipeline",
           "rasterize_tcspace", "RasterGrid", "seed_region_polytope",
           "emit_plots", "coverage_fraction"]


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------

@dataclass
class RasterGrid:
    s1: np.ndarray               # cell centers along the first TC variable
    s2: np.ndarray
    collision: np.ndarray        # (len(s1), len(s2)) bool

    @property
    def free(self) -> np.ndarray:
        return ~self.collision

    def centers(self) -> np.ndarray:
        G = np.stack(np.meshgrid(self.s1, self.s2, indexing="ij"), -1)
        return G.reshape(-1, 2)

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s0", "s1", "collision"])
            for i, a in enumerate(self.s1):
                for j, b in enumerate(self.s2):
                    w.writerow([f"{a:.9g}", f"{b:.9g}",
                                int(self.collision[i, j])])


def _poly_axes_edges(vertices: np.ndarray):
    hull = ConvexHull(vertices)
    normals = np.unique(np.round(hull.equations[:, :3], 9), axis=0)
    edges = set()
    for simplex in hull.simplices:
        for i in range(3):
            a, b = sorted((simplex[i], simplex[(i + 1) % 3]))
            edges.add((a, b))
    dirs = []
    for a, b in edges:
        d = vertices[b] - vertices[a]
        n = np.linalg.norm(d)
        if n > 1e-12:
            d /= n
            if d[np.argmax(np.abs(d))] < 0:
                d = -d
            dirs.append(d)
    return normals, np.unique(np.round(np.array(dirs), 9), axis=0)


def _batch_pair_collisions(scene: Scene, pair, poses) -> np.ndarray:
    """Vectorized exact intersection verdicts where a closed form exists;
    None if this pair needs the conic fallback."""
    a, b = pair.body_a, pair.body_b
    Ra, pa = poses[a.link]
    Rb, pb = poses[b.link]
    if isinstance(a, VPolytope) and isinstance(b, VPolytope):
        na, ea = _poly_axes_edges(a.vertices)
        nb, eb = _poly_axes_edges(b.vertices)
        va = np.einsum("nij,mj->nmi", Ra, a.vertices) + pa[:, None, :]
        vb = np.einsum("nij,mj->nmi", Rb, b.vertices) + pb[:, None, :]
        N = va.shape[0]
        wa = np.einsum("nij,kj->nki", Ra, na)
        wb = np.einsum("nij,kj->nki", Rb, nb)
        da = np.einsum("nij,kj->nki", Ra, ea)
        db = np.einsum("nij,kj->nki", Rb, eb)
        cross = np.cross(da[:, :, None, :], db[:, None, :, :]).reshape(N, -1, 3)
        nrm = np.linalg.norm(cross, axis=2, keepdims=True)
        ok = nrm[:, :, 0] > 1e-9
        cross = np.where(nrm > 1e-12, cross / np.maximum(nrm, 1e-300), 0.0)
        axes = np.concatenate([wa, wb, cross], axis=1)
        valid = np.concatenate(
            [np.ones((N, wa.shape[1] + wb.shape[1]), bool), ok], axis=1)
        prja = np.einsum("nka,nma->nkm", axes, va)
        prjb = np.einsum("nka,nma->nkm", axes, vb)
        sep = (prja.min(2) > prjb.max(2)) | (prjb.min(2) > prja.max(2))
        return ~np.any(sep & valid, axis=1)
    if isinstance(a, Sphere) and isinstance(b, Sphere):
        ca = np.einsum("nij,j->ni", Ra, a.center) + pa
        cb = np.einsum("nij,j->ni", Rb, b.center) + pb
        return np.linalg.norm(ca - cb, axis=1) <= a.radius + b.radius
    return None


def rasterize_tcspace(scene: Scene, resolution: int = 120,
                      pairs=None) -> RasterGrid:
    """Per-cell collision verdicts at cell centers over the TC-space box.

    V-polytope and sphere pairs use an exact vectorized intersection test;
    any other variant combination falls back to the fixed-configuration
    intersection program cell by cell.  Only 2-DOF scenes are supported.
    """
    lim = scene.chain.tc_limits()
    if lim.dim != 2:
        raise ValueError("rasterization requires exactly 2 TC-space variables")
    if pairs is None:
        pairs = enumerate_pairs(scene)
    step1 = (lim.upper[0] - lim.lower[0]) / resolution
    step2 = (lim.upper[1] - lim.lower[1]) / resolution
    s1 = lim.lower[0] + step1 * (np.arange(resolution) + 0.5)
    s2 = lim.lower[1] + step2 * (np.arange(resolution) + 0.5)
    G = np.stack(np.meshgrid(s1, s2, indexing="ij"), -1).reshape(-1, 2)
    qs = np.stack([scene.chain.s_to_q(s) for s in G])
    poses = scene.chain.world_poses_batch(qs)
    collision = np.zeros(len(G), dtype=bool)
    chain = scene.chain
    for pair in pairs:
        fast = _batch_pair_collisions(scene, pair, poses)
        if fast is not None:
            collision |= fast
            continue
        idx_a = chain.frame_index(pair.body_a.link)
        idx_b = chain.frame_index(pair.body_b.link)
        for n, q in enumerate(qs):
            if collision[n]:
                continue
            wp = chain.world_poses(q)
            x = fixed_intersection_point(pair.body_a, wp[idx_a],
                                         pair.body_b, wp[idx_b])
            if x is not None:
                collision[n] = True
    return RasterGrid(s1, s2, collision.reshape(resolution, resolution))


def coverage_fraction(raster: RasterGrid, polytopes: list[TcPolytope]) -> float:
    """Fraction of oracle-free raster cells covered by the union of regions."""
    centers = raster.centers()
    free = raster.free.reshape(-1)
    covered = np.zeros(len(centers), dtype=bool)
    for P in polytopes:
        covered |= P.contains(centers)
    n_free = int(free.sum())
    if n_free == 0:
        return 1.0
    return float((covered & free).sum() / n_free)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineOptions:
    certify: CertifyOptions = field(default_factory=CertifyOptions)
    seeding: SeedingOptions = field(default_factory=SeedingOptions)
    seed_mode: str = "iris"        # 'iris' | 'octagon'
    octagon_side: float = 0.01
    alternation_tol: float = 0.02
    max_iters: int = 30
    delta_max: float = 0.3
    bisect_tol: float = 1e-3
    workers: int = 1


@dataclass
class SeedOutcome:
    seed: np.ndarray
    ok: bool
    bundle: RegionBundle | None = None
    log: AlternationLog | None = None
    error: str = ""
    wall_time: float = 0.0


@dataclass
class PipelineResult:
    outcomes: list[SeedOutcome]
    n_pairs: int
    largest_gram: int

    @property
    def bundles(self) -> list[RegionBundle]:
        return [o.bundle for o in self.outcomes if o.bundle is not None]

    @property
    def all_ok(self) -> bool:
        return all(o.ok for o in self.outcomes)

    def summary(self) -> str:
        lines = [
            f"collision pairs: {self.n_pairs}",
            f"largest PSD block rows: {self.largest_gram}",
            f"seeds: {len(self.outcomes)}, succeeded: "
            f"{sum(o.ok for o in self.outcomes)}",
        ]
        for o in self.outcomes:
            seed_txt = np.array2string(np.asarray(o.seed), precision=4)
            if o.ok:
                det = o.bundle.ellipsoid.volume_proxy() if o.bundle.ellipsoid \
                    else float("nan")
                iters = len(o.log.rows) if o.log else 0
                lines.append(f"  seed {seed_txt}: certified, {iters} "
                             f"alternation steps, ellipsoid det {det:.4g}, "
                             f"{o.wall_time:.1f}s")
            else:
                lines.append(f"  seed {seed_txt}: FAILED ({o.error})")
        return "\n".join(lines)


def seed_is_collision_free(scene: Scene, s_seed: np.ndarray, pairs=None) -> bool:
    if pairs is None:
        pairs = enumerate_pairs(scene)
    q = scene.chain.s_to_q(np.asarray(s_seed, dtype=float))
    wp = scene.chain.world_poses(q)
    fi = scene.chain.frame_index
    for pair in pairs:
        if fixed_intersection_point(pair.body_a, wp[fi(pair.body_a.link)],
                                    pair.body_b, wp[fi(pair.body_b.link)]) \
                is not None:
            return False
    return True


def seed_region_polytope(scene: Scene, s_seed: np.ndarray,
                         opts: PipelineOptions) -> TcPolytope:
    """Initial polytope around a seed: nonlinear inflation or a small octagon,
    always intersected with the joint-limit box."""
    lim = scene.chain.tc_limits()
    box = TcPolytope.from_box(lim.lower, lim.upper)
    if opts.seed_mode == "octagon":
        if lim.dim != 2:
            raise ValueError("octagon seeding requires 2 TC dimensions")
        return box.intersect(regular_octagon(s_seed, opts.octagon_side))
    return nonlinear_iris(scene, s_seed, opts.alternation_tol, opts.seeding)


def grow_region(scene: Scene, s_seed: np.ndarray,
                opts: PipelineOptions = PipelineOptions(),
                pairs=None) -> SeedOutcome:
    """seed -> contract -> alternate -> verify for one seed point."""
    t0 = time.perf_counter()
    s_seed = np.asarray(s_seed, dtype=float)
    if pairs is None:
        pairs = enumerate_pairs(scene)
    try:
        if not seed_is_collision_free(scene, s_seed, pairs):
            raise RegionError("seed configuration is in collision")
        P0 = seed_region_polytope(scene, s_seed, opts)
        P0 = contract_to_feasible(scene, P0, delta_max=opts.delta_max,
                                  bisect_tol=opts.bisect_tol,
                                  opts=opts.certify, pairs=pairs)
        result = bilinear_alternation(scene, P0, s_seed,
                                      tol=opts.alternation_tol,
                                      max_iters=opts.max_iters,
                                      opts=opts.certify, pairs=pairs,
                                      delta_max=opts.delta_max)
        bundle = RegionBundle(
            scene_text=scene.source_text, polytope=result.polytope,
            seed=s_seed, certificates=result.report.certificates(),
            ellipsoid=result.ellipsoid,
            stats={"n_pairs": result.report.n_pairs,
                   "largest_gram": result.report.largest_gram,
                   "iterations": len(result.log.rows)})
        check = verify_bundle(bundle)
        if not check.ok:
            raise RegionError("bundle re-verification failed: "
                              + "; ".join(check.issues[:3]))
        return SeedOutcome(s_seed, True, bundle, result.log,
                           wall_time=time.perf_counter() - t0)
    except (RegionError, ValueError) as exc:
        return SeedOutcome(s_seed, False, error=str(exc),
                           wall_time=time.perf_counter() - t0)


def run_pipeline(scene: Scene, seeds,
                 opts: PipelineOptions = PipelineOptions()) -> PipelineResult:
    """One region bundle per seed; per-seed failures are reported and the
    remaining seeds still run."""
    pairs = enumerate_pairs(scene)
    outcomes = []
    for s_seed in seeds:
        outcomes.append(grow_region(scene, np.asarray(s_seed, dtype=float),
                                    opts, pairs))
    largest = max((o.bundle.stats.get("largest_gram", 0)
                   for o in outcomes if o.bundle), default=0)
    return PipelineResult(outcomes, len(pairs), largest)


# ---------------------------------------------------------------------------
# plots (deterministic hand-rolled SVG + CSV)
# ---------------------------------------------------------------------------

_COLORS = ["#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e", "#8c564b"]


def _svg_header(w, h):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" '
            f'height="{h}" viewBox="0 0 {w} {h}">\n'
            f'<rect width="{w}" height="{h}" fill="white"/>\n')


def emit_region_svg(path: str, raster: RasterGrid | None,
                    polytopes: list[TcPolytope], size: int = 640) -> None:
    """Obstacle raster with region polygons overlaid (2-D only)."""
    buf = io.StringIO()
    buf.write(_svg_header(size, size))
    if raster is not None:
        lo1, hi1 = raster.s1[0], raster.s1[-1]
        lo2, hi2 = raster.s2[0], raster.s2[-1]
    else:
        allv = np.vstack([P.vertices_2d() for P in polytopes])
        lo1, lo2 = allv.min(axis=0) - 0.1
        hi1, hi2 = allv.max(axis=0) + 0.1

    def to_px(pt):
        x = (pt[0] - lo1) / max(hi1 - lo1, 1e-12) * (size - 20) + 10
        y = size - ((pt[1] - lo2) / max(hi2 - lo2, 1e-12) * (size - 20) + 10)
        return x, y

    if raster is not None:
        n1, n2 = len(raster.s1), len(raster.s2)
        cw = (size - 20) / n1
        ch = (size - 20) / n2
        for i in range(n1):
            for j in range(n2):
                if raster.collision[i, j]:
                    x, y = to_px((raster.s1[i], raster.s2[j]))
                    buf.write(f'<rect x="{x - cw / 2:.2f}" '
                              f'y="{y - ch / 2:.2f}" width="{cw:.2f}" '
                              f'height="{ch:.2f}" fill="#cc3333"/>\n')
    for k, P in enumerate(polytopes):
        verts = P.vertices_2d()
        if len(verts) == 0:
            continue
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in map(to_px, verts))
        color = _COLORS[k % len(_COLORS)]
        buf.write(f'<polygon points="{pts}" fill="{color}" '
                  f'fill-opacity="0.35" stroke="{color}" '
                  f'stroke-width="1.5"/>\n')
    buf.write("</svg>\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def emit_volume_svg(path: str, logs: list[AlternationLog],
                    size: int = 640) -> None:
    """Ellipsoid volume-proxy (det Q) against iteration, one curve per run."""
    buf = io.StringIO()
    buf.write(_svg_header(size, size))
    series = [log.det_series() for log in logs if log.rows]
    if series:
        vmax = max(max(s) for s in series)
        imax = max(len(s) for s in series)
        for k, s in enumerate(series):
            pts = []
            for i, v in enumerate(s):
                x = 10 + i / max(imax - 1, 1) * (size - 20)
                y = size - 10 - v / max(vmax, 1e-12) * (size - 20)
                pts.append(f"{x:.2f},{y:.2f}")
            buf.write(f'<polyline points="{" ".join(pts)}" fill="none" '
                      f'stroke="{_COLORS[k % len(_COLORS)]}" '
                      f'stroke-width="2"/>\n')
    buf.write("</svg>\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def emit_plots(outdir: str, result: PipelineResult,
               raster: RasterGrid | None = None) -> list[str]:
    """Deterministic SVG + CSV outputs for a pipeline run."""
    import os
    os.makedirs(outdir, exist_ok=True)
    paths = []
    logs = [o.log for o in result.outcomes if o.log is not None]
    # wall times live in the per-region logs; this file is plot data and must
    # be byte-identical across runs
    vol_csv = os.path.join(outdir, "volumes.csv")
    with open(vol_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["region", "iteration", "det_q"])
        for k, log in enumerate(logs):
            for row in log.rows:
                w.writerow([k, row["iteration"], f"{row['det_q']:.12g}"])
    paths.append(vol_csv)
    vol_svg = os.path.join(outdir, "volumes.svg")
    emit_volume_svg(vol_svg, logs)
    paths.append(vol_svg)
    if raster is not None:
        raster_csv = os.path.join(outdir, "raster.csv")
        raster.to_csv(raster_csv)
        paths.append(raster_csv)
        overlay = os.path.join(outdir, "regions.svg")
        emit_region_svg(overlay, raster,
                        [b.polytope for b in result.bundles])
        paths.append(overlay)
    return paths
