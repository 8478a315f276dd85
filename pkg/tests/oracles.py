"""Independent geometric oracles for the test suite.

Everything here is deliberately re-derived from first principles (homogeneous
matrix products, separating-axis tests, closed-form distances, support
functions) so that it shares no code path with the library's conic programs or
rational kinematics.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import ConvexHull

from tcfree.geometry import Capsule, Cylinder, Sphere, VPolytope


# ---------------------------------------------------------------------------
# independent forward kinematics (plain homogeneous products)
# ---------------------------------------------------------------------------

def homog(R, p):
    H = np.eye(4)
    H[:3, :3] = R
    H[:3, 3] = p
    return H


def joint_motion_matrix(kind: str, qi: float) -> np.ndarray:
    if kind == "revolute":
        c, s = math.cos(qi), math.sin(qi)
        return homog(np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]), np.zeros(3))
    return homog(np.eye(3), np.array([0.0, 0.0, qi]))


def chain_world_matrices(scene, q) -> list[np.ndarray]:
    """4x4 pose of every frame, world first, by direct matrix products."""
    joints = scene.chain.joints
    name_to_frame = {"world": 0}
    for i, j in enumerate(joints):
        name_to_frame[j.child_link] = i + 1
    out = [np.eye(4)]
    for k, (joint, qi) in enumerate(zip(joints, np.asarray(q, dtype=float))):
        pf = name_to_frame[joint.parent] if joint.parent else k
        T = out[pf] \
            @ homog(joint.origin.R, joint.origin.p) \
            @ joint_motion_matrix(joint.kind, qi) \
            @ homog(joint.tip.R, joint.tip.p)
        out.append(T.copy())
    return out


def batch_poses(scene, qs: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Vectorized FK over N configurations: frame name -> (R (N,3,3), p (N,3))."""
    qs = np.atleast_2d(np.asarray(qs, dtype=float))
    N = qs.shape[0]
    joints = scene.chain.joints
    name_to_frame = {"world": 0}
    for i, j in enumerate(joints):
        name_to_frame[j.child_link] = i + 1
    frames = [(np.tile(np.eye(3), (N, 1, 1)), np.zeros((N, 3)))]
    for k, joint in enumerate(joints):
        pf = name_to_frame[joint.parent] if joint.parent else k
        Rw, pw = frames[pf]
        Rw, pw = Rw.copy(), pw.copy()
        pw = pw + np.einsum("nij,j->ni", Rw, joint.origin.p)
        Rw = np.einsum("nij,jk->nik", Rw, joint.origin.R)
        if joint.kind == "revolute":
            c, s = np.cos(qs[:, k]), np.sin(qs[:, k])
            M = np.zeros((N, 3, 3))
            M[:, 0, 0] = c
            M[:, 0, 1] = -s
            M[:, 1, 0] = s
            M[:, 1, 1] = c
            M[:, 2, 2] = 1.0
            Rw = np.einsum("nij,njk->nik", Rw, M)
        else:
            pw = pw + Rw[:, :, 2] * qs[:, k][:, None]
        pw = pw + np.einsum("nij,j->ni", Rw, joint.tip.p)
        Rw = np.einsum("nij,jk->nik", Rw, joint.tip.R)
        frames.append((Rw, pw))
    out = {"world": frames[0]}
    for i, j in enumerate(joints):
        out[j.child_link] = frames[i + 1]
    return out


# ---------------------------------------------------------------------------
# separating-axis test for convex polytopes, vectorized over configurations
# ---------------------------------------------------------------------------

def _poly_axes(vertices: np.ndarray):
    """Face normals and edge directions of a convex polytope in its own frame."""
    hull = ConvexHull(vertices)
    normals = hull.equations[:, :3]
    normals = np.unique(np.round(normals, 9), axis=0)
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
            d = d / n
            if d[np.argmax(np.abs(d))] < 0:
                d = -d
            dirs.append(d)
    dirs = np.unique(np.round(np.array(dirs), 9), axis=0)
    return normals, dirs


def sat_disjoint_batch(verts_a_world: np.ndarray, axes_a: np.ndarray,
                       edges_a: np.ndarray, Ra: np.ndarray,
                       verts_b_world: np.ndarray, axes_b: np.ndarray,
                       edges_b: np.ndarray, Rb: np.ndarray,
                       tol: float = 0.0) -> np.ndarray:
    """(N,) bool: polytopes strictly disjoint by the separating-axis test.

    Exact for convex polytopes: axes are both bodies' face normals plus all
    pairwise edge cross products.
    """
    N = verts_a_world.shape[0]
    world_axes = [np.einsum("nij,kj->nki", Ra, axes_a),
                  np.einsum("nij,kj->nki", Rb, axes_b)]
    ea = np.einsum("nij,kj->nki", Ra, edges_a)
    eb = np.einsum("nij,kj->nki", Rb, edges_b)
    cross = np.cross(ea[:, :, None, :], eb[:, None, :, :]).reshape(N, -1, 3)
    norms = np.linalg.norm(cross, axis=2, keepdims=True)
    good = norms[:, :, 0] > 1e-9
    cross = np.where(norms > 1e-12, cross / np.maximum(norms, 1e-300), 0.0)
    axes = np.concatenate(world_axes + [cross], axis=1)
    valid = np.concatenate([
        np.ones((N, world_axes[0].shape[1] + world_axes[1].shape[1]), bool),
        good], axis=1)
    pa = np.einsum("nka,nma->nkm", axes, verts_a_world)
    pb = np.einsum("nka,nma->nkm", axes, verts_b_world)
    sep = (pa.min(axis=2) > pb.max(axis=2) + tol) | \
          (pb.min(axis=2) > pa.max(axis=2) + tol)
    return np.any(sep & valid, axis=1)


class PairCollisionOracle:
    """Batch collision verdicts for one body pair across many configurations.

    V-polytope pairs use the exact separating-axis test; sphere pairs use
    closed-form distances.  Only the variants needed by the bundled scenes are
    vectorized; everything else falls back to slow-but-sure support sampling.
    """

    def __init__(self, scene, body_a, body_b):
        self.scene = scene
        self.body_a = body_a
        self.body_b = body_b
        if isinstance(body_a, VPolytope) and isinstance(body_b, VPolytope):
            self.mode = "sat"
            self.axes_a, self.edges_a = _poly_axes(body_a.vertices)
            self.axes_b, self.edges_b = _poly_axes(body_b.vertices)
        elif isinstance(body_a, Sphere) and isinstance(body_b, Sphere):
            self.mode = "sphere"
        elif {type(body_a), type(body_b)} == {VPolytope, Sphere}:
            self.mode = "sphere_poly"
        else:
            self.mode = "sampled"

    def colliding(self, poses: dict, tol: float = 0.0) -> np.ndarray:
        Ra, pa = poses[self.body_a.link]
        Rb, pb = poses[self.body_b.link]
        a, b = self.body_a, self.body_b
        if self.mode == "sat":
            va = np.einsum("nij,mj->nmi", Ra, a.vertices) + pa[:, None, :]
            vb = np.einsum("nij,mj->nmi", Rb, b.vertices) + pb[:, None, :]
            return ~sat_disjoint_batch(va, self.axes_a, self.edges_a, Ra,
                                       vb, self.axes_b, self.edges_b, Rb, tol)
        if self.mode == "sphere":
            ca = np.einsum("nij,j->ni", Ra, a.center) + pa
            cb = np.einsum("nij,j->ni", Rb, b.center) + pb
            return np.linalg.norm(ca - cb, axis=1) <= a.radius + b.radius + tol
        if self.mode == "sphere_poly":
            sph, poly = (a, b) if isinstance(a, Sphere) else (b, a)
            Rs, ps = (Ra, pa) if isinstance(a, Sphere) else (Rb, pb)
            Rp, pp = (Rb, pb) if isinstance(a, Sphere) else (Ra, pa)
            c = np.einsum("nij,j->ni", Rs, sph.center) + ps
            # sphere center in the polytope frame, distance to the hull
            local = np.einsum("nji,nj->ni", Rp, c - pp)
            d = _point_hull_distance_batch(local, poly.vertices)
            return d <= sph.radius + tol
        N = Ra.shape[0]
        return np.array([
            support_gap(a, (Ra[i], pa[i]), b, (Rb[i], pb[i])) <= tol
            for i in range(N)])


def _point_hull_distance_batch(points: np.ndarray, vertices: np.ndarray,
                               iters: int = 120) -> np.ndarray:
    """Distance from points to conv(vertices) by Frank-Wolfe on the simplex."""
    m = vertices.shape[0]
    N = points.shape[0]
    lam = np.full((N, m), 1.0 / m)
    V = vertices
    for _ in range(iters):
        x = lam @ V
        grad = 2.0 * (x - points) @ V.T
        idx = np.argmin(grad, axis=1)
        target = np.zeros_like(lam)
        target[np.arange(N), idx] = 1.0
        d = target - lam
        # exact line search for quadratic objective
        dv = d @ V
        num = -np.einsum("ni,ni->n", x - points, dv)
        den = np.einsum("ni,ni->n", dv, dv)
        step = np.where(den > 1e-300, np.clip(num / np.maximum(den, 1e-300),
                                              0.0, 1.0), 0.0)
        lam = lam + step[:, None] * d
    return np.linalg.norm(lam @ V - points, axis=1)


# ---------------------------------------------------------------------------
# support functions (independent of the package implementation)
# ---------------------------------------------------------------------------

def support_value(body, pose, d: np.ndarray) -> float:
    R, p = pose
    dl = R.T @ d
    if isinstance(body, VPolytope):
        return float((body.vertices @ dl).max() + p @ d)
    if isinstance(body, Sphere):
        return float(body.center @ dl + body.radius * np.linalg.norm(d) + p @ d)
    if isinstance(body, Capsule):
        v1 = body.p1 @ dl + body.r1 * np.linalg.norm(d)
        v2 = body.p2 @ dl + body.r2 * np.linalg.norm(d)
        return float(max(v1, v2) + p @ d)
    if isinstance(body, Cylinder):
        axis = body.p1 - body.p2
        axis = axis / np.linalg.norm(axis)
        radial = dl - (dl @ axis) * axis
        nr = np.linalg.norm(radial)
        v1 = body.p1 @ dl + body.r1 * nr
        v2 = body.p2 @ dl + body.r2 * nr
        return float(max(v1, v2) + p @ d)
    raise TypeError(type(body).__name__)


def fibonacci_directions(n: int) -> np.ndarray:
    k = np.arange(n)
    phi = (1 + 5**0.5) / 2
    z = 1 - 2 * (k + 0.5) / n
    r = np.sqrt(1 - z**2)
    theta = 2 * np.pi * k / phi
    return np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)


def support_gap(body_a, pose_a, body_b, pose_b, n_dirs: int = 2048) -> float:
    """max_d [-h_A(-d) - h_B(d)] over sampled unit directions: a lower bound
    on the separation distance; > 0 certifies strict disjointness."""
    best = -np.inf
    for d in fibonacci_directions(n_dirs):
        gap = -support_value(body_a, pose_a, -d) - support_value(body_b, pose_b, d)
        best = max(best, gap)
    return best


# ---------------------------------------------------------------------------
# constructed body pairs with known separation / penetration
# ---------------------------------------------------------------------------

def random_body(rng: np.random.Generator, variant: str, name: str):
    if variant == "polytope":
        pts = rng.uniform(-0.5, 0.5, (rng.integers(4, 9), 3))
        # ensure full dimension
        pts = np.vstack([pts, np.eye(3) * 0.3, -np.eye(3) * 0.3])
        return VPolytope(name, "world", vertices=pts)
    if variant == "sphere":
        return Sphere(name, "world", center=rng.uniform(-0.2, 0.2, 3),
                      radius=rng.uniform(0.2, 0.6))
    if variant == "capsule":
        p1 = rng.uniform(-0.4, 0.4, 3)
        p2 = p1 + rng.uniform(0.2, 0.8) * _unit(rng)
        return Capsule(name, "world", p1=p1, p2=p2,
                       r1=rng.uniform(0.1, 0.4), r2=rng.uniform(0.1, 0.4))
    p1 = rng.uniform(-0.4, 0.4, 3)
    p2 = p1 + rng.uniform(0.3, 0.9) * _unit(rng)
    return Cylinder(name, "world", p1=p1, p2=p2,
                    r1=rng.uniform(0.1, 0.4), r2=rng.uniform(0.1, 0.4))


def _unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)]])


def constructed_pair(rng: np.random.Generator, variants=("polytope", "sphere",
                                                         "capsule", "cylinder"),
                     separated: bool = True, margin: float = 1e-2):
    """Two posed bodies with separation >= margin along a known axis
    (separated=True) or guaranteed overlap of depth >= margin (False)."""
    va = variants[rng.integers(len(variants))]
    vb = variants[rng.integers(len(variants))]
    A = random_body(rng, va, "A")
    B = random_body(rng, vb, "B")
    Ra, Rb = random_rotation(rng), random_rotation(rng)
    u = _unit(rng)
    ha = support_value(A, (Ra, np.zeros(3)), u)
    hb_neg = support_value(B, (Rb, np.zeros(3)), -u)
    touch = ha + hb_neg
    offset = touch + margin if separated else touch - margin
    return A, (Ra, np.zeros(3)), B, (Rb, offset * u)
