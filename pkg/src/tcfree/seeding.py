"""Fast nonlinear seeding of large candidate regions.

Alternates between a multi-start local search for the nearest colliding
configuration in the metric of the current inscribed ellipsoid and tangent
hyperplane cuts excluding the witnesses found.  Output regions are candidates
only: they carry no certificate and must be contracted to a certifiable
polytope before being trusted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .certifier import CollisionPair, enumerate_pairs
from .geometry import Capsule, Cylinder, Sphere, VPolytope
from .kinematics import REVOLUTE
from .polytope import LEARNED_ROW, Ellipsoid, RegionError, TcPolytope
from .regions import max_inscribed_ellipsoid
from .scenefile import Scene

__all__ = ["CollisionWitness", "find_closest_collision", "tangent_hyperplane",
           "nonlinear_iris", "SeedingOptions"]

_MAX_ROUNDS = 10


@dataclass
class CollisionWitness:
    s_star: np.ndarray
    p_a: np.ndarray          # contact point in body A's link frame
    p_b: np.ndarray
    metric_distance: float   # sqrt of the ellipse-metric objective
    residual: float


@dataclass
class SeedingOptions:
    n_starts: int = 16
    inner_iters: int = 50
    outer_iters: int = 8
    rho0: float = 100.0
    rho_growth: float = 6.0
    ineq_weight: float = 100.0
    residual_tol: float = 1e-6
    cut_margin: float = 1e-3
    max_cuts_per_pair: int = 40
    init_radius: float = 1e-3   # starting ellipsoid ball at the seed
    seed: int = 0


# -- body-point parameterizations with cheap projections ----------------------

class _BodyPoint:
    """Smooth parameterization of a point in a body (link frame).

    Bound-type parameter constraints (nonnegativity, balls, intervals) are
    enforced by cheap projections; affine constraints (convex weights summing
    to one) are exposed as extra residual rows so that the Gauss-Newton /
    augmented-Lagrangian machinery handles them exactly.
    """

    def __init__(self, body):
        self.body = body
        if isinstance(body, VPolytope):
            self.kind = "polytope"
            self.dim = body.vertices.shape[0]
            self.n_affine = 1
        elif isinstance(body, Sphere):
            self.kind = "sphere"
            self.dim = 3
            self.n_affine = 0
        elif isinstance(body, Capsule):
            self.kind = "capsule"
            self.dim = 4          # (tau, u3)
            self.n_affine = 0
        elif isinstance(body, Cylinder):
            self.kind = "cylinder"
            self.dim = 3          # (tau, w2)
            self.n_affine = 0
            frame = body.geometry_frame()
            self.e1, self.e2 = frame.R[:, 0], frame.R[:, 1]
        else:
            raise TypeError(f"unsupported body {type(body).__name__}")

    def initial(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "polytope":
            w = rng.random(self.dim)
            return w / w.sum()
        if self.kind == "sphere":
            return rng.uniform(-0.5, 0.5, 3)
        if self.kind == "capsule":
            return np.concatenate([[rng.random()], rng.uniform(-0.5, 0.5, 3)])
        return np.concatenate([[rng.random()], rng.uniform(-0.5, 0.5, 2)])

    def point(self, z: np.ndarray) -> np.ndarray:
        b = self.body
        if self.kind == "polytope":
            return z @ b.vertices
        if self.kind == "sphere":
            return b.center + b.radius * z
        if self.kind == "capsule":
            tau, u = z[0], z[1:]
            return tau * b.p1 + (1 - tau) * b.p2 + \
                (tau * b.r1 + (1 - tau) * b.r2) * u
        tau, w = z[0], z[1:]
        r = tau * b.r1 + (1 - tau) * b.r2
        return tau * b.p1 + (1 - tau) * b.p2 + r * (w[0] * self.e1
                                                    + w[1] * self.e2)

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        """d point / d z, shape (3, dim)."""
        b = self.body
        if self.kind == "polytope":
            return b.vertices.T
        if self.kind == "sphere":
            return b.radius * np.eye(3)
        if self.kind == "capsule":
            tau, u = z[0], z[1:]
            J = np.zeros((3, 4))
            J[:, 0] = b.p1 - b.p2 + (b.r1 - b.r2) * u
            J[:, 1:] = (tau * b.r1 + (1 - tau) * b.r2) * np.eye(3)
            return J
        tau, w = z[0], z[1:]
        r = tau * b.r1 + (1 - tau) * b.r2
        radial = w[0] * self.e1 + w[1] * self.e2
        J = np.zeros((3, 3))
        J[:, 0] = b.p1 - b.p2 + (b.r1 - b.r2) * radial
        J[:, 1] = r * self.e1
        J[:, 2] = r * self.e2
        return J

    def affine_residual(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "polytope":
            return np.array([z.sum() - 1.0])
        return np.zeros(0)

    def affine_jacobian(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "polytope":
            return np.ones((1, self.dim))
        return np.zeros((0, self.dim))

    def project(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "polytope":
            return np.maximum(z, 0.0)
        if self.kind == "sphere":
            return _project_ball(z)
        return np.concatenate([[np.clip(z[0], 0.0, 1.0)],
                               _project_ball(z[1:])])


def _project_ball(u: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(u)
    return u if n <= 1.0 else u / n


class _WitnessProblem:
    """Shared state for one pair's witness search."""

    def __init__(self, scene: Scene, pair: CollisionPair, P: TcPolytope,
                 ell: Ellipsoid, opts: SeedingOptions):
        self.chain = scene.chain
        self.pair = pair
        self.P = P
        self.ell = ell
        self.opts = opts
        self.bp_a = _BodyPoint(pair.body_a)
        self.bp_b = _BodyPoint(pair.body_b)
        self.n = P.dim
        self.QQ = ell.Q @ ell.Q
        self.idx_a = self.chain.frame_index(pair.body_a.link)
        self.idx_b = self.chain.frame_index(pair.body_b.link)
        self.anc_a = set(self.chain.ancestor_joints(self.idx_a))
        self.anc_b = set(self.chain.ancestor_joints(self.idx_b))

    def unpack(self, z):
        n, da = self.n, self.bp_a.dim
        return z[:n], z[n:n + da], z[n + da:]

    def project_params(self, z):
        n, da = self.n, self.bp_a.dim
        z[n:n + da] = self.bp_a.project(z[n:n + da])
        z[n + da:] = self.bp_b.project(z[n + da:])
        return z

    @property
    def n_resid(self) -> int:
        return 3 + self.bp_a.n_affine + self.bp_b.n_affine

    def contact(self, z, with_jac: bool = True):
        """Residual [world gap; affine parameter constraints] and Jacobian."""
        s, za, zb = self.unpack(z)
        q = self.chain.s_to_q(s)
        poses = self.chain.world_poses(q)
        pa = self.bp_a.point(za)
        pb = self.bp_b.point(zb)
        xa = poses[self.idx_a].apply(pa)
        xb = poses[self.idx_b].apply(pb)
        g = np.concatenate([xa - xb, self.bp_a.affine_residual(za),
                            self.bp_b.affine_residual(zb)])
        if not with_jac:
            return g, None
        J = np.zeros((self.n_resid, z.size))
        scale = self.chain.dq_ds(s)
        for idx in self.anc_a | self.anc_b:
            joint = self.chain.joints[idx]
            pre = poses[self.chain.parent_frame[idx]].compose(joint.origin)
            axis = pre.R[:, 2]
            col = np.zeros(3)
            if idx in self.anc_a:
                col += (np.cross(axis, xa - pre.p)
                        if joint.kind == REVOLUTE else axis)
            if idx in self.anc_b:
                col -= (np.cross(axis, xb - pre.p)
                        if joint.kind == REVOLUTE else axis)
            J[:3, idx] = col * scale[idx]
        sa = slice(self.n, self.n + self.bp_a.dim)
        sb = slice(self.n + self.bp_a.dim, z.size)
        J[:3, sa] = poses[self.idx_a].R @ self.bp_a.jacobian(za)
        J[:3, sb] = -(poses[self.idx_b].R @ self.bp_b.jacobian(zb))
        row = 3
        if self.bp_a.n_affine:
            J[row, sa] = self.bp_a.affine_jacobian(za)
            row += 1
        if self.bp_b.n_affine:
            J[row, sb] = self.bp_b.affine_jacobian(zb)
        return g, J

    def violation(self, s):
        return np.maximum(self.P.C @ s - self.P.d, 0.0)

    def objective(self, s):
        d = s - self.ell.s0
        return float(d @ self.QQ @ d)

    def al_value(self, z, lam, rho, g=None):
        s, _, _ = self.unpack(z)
        if g is None:
            g, _ = self.contact(z, with_jac=False)
        viol = self.violation(s)
        return (self.objective(s) + lam @ g + 0.5 * rho * (g @ g)
                + 0.5 * self.opts.ineq_weight * (viol @ viol))

    def al_grad(self, z, lam, rho):
        s, _, _ = self.unpack(z)
        g, J = self.contact(z)
        viol = self.violation(s)
        grad = J.T @ (lam + rho * g)
        grad[:self.n] += (2.0 * self.QQ @ (s - self.ell.s0)
                          + self.opts.ineq_weight * (self.P.C.T @ viol))
        val = (self.objective(s) + lam @ g + 0.5 * rho * (g @ g)
               + 0.5 * self.opts.ineq_weight * (viol @ viol))
        return val, grad, g

    def descend(self, z, lam, rho):
        """Projected gradient with backtracking (value-only trials)."""
        step = 1.0
        val, grad, _ = self.al_grad(z, lam, rho)
        for _ in range(self.opts.inner_iters):
            gnorm = np.linalg.norm(grad)
            if gnorm < 1e-12:
                break
            cand = self.project_params(z - step * grad)
            new_val = self.al_value(cand, lam, rho)
            if new_val < val - 1e-14:
                z = cand
                val, grad, _ = self.al_grad(z, lam, rho)
                step = min(step * 1.8, 4.0)
            else:
                step *= 0.5
                if step < 1e-13:
                    break
        return z

    def polish(self, z, iters: int = 25):
        """Projected Gauss-Newton onto the contact manifold with an active
        bound mask, so clipped parameter coordinates stop fighting the step."""
        free = np.ones(z.size, bool)
        best, best_res = z.copy(), np.inf
        for _ in range(iters):
            g, J = self.contact(z)
            res = float(np.linalg.norm(g, np.inf))
            if res < best_res:
                best, best_res = z.copy(), res
            if res < 1e-12:
                break
            Jf = J[:, free]
            JJt = Jf @ Jf.T + 1e-12 * np.eye(self.n_resid)
            step = np.zeros(z.size)
            step[free] = -Jf.T @ np.linalg.solve(JJt, g)
            raw = z + step
            z_new = self.project_params(raw.copy())
            clipped = np.abs(raw - z_new) > 1e-12
            next_free = free & ~clipped
            free = next_free if next_free.sum() >= self.n_resid \
                else np.ones(z.size, bool)
            z = z_new
        return best

    def solve_from(self, z0, outer_iters: int | None = None):
        z = z0.copy()
        lam = np.zeros(self.n_resid)
        rho = self.opts.rho0
        for _ in range(outer_iters or self.opts.outer_iters):
            z = self.descend(z, lam, rho)
            g, _ = self.contact(z, with_jac=False)
            # the Gauss-Newton polish recovers full precision from here
            if np.linalg.norm(g, np.inf) <= 1e-4:
                break
            lam = lam + rho * g
            rho *= self.opts.rho_growth
        z = self.polish(z)
        g, _ = self.contact(z, with_jac=False)
        s, _, _ = self.unpack(z)
        res = max(float(np.linalg.norm(g, np.inf)),
                  float(np.max(self.violation(s), initial=0.0)))
        return z, res


def find_collision_witnesses(scene: Scene, pair: CollisionPair, P: TcPolytope,
                             ell: Ellipsoid,
                             opts: SeedingOptions = SeedingOptions()
                             ) -> list[CollisionWitness]:
    """All distinct witnesses the multi-start search converges to, sorted by
    ellipse-metric distance (closest first)."""
    rng = np.random.default_rng(opts.seed)
    prob = _WitnessProblem(scene, pair, P, ell, opts)
    try:
        starts = P.sample(rng, opts.n_starts)
    except RegionError:
        return []
    accepted = []
    pending = []
    for k in range(opts.n_starts):
        z0 = np.concatenate([starts[k], prob.bp_a.initial(rng),
                             prob.bp_b.initial(rng)])
        # cheap first phase; promising starts get the full budget below
        z, res = prob.solve_from(z0, outer_iters=4)
        if res <= opts.residual_tol:
            accepted.append((prob.objective(z[:prob.n]), z, res))
        elif res <= 1e-2:
            pending.append(z)
    for z0 in pending:
        z, res = prob.solve_from(z0)
        if res <= opts.residual_tol:
            accepted.append((prob.objective(z[:prob.n]), z, res))
    accepted.sort(key=lambda t: t[0])
    out = []
    for f, z, res in accepted:
        s, za, zb = prob.unpack(z)
        if any(np.linalg.norm(s - w.s_star) < 1e-4 for w in out):
            continue
        out.append(CollisionWitness(
            s_star=s, p_a=prob.bp_a.point(za), p_b=prob.bp_b.point(zb),
            metric_distance=float(np.sqrt(max(f, 0.0))), residual=res))
    return out


def find_closest_collision(scene: Scene, pair: CollisionPair, P: TcPolytope,
                           ell: Ellipsoid,
                           opts: SeedingOptions = SeedingOptions()
                           ) -> CollisionWitness | None:
    """Local minimizer of the ellipse-metric objective subject to the two
    bodies sharing a world point inside P, by multi-start augmented-Lagrangian
    projected-gradient descent with a Gauss-Newton polish.  None when no start
    converges within the residual tolerance."""
    witnesses = find_collision_witnesses(scene, pair, P, ell, opts)
    return witnesses[0] if witnesses else None


def tangent_hyperplane(s_star: np.ndarray, ell: Ellipsoid
                       ) -> tuple[np.ndarray, float]:
    """Half-space row (c, d) through s_star tangent to the ellipse-metric ball;
    the ellipsoid stays inside {c.s <= d}.  A point strictly inside the
    ellipsoid is pushed to the metric boundary first."""
    s_star = np.asarray(s_star, dtype=float)
    w = np.linalg.solve(ell.Q, s_star - ell.s0)
    nw = np.linalg.norm(w)
    if nw < 1e-12:
        raise ValueError("witness coincides with the ellipsoid center")
    if nw < 1.0:
        s_star = ell.s0 + ell.Q @ (w / nw)
        w = w / nw
    c = np.linalg.solve(ell.Q, w)
    c = c / np.linalg.norm(c)
    return c, float(c @ s_star)


def nonlinear_iris(scene: Scene, s_seed: np.ndarray, tol: float = 0.02,
                   opts: SeedingOptions = SeedingOptions(),
                   pairs: list[CollisionPair] | None = None
                   ) -> TcPolytope:
    """Grow a large candidate polytope around a collision-free seed by
    alternating witness search and tangent cuts with inscribed-ellipsoid
    updates.

    Each round rebuilds the cut set from the joint-limit box against the
    current ellipsoid, which starts as a small ball at the seed and grows
    until the relative volume gain drops below tol.  The result is NOT
    certified; pass it through the contraction step before trusting it.
    """
    s_seed = np.asarray(s_seed, dtype=float)
    if pairs is None:
        pairs = enumerate_pairs(scene)
    lim = scene.chain.tc_limits()
    box = TcPolytope.from_box(lim.lower, lim.upper)
    if not box.contains(s_seed)[0]:
        raise ValueError("seed point outside the joint-limit box")
    ell = Ellipsoid(opts.init_radius * np.eye(box.dim), s_seed)
    prev_vol = ell.volume_proxy()
    P = box
    for _ in range(_MAX_ROUNDS):
        P = box
        for pair in pairs:
            total_cuts = 0
            while total_cuts < opts.max_cuts_per_pair:
                witnesses = find_collision_witnesses(scene, pair, P, ell, opts)
                new_cuts = 0
                for witness in witnesses:
                    learned = [j for j, t in enumerate(P.row_tags)
                               if t == LEARNED_ROW]
                    if learned and np.max(P.C[learned] @ witness.s_star
                                          - P.d[learned]) >= -1e-6:
                        # witness sits on a cut: region tangent to the
                        # obstacle there, nothing more to exclude
                        continue
                    c, d_val = tangent_hyperplane(witness.s_star, ell)
                    if c @ s_seed > d_val - opts.cut_margin:
                        d_val = float(c @ s_seed + opts.cut_margin)
                    P = P.with_rows(c, d_val, LEARNED_ROW)
                    new_cuts += 1
                    total_cuts += 1
                if new_cuts == 0:
                    break
        ell_new = max_inscribed_ellipsoid(P)
        vol = ell_new.volume_proxy()
        if prev_vol > 0 and (vol - prev_vol) / prev_vol < tol:
            break
        prev_vol = vol
        ell = ell_new
    return P
