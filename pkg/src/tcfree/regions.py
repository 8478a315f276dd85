"""Region generation: inscribed ellipsoids, certificate-preserving polytope
growth, the certify/inflate alternation loop, and bisection contraction of an
uncertifiable polytope to a certifiable one.

Joint-limit rows of a polytope are held fixed throughout; only learned rows
are re-optimized, which keeps every intermediate region inside the limit box.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .certifier import (CertificationReport, CertifyOptions, CollisionPair,
                        PlaneCertificate, certify_polytope, enumerate_pairs,
                        gram_to_polynomial)
from .conic import LinExpr
from .geometry import MatrixCond, ScalarCond, PlaneParam, plane_side_conditions
from .polyalg import Monomial, Polynomial, total_degree_basis
from .polytope import LEARNED_ROW, LIMIT_ROW, Ellipsoid, RegionError, TcPolytope
from .scenefile import Scene
from .soscomp import LinPoly, SosProgram, matrix_sigma

__all__ = [
    "max_inscribed_ellipsoid",
    "grow_polytope",
    "bilinear_alternation",
    "contract_to_feasible",
    "AlternationLog",
    "AlternationResult",
]

GROW_EPS0 = 1e-4
VOLUME_TOL = 0.02
MAX_ITERS = 100


def max_inscribed_ellipsoid(P: TcPolytope) -> Ellipsoid:
    """Maximum-volume inscribed ellipsoid of a bounded nonempty polytope."""
    n = P.dim
    from .conic import ConicProgram
    prog = ConicProgram()
    # symmetric Q stored as upper triangle, free; PSD is implied by the
    # log-det block
    q_idx = {}
    for i in range(n):
        for j in range(i, n):
            q_idx[(i, j)] = prog.add_vars(1)[0]

    def q_entry(i, j):
        return LinExpr.of(q_idx[(min(i, j), max(i, j))])

    s0 = prog.add_vars(n)
    t = prog.add_logdet_hypograph(q_entry, n)
    for r in range(P.nrows):
        c = P.C[r]
        head = LinExpr.constant(float(P.d[r]))
        for k in range(n):
            if c[k] != 0.0:
                head = head - LinExpr.of(int(s0[k]), float(c[k]))
        tail = []
        for k in range(n):
            e = LinExpr.constant(0.0)
            for l in range(n):
                if c[l] != 0.0:
                    e = e + q_entry(k, l) * float(c[l])
            tail.append(e)
        prog.add_soc([head] + tail)
    obj = LinExpr.constant(0.0)
    for k in range(n):
        obj = obj + LinExpr.of(int(t[k]))
    prog.set_objective(obj, "max")
    sol = prog.solve()
    if sol.status == "infeasible":
        raise RegionError("polytope is empty")
    if sol.status == "unbounded":
        raise RegionError("polytope is unbounded")
    if not sol.ok:
        raise RegionError(f"ellipsoid solve failed: {sol.raw_status}")
    Q = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            Q[i, j] = Q[j, i] = sol.x[q_idx[(i, j)]]
    center = np.array([sol.x[i] for i in s0])
    ell = Ellipsoid(Q, center)
    resid = ell.containment_residual(P)
    if resid > 1e-8:
        raise RegionError(f"inscribed ellipsoid violates containment by {resid:.2e}")
    return ell


def _row_linpoly(P: TcPolytope, j: int, svars: list[str],
                 learned_vars: dict) -> LinPoly:
    """d_j - c_j^T s as a LinPoly; decision-valued for learned rows."""
    if j in learned_vars:
        c_idx, d_idx, _ = learned_vars[j]
        terms = {Monomial(): LinExpr.of(int(d_idx))}
        for k, v in enumerate(svars):
            terms[Monomial({v: 1})] = LinExpr.of(int(c_idx[k]), -1.0)
        return LinPoly(terms)
    row = Polynomial.constant(float(P.d[j]))
    for k, v in enumerate(svars):
        if P.C[j, k] != 0.0:
            row = row - Polynomial.variable(v).scale(float(P.C[j, k]))
    return LinPoly.from_polynomial(row)


def grow_polytope(scene: Scene, P: TcPolytope, ell: Ellipsoid,
                  certificates: dict[tuple, PlaneCertificate],
                  s_seed: np.ndarray,
                  pairs: list[CollisionPair] | None = None,
                  opts: CertifyOptions = CertifyOptions(),
                  eps0: float = GROW_EPS0):
    """Push the learned faces of P away from its inscribed ellipsoid without
    breaking the current certificate.

    The face multipliers from ``certificates`` stay fixed; the planes, the
    free SOS terms, and the learned rows (C, d) are re-optimized, maximizing
    sum log(delta_i + eps0) over the face push-back distances.  Returns
    ``(P_new, certs_new)``; on solver failure returns ``(P, certificates)``
    unchanged.
    """
    if pairs is None:
        pairs = enumerate_pairs(scene)
    svars = scene.chain.svars
    n = P.dim
    s_seed = np.asarray(s_seed, dtype=float)
    lim = scene.chain.tc_limits()
    delta_cap = 2.0 * float(np.linalg.norm(lim.upper - lim.lower))

    prog = SosProgram()
    learned_vars = {}
    for j, tag in enumerate(P.row_tags):
        if tag != LEARNED_ROW:
            continue
        c_idx = prog.conic.add_vars(n)
        d_idx = prog.conic.add_vars(1)[0]
        delta_idx = prog.conic.add_vars(1)[0]
        learned_vars[j] = (c_idx, d_idx, delta_idx)

    conic = prog.conic
    for j, (c_idx, d_idx, delta_idx) in learned_vars.items():
        # ellipsoid stays inside the pushed face: ||Q c|| <= d - delta - c.s0
        head = (LinExpr.of(int(d_idx)) - LinExpr.of(int(delta_idx)))
        for k in range(n):
            head = head - LinExpr.of(int(c_idx[k]), float(ell.s0[k]))
        tail = []
        for k in range(n):
            e = LinExpr.constant(0.0)
            for l in range(n):
                e = e + LinExpr.of(int(c_idx[l]), float(ell.Q[k, l]))
            tail.append(e)
        conic.add_soc([head] + tail)
        conic.add_nonneg(LinExpr.of(int(delta_idx)))
        conic.add_nonneg(LinExpr.constant(delta_cap) - LinExpr.of(int(delta_idx)))
        # row normalization and seed containment
        conic.add_soc([LinExpr.constant(1.0)]
                      + [LinExpr.of(int(c_idx[k])) for k in range(n)])
        seed_row = LinExpr.of(int(d_idx))
        for k in range(n):
            seed_row = seed_row - LinExpr.of(int(c_idx[k]), float(s_seed[k]))
        conic.add_nonneg(seed_row)

    # plane-side identities with fixed face multipliers
    plane_basis = total_degree_basis(svars, opts.plane_degree)
    plane_exprs = {}
    for pair in pairs:
        cert = certificates[pair.pair_id]
        a = []
        for k in range(3):
            poly, _ = prog.new_decision_poly(plane_basis, f"{pair.pair_id}/a{k}")
            a.append(poly)
        b, _ = prog.new_decision_poly(plane_basis, f"{pair.pair_id}/b")
        plane = PlaneParam(tuple(a), b, pair.expressed_frame)
        plane_exprs[pair.pair_id] = plane
        conds = (plane_side_conditions(pair.body_a, "positive", plane, pair.fk_a)
                 + plane_side_conditions(pair.body_b, "negative", plane, pair.fk_b))
        if len(conds) != len(cert.conditions):
            raise ValueError("certificate does not match the pair's conditions")
        for ci, (cond, cond_cert) in enumerate(zip(conds, cert.conditions)):
            name = f"{pair.pair_id}/c{ci}"
            if isinstance(cond, ScalarCond):
                lam0_basis = cond_cert.multipliers[0][0]
                rhs = prog.new_sos(lam0_basis, f"{name}/lam0")
                lhs = cond.expr
            else:
                aux = cond_cert.aux_vars
                lhs = matrix_sigma(cond.entries, aux, name)
                rhs = LinPoly()
                for k, (basis, _) in enumerate(cond_cert.multipliers[0]):
                    rhs = rhs + prog.new_sos(basis, f"{name}/lam0/u{k}")
            fixed = cond_cert.multiplier_polynomials()
            for j in range(P.nrows):
                lam_poly = fixed[j + 1]
                if lam_poly.is_zero():
                    continue
                rhs = rhs + _row_linpoly(P, j, svars, learned_vars).times_poly(lam_poly)
            prog.add_poly_equality(lhs, rhs, label=name)

    # objective: maximize prod (delta + eps0) via sum of log hypographs
    obj = LinExpr.constant(0.0)
    for j, (_, _, delta_idx) in learned_vars.items():
        t = conic.add_vars(1)[0]
        conic.add_log_hypograph(LinExpr.of(int(t)),
                                LinExpr.of(int(delta_idx)) + eps0)
        obj = obj + LinExpr.of(int(t))
    conic.set_objective(obj, "max")

    result = prog.solve(eig_tol=opts.eig_tol, res_tol=opts.res_tol,
                        solver_tol=opts.solver_tol)
    if not result.feasible:
        return P, certificates

    C_new = P.C.copy()
    d_new = P.d.copy()
    for j, (c_idx, d_idx, _) in learned_vars.items():
        C_new[j] = [result.x[int(i)] for i in c_idx]
        d_new[j] = result.x[int(d_idx)]
    P_new = TcPolytope(C_new, d_new, list(P.row_tags))

    grams = prog.gram_values(result.x)
    new_certs = {}
    for pair in pairs:
        cert = certificates[pair.pair_id]
        plane = plane_exprs[pair.pair_id]
        a = [plane.a[k].to_polynomial(result.x) for k in range(3)]
        b = plane.b.to_polynomial(result.x)
        conditions = []
        for ci, cond_cert in enumerate(cert.conditions):
            name = f"{pair.pair_id}/c{ci}"
            mults = list(cond_cert.multipliers)
            if cond_cert.kind == "scalar":
                mults[0] = grams[f"{name}/lam0"]
            else:
                mults[0] = [grams[f"{name}/lam0/u{k}"]
                            for k in range(len(cond_cert.aux_vars))]
            from .certifier import CondCertificate
            conditions.append(CondCertificate(
                cond_cert.label, cond_cert.kind, cond_cert.svars,
                cond_cert.aux_vars, mults))
        new_certs[pair.pair_id] = PlaneCertificate(
            pair_id=pair.pair_id, expressed_frame=cert.expressed_frame,
            a=a, b=b, conditions=conditions, residual=result.residual,
            min_eig=min(result.min_eigs.values(), default=0.0),
            solve_time=result.solve_time, escalated=cert.escalated)
    return P_new, new_certs


@dataclass
class AlternationLog:
    rows: list[dict] = field(default_factory=list)

    def add(self, iteration: int, det_q: float, cert_time: float,
            ellipsoid_time: float, grow_time: float) -> None:
        self.rows.append({"iteration": iteration, "det_q": det_q,
                          "cert_time": cert_time,
                          "ellipsoid_time": ellipsoid_time,
                          "grow_time": grow_time})

    def det_series(self) -> list[float]:
        return [r["det_q"] for r in self.rows]

    def to_csv(self, path: str) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["iteration", "det_q", "cert_time",
                                "ellipsoid_time", "grow_time"])
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)


@dataclass
class AlternationResult:
    polytope: TcPolytope
    ellipsoid: Ellipsoid
    report: CertificationReport
    log: AlternationLog


class InitialCertificationError(RegionError):
    pass


def bilinear_alternation(scene: Scene, P0: TcPolytope, s_seed: np.ndarray,
                         tol: float = VOLUME_TOL, max_iters: int = MAX_ITERS,
                         opts: CertifyOptions = CertifyOptions(),
                         pairs: list[CollisionPair] | None = None,
                         delta_max: float = 0.3) -> AlternationResult:
    """Alternate certify / inscribe / grow until the relative ellipsoid-volume
    improvement drops below tol.

    P0 must certify; a grow step whose output fails re-certification falls
    back to the minimal uniform contraction that restores a certificate.
    """
    if pairs is None:
        pairs = enumerate_pairs(scene)
    P = P0.normalized()
    log = AlternationLog()
    prev_det = None
    report = None
    ell = None
    for it in range(max_iters):
        t0 = time.perf_counter()
        report = certify_polytope(scene, P, opts, pairs)
        if not report.certified:
            if it == 0:
                raise InitialCertificationError(
                    "initial polytope failed certification")
            P = contract_to_feasible(scene, P, delta_max=delta_max,
                                     opts=opts, pairs=pairs)
            report = certify_polytope(scene, P, opts, pairs)
            if not report.certified:
                break
        cert_time = time.perf_counter() - t0

        t0 = time.perf_counter()
        ell = max_inscribed_ellipsoid(P)
        ellipsoid_time = time.perf_counter() - t0
        det_q = ell.volume_proxy()

        t0 = time.perf_counter()
        P_next, _ = grow_polytope(scene, P, ell, report.certificates(), s_seed,
                                  pairs, opts)
        grow_time = time.perf_counter() - t0
        log.add(it, det_q, cert_time, ellipsoid_time, grow_time)

        if prev_det is not None and prev_det > 0:
            if (det_q - prev_det) / prev_det < tol:
                break
        prev_det = det_q
        P = P_next

    report = certify_polytope(scene, P, opts, pairs)
    if not report.certified:
        P = contract_to_feasible(scene, P, delta_max=delta_max, opts=opts,
                                 pairs=pairs)
        report = certify_polytope(scene, P, opts, pairs)
    ell = max_inscribed_ellipsoid(P)
    return AlternationResult(P, ell, report, log)


def contract_to_feasible(scene: Scene, P: TcPolytope, delta_max: float = 0.3,
                         bisect_tol: float = 1e-3,
                         opts: CertifyOptions = CertifyOptions(),
                         pairs: list[CollisionPair] | None = None
                         ) -> TcPolytope:
    """Smallest uniform contraction P_delta = {Cs <= d - delta} (within
    bisect_tol) whose contraction certifies."""
    if pairs is None:
        pairs = enumerate_pairs(scene)

    def certifiable(delta: float) -> bool:
        Pd = P.contract(delta)
        if Pd.is_empty(tol=1e-8):
            return False
        return certify_polytope(scene, Pd, opts, pairs).certified

    if certifiable(0.0):
        return P
    if not certifiable(delta_max):
        raise RegionError(
            f"no certifiable contraction within delta_max={delta_max}; the "
            f"contraction is empty or still uncertified")
    lo, hi = 0.0, delta_max
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        if certifiable(mid):
            hi = mid
        else:
            lo = mid
    return P.contract(hi)
