"""Per-collision-pair certification of TC-space polytopes.

The primary path searches for a configuration-parametrized separating plane
per pair together with weighted-SOS multipliers proving the plane-side
conditions on the whole polytope.  The secondary path refutes the existence of
a shared point via the -1 emptiness identity.  Both report one of
feasible / infeasible / indeterminate; infeasible at a fixed degree is never
interpreted as proof of collision.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import (Capsule, Cylinder, MatrixCond, PlaneParam, ScalarCond,
                       Sphere, VPolytope, membership_conditions,
                       plane_side_conditions, plane_margins)
from .kinematics import RationalPose
from .polyalg import (Monomial, Polynomial, coordinate_degree_basis,
                      sort_monomials, total_degree_basis, var_sort_key)
from .polytope import TcPolytope
from .scenefile import Scene
from .soscomp import SosProgram, StructuralBasisError

__all__ = [
    "CollisionPair",
    "CertifyOptions",
    "CondCertificate",
    "PlaneCertificate",
    "RefutationCertificate",
    "PairResult",
    "CertificationReport",
    "enumerate_pairs",
    "certify_pair_plane",
    "certify_pair_refutation",
    "certify_polytope",
    "evaluate_certificate",
    "gram_to_polynomial",
]

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
INDETERMINATE = "indeterminate"


@dataclass
class CollisionPair:
    """Two bodies on distinct links with cached kinematics in the expressed
    frame chosen mid-chain between them."""

    body_a: object
    body_b: object
    expressed_frame: str
    fk_a: RationalPose
    fk_b: RationalPose

    @property
    def pair_id(self) -> tuple[str, str]:
        return (self.body_a.name, self.body_b.name)

    @property
    def svars(self) -> list[str]:
        return sorted(self.fk_a.variables | self.fk_b.variables,
                      key=var_sort_key)


def enumerate_pairs(scene: Scene) -> list[CollisionPair]:
    """All body pairs on distinct links, minus the scene's exclusion list,
    in deterministic scene order."""
    pairs = []
    bodies = scene.bodies
    for i in range(len(bodies)):
        for j in range(i + 1, len(bodies)):
            a, b = bodies[i], bodies[j]
            if a.link == b.link:
                continue
            if frozenset((a.name, b.name)) in scene.exclude_pairs:
                continue
            frame = scene.chain.select_expressed_frame(a.link, b.link)
            pairs.append(CollisionPair(
                a, b, frame,
                scene.chain.rational_fk(frame, a.link),
                scene.chain.rational_fk(frame, b.link)))
    return pairs


@dataclass
class CertifyOptions:
    plane_degree: int = 1
    mult_coord_degree: int = 1      # Gram per-variable degree; multipliers get 2x
    escalate: bool = True           # one retry at +1 Gram coordinate degree
    early_exit: bool = False        # stop at the first uncertified pair
    workers: int = 1
    eig_tol: float = 1e-7
    res_tol: float = 1e-6
    solver_tol: float = 1e-8
    refute_mult_degree: int = 1     # total-degree Gram basis for refutation
    refute_free_degree: int = 2
    allow_round_refutation: bool = False


@dataclass
class CondCertificate:
    """Verified multipliers for one plane-side condition.

    ``multipliers`` holds, per polytope weight (index 0 is the free SOS term),
    either one ``(basis, gram)`` pair (scalar conditions) or one pair per aux
    coordinate (matrix conditions).
    """

    label: str
    kind: str                       # 'scalar' | 'matrix'
    svars: list[str]
    aux_vars: list[str]
    multipliers: list

    def multiplier_polynomials(self) -> list[Polynomial]:
        """lambda_j as plain polynomials (summed over aux coordinates)."""
        out = []
        for entry in self.multipliers:
            if self.kind == "scalar":
                basis, gram = entry
                out.append(gram_to_polynomial(basis, gram))
            else:
                acc = Polynomial.zero()
                for basis, gram in entry:
                    acc = acc + gram_to_polynomial(basis, gram)
                out.append(acc)
        return out


@dataclass
class PlaneCertificate:
    pair_id: tuple[str, str]
    expressed_frame: str
    a: list[Polynomial]
    b: Polynomial
    conditions: list[CondCertificate]
    residual: float
    min_eig: float
    solve_time: float
    escalated: bool = False

    def plane(self) -> PlaneParam:
        return PlaneParam(tuple(self.a), self.b, self.expressed_frame)


@dataclass
class RefutationCertificate:
    pair_id: tuple[str, str]
    multipliers: list               # [(name, basis, gram)]
    free_multipliers: list          # [(name, basis, coeffs)]
    residual: float
    min_eig: float
    solve_time: float
    escalated: bool = False


@dataclass
class PairResult:
    pair_id: tuple[str, str]
    status: str
    certificate: object = None
    message: str = ""
    solve_time: float = 0.0
    largest_gram: int = 0


@dataclass
class CertificationReport:
    verdict: str                    # 'certified' | 'not_certified'
    pair_results: dict
    n_pairs: int
    largest_gram: int
    total_time: float

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    def certificates(self) -> dict:
        return {pid: r.certificate for pid, r in self.pair_results.items()
                if r.certificate is not None}


def gram_to_polynomial(basis: list[Monomial], gram: np.ndarray) -> Polynomial:
    out: dict[Monomial, float] = {}
    n = len(basis)
    for i in range(n):
        for j in range(n):
            m = basis[i] * basis[j]
            out[m] = out.get(m, 0.0) + gram[i, j]
    return Polynomial(out)


def _check_inside_limits(P: TcPolytope, scene: Scene, tol: float = 1e-7) -> None:
    lim = scene.chain.tc_limits()
    lo, hi = P.extent()
    if np.any(lo < lim.lower - tol) or np.any(hi > lim.upper + tol):
        raise ValueError("polytope is not contained in the joint-limit box")


def _plane_decision(prog: SosProgram, pair: CollisionPair, all_svars: list[str],
                    degree: int):
    basis = total_degree_basis(all_svars, degree)
    a = []
    for k in range(3):
        poly, _ = prog.new_decision_poly(basis, f"a{k}")
        a.append(poly)
    b, _ = prog.new_decision_poly(basis, "b")
    return PlaneParam(tuple(a), b, pair.expressed_frame), basis


def _gram_basis(svars: list[str], coord_degree: int) -> list[Monomial]:
    return coordinate_degree_basis(svars, coord_degree)


def _build_pair_program(pair: CollisionPair, P: TcPolytope,
                        all_svars: list[str], opts: CertifyOptions,
                        coord_degree: int):
    """One SOS feasibility program for a single collision pair."""
    prog = SosProgram()
    plane, plane_basis = _plane_decision(prog, pair, all_svars, opts.plane_degree)
    conds = (plane_side_conditions(pair.body_a, "positive", plane, pair.fk_a)
             + plane_side_conditions(pair.body_b, "negative", plane, pair.fk_b))
    layout = []
    for ci, cond in enumerate(conds):
        gram_basis = _gram_basis(cond.svars, coord_degree)
        if isinstance(cond, ScalarCond):
            prog.putinar_nonneg(cond.expr, P.C, P.d, gram_basis, all_svars,
                                name=f"c{ci}")
            layout.append(("scalar", cond.label, cond.svars, [], gram_basis))
        else:
            aux = [f"u{ci}_{k}" for k in range(cond.size - 1)]
            prog.lower_matrix_sos(cond.entries, aux, P.C, P.d, gram_basis,
                                  all_svars, name=f"c{ci}")
            layout.append(("matrix", cond.label, cond.svars, aux, gram_basis))
    return prog, plane, plane_basis, layout


def _extract_certificate(prog: SosProgram, result, pair, plane, layout,
                         P: TcPolytope, escalated: bool) -> PlaneCertificate:
    x = result.x
    a = [plane.a[k].to_polynomial(x) for k in range(3)]
    b = plane.b.to_polynomial(x)
    grams = prog.gram_values(x)
    conditions = []
    m = P.nrows
    for ci, (kind, label, svars, aux, _) in enumerate(layout):
        mults = []
        for j in range(m + 1):
            if kind == "scalar":
                basis, gram = grams[f"c{ci}/lam{j}"]
                mults.append((basis, gram))
            else:
                entry = []
                for k in range(len(aux)):
                    basis, gram = grams[f"c{ci}/lam{j}/u{k}"]
                    entry.append((basis, gram))
                mults.append(entry)
        conditions.append(CondCertificate(label, kind, svars, aux, mults))
    return PlaneCertificate(
        pair_id=pair.pair_id, expressed_frame=pair.expressed_frame,
        a=a, b=b, conditions=conditions, residual=result.residual,
        min_eig=min(result.min_eigs.values(), default=0.0),
        solve_time=result.solve_time, escalated=escalated)


def certify_pair_plane(pair: CollisionPair, P: TcPolytope,
                       all_svars: list[str],
                       opts: CertifyOptions = CertifyOptions()) -> PairResult:
    """Search for a separating-plane certificate for one pair over P.

    Infeasible means no certificate exists at the tried degrees, not that a
    collision exists.
    """
    t0 = time.perf_counter()
    degrees = [opts.mult_coord_degree]
    if opts.escalate:
        degrees.append(opts.mult_coord_degree + 1)
    last_status, last_msg = INFEASIBLE, ""
    largest = 0
    for attempt, deg in enumerate(degrees):
        try:
            prog, plane, _, layout = _build_pair_program(
                pair, P, all_svars, opts, deg)
        except StructuralBasisError as exc:
            last_status, last_msg = INFEASIBLE, str(exc)
            continue
        largest = max((b.handle.size for b in prog.blocks), default=0)
        result = prog.solve(eig_tol=opts.eig_tol, res_tol=opts.res_tol,
                            solver_tol=opts.solver_tol)
        if result.feasible:
            cert = _extract_certificate(prog, result, pair, plane, layout, P,
                                        escalated=attempt > 0)
            return PairResult(pair.pair_id, FEASIBLE, cert,
                              solve_time=time.perf_counter() - t0,
                              largest_gram=largest)
        last_status = result.status
        last_msg = result.message
    return PairResult(pair.pair_id, last_status, None, last_msg,
                      solve_time=time.perf_counter() - t0, largest_gram=largest)


def certify_polytope(scene: Scene, P: TcPolytope,
                     opts: CertifyOptions = CertifyOptions(),
                     pairs: list[CollisionPair] | None = None
                     ) -> CertificationReport:
    """Certify every collision pair over P; verdict is 'certified' only if all
    pairs carry verified certificates."""
    t0 = time.perf_counter()
    _check_inside_limits(P, scene)
    if pairs is None:
        pairs = enumerate_pairs(scene)
    all_svars = scene.chain.svars
    results: dict = {}

    if opts.workers > 1 and len(pairs) > 1 and not opts.early_exit:
        with ThreadPoolExecutor(max_workers=opts.workers) as pool:
            futs = {pool.submit(certify_pair_plane, pair, P, all_svars, opts):
                    pair for pair in pairs}
            for fut, pair in futs.items():
                results[pair.pair_id] = fut.result()
    else:
        for pair in pairs:
            res = certify_pair_plane(pair, P, all_svars, opts)
            results[res.pair_id] = res
            if opts.early_exit and res.status != FEASIBLE:
                break
    # deterministic merge order by pair id
    ordered = {pid: results[pid] for pid in sorted(results)}
    all_ok = (len(ordered) == len(pairs)
              and all(r.status == FEASIBLE for r in ordered.values()))
    return CertificationReport(
        verdict="certified" if all_ok else "not_certified",
        pair_results=ordered,
        n_pairs=len(pairs),
        largest_gram=max((r.largest_gram for r in ordered.values()), default=0),
        total_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# emptiness-refutation path
# ---------------------------------------------------------------------------

_ROUND = (Capsule, Cylinder)


def certify_pair_refutation(pair: CollisionPair, P: TcPolytope,
                            all_svars: list[str],
                            opts: CertifyOptions = CertifyOptions()
                            ) -> PairResult:
    """Certify emptiness of {(s, x, aux) | s in P, x in A(s), x in B(s)} via
    the -1 identity.  Defaults to the polytope/sphere family; capsules and
    cylinders are feature-gated behind ``allow_round_refutation``."""
    if not opts.allow_round_refutation:
        for body in (pair.body_a, pair.body_b):
            if isinstance(body, _ROUND):
                return PairResult(pair.pair_id, INDETERMINATE, None,
                                  "refutation for capsule/cylinder is "
                                  "feature-gated off")
    t0 = time.perf_counter()
    xvars = ["x0", "x1", "x2"]
    mem_a = membership_conditions(pair.body_a, pair.fk_a, xvars, "a")
    mem_b = membership_conditions(pair.body_b, pair.fk_b, xvars, "b")
    gammas = []
    for j in range(P.nrows):
        row = Polynomial.constant(float(P.d[j]))
        for k, v in enumerate(all_svars):
            if P.C[j, k] != 0.0:
                row = row - Polynomial.variable(v).scale(float(P.C[j, k]))
        gammas.append(row)
    gammas += mem_a.gammas + mem_b.gammas
    hs = mem_a.hs + mem_b.hs
    variables = sorted(set(all_svars) | set(xvars) | set(mem_a.aux)
                       | set(mem_b.aux), key=var_sort_key)

    degrees = [(opts.refute_mult_degree, opts.refute_free_degree)]
    if opts.escalate:
        degrees.append((opts.refute_mult_degree + 1, opts.refute_free_degree + 1))
    last_status, last_msg = INFEASIBLE, ""
    for attempt, (md, fd) in enumerate(degrees):
        prog = SosProgram()
        mult_basis = total_degree_basis(variables, md)
        free_basis = total_degree_basis(variables, fd)
        prog.putinar_refutation(gammas, hs, mult_basis, free_basis, name="r")
        result = prog.solve(eig_tol=opts.eig_tol, res_tol=opts.res_tol,
                            solver_tol=opts.solver_tol)
        if result.feasible:
            grams = prog.gram_values(result.x)
            mults = [(name, basis, gram) for name, (basis, gram)
                     in grams.items()]
            cert = RefutationCertificate(
                pair_id=pair.pair_id, multipliers=mults, free_multipliers=[],
                residual=result.residual,
                min_eig=min(result.min_eigs.values(), default=0.0),
                solve_time=result.solve_time, escalated=attempt > 0)
            return PairResult(pair.pair_id, FEASIBLE, cert,
                              solve_time=time.perf_counter() - t0)
        last_status, last_msg = result.status, result.message
    return PairResult(pair.pair_id, last_status, None, last_msg,
                      solve_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# certificate evaluation
# ---------------------------------------------------------------------------

def evaluate_certificate(scene: Scene, pair: CollisionPair,
                         cert: PlaneCertificate, P: TcPolytope,
                         s0: np.ndarray):
    """Numeric plane and separation margins for one pair at s0 in P.

    Returns ``(a, b, margin_a, margin_b)`` where margin_a is the minimum of
    a.x + b over body A (must be > 0) and margin_b the maximum over body B
    (must be < 0), both measured in the pair's expressed frame.
    """
    s0 = np.asarray(s0, dtype=float)
    if not P.contains(s0)[0]:
        raise ValueError("s0 outside the certified polytope")
    point = {scene.chain.svar(i): s0[i] for i in range(s0.size)}
    a = np.array([cert.a[k].evaluate(point) for k in range(3)])
    b = float(cert.b.evaluate(point))
    q = scene.chain.s_to_q(s0)
    pose_a = scene.chain.trig_fk(q, cert.expressed_frame, pair.body_a.link)
    pose_b = scene.chain.trig_fk(q, cert.expressed_frame, pair.body_b.link)
    lo_a, _ = plane_margins(pair.body_a, pose_a, a, b)
    _, hi_b = plane_margins(pair.body_b, pose_b, a, b)
    return a, b, lo_a, hi_b
