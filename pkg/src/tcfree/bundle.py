"""Region bundles: self-contained certificate documents.

A bundle carries the scene text, the polytope, the seed, per-pair plane
polynomials and multiplier Gram matrices, and verification residuals, so a
third party can re-verify the certificate offline from the file alone: every
Gram matrix must be PSD and every weighted-SOS identity must hold on
coefficients, neither of which requires re-solving anything.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .certifier import (CollisionPair, CondCertificate, PlaneCertificate,
                        enumerate_pairs, gram_to_polynomial)
from .geometry import MatrixCond, ScalarCond, plane_side_conditions
from .polyalg import Monomial, Polynomial
from .polytope import Ellipsoid, TcPolytope
from .scenefile import Scene, parse_scene_text
from .soscomp import LinPoly, lift_linpoly, matrix_sigma

__all__ = ["RegionBundle", "VerifyReport", "verify_bundle", "monomial_str",
           "parse_monomial"]

FORMAT = "tcfree-region-bundle-v1"


def monomial_str(m: Monomial) -> str:
    if m.is_constant():
        return "1"
    return "*".join(v if e == 1 else f"{v}^{e}"
                    for v, e in sorted(m.exponents.items()))


def parse_monomial(text: str) -> Monomial:
    if text.strip() == "1":
        return Monomial()
    exps = {}
    for factor in text.split("*"):
        if "^" in factor:
            var, e = factor.split("^")
            exps[var] = int(e)
        else:
            exps[factor] = exps.get(factor, 0) + 1
    return Monomial(exps)


def _poly_doc(p: Polynomial) -> dict:
    return {monomial_str(m): c for m, c in sorted(
        p.terms.items(), key=lambda mc: monomial_str(mc[0]))}


def _poly_from_doc(doc: dict) -> Polynomial:
    return Polynomial({parse_monomial(k): float(v) for k, v in doc.items()})


def _gram_doc(basis, gram) -> dict:
    return {"basis": [monomial_str(m) for m in basis],
            "gram": np.asarray(gram).tolist()}


def _gram_from_doc(doc) -> tuple[list[Monomial], np.ndarray]:
    return ([parse_monomial(t) for t in doc["basis"]],
            np.asarray(doc["gram"], dtype=float))


@dataclass
class RegionBundle:
    scene_text: str
    polytope: TcPolytope
    seed: np.ndarray
    certificates: dict[tuple[str, str], PlaneCertificate]
    ellipsoid: Ellipsoid | None = None
    stats: dict = field(default_factory=dict)

    def to_json(self) -> str:
        pairs_doc = []
        for pid in sorted(self.certificates):
            cert = self.certificates[pid]
            conds = []
            for cond in cert.conditions:
                if cond.kind == "scalar":
                    mults = [_gram_doc(*entry) for entry in cond.multipliers]
                else:
                    mults = [[_gram_doc(*sub) for sub in entry]
                             for entry in cond.multipliers]
                conds.append({"label": cond.label, "kind": cond.kind,
                              "svars": cond.svars, "aux_vars": cond.aux_vars,
                              "multipliers": mults})
            pairs_doc.append({
                "pair": list(pid),
                "expressed_frame": cert.expressed_frame,
                "plane": {"a": [_poly_doc(cert.a[k]) for k in range(3)],
                          "b": _poly_doc(cert.b)},
                "residual": cert.residual,
                "min_eig": cert.min_eig,
                "escalated": cert.escalated,
                "conditions": conds,
            })
        doc = {
            "format": FORMAT,
            "scene": self.scene_text,
            "polytope": {"C": self.polytope.C.tolist(),
                         "d": self.polytope.d.tolist(),
                         "row_tags": self.polytope.row_tags},
            "seed": np.asarray(self.seed, dtype=float).tolist(),
            "ellipsoid": None if self.ellipsoid is None else
                {"Q": self.ellipsoid.Q.tolist(),
                 "s0": self.ellipsoid.s0.tolist()},
            "stats": self.stats,
            "pairs": pairs_doc,
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "RegionBundle":
        doc = json.loads(text)
        if doc.get("format") != FORMAT:
            raise ValueError(f"not a {FORMAT} document")
        P = TcPolytope(np.array(doc["polytope"]["C"]),
                       np.array(doc["polytope"]["d"]),
                       list(doc["polytope"]["row_tags"]))
        certs = {}
        for pd in doc["pairs"]:
            pid = tuple(pd["pair"])
            conds = []
            for cd in pd["conditions"]:
                if cd["kind"] == "scalar":
                    mults = [_gram_from_doc(entry)
                             for entry in cd["multipliers"]]
                else:
                    mults = [[_gram_from_doc(sub) for sub in entry]
                             for entry in cd["multipliers"]]
                conds.append(CondCertificate(cd["label"], cd["kind"],
                                             list(cd["svars"]),
                                             list(cd["aux_vars"]), mults))
            certs[pid] = PlaneCertificate(
                pair_id=pid, expressed_frame=pd["expressed_frame"],
                a=[_poly_from_doc(d) for d in pd["plane"]["a"]],
                b=_poly_from_doc(pd["plane"]["b"]),
                conditions=conds, residual=float(pd["residual"]),
                min_eig=float(pd["min_eig"]), solve_time=0.0,
                escalated=bool(pd.get("escalated", False)))
        ell = None
        if doc.get("ellipsoid"):
            ell = Ellipsoid(np.array(doc["ellipsoid"]["Q"]),
                            np.array(doc["ellipsoid"]["s0"]))
        return cls(doc["scene"], P, np.array(doc["seed"], dtype=float), certs,
                   ell, dict(doc.get("stats", {})))

    @classmethod
    def load(cls, path: str) -> "RegionBundle":
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass
class VerifyReport:
    ok: bool
    max_residual: float
    min_gram_eig: float
    issues: list[str] = field(default_factory=list)


def _row_polynomial(P: TcPolytope, j: int, svars: list[str]) -> Polynomial:
    row = Polynomial.constant(float(P.d[j]))
    for k, v in enumerate(svars):
        if P.C[j, k] != 0.0:
            row = row - Polynomial.variable(v).scale(float(P.C[j, k]))
    return row


def verify_bundle(bundle: RegionBundle, eig_tol: float = 1e-7,
                  res_tol: float = 1e-6) -> VerifyReport:
    """Offline re-verification of a serialized bundle.

    Rebuilds the plane-side condition polynomials from the inline scene and
    the stored planes, then checks (a) every stored Gram matrix is PSD within
    eig_tol, and (b) every weighted-SOS identity
    condition = lam_0 + sum_j lam_j (d_j - c_j^T s) holds on coefficients
    within res_tol.  No optimization is run.
    """
    issues: list[str] = []
    scene = parse_scene_text(bundle.scene_text)
    P = bundle.polytope
    svars = scene.chain.svars
    lim = scene.chain.tc_limits()
    lo, hi = P.extent()
    if np.any(lo < lim.lower - 1e-6) or np.any(hi > lim.upper + 1e-6):
        issues.append("polytope not contained in the joint-limit box")
    if np.any(np.linalg.norm(P.C, axis=1) > 1.0 + 1e-6):
        issues.append("row normalization violated")

    pairs = {p.pair_id: p for p in enumerate_pairs(scene)}
    missing = sorted(set(pairs) - set(bundle.certificates))
    if missing:
        issues.append(f"missing certificates for pairs: {missing}")

    max_res = 0.0
    min_eig = np.inf
    rows = [_row_polynomial(P, j, svars) for j in range(P.nrows)]
    for pid, cert in sorted(bundle.certificates.items()):
        pair = pairs.get(pid)
        if pair is None:
            issues.append(f"certificate for unknown pair {pid}")
            continue
        plane = cert.plane()
        conds = (plane_side_conditions(pair.body_a, "positive", plane, pair.fk_a)
                 + plane_side_conditions(pair.body_b, "negative", plane,
                                         pair.fk_b))
        if len(conds) != len(cert.conditions):
            issues.append(f"{pid}: condition count mismatch")
            continue
        for cond, cc in zip(conds, cert.conditions):
            lams = []
            for entry in cc.multipliers:
                sub = entry if cc.kind == "matrix" else [entry]
                acc = Polynomial.zero()
                for basis, gram in sub:
                    ev = float(np.linalg.eigvalsh(gram)[0]) if len(basis) \
                        else 0.0
                    min_eig = min(min_eig, ev)
                    acc = acc + gram_to_polynomial(basis, gram)
                lams.append(acc)
            if len(lams) != P.nrows + 1:
                issues.append(f"{pid}/{cc.label}: multiplier count mismatch")
                continue
            if cc.kind == "scalar":
                lhs = cond.expr.to_polynomial(np.zeros(0))
            else:
                lhs = matrix_sigma(cond.entries, cc.aux_vars) \
                    .to_polynomial(np.zeros(0))
            rhs = lams[0]
            for j in range(P.nrows):
                rhs = rhs + lams[j + 1] * rows[j]
            diff = lhs - rhs
            res = max((abs(c) for c in diff.terms.values()), default=0.0)
            max_res = max(max_res, res)
            if res > res_tol:
                issues.append(f"{pid}/{cc.label}: identity residual {res:.2e}")
    if min_eig is np.inf:
        min_eig = 0.0
    if min_eig < -eig_tol:
        issues.append(f"gram eigenvalue {min_eig:.2e} below -{eig_tol}")
    ok = not issues
    return VerifyReport(ok, max_res, float(min_eig), issues)
