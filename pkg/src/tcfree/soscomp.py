"""Sums-of-squares programs compiled to a single conic (SDP) instance.

A :class:`SosProgram` owns decision polynomial coefficients, SOS memberships
(each a Gram PSD block over an explicit monomial basis), and polynomial
equality constraints between affine-coefficient polynomials.  ``compile``
lowers everything to one block-diagonal conic program and ``solve`` runs the
backend, then independently re-verifies the solution (Gram eigenvalues and
coefficient-matching residuals) before ever reporting it feasible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, LinExpr, PsdVar
from .polyalg import (Monomial, Polynomial, newton_basis_check, product_basis,
                      sort_monomials, var_sort_key)

__all__ = [
    "LinPoly",
    "SosProgram",
    "SolveResult",
    "StructuralBasisError",
    "PsdSizeError",
    "matrix_sigma",
    "lift_linpoly",
]

DEFAULT_EIG_TOL = 1e-7
DEFAULT_RES_TOL = 1e-6
COEFF_DROP_TOL = 1e-12
DEFAULT_PSD_DIM_CAP = 20_000


class StructuralBasisError(ValueError):
    """The multiplier basis cannot structurally satisfy the target equality."""


class PsdSizeError(ValueError):
    """Total PSD dimension of the compiled program exceeds the cap."""


class LinPoly:
    """Polynomial in the indeterminates whose coefficients are affine
    expressions of program decision variables."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict[Monomial, LinExpr] | None = None):
        self.terms = terms or {}

    @classmethod
    def from_polynomial(cls, p: Polynomial) -> "LinPoly":
        return cls({m: LinExpr.constant(c) for m, c in p.terms.items()})

    @classmethod
    def from_decision(cls, basis: list[Monomial], var_idx: np.ndarray) -> "LinPoly":
        return cls({m: LinExpr.of(int(v)) for m, v in zip(basis, var_idx)})

    @classmethod
    def var_times_poly(cls, var: int, p: Polynomial) -> "LinPoly":
        return cls({m: LinExpr.of(var, c) for m, c in p.terms.items()})

    def copy(self) -> "LinPoly":
        return LinPoly({m: e.copy() for m, e in self.terms.items()})

    def __add__(self, other: "LinPoly") -> "LinPoly":
        out = {m: e.copy() for m, e in self.terms.items()}
        for m, e in other.terms.items():
            out[m] = out[m] + e if m in out else e.copy()
        return LinPoly(out)

    def __neg__(self) -> "LinPoly":
        return LinPoly({m: -e for m, e in self.terms.items()})

    def __sub__(self, other: "LinPoly") -> "LinPoly":
        return self + (-other)

    def scaled(self, c: float) -> "LinPoly":
        return LinPoly({m: e * c for m, e in self.terms.items()})

    def times_poly(self, p: Polynomial) -> "LinPoly":
        """Multiply by a constant-coefficient polynomial."""
        out: dict[Monomial, LinExpr] = {}
        for m1, e in self.terms.items():
            for m2, c in p.terms.items():
                m = m1 * m2
                contrib = e * c
                out[m] = out[m] + contrib if m in out else contrib
        return LinPoly(out)

    def support(self) -> list[Monomial]:
        return sort_monomials(self.terms)

    def to_polynomial(self, x: np.ndarray) -> Polynomial:
        return Polynomial({m: e.value(x) for m, e in self.terms.items()})

    def evaluate_indeterminates(self, point: dict[str, float]) -> LinExpr:
        out = LinExpr.constant(0.0)
        for m, e in self.terms.items():
            out = out + e * m.evaluate(point)
        return out


def matrix_sigma(entries, aux_vars: list[str], name: str = "mat") -> LinPoly:
    """sigma(u, s) = [u;1]^T M [u;1] for a symmetric matrix of LinPoly entries
    whose last row/column is the homogeneous coordinate.  Entries coupling two
    distinct aux coordinates must vanish (per-coordinate decomposability)."""
    dim = len(entries)
    for i in range(dim - 1):
        for j in range(i + 1, dim - 1):
            ent = lift_linpoly(entries[i][j])
            if ent.terms:
                raise StructuralBasisError(
                    f"{name}: cross term between aux coordinates {i},{j}")
    sigma = LinPoly()
    for i in range(dim):
        for j in range(dim):
            ent = lift_linpoly(entries[i][j])
            factor = Polynomial.constant(1.0)
            if i < dim - 1:
                factor = factor * Polynomial.variable(aux_vars[i])
            if j < dim - 1:
                factor = factor * Polynomial.variable(aux_vars[j])
            sigma = sigma + ent.times_poly(factor)
    return sigma


def lift_linpoly(p) -> LinPoly:
    if isinstance(p, LinPoly):
        return p
    if isinstance(p, Polynomial):
        return LinPoly.from_polynomial(p)
    if isinstance(p, (int, float)):
        return LinPoly.from_polynomial(Polynomial.constant(p))
    raise TypeError(f"cannot interpret {type(p)} as LinPoly")


@dataclass
class GramBlock:
    """One SOS membership: poly == z^T X z over the stored Gram basis."""

    name: str
    basis: list[Monomial]
    handle: PsdVar

    def as_linpoly(self) -> LinPoly:
        terms: dict[Monomial, LinExpr] = {}
        n = len(self.basis)
        for i in range(n):
            for j in range(i, n):
                m = self.basis[i] * self.basis[j]
                scale = 1.0 if i == j else 2.0
                e = LinExpr.of(self.handle.index(i, j), scale)
                terms[m] = terms[m] + e if m in terms else e
        return LinPoly(terms)

    def extract(self, x: np.ndarray) -> np.ndarray:
        return self.handle.extract(x)

    def polynomial(self, x: np.ndarray) -> Polynomial:
        return self.as_linpoly().to_polynomial(x)


@dataclass
class SolveResult:
    """Outcome of one SOS solve after the independent verification gate."""

    status: str                     # 'feasible' | 'infeasible' | 'indeterminate'
    x: np.ndarray | None = None
    objective: float | None = None
    min_eigs: dict[str, float] = field(default_factory=dict)
    residual: float = float("nan")
    solve_time: float = 0.0
    backend_status: str = ""
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


class SosProgram:
    """Collects SOS memberships, decision polynomials and polynomial equalities."""

    def __init__(self, psd_dim_cap: int = DEFAULT_PSD_DIM_CAP):
        self.conic = ConicProgram()
        self.blocks: list[GramBlock] = []
        self._equalities: list[tuple[str, LinPoly]] = []   # expr == 0
        self._compiled = False
        self.psd_dim_cap = psd_dim_cap

    # -- construction --------------------------------------------------------

    def new_decision_poly(self, basis: list[Monomial], name: str = "p"):
        """Free polynomial with one decision coefficient per basis monomial."""
        idx = self.conic.add_vars(len(basis))
        return LinPoly.from_decision(basis, idx), idx

    def new_sos(self, gram_basis: list[Monomial], name: str) -> LinPoly:
        if not gram_basis:
            raise StructuralBasisError(f"empty Gram basis for {name}")
        handle = self.conic.add_psd_var(len(gram_basis))
        block = GramBlock(name, list(gram_basis), handle)
        self.blocks.append(block)
        return block.as_linpoly()

    def add_poly_equality(self, lhs, rhs, label: str = "eq") -> None:
        diff = lift_linpoly(lhs) - lift_linpoly(rhs)
        self._equalities.append((label, diff))

    def putinar_nonneg(self, p, polytope_C: np.ndarray, polytope_d: np.ndarray,
                       mult_gram_basis: list[Monomial], svars: list[str],
                       name: str = "cond") -> list[str]:
        """Enforce p >= 0 on {s | Cs <= d} via the weighted-SOS identity
        p = lam_0 + sum_j lam_j (d_j - c_j^T s), all lam SOS on the given basis.

        Returns the block names added (lam_0 first).  Raises
        :class:`StructuralBasisError` if the basis cannot carry p's support.
        """
        p = lift_linpoly(p)
        self._check_newton(p.support(), mult_gram_basis, svars, name)
        names = []
        lam0 = self.new_sos(mult_gram_basis, f"{name}/lam0")
        names.append(f"{name}/lam0")
        rhs = lam0
        for j in range(polytope_C.shape[0]):
            lam = self.new_sos(mult_gram_basis, f"{name}/lam{j + 1}")
            names.append(f"{name}/lam{j + 1}")
            row = Polynomial.constant(float(polytope_d[j]))
            for k, v in enumerate(svars):
                if polytope_C[j, k] != 0.0:
                    row = row - Polynomial.variable(v).scale(float(polytope_C[j, k]))
            rhs = rhs + lam.times_poly(row)
        self.add_poly_equality(p, rhs, label=name)
        return names

    def lower_matrix_sos(self, entries, aux_vars: list[str],
                         polytope_C: np.ndarray, polytope_d: np.ndarray,
                         mult_gram_basis: list[Monomial], svars: list[str],
                         name: str = "mat") -> list[str]:
        """Lower a symmetric polynomial-matrix PSD-on-polytope condition.

        ``entries[i][j]`` is the (i, j) entry; the last row/column is the
        homogeneous coordinate and ``aux_vars`` name the remaining ones.
        Forms sigma(u, s) = [u;1]^T M [u;1] and enforces
        sigma = lam_0 + sum_j lam_j (d_j - c_j^T s) with every multiplier the
        sum of per-coordinate SOS polynomials lam(u_k, s) over a basis of
        per-variable degree one in {u_k} and the given s basis.
        """
        dim = len(entries)
        if len(aux_vars) != dim - 1:
            raise ValueError("aux_vars must name all but the homogeneous coordinate")
        sigma = matrix_sigma(entries, aux_vars, name)

        def per_coord_sum(tag: str) -> LinPoly:
            total = LinPoly()
            for k, u in enumerate(aux_vars):
                basis = sort_monomials(list(mult_gram_basis) +
                                       [m * Monomial({u: 1}) for m in mult_gram_basis])
                total = total + self.new_sos(basis, f"{name}/{tag}/u{k}")
            return total

        names = [f"{name}/lam0"]
        rhs = per_coord_sum("lam0")
        for j in range(polytope_C.shape[0]):
            names.append(f"{name}/lam{j + 1}")
            lam = per_coord_sum(f"lam{j + 1}")
            row = Polynomial.constant(float(polytope_d[j]))
            for k, v in enumerate(svars):
                if polytope_C[j, k] != 0.0:
                    row = row - Polynomial.variable(v).scale(float(polytope_C[j, k]))
            rhs = rhs + lam.times_poly(row)
        self.add_poly_equality(sigma, rhs, label=name)
        return names

    def putinar_refutation(self, gammas: list[Polynomial], hs: list[Polynomial],
                           mult_gram_basis: list[Monomial],
                           free_basis: list[Monomial], name: str = "refute") -> None:
        """Enforce the emptiness identity
        -1 = lam_0 + sum_i lam_i gamma_i + sum_j phi_j h_j
        with lam SOS over ``mult_gram_basis`` and phi free over ``free_basis``."""
        rhs = self.new_sos(mult_gram_basis, f"{name}/lam0")
        for i, g in enumerate(gammas):
            lam = self.new_sos(mult_gram_basis, f"{name}/lam{i + 1}")
            rhs = rhs + lam.times_poly(g)
        for j, h in enumerate(hs):
            phi, _ = self.new_decision_poly(free_basis, f"{name}/phi{j}")
            rhs = rhs + phi.times_poly(h)
        self.add_poly_equality(LinPoly.from_polynomial(Polynomial.constant(-1.0)),
                               rhs, label=name)

    @staticmethod
    def _check_newton(support: list[Monomial], gram_basis: list[Monomial],
                      svars: list[str], name: str) -> None:
        rho = product_basis(gram_basis, gram_basis)
        linear = [Monomial()] + [Monomial({v: 1}) for v in
                                 sorted(svars, key=var_sort_key)]
        if not newton_basis_check(support, rho, linear):
            raise StructuralBasisError(
                f"{name}: target support not contained in New(mult)+New(linear); "
                f"multiplier basis too small")

    # -- compile / solve -------------------------------------------------------

    def compile(self) -> ConicProgram:
        """Materialize coefficient-matching equalities into the conic program.

        One PSD block per SOS membership, in insertion order; equality rows
        grouped by constraint then graded-lex monomial order.  Idempotent.
        """
        if self._compiled:
            return self.conic
        total_psd = sum(b.handle.size for b in self.blocks)
        if total_psd > self.psd_dim_cap:
            raise PsdSizeError(f"total PSD dimension {total_psd} exceeds cap "
                               f"{self.psd_dim_cap}")
        for _, diff in self._equalities:
            for m in diff.support():
                expr = diff.terms[m]
                coeffs = {k: v for k, v in expr.coeffs.items()
                          if abs(v) > COEFF_DROP_TOL}
                const = expr.const if abs(expr.const) > COEFF_DROP_TOL else 0.0
                self.conic.add_eq(LinExpr(coeffs, const))
        self._compiled = True
        return self.conic

    def solve(self, *, eig_tol: float = DEFAULT_EIG_TOL,
              res_tol: float = DEFAULT_RES_TOL, solver_tol: float = 1e-8,
              max_iter: int = 200, verbose: bool = False) -> SolveResult:
        """Solve and apply the soundness gate: a result is only ``feasible`` if
        the returned Grams have min eigenvalue >= -eig_tol and every polynomial
        equality has coefficient residual <= res_tol, checked independently of
        the backend's own report."""
        t0 = time.perf_counter()
        self.compile()
        sol = self.conic.solve(tol=solver_tol, max_iter=max_iter, verbose=verbose)
        elapsed = time.perf_counter() - t0
        if sol.status == "infeasible":
            return SolveResult(status="infeasible", solve_time=elapsed,
                               backend_status=sol.raw_status)
        if sol.x is None:
            return SolveResult(status="indeterminate", solve_time=elapsed,
                               backend_status=sol.raw_status,
                               message="backend failure")
        min_eigs = {}
        ok = True
        for block in self.blocks:
            ev = float(np.linalg.eigvalsh(block.extract(sol.x))[0])
            min_eigs[block.name] = ev
            ok = ok and ev >= -eig_tol
        residual = self.verify_residual(sol.x)
        ok = ok and residual <= res_tol
        status = "feasible" if ok else "indeterminate"
        msg = "" if ok else (f"verification gate failed: residual {residual:.2e}, "
                             f"min eig {min(min_eigs.values(), default=0.0):.2e}")
        return SolveResult(status=status, x=sol.x, objective=sol.objective,
                           min_eigs=min_eigs, residual=residual,
                           solve_time=elapsed, backend_status=sol.raw_status,
                           message=msg)

    def verify_residual(self, x: np.ndarray) -> float:
        """Largest coefficient mismatch over all polynomial equalities."""
        worst = 0.0
        for _, diff in self._equalities:
            for expr in diff.terms.values():
                worst = max(worst, abs(expr.value(x)))
        return worst

    def gram_values(self, x: np.ndarray) -> dict[str, tuple[list[Monomial], np.ndarray]]:
        return {b.name: (b.basis, b.extract(x)) for b in self.blocks}

    def dump_sdp(self, path: str) -> None:
        """Write the compiled instance in a sparse text form (variable and
        cone layout plus A/b triplets) for external cross-checking."""
        self.compile()
        self.conic.dump(path)
