"""Thin deterministic conic-program builder on top of the Clarabel solver.

Supported blocks: free scalar variables, PSD matrix variables (upper-triangle
storage), zero/nonnegative/second-order/exponential cone rows, and a linear
objective.  A log-det hypograph helper covers the inscribed-ellipsoid and
face-pushing objectives via the standard PSD + exponential-cone reformulation.

Rows and variables are assembled in insertion order within each cone group and
groups are concatenated in a fixed order (zero, nonneg, SOC, PSD, exp), so the
compiled problem is identical between runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import clarabel
import numpy as np
from scipy import sparse

__all__ = ["LinExpr", "ConicProgram", "ConicSolution", "PsdVar", "SolverFailure"]

_SQRT2 = math.sqrt(2.0)


class SolverFailure(RuntimeError):
    """Backend returned neither a solution nor an infeasibility certificate."""


@dataclass
class LinExpr:
    """Affine expression  sum_i coeffs[i]*x_i + const  over program variables."""

    coeffs: dict[int, float] = field(default_factory=dict)
    const: float = 0.0

    @classmethod
    def of(cls, var: int, scale: float = 1.0) -> "LinExpr":
        return cls({var: float(scale)}, 0.0)

    @classmethod
    def constant(cls, c: float) -> "LinExpr":
        return cls({}, float(c))

    def copy(self) -> "LinExpr":
        return LinExpr(dict(self.coeffs), self.const)

    def add_term(self, var: int, scale: float) -> None:
        v = self.coeffs.get(var, 0.0) + scale
        if v == 0.0:
            self.coeffs.pop(var, None)
        else:
            self.coeffs[var] = v

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, (int, float)):
            out.const += other
            return out
        for k, v in other.coeffs.items():
            out.add_term(k, v)
        out.const += other.const
        return out

    def __neg__(self):
        return LinExpr({k: -v for k, v in self.coeffs.items()}, -self.const)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        return self + (-other)

    def __mul__(self, c: float):
        c = float(c)
        return LinExpr({k: v * c for k, v in self.coeffs.items()}, self.const * c)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(v * x[k] for k, v in self.coeffs.items())

    def is_constant(self) -> bool:
        return not self.coeffs


class PsdVar:
    """Handle for a symmetric PSD matrix variable stored as upper-tri scalars."""

    def __init__(self, size: int, first_var: int):
        self.size = size
        self.first_var = first_var

    def index(self, i: int, j: int) -> int:
        """Program-variable index of entry (i, j), column-major upper triangle."""
        if i > j:
            i, j = j, i
        return self.first_var + j * (j + 1) // 2 + i

    def entry(self, i: int, j: int) -> LinExpr:
        return LinExpr.of(self.index(i, j))

    def num_scalars(self) -> int:
        return self.size * (self.size + 1) // 2

    def extract(self, x: np.ndarray) -> np.ndarray:
        m = np.empty((self.size, self.size))
        for j in range(self.size):
            for i in range(j + 1):
                m[i, j] = m[j, i] = x[self.index(i, j)]
        return m


@dataclass
class ConicSolution:
    status: str            # 'optimal' | 'infeasible' | 'unbounded' | 'inaccurate' | 'failed'
    x: np.ndarray | None
    objective: float | None
    solve_time: float
    iterations: int
    raw_status: str

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "inaccurate")


_STATUS_MAP = {
    "Solved": "optimal",
    "AlmostSolved": "inaccurate",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


class ConicProgram:
    """Incrementally built conic feasibility/optimization problem."""

    def __init__(self):
        self.num_vars = 0
        self._psd_vars: list[PsdVar] = []
        # each group: list of (LinExpr rows) with fixed slack-cone semantics
        self._zero_rows: list[LinExpr] = []     # expr == 0
        self._nonneg_rows: list[LinExpr] = []   # expr >= 0
        self._soc_blocks: list[list[LinExpr]] = []  # expr[0] >= ||expr[1:]||
        self._exp_blocks: list[tuple[LinExpr, LinExpr, LinExpr]] = []  # (u,v,w): v*e^(u/v) <= w
        self._objective: LinExpr | None = None
        self._sense = "min"

    # -- variables ---------------------------------------------------------

    def add_vars(self, n: int) -> np.ndarray:
        idx = np.arange(self.num_vars, self.num_vars + n)
        self.num_vars += n
        return idx

    def add_psd_var(self, size: int) -> PsdVar:
        handle = PsdVar(size, self.num_vars)
        self.num_vars += handle.num_scalars()
        self._psd_vars.append(handle)
        return handle

    # -- constraints -------------------------------------------------------

    def add_eq(self, expr: LinExpr, rhs: float = 0.0) -> None:
        self._zero_rows.append(expr - rhs)

    def add_nonneg(self, expr: LinExpr) -> None:
        self._nonneg_rows.append(expr)

    def add_soc(self, entries: list[LinExpr]) -> None:
        if len(entries) < 2:
            raise ValueError("SOC block needs at least 2 entries")
        self._soc_blocks.append(entries)

    def add_exp(self, u: LinExpr, v: LinExpr, w: LinExpr) -> None:
        self._exp_blocks.append((u, v, w))

    def add_log_hypograph(self, t: LinExpr, arg: LinExpr) -> None:
        """Constrain t <= log(arg)."""
        self.add_exp(t, LinExpr.constant(1.0), arg)

    def add_logdet_hypograph(self, entry, size: int) -> np.ndarray:
        """Add variables t_i with sum(t) <= log det M for a symmetric matrix.

        ``entry(i, j)`` must return a LinExpr for M[i, j].  Uses the standard
        reformulation: [[M, Z], [Z^T, diag(Z)]] PSD with Z lower triangular and
        t_i <= log(Z_ii); at the optimum sum(t) = log det M.
        """
        z = [[self.add_vars(1)[0] if i >= j else None for j in range(size)]
             for i in range(size)]
        t = self.add_vars(size)
        big = self.add_psd_var(2 * size)
        for i in range(2 * size):
            for j in range(i, 2 * size):
                target = LinExpr.constant(0.0)
                if i < size and j < size:
                    target = entry(i, j)
                elif i < size <= j:
                    jj = j - size
                    if i >= jj:
                        target = LinExpr.of(z[i][jj])
                elif i >= size and j >= size:
                    if i == j:
                        target = LinExpr.of(z[i - size][i - size])
                self.add_eq(big.entry(i, j) - target)
        for i in range(size):
            self.add_log_hypograph(LinExpr.of(t[i]), LinExpr.of(z[i][i]))
        return t

    def set_objective(self, expr: LinExpr, sense: str = "min") -> None:
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self._objective = expr
        self._sense = sense

    # -- assembly / solve ----------------------------------------------------

    def _assemble(self):
        rows: list[LinExpr] = []
        cones = []
        if self._zero_rows:
            rows.extend(self._zero_rows)
            cones.append(clarabel.ZeroConeT(len(self._zero_rows)))
        if self._nonneg_rows:
            rows.extend(self._nonneg_rows)
            cones.append(clarabel.NonnegativeConeT(len(self._nonneg_rows)))
        for block in self._soc_blocks:
            rows.extend(block)
            cones.append(clarabel.SecondOrderConeT(len(block)))
        for handle in self._psd_vars:
            # svec(M) with sqrt(2)-scaled off-diagonals, column-major upper tri
            for j in range(handle.size):
                for i in range(j + 1):
                    scale = 1.0 if i == j else _SQRT2
                    rows.append(LinExpr.of(handle.index(i, j), scale))
            cones.append(clarabel.PSDTriangleConeT(handle.size))
        for (u, v, w) in self._exp_blocks:
            rows.extend((u, v, w))
            cones.append(clarabel.ExponentialConeT())

        # rows encode s = expr(x) in K, Clarabel form is A x + s = b
        m = len(rows)
        data, ri, ci = [], [], []
        b = np.zeros(m)
        for r, expr in enumerate(rows):
            b[r] = expr.const
            for var, coef in expr.coeffs.items():
                ri.append(r)
                ci.append(var)
                data.append(-coef)
        A = sparse.csc_matrix((data, (ri, ci)), shape=(m, self.num_vars))
        q = np.zeros(self.num_vars)
        if self._objective is not None:
            sign = 1.0 if self._sense == "min" else -1.0
            for var, coef in self._objective.coeffs.items():
                q[var] += sign * coef
        P = sparse.csc_matrix((self.num_vars, self.num_vars))
        return P, q, A, b, cones

    def solve(self, *, verbose: bool = False, max_iter: int = 200,
              tol: float = 1e-8) -> ConicSolution:
        P, q, A, b, cones = self._assemble()
        settings = clarabel.DefaultSettings()
        settings.verbose = verbose
        settings.max_iter = max_iter
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        settings.tol_feas = tol
        solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
        sol = solver.solve()
        raw = str(sol.status)
        status = _STATUS_MAP.get(raw, "failed")
        x = np.asarray(sol.x) if status in ("optimal", "inaccurate") else None
        obj = None
        if x is not None and self._objective is not None:
            obj = self._objective.value(x)
        return ConicSolution(status=status, x=x, objective=obj,
                             solve_time=float(sol.solve_time),
                             iterations=int(sol.iterations), raw_status=raw)

    # -- post-hoc residuals --------------------------------------------------

    def equality_residual(self, x: np.ndarray) -> float:
        if not self._zero_rows:
            return 0.0
        return max(abs(expr.value(x)) for expr in self._zero_rows)

    def psd_min_eigs(self, x: np.ndarray) -> list[float]:
        out = []
        for handle in self._psd_vars:
            m = handle.extract(x)
            out.append(float(np.linalg.eigvalsh(m)[0]) if handle.size else 0.0)
        return out

    def dump(self, path: str) -> None:
        """Write a sparse text form (counts, cone layout, triplets) for
        external cross-checking."""
        P, q, A, b, cones = self._assemble()
        coo = A.tocoo()
        with open(path, "w") as fh:
            fh.write(f"vars {self.num_vars} rows {A.shape[0]}\n")
            fh.write("cones " + " ".join(type(c).__name__ + ":" + _cone_dim(c)
                                         for c in cones) + "\n")
            fh.write("objective " + " ".join(f"{i}:{v:.17g}" for i, v in
                                             enumerate(q) if v != 0.0) + "\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"A {r} {c} {v:.17g}\n")
            for r, v in enumerate(b):
                if v != 0.0:
                    fh.write(f"b {r} {v:.17g}\n")


def _cone_dim(cone) -> str:
    for attr in ("dim",):
        if hasattr(cone, attr):
            return str(getattr(cone, attr))
    return "3" if "Exponential" in type(cone).__name__ else "?"
