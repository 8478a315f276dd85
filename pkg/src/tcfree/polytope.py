"""H-rep polytopes in TC space and inscribed ellipsoids."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, LinExpr

__all__ = ["TcPolytope", "Ellipsoid", "regular_octagon", "RegionError"]

LIMIT_ROW = "limit"
LEARNED_ROW = "learned"


class RegionError(RuntimeError):
    pass


@dataclass
class TcPolytope:
    """{s | Cs <= d} with per-row provenance tags ('limit' or 'learned')."""

    C: np.ndarray
    d: np.ndarray
    row_tags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.d = np.asarray(self.d, dtype=float).reshape(-1)
        if self.C.shape[0] != self.d.size:
            raise ValueError("C and d row counts differ")
        if not self.row_tags:
            self.row_tags = [LEARNED_ROW] * self.C.shape[0]
        if len(self.row_tags) != self.C.shape[0]:
            raise ValueError("row_tags length mismatch")

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    @property
    def nrows(self) -> int:
        return self.C.shape[0]

    @classmethod
    def from_box(cls, lower, upper, tag: str = LIMIT_ROW) -> "TcPolytope":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = lower.size
        C = np.vstack([np.eye(n), -np.eye(n)])
        d = np.concatenate([upper, -lower])
        return cls(C, d, [tag] * (2 * n))

    def intersect(self, other: "TcPolytope") -> "TcPolytope":
        return TcPolytope(np.vstack([self.C, other.C]),
                          np.concatenate([self.d, other.d]),
                          self.row_tags + other.row_tags)

    def with_rows(self, C_new, d_new, tag: str = LEARNED_ROW) -> "TcPolytope":
        C_new = np.atleast_2d(np.asarray(C_new, dtype=float))
        d_new = np.atleast_1d(np.asarray(d_new, dtype=float))
        return TcPolytope(np.vstack([self.C, C_new]),
                          np.concatenate([self.d, d_new]),
                          self.row_tags + [tag] * C_new.shape[0])

    def contract(self, delta: float) -> "TcPolytope":
        """Uniform contraction {s | Cs <= d - delta}."""
        return TcPolytope(self.C.copy(), self.d - delta, list(self.row_tags))

    def normalized(self) -> "TcPolytope":
        """Scale every row so that ||c_i|| <= 1 (rows at 1 after scaling)."""
        norms = np.linalg.norm(self.C, axis=1)
        norms = np.where(norms > 0, norms, 1.0)
        return TcPolytope(self.C / norms[:, None], self.d / norms,
                          list(self.row_tags))

    def contains(self, s, tol: float = 1e-9):
        s = np.atleast_2d(np.asarray(s, dtype=float))
        return np.all(s @ self.C.T <= self.d + tol, axis=1)

    def chebyshev_center(self) -> tuple[np.ndarray, float]:
        """Center and radius of the largest inscribed ball (LP)."""
        prog = ConicProgram()
        x = prog.add_vars(self.dim)
        r = prog.add_vars(1)[0]
        norms = np.linalg.norm(self.C, axis=1)
        for i in range(self.nrows):
            row = LinExpr.of(r, norms[i]) - self.d[i]
            for k in range(self.dim):
                if self.C[i, k] != 0.0:
                    row = row + LinExpr.of(int(x[k]), self.C[i, k])
            prog.add_nonneg(-row)
        prog.add_nonneg(LinExpr.of(r))
        # keep bounded if some direction is unconstrained
        prog.add_nonneg(LinExpr.constant(1e6) - LinExpr.of(r))
        prog.set_objective(LinExpr.of(r), "max")
        sol = prog.solve()
        if not sol.ok:
            raise RegionError(f"chebyshev LP failed: {sol.raw_status}")
        return np.array([sol.x[i] for i in x]), float(sol.x[r])

    def is_empty(self, tol: float = 1e-9) -> bool:
        try:
            _, r = self.chebyshev_center()
        except RegionError:
            return True
        return r < tol

    def extent(self) -> tuple[np.ndarray, np.ndarray]:
        """Componentwise bounding box via 2n LPs."""
        lo, hi = np.zeros(self.dim), np.zeros(self.dim)
        for k in range(self.dim):
            for sign, out in ((1.0, hi), (-1.0, lo)):
                prog = ConicProgram()
                x = prog.add_vars(self.dim)
                for i in range(self.nrows):
                    row = LinExpr.constant(-self.d[i])
                    for kk in range(self.dim):
                        if self.C[i, kk] != 0.0:
                            row = row + LinExpr.of(int(x[kk]), self.C[i, kk])
                    prog.add_nonneg(-row)
                prog.set_objective(LinExpr.of(int(x[k]), sign), "max")
                sol = prog.solve()
                if not sol.ok:
                    raise RegionError(f"extent LP failed: {sol.raw_status}")
                out[k] = sign * sol.objective
        return lo, hi

    def sample(self, rng: np.random.Generator, n: int,
               max_tries: int = 200) -> np.ndarray:
        """Uniform samples by rejection from the bounding box."""
        lo, hi = self.extent()
        out = []
        need = n
        for _ in range(max_tries):
            cand = rng.uniform(lo, hi, size=(max(4 * need, 256), self.dim))
            good = cand[self.contains(cand)]
            out.append(good[:need])
            need -= len(out[-1])
            if need <= 0:
                return np.vstack(out)[:n]
        raise RegionError("rejection sampling failed; polytope volume too small")

    def vertices_2d(self, tol: float = 1e-9) -> np.ndarray:
        """Vertex enumeration for 2-D polytopes: pairwise row intersections
        filtered by feasibility, ordered counterclockwise."""
        if self.dim != 2:
            raise ValueError("vertex enumeration implemented for 2-D only")
        pts = []
        for i, j in itertools.combinations(range(self.nrows), 2):
            A = self.C[[i, j]]
            if abs(np.linalg.det(A)) < 1e-12:
                continue
            v = np.linalg.solve(A, self.d[[i, j]])
            if self.contains(v, tol=1e-7)[0]:
                pts.append(v)
        if not pts:
            return np.zeros((0, 2))
        pts = np.unique(np.round(np.array(pts), 10), axis=0)
        center = pts.mean(axis=0)
        angles = np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0])
        return pts[np.argsort(angles)]


@dataclass
class Ellipsoid:
    """{Q u + s0 | ||u|| <= 1} with Q symmetric PSD."""

    Q: np.ndarray
    s0: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.s0 = np.asarray(self.s0, dtype=float).reshape(-1)

    @property
    def dim(self) -> int:
        return self.s0.size

    def volume_proxy(self) -> float:
        """det Q; the unit-ball factor cancels in the ratios we monitor."""
        return float(np.linalg.det(self.Q))

    def contains(self, s, tol: float = 1e-9):
        s = np.atleast_2d(np.asarray(s, dtype=float))
        u = np.linalg.solve(self.Q, (s - self.s0).T).T
        return np.linalg.norm(u, axis=1) <= 1.0 + tol

    def boundary_points(self, n: int = 64) -> np.ndarray:
        if self.dim != 2:
            raise ValueError("boundary sampling implemented for 2-D only")
        ang = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        circ = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return circ @ self.Q.T + self.s0

    def containment_residual(self, poly: TcPolytope) -> float:
        """max_i ||Q c_i|| - (d_i - c_i^T s0); <= 0 when inscribed."""
        lhs = np.linalg.norm(poly.C @ self.Q, axis=1)
        rhs = poly.d - poly.C @ self.s0
        return float(np.max(lhs - rhs))


def regular_octagon(center, side: float) -> TcPolytope:
    """Regular octagon in 2-D with the given side length, as learned rows."""
    center = np.asarray(center, dtype=float)
    apothem = side / 2.0 * (1.0 + np.sqrt(2.0))
    angles = np.pi / 8.0 + np.arange(8) * np.pi / 4.0
    C = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    d = apothem + C @ center
    return TcPolytope(C, d, [LEARNED_ROW] * 8)
