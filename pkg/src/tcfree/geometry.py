"""Convex collision bodies and their separation / membership conditions.

Three condition families are emitted here:

* fixed-configuration separating plane and intersection point programs for a
  pair of posed bodies (strong alternatives: exactly one is feasible);
* configuration-parametrized plane-side conditions, denominator-cleared into
  scalar polynomial nonnegativity and polynomial-matrix PSD conditions on a
  TC-space polytope;
* semialgebraic membership of a point in a body, with auxiliary convex-weight
  and cross-section variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, LinExpr
from .kinematics import RationalPose, RigidTransform
from .polyalg import Polynomial, var_sort_key
from .soscomp import LinPoly, lift_linpoly

__all__ = [
    "VPolytope",
    "Sphere",
    "Capsule",
    "Cylinder",
    "box_vertices",
    "PlaneParam",
    "ScalarCond",
    "MatrixCond",
    "MembershipSet",
    "fixed_separating_plane",
    "fixed_intersection_point",
    "plane_side_conditions",
    "membership_conditions",
    "body_support",
    "plane_margins",
]

RADIUS_EPS = 1e-6   # strictness inflation for round geometries


@dataclass(frozen=True)
class _Body:
    name: str
    link: str


@dataclass(frozen=True)
class VPolytope(_Body):
    vertices: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        if v.shape[0] < 1:
            raise ValueError(f"{self.name}: polytope needs at least one vertex")
        object.__setattr__(self, "vertices", v)


@dataclass(frozen=True)
class Sphere(_Body):
    center: np.ndarray = None
    radius: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if self.radius <= 0:
            raise ValueError(f"{self.name}: radius must be positive")


@dataclass(frozen=True)
class Capsule(_Body):
    p1: np.ndarray = None
    p2: np.ndarray = None
    r1: float = 0.0
    r2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=float).reshape(3))
        object.__setattr__(self, "p2", np.asarray(self.p2, dtype=float).reshape(3))
        if self.r1 <= 0 or self.r2 <= 0:
            raise ValueError(f"{self.name}: radii must be positive")
        if np.allclose(self.p1, self.p2):
            raise ValueError(f"{self.name}: endpoints must be distinct")


@dataclass(frozen=True)
class Cylinder(_Body):
    p1: np.ndarray = None
    p2: np.ndarray = None
    r1: float = 0.0
    r2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=float).reshape(3))
        object.__setattr__(self, "p2", np.asarray(self.p2, dtype=float).reshape(3))
        if self.r1 <= 0 or self.r2 <= 0:
            raise ValueError(f"{self.name}: radii must be positive")
        if np.allclose(self.p1, self.p2):
            raise ValueError(f"{self.name}: endpoints must be distinct")

    def geometry_frame(self) -> RigidTransform:
        """Body-fixed frame at the midpoint with z along the axis (toward p1)."""
        z = self.p1 - self.p2
        h2 = np.linalg.norm(z)
        z = z / h2
        ref = np.array([1.0, 0.0, 0.0])
        if abs(z @ ref) > 0.9:
            ref = np.array([0.0, 1.0, 0.0])
        x = np.cross(ref, z)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        return RigidTransform(np.column_stack([x, y, z]), (self.p1 + self.p2) / 2.0)

    @property
    def half_height(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p2) / 2.0)


def box_vertices(center, size) -> np.ndarray:
    """Eight corners of an axis-aligned box given center and edge lengths."""
    c = np.asarray(center, dtype=float)
    half = np.asarray(size, dtype=float) / 2.0
    corners = []
    for sx in (-1, 1):
        for sy in (-1, 1):
            for sz in (-1, 1):
                corners.append(c + half * np.array([sx, sy, sz]))
    return np.array(corners)


# ---------------------------------------------------------------------------
# fixed-configuration programs
# ---------------------------------------------------------------------------

def _plane_rows(prog: ConicProgram, a_idx, b_idx, body, pose: RigidTransform,
                sign: float, eps: float) -> None:
    """Rows putting ``body`` at ``pose`` on the positive (sign=+1) or negative
    (sign=-1) side of the plane a^T x + b = 0, with the >=1 normalization."""
    a = [LinExpr.of(int(a_idx[k]), sign) for k in range(3)]
    b = LinExpr.of(int(b_idx), sign)

    def affine(point):
        w = pose.apply(point)
        return a[0] * w[0] + a[1] * w[1] + a[2] * w[2] + b

    if isinstance(body, VPolytope):
        for v in body.vertices:
            prog.add_nonneg(affine(v) - 1.0)
    elif isinstance(body, Sphere):
        prog.add_soc([affine(body.center)] +
                     [a[k] * (body.radius + eps) for k in range(3)])
        prog.add_nonneg(affine(body.center) - 1.0)
    elif isinstance(body, Capsule):
        for point, r in ((body.p1, body.r1), (body.p2, body.r2)):
            prog.add_soc([affine(point)] + [a[k] * (r + eps) for k in range(3)])
        prog.add_nonneg(affine(body.p1) - 1.0)
    elif isinstance(body, Cylinder):
        G = pose.compose(body.geometry_frame())
        h = body.half_height
        # plane in the geometry frame: aG = R^T a, bG = b + a . pG
        aG = [a[0] * G.R[0, k] + a[1] * G.R[1, k] + a[2] * G.R[2, k]
              for k in range(3)]
        bG = b + a[0] * G.p[0] + a[1] * G.p[1] + a[2] * G.p[2]
        prog.add_soc([aG[2] * h + bG,
                      aG[0] * (body.r1 + eps), aG[1] * (body.r1 + eps)])
        prog.add_soc([aG[2] * (-h) + bG,
                      aG[0] * (body.r2 + eps), aG[1] * (body.r2 + eps)])
        prog.add_nonneg(bG - 1.0)
    else:
        raise TypeError(f"unsupported body variant {type(body).__name__}")


def fixed_separating_plane(body_a, pose_a: RigidTransform, body_b,
                           pose_b: RigidTransform, eps: float = RADIUS_EPS):
    """Separating plane with A on the positive side, or None if none exists
    (the bodies intersect or touch within solver tolerance)."""
    prog = ConicProgram()
    a_idx = prog.add_vars(3)
    b_idx = prog.add_vars(1)[0]
    _plane_rows(prog, a_idx, b_idx, body_a, pose_a, +1.0, eps)
    _plane_rows(prog, a_idx, b_idx, body_b, pose_b, -1.0, eps)
    sol = prog.solve()
    if sol.status == "infeasible":
        return None
    if not sol.ok:
        raise RuntimeError(f"separating-plane solve failed: {sol.raw_status}")
    return np.array([sol.x[i] for i in a_idx]), float(sol.x[b_idx])


def _membership_rows(prog: ConicProgram, x_idx, body, pose: RigidTransform) -> None:
    x = [LinExpr.of(int(x_idx[k])) for k in range(3)]
    if isinstance(body, VPolytope):
        world = pose.apply(body.vertices)
        m = world.shape[0]
        mu = prog.add_vars(m)
        for k in range(3):
            expr = -x[k]
            for i in range(m):
                expr = expr + LinExpr.of(int(mu[i]), world[i, k])
            prog.add_eq(expr)
        total = LinExpr.constant(-1.0)
        for i in range(m):
            total = total + LinExpr.of(int(mu[i]))
        prog.add_eq(total)
        for i in range(m):
            prog.add_nonneg(LinExpr.of(int(mu[i])))
    elif isinstance(body, Sphere):
        o = pose.apply(body.center)
        prog.add_soc([LinExpr.constant(body.radius)] +
                     [x[k] - o[k] for k in range(3)])
    elif isinstance(body, Capsule):
        o1, o2 = pose.apply(body.p1), pose.apply(body.p2)
        mu = prog.add_vars(1)[0]
        prog.add_nonneg(LinExpr.of(mu))
        prog.add_nonneg(LinExpr.constant(1.0) - LinExpr.of(mu))
        radius = LinExpr.of(mu, body.r1 - body.r2) + body.r2
        prog.add_soc([radius] +
                     [x[k] - LinExpr.of(mu, o1[k] - o2[k]) - o2[k]
                      for k in range(3)])
    elif isinstance(body, Cylinder):
        o1, o2 = pose.apply(body.p1), pose.apply(body.p2)
        mu = prog.add_vars(1)[0]
        v = prog.add_vars(3)
        prog.add_nonneg(LinExpr.of(mu))
        prog.add_nonneg(LinExpr.constant(1.0) - LinExpr.of(mu))
        axis = o1 - o2
        prog.add_eq(LinExpr.of(int(v[0]), axis[0]) + LinExpr.of(int(v[1]), axis[1])
                    + LinExpr.of(int(v[2]), axis[2]))
        for k in range(3):
            prog.add_eq(x[k] - LinExpr.of(mu, o1[k] - o2[k]) - o2[k]
                        - LinExpr.of(int(v[k])))
        radius = LinExpr.of(mu, body.r1 - body.r2) + body.r2
        prog.add_soc([radius] + [LinExpr.of(int(v[k])) for k in range(3)])
    else:
        raise TypeError(f"unsupported body variant {type(body).__name__}")


def fixed_intersection_point(body_a, pose_a: RigidTransform, body_b,
                             pose_b: RigidTransform):
    """A point in both posed bodies, or None if they are disjoint."""
    prog = ConicProgram()
    x_idx = prog.add_vars(3)
    _membership_rows(prog, x_idx, body_a, pose_a)
    _membership_rows(prog, x_idx, body_b, pose_b)
    sol = prog.solve()
    if sol.status == "infeasible":
        return None
    if not sol.ok:
        raise RuntimeError(f"intersection solve failed: {sol.raw_status}")
    return np.array([sol.x[i] for i in x_idx])


# ---------------------------------------------------------------------------
# configuration-parametrized plane-side conditions
# ---------------------------------------------------------------------------

@dataclass
class PlaneParam:
    """Plane a(s)^T x + b(s) = 0 in the expressed frame.

    Entries may be numeric :class:`Polynomial` (a stored certificate) or
    :class:`LinPoly` (decision-valued during certification)."""

    a: tuple
    b: object
    expressed_frame: str

    def evaluate(self, point: dict[str, float]):
        a = np.array([self.a[k].evaluate(point) for k in range(3)])
        return a, float(self.b.evaluate(point))


@dataclass
class ScalarCond:
    """One polynomial required nonnegative on the region polytope."""

    expr: LinPoly
    label: str
    svars: list[str] = field(default_factory=list)   # FK variables of the body


@dataclass
class MatrixCond:
    """Symmetric polynomial matrix required PSD on the region polytope; the
    last row/column is the homogeneous coordinate."""

    entries: list
    label: str
    svars: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.entries)

    def evaluate(self, point: dict[str, float], x=np.zeros(0)) -> np.ndarray:
        """Numeric matrix at an indeterminate point (and decision vector x if
        the entries are decision-valued)."""
        n = self.size
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                out[i, j] = lift_linpoly(self.entries[i][j]) \
                    .evaluate_indeterminates(point).value(x)
        return out


def _affine_num(a, b, fv: list[Polynomial], g: Polynomial, offset: float) -> LinPoly:
    """Numerator of a(s).p + (b(s) + offset) cleared by the positive
    denominator g: a^T f + (b + offset) g."""
    out = lift_linpoly(b).times_poly(g)
    if offset:
        out = out + LinPoly.from_polynomial(g.scale(offset))
    for k in range(3):
        out = out + lift_linpoly(a[k]).times_poly(fv[k])
    return out


def plane_side_conditions(body, side: str, plane: PlaneParam,
                          fk: RationalPose, eps: float = RADIUS_EPS
                          ) -> list[ScalarCond | MatrixCond]:
    """Denominator-cleared conditions putting ``body`` on one side of the plane
    for every configuration, given the body link's pose ``fk`` in the plane's
    expressed frame.

    ``side='positive'`` enforces a(s)^T x + b(s) >= 1-normalized separation for
    all x in the body; ``side='negative'`` the mirrored conditions.
    """
    sign = {"positive": +1.0, "negative": -1.0}[side]
    a = tuple(lift_linpoly(plane.a[k]).scaled(sign) for k in range(3))
    b = lift_linpoly(plane.b).scaled(sign)
    svars = sorted(fk.variables, key=var_sort_key)
    conds: list[ScalarCond | MatrixCond] = []

    if isinstance(body, VPolytope):
        for i, v in enumerate(body.vertices):
            fv, g = fk.apply_point(v)
            conds.append(ScalarCond(_affine_num(a, b, fv, g, -1.0),
                                    f"{body.name}:{side}:v{i}", svars))
        return conds

    if isinstance(body, Sphere):
        centers = [(body.center, body.radius, "o")]
    elif isinstance(body, Capsule):
        centers = [(body.p1, body.r1, "o1"), (body.p2, body.r2, "o2")]
    elif isinstance(body, Cylinder):
        return _cylinder_plane_conditions(body, sign, a, b, fk, svars, side, eps)
    else:
        raise TypeError(f"unsupported body variant {type(body).__name__}")

    for point, r, tag in centers:
        fo, g = fk.apply_point(point)
        diag = _affine_num(a, b, fo, g, 0.0)
        rg = [a[k].times_poly(g.scale(r + eps)) for k in range(3)]
        zero = LinPoly()
        entries = [
            [diag, zero, zero, rg[0]],
            [zero, diag, zero, rg[1]],
            [zero, zero, diag, rg[2]],
            [rg[0], rg[1], rg[2], diag],
        ]
        conds.append(MatrixCond(entries, f"{body.name}:{side}:{tag}:ball", svars))
        conds.append(ScalarCond(_affine_num(a, b, fo, g, -1.0),
                                f"{body.name}:{side}:{tag}:center", svars))
    return conds


def _cylinder_plane_conditions(body: Cylinder, sign, a, b, fk: RationalPose,
                               svars, side, eps) -> list:
    """Two rim matrix conditions plus the trivial-plane exclusion row, all in
    the cylinder geometry frame and cleared by the FK denominator."""
    pose_g = fk.compose(RationalPose.constant(body.geometry_frame()))
    g = pose_g.den
    # aG*g = R_num^T a ; bG*g = b*g + a . p_num
    aG = []
    for k in range(3):
        acc = LinPoly()
        for j in range(3):
            acc = acc + a[j].times_poly(pose_g.R[j][k])
        aG.append(acc)
    bG = b.times_poly(g)
    for j in range(3):
        bG = bG + a[j].times_poly(pose_g.p[j])
    h = body.half_height
    conds = []
    for r, hs, tag in ((body.r1, h, "top"), (body.r2, -h, "bottom")):
        diag = aG[2].scaled(hs) + bG
        ox = aG[0].scaled(r + eps)
        oy = aG[1].scaled(r + eps)
        zero = LinPoly()
        entries = [[diag, zero, ox],
                   [zero, diag, oy],
                   [ox, oy, diag]]
        conds.append(MatrixCond(entries, f"{body.name}:{side}:{tag}:rim", svars))
    conds.append(ScalarCond(bG - LinPoly.from_polynomial(g),
                            f"{body.name}:{side}:center", svars))
    return conds


# ---------------------------------------------------------------------------
# semialgebraic membership (for the emptiness-refutation path)
# ---------------------------------------------------------------------------

@dataclass
class MembershipSet:
    """gammas >= 0 and hs == 0 describe x in body(s); aux lists the extra
    indeterminate names introduced."""

    gammas: list[Polynomial]
    hs: list[Polynomial]
    aux: list[str]
    aux_box: dict[str, tuple[float, float]]


def membership_conditions(body, fk: RationalPose, x_vars: list[str],
                          tag: str) -> MembershipSet:
    """Polynomial membership of the point (x_vars) in ``body`` posed by ``fk``,
    denominator-cleared; ``tag`` suffixes the auxiliary variable names."""
    x = [Polynomial.variable(v) for v in x_vars]
    g = fk.den

    if isinstance(body, VPolytope):
        m = body.vertices.shape[0]
        mu = [f"mu_{tag}{i}" for i in range(m)]
        fs = [fk.apply_point(v)[0] for v in body.vertices]
        hs = []
        for k in range(3):
            h = x[k] * g
            for i in range(m):
                h = h - Polynomial.variable(mu[i]) * fs[i][k]
            hs.append(h)
        total = Polynomial.constant(1.0)
        for i in range(m):
            total = total - Polynomial.variable(mu[i])
        hs.append(total)
        gammas = [Polynomial.variable(v) for v in mu]
        return MembershipSet(gammas, hs, mu, {v: (0.0, 1.0) for v in mu})

    if isinstance(body, Sphere):
        fo, _ = fk.apply_point(body.center)
        gamma = Polynomial.constant(body.radius**2) * g * g
        for k in range(3):
            diff = x[k] * g - fo[k]
            gamma = gamma - diff * diff
        return MembershipSet([gamma], [], [], {})

    if isinstance(body, Capsule):
        mu = f"mu_{tag}"
        muv = Polynomial.variable(mu)
        f1, _ = fk.apply_point(body.p1)
        f2, _ = fk.apply_point(body.p2)
        radius = muv.scale(body.r1 - body.r2) + body.r2
        gamma = radius * radius * g * g
        for k in range(3):
            diff = x[k] * g - muv * f1[k] - (1.0 - muv) * f2[k]
            gamma = gamma - diff * diff
        return MembershipSet([gamma, muv, 1.0 - muv], [], [mu], {mu: (0.0, 1.0)})

    if isinstance(body, Cylinder):
        mu = f"mu_{tag}"
        vv = [f"v_{tag}{k}" for k in range(3)]
        muv = Polynomial.variable(mu)
        v = [Polynomial.variable(n) for n in vv]
        f1, _ = fk.apply_point(body.p1)
        f2, _ = fk.apply_point(body.p2)
        h_axis = Polynomial.zero()
        for k in range(3):
            h_axis = h_axis + v[k] * (f1[k] - f2[k])
        hs = [h_axis]
        for k in range(3):
            hs.append(x[k] * g - muv * f1[k] - (1.0 - muv) * f2[k] - v[k] * g)
        radius = muv.scale(body.r1 - body.r2) + body.r2
        gamma = radius * radius
        for k in range(3):
            gamma = gamma - v[k] * v[k]
        rmax = max(body.r1, body.r2)
        box = {mu: (0.0, 1.0)}
        box.update({n: (-rmax, rmax) for n in vv})
        return MembershipSet([gamma, muv, 1.0 - muv], hs, [mu] + vv, box)

    raise TypeError(f"unsupported body variant {type(body).__name__}")


# ---------------------------------------------------------------------------
# support helpers (plane-margin evaluation)
# ---------------------------------------------------------------------------

def body_support(body, pose: RigidTransform, direction: np.ndarray) -> float:
    """Support value max_{x in body} d^T x for the posed body."""
    d = np.asarray(direction, dtype=float)
    if isinstance(body, VPolytope):
        return float(np.max(pose.apply(body.vertices) @ d))
    if isinstance(body, Sphere):
        return float(pose.apply(body.center) @ d + body.radius * np.linalg.norm(d))
    if isinstance(body, Capsule):
        nd = np.linalg.norm(d)
        vals = [pose.apply(p) @ d + r * nd
                for p, r in ((body.p1, body.r1), (body.p2, body.r2))]
        return float(max(vals))
    if isinstance(body, Cylinder):
        axis_pose = pose.compose(body.geometry_frame())
        dz = axis_pose.R[:, 2] @ d
        radial = d - dz * axis_pose.R[:, 2]
        nr = np.linalg.norm(radial)
        h = body.half_height
        vals = [axis_pose.p @ d + h * dz + body.r1 * nr,
                axis_pose.p @ d - h * dz + body.r2 * nr]
        return float(max(vals))
    raise TypeError(f"unsupported body variant {type(body).__name__}")


def plane_margins(body, pose: RigidTransform, a: np.ndarray, b: float):
    """(min, max) of a^T x + b over the posed body."""
    hi = body_support(body, pose, a) + b
    lo = -body_support(body, pose, -a) + b
    return lo, hi
