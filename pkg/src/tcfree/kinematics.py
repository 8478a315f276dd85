"""Serial-chain robot model with rational forward kinematics.

Joints move about/along the local z axis of their pre-motion frame; each joint
carries the fixed transform from the previous link frame to that pre-motion
frame, so the pose of link k in the world is
``prod_i origin_i * motion_i(q_i)``.  Substituting t = tan(theta/2) for every
revolute angle turns the forward kinematics into a rational function of the
tangent-configuration-space variable s whose shared denominator is the product
of ``1 + t_i^2`` over the revolute joints on the chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .polyalg import Polynomial, RationalFn

__all__ = [
    "REVOLUTE",
    "PRISMATIC",
    "RigidTransform",
    "Joint",
    "KinematicChain",
    "TcLimits",
    "RationalPose",
    "stereographic",
    "inverse_stereographic",
    "expand_composite_joint",
]

REVOLUTE = "revolute"
PRISMATIC = "prismatic"


def stereographic(theta: float) -> float:
    """t = tan(theta/2); bijective on theta in (-pi, pi)."""
    if abs(theta) >= math.pi:
        raise ValueError(f"angle {theta} outside (-pi, pi)")
    return math.tan(theta / 2.0)


def inverse_stereographic(t: float) -> float:
    return 2.0 * math.atan(t)


@dataclass(frozen=True)
class RigidTransform:
    R: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).reshape(3, 3))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rpy(cls, xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> "RigidTransform":
        """Translation + roll/pitch/yaw (extrinsic x-y-z) rotation."""
        r, pch, y = rpy
        cr, sr = math.cos(r), math.sin(r)
        cp, sp = math.cos(pch), math.sin(pch)
        cy, sy = math.cos(y), math.sin(y)
        Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
        Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
        Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
        return cls(Rz @ Ry @ Rx, np.asarray(xyz, dtype=float))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(self.R @ other.R, self.R @ other.p + self.p)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.R.T, -self.R.T @ self.p)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.R.T + self.p

    def homogeneous(self) -> np.ndarray:
        H = np.eye(4)
        H[:3, :3] = self.R
        H[:3, 3] = self.p
        return H


@dataclass(frozen=True)
class Joint:
    """One revolute or prismatic degree of freedom.

    ``origin`` is the fixed transform from the parent link frame to this
    joint's pre-motion frame, ``tip`` the fixed transform from the post-motion
    frame to the child link frame, so each chain step is
    origin * motion(q) * tip.  Revolute limits must lie strictly inside
    (-pi, pi).
    """

    kind: str
    name: str
    limits: tuple[float, float]
    origin: RigidTransform = field(default_factory=RigidTransform.identity)
    tip: RigidTransform = field(default_factory=RigidTransform.identity)
    child_link: str = ""
    parent: str = ""     # parent frame; empty = previous joint's child (serial)

    def __post_init__(self):
        if self.kind not in (REVOLUTE, PRISMATIC):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        lo, hi = self.limits
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise ValueError(f"joint {self.name}: bad limits {self.limits}")
        if self.kind == REVOLUTE and not (-math.pi < lo and hi < math.pi):
            raise ValueError(
                f"joint {self.name}: revolute limits must be strictly inside "
                f"(-pi, pi), got {self.limits}")
        if not self.child_link:
            object.__setattr__(self, "child_link", f"{self.name}_link")

    def motion(self, qi: float) -> RigidTransform:
        if self.kind == REVOLUTE:
            c, s = math.cos(qi), math.sin(qi)
            return RigidTransform(np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]),
                                  np.zeros(3))
        return RigidTransform(np.eye(3), np.array([0.0, 0.0, qi]))


class TcLimits:
    """Componentwise TC-space bounds s_l <= s <= s_u from the joint limits."""

    def __init__(self, lower: np.ndarray, upper: np.ndarray):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if not np.all(self.lower < self.upper):
            raise ValueError("TC limits must satisfy s_l < s_u componentwise")

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, s: np.ndarray, tol: float = 0.0) -> np.ndarray:
        s = np.atleast_2d(np.asarray(s, dtype=float))
        return np.all((s >= self.lower - tol) & (s <= self.upper + tol), axis=1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))


class RationalPose:
    """Rigid pose whose rotation and translation entries share one positive
    polynomial denominator."""

    def __init__(self, R, p, den: Polynomial):
        self.R = R          # 3x3 nested list of Polynomial numerators
        self.p = p          # list of 3 Polynomial numerators
        self.den = den

    @classmethod
    def constant(cls, T: RigidTransform) -> "RationalPose":
        R = [[Polynomial.constant(T.R[i, j]) for j in range(3)] for i in range(3)]
        p = [Polynomial.constant(T.p[i]) for i in range(3)]
        return cls(R, p, Polynomial.constant(1.0))

    def compose(self, other: "RationalPose") -> "RationalPose":
        R = [[Polynomial.zero() for _ in range(3)] for _ in range(3)]
        for i in range(3):
            for j in range(3):
                acc = Polynomial.zero()
                for k in range(3):
                    acc = acc + self.R[i][k] * other.R[k][j]
                R[i][j] = acc
        p = []
        for i in range(3):
            acc = self.p[i] * other.den
            for k in range(3):
                acc = acc + self.R[i][k] * other.p[k]
            p.append(acc)
        return RationalPose(R, p, self.den * other.den)

    def apply_point(self, v: np.ndarray) -> tuple[list[Polynomial], Polynomial]:
        """Numerator vector and shared denominator of this pose applied to a
        constant body-frame point."""
        v = np.asarray(v, dtype=float)
        out = []
        for i in range(3):
            acc = self.p[i]
            for k in range(3):
                acc = acc + self.R[i][k].scale(v[k])
            out.append(acc)
        return out, self.den

    def evaluate(self, point: dict[str, float]) -> RigidTransform:
        g = self.den.evaluate(point)
        R = np.array([[self.R[i][j].evaluate(point) / g for j in range(3)]
                      for i in range(3)])
        p = np.array([self.p[i].evaluate(point) / g for i in range(3)])
        return RigidTransform(R, p)

    def translation_rational(self) -> list[RationalFn]:
        return [RationalFn(self.p[i], self.den) for i in range(3)]

    @property
    def variables(self) -> set[str]:
        out = set(self.den.variables)
        for i in range(3):
            out |= self.p[i].variables
            for j in range(3):
                out |= self.R[i][j].variables
        return out


class KinematicChain:
    """Ordered joint list rooted at the world frame; frame i+1 is joint i's
    child.  Serial by default, a joint may name any earlier frame as its
    parent, giving tree-structured robots (e.g. two independent arms)."""

    def __init__(self, joints: list[Joint]):
        self.joints = list(joints)
        names = ["world"] + [j.child_link for j in self.joints]
        if len(set(names)) != len(names):
            raise ValueError("duplicate frame names in chain")
        self._frame_index = {n: i for i, n in enumerate(names)}
        self.frames = names
        self.parent_frame: list[int] = []
        for i, j in enumerate(self.joints):
            if j.parent:
                if j.parent not in self._frame_index:
                    raise ValueError(f"joint {j.name}: unknown parent frame "
                                     f"{j.parent!r}")
                pf = self._frame_index[j.parent]
                if pf > i:
                    raise ValueError(f"joint {j.name}: parent frame must be "
                                     f"declared earlier")
            else:
                pf = i
            self.parent_frame.append(pf)
        # ordered joint indices from the root to each frame
        self._anc: list[list[int]] = [[]]
        for i in range(len(self.joints)):
            self._anc.append(self._anc[self.parent_frame[i]] + [i])

    @property
    def njoints(self) -> int:
        return len(self.joints)

    def ancestor_joints(self, frame: int | str) -> list[int]:
        if isinstance(frame, str):
            frame = self.frame_index(frame)
        return list(self._anc[frame])

    def path_joints(self, frame_f: str, frame_a: str
                    ) -> tuple[list[int], list[int]]:
        """Joints on the path from frame_f up to the common ancestor and from
        there down to frame_a, in traversal order."""
        anc_f = self._anc[self.frame_index(frame_f)]
        anc_a = self._anc[self.frame_index(frame_a)]
        common = 0
        while (common < len(anc_f) and common < len(anc_a)
               and anc_f[common] == anc_a[common]):
            common += 1
        return list(reversed(anc_f[common:])), anc_a[common:]

    def frame_index(self, name: str) -> int:
        try:
            return self._frame_index[name]
        except KeyError:
            raise KeyError(f"unknown frame {name!r}; frames are {self.frames}")

    def svar(self, i: int) -> str:
        return f"s{i}"

    @property
    def svars(self) -> list[str]:
        return [self.svar(i) for i in range(self.njoints)]

    def q_to_s(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return np.array([stereographic(qi) if j.kind == REVOLUTE else qi
                         for j, qi in zip(self.joints, q)])

    def s_to_q(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.array([inverse_stereographic(si) if j.kind == REVOLUTE else si
                         for j, si in zip(self.joints, s)])

    def tc_limits(self) -> TcLimits:
        lo, hi = [], []
        for j in self.joints:
            if j.kind == REVOLUTE:
                lo.append(stereographic(j.limits[0]))
                hi.append(stereographic(j.limits[1]))
            else:
                lo.append(j.limits[0])
                hi.append(j.limits[1])
        return TcLimits(np.array(lo), np.array(hi))

    def limits_polytope(self):
        """(C, d) rows of the joint-limit box in TC space."""
        lim = self.tc_limits()
        n = lim.dim
        C = np.vstack([np.eye(n), -np.eye(n)])
        d = np.concatenate([lim.upper, -lim.lower])
        return C, d

    # -- numeric kinematics --------------------------------------------------

    def world_poses(self, q: np.ndarray) -> list[RigidTransform]:
        q = np.asarray(q, dtype=float)
        if q.size != self.njoints:
            raise ValueError("configuration size mismatch")
        poses = [RigidTransform.identity()]
        for i, (joint, qi) in enumerate(zip(self.joints, q)):
            step = joint.origin.compose(joint.motion(qi)).compose(joint.tip)
            poses.append(poses[self.parent_frame[i]].compose(step))
        return poses

    def world_poses_batch(self, qs: np.ndarray) -> dict[str, tuple]:
        """Vectorized FK: frame name -> (R (N,3,3), p (N,3))."""
        qs = np.atleast_2d(np.asarray(qs, dtype=float))
        N = qs.shape[0]
        frames = [(np.tile(np.eye(3), (N, 1, 1)), np.zeros((N, 3)))]
        for k, joint in enumerate(self.joints):
            R, p = frames[self.parent_frame[k]]
            R, p = R.copy(), p.copy()
            p = p + np.einsum("nij,j->ni", R, joint.origin.p)
            R = np.einsum("nij,jk->nik", R, joint.origin.R)
            if joint.kind == REVOLUTE:
                c, s = np.cos(qs[:, k]), np.sin(qs[:, k])
                M = np.zeros((N, 3, 3))
                M[:, 0, 0] = c
                M[:, 0, 1] = -s
                M[:, 1, 0] = s
                M[:, 1, 1] = c
                M[:, 2, 2] = 1.0
                R = np.einsum("nij,njk->nik", R, M)
            else:
                p = p + R[:, :, 2] * qs[:, k][:, None]
            p = p + np.einsum("nij,j->ni", R, joint.tip.p)
            R = np.einsum("nij,jk->nik", R, joint.tip.R)
            frames.append((R, p))
        return {name: frames[i] for i, name in enumerate(self.frames)}

    def point_jacobian(self, q: np.ndarray, link: str,
                       p_local: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World position of a link-frame point and its 3 x n Jacobian in q."""
        poses = self.world_poses(q)
        k = self.frame_index(link)
        x = poses[k].apply(np.asarray(p_local, dtype=float))
        J = np.zeros((3, self.njoints))
        for idx in self._anc[k]:
            joint = self.joints[idx]
            pre = poses[self.parent_frame[idx]].compose(joint.origin)
            axis = pre.R[:, 2]
            if joint.kind == REVOLUTE:
                J[:, idx] = np.cross(axis, x - pre.p)
            else:
                J[:, idx] = axis
        return x, J

    def dq_ds(self, s: np.ndarray) -> np.ndarray:
        """Diagonal of the chain rule dq/ds at a TC-space point."""
        s = np.asarray(s, dtype=float)
        return np.array([2.0 / (1.0 + si**2) if j.kind == REVOLUTE else 1.0
                         for j, si in zip(self.joints, s)])

    def trig_fk(self, q: np.ndarray, frame_f: str, frame_a: str) -> RigidTransform:
        """Pose of frame_a expressed in frame_f at configuration q, as the
        product of per-joint transforms along the connecting path."""
        q = np.asarray(q, dtype=float)
        up, down = self.path_joints(frame_f, frame_a)
        out = RigidTransform.identity()
        for idx in up:
            j = self.joints[idx]
            step = j.origin.compose(j.motion(q[idx])).compose(j.tip)
            out = out.compose(step.inverse())
        for idx in down:
            j = self.joints[idx]
            out = out.compose(j.origin).compose(j.motion(q[idx])).compose(j.tip)
        return out

    # -- rational kinematics --------------------------------------------------

    def _joint_rational(self, idx: int, inverted: bool) -> RationalPose:
        j = self.joints[idx]
        var = Polynomial.variable(self.svar(idx))
        if j.kind == REVOLUTE:
            t2 = var * var
            den = t2 + 1.0
            c = 1.0 - t2
            sn = var.scale(2.0)
            if inverted:
                sn = -sn
            R = [[c, -sn, Polynomial.zero()],
                 [sn, c, Polynomial.zero()],
                 [Polynomial.zero(), Polynomial.zero(), den]]
            return RationalPose(R, [Polynomial.zero()] * 3, den)
        z = -var if inverted else var
        R = [[Polynomial.constant(1.0 if a == b else 0.0) for b in range(3)]
             for a in range(3)]
        return RationalPose(R, [Polynomial.zero(), Polynomial.zero(), z],
                            Polynomial.constant(1.0))

    def rational_fk(self, frame_f: str, frame_a: str) -> RationalPose:
        """Pose of frame_a in frame_f as a rational function of s.

        Shared denominator is the product of 1 + t^2 over revolute joints on
        the path; numerators have coordinate degree <= 2 per variable.
        """
        up, down = self.path_joints(frame_f, frame_a)
        pose = RationalPose.constant(RigidTransform.identity())
        for idx in up:
            j = self.joints[idx]
            pose = pose.compose(RationalPose.constant(j.tip.inverse()))
            pose = pose.compose(self._joint_rational(idx, inverted=True))
            pose = pose.compose(RationalPose.constant(j.origin.inverse()))
        for idx in down:
            j = self.joints[idx]
            pose = pose.compose(RationalPose.constant(j.origin))
            pose = pose.compose(self._joint_rational(idx, inverted=False))
            pose = pose.compose(RationalPose.constant(j.tip))
        return pose

    def path_joint_indices(self, frame_f: str, frame_a: str) -> list[int]:
        up, down = self.path_joints(frame_f, frame_a)
        return up + down

    def _path_frames(self, link_a: str, link_b: str) -> list[int]:
        """Frame indices along the path from link_a to link_b inclusive."""
        up, down = self.path_joints(link_a, link_b)
        frames = [self.frame_index(link_a)]
        for idx in up:
            frames.append(self.parent_frame[idx])
        for idx in down:
            frames.append(idx + 1)
        return frames

    def select_expressed_frame(self, link_a: str, link_b: str) -> str:
        """Frame minimizing the longer of the two joint subchains to the
        bodies' links; ties broken toward link_a."""
        path = self._path_frames(link_a, link_b)
        n = len(path) - 1
        best = None
        for pos, frame in enumerate(path):
            key = (max(pos, n - pos), pos, frame)
            if best is None or key < best[0]:
                best = (key, frame)
        return self.frames[best[1]]


def _rot(axis: str, angle: float) -> RigidTransform:
    return {
        "x": RigidTransform.from_rpy(rpy=(angle, 0, 0)),
        "y": RigidTransform.from_rpy(rpy=(0, angle, 0)),
        "z": RigidTransform.from_rpy(rpy=(0, 0, angle)),
    }[axis]


def expand_composite_joint(kind: str) -> tuple[list[tuple[str, RigidTransform]],
                                               RigidTransform]:
    """Decompose a cylindrical/planar/spherical joint into R and P joints.

    Returns ``(steps, tail)`` where each step is ``(joint_kind, origin)`` for a
    z-axis joint and ``tail`` is a fixed transform to append after the last
    step.  Composing ``origin_i * motion_i(q_i)`` over the steps followed by
    ``tail`` reproduces the composite joint transform; configuration order is
    (theta, z) for cylindrical, (x, y, theta) for planar and the three
    rotation angles for spherical.
    """
    half = math.pi / 2.0
    eye = RigidTransform.identity()
    if kind == "cylindrical":
        return [(REVOLUTE, eye), (PRISMATIC, eye)], eye
    if kind == "planar":
        # translate x, translate y, rotate z
        return [
            (PRISMATIC, _rot("y", half)),
            (PRISMATIC, _rot("y", -half).compose(_rot("x", -half))),
            (REVOLUTE, _rot("x", half)),
        ], eye
    if kind == "spherical":
        # rotation about z, then y (reversed sense), then x
        return [
            (REVOLUTE, eye),
            (REVOLUTE, _rot("x", half)),
            (REVOLUTE, _rot("x", -half).compose(_rot("y", half))),
        ], _rot("y", -half)
    raise ValueError(f"unknown composite joint kind {kind!r}")


def composite_transform(kind: str, q) -> RigidTransform:
    """Reference transform of a composite joint (for validation)."""
    q = np.asarray(q, dtype=float)
    if kind == "cylindrical":
        theta, z = q
        return _rot("z", theta).compose(
            RigidTransform(np.eye(3), np.array([0.0, 0.0, z])))
    if kind == "planar":
        x, y, theta = q
        return RigidTransform(np.eye(3), np.array([x, y, 0.0])).compose(
            _rot("z", theta))
    if kind == "spherical":
        ax, ay, az = q
        # z-rotation, then the y-flavored middle factor, then x-rotation
        mid = RigidTransform(
            np.array([[math.cos(ay), 0, -math.sin(ay)],
                      [0, 1, 0],
                      [math.sin(ay), 0, math.cos(ay)]]), np.zeros(3))
        return _rot("z", ax).compose(mid).compose(_rot("x", az))
    raise ValueError(f"unknown composite joint kind {kind!r}")
