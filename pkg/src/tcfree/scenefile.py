"""Scene description: robot joints, collision bodies, pair exclusions.

The on-disk format is YAML with explicit units (radians for revolute limits,
meters everywhere else).  Parsing is strict: every problem is reported with
its line and field path rather than failing on the first.
"""

from __future__ import annotations

import importlib.resources
import io
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .geometry import Capsule, Cylinder, Sphere, VPolytope, box_vertices
from .kinematics import (PRISMATIC, REVOLUTE, Joint, KinematicChain,
                         RigidTransform, expand_composite_joint)

__all__ = ["Scene", "SceneError", "parse_scene", "parse_scene_text",
           "serialize_scene", "bundled_scene_path", "load_bundled_scene"]

_COMPOSITE = ("cylindrical", "planar", "spherical")


@dataclass
class ValidationIssue:
    line: int | None
    field: str
    message: str

    def __str__(self):
        where = f"line {self.line}, " if self.line is not None else ""
        return f"{where}{self.field}: {self.message}"


class SceneError(ValueError):
    def __init__(self, issues: list[ValidationIssue]):
        self.issues = issues
        super().__init__("invalid scene:\n" + "\n".join(f"  - {i}" for i in issues))


@dataclass
class Scene:
    name: str
    chain: KinematicChain
    bodies: list
    exclude_pairs: set[frozenset]
    options: dict = field(default_factory=dict)
    source_text: str = ""

    def body(self, name: str):
        for b in self.bodies:
            if b.name == name:
                return b
        raise KeyError(f"unknown body {name!r}")

    def bodies_on_link(self, link: str) -> list:
        return [b for b in self.bodies if b.link == link]


class _LineMap:
    """Maps field paths like 'joints[1].limits' to source line numbers."""

    def __init__(self, text: str):
        self._lines: dict[str, int] = {}
        try:
            root = yaml.compose(io.StringIO(text))
        except yaml.YAMLError:
            root = None
        if root is not None:
            self._walk(root, "")

    def _walk(self, node, path):
        self._lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                sub = f"{path}.{key.value}" if path else str(key.value)
                self._walk(value, sub)
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                self._walk(item, f"{path}[{i}]")

    def line(self, path: str) -> int | None:
        while path:
            if path in self._lines:
                return self._lines[path]
            # fall back to the parent path
            cut = max(path.rfind("."), path.rfind("["))
            if cut <= 0:
                break
            path = path[:cut]
        return self._lines.get("", None)


class _Reader:
    def __init__(self, lines: _LineMap):
        self.lines = lines
        self.issues: list[ValidationIssue] = []

    def err(self, path: str, message: str) -> None:
        self.issues.append(ValidationIssue(self.lines.line(path), path, message))

    def get(self, mapping, key, path, kind=None, required=True, default=None):
        if not isinstance(mapping, dict) or key not in mapping:
            if required:
                self.err(f"{path}.{key}" if path else key, "missing field")
            return default
        value = mapping[key]
        if kind is not None and not isinstance(value, kind):
            self.err(f"{path}.{key}" if path else key,
                     f"expected {getattr(kind, '__name__', kind)}")
            return default
        return value

    def vec3(self, value, path):
        if (not isinstance(value, (list, tuple)) or len(value) != 3
                or not all(isinstance(v, (int, float)) for v in value)):
            self.err(path, "expected a list of 3 numbers")
            return np.zeros(3)
        return np.array(value, dtype=float)


def _read_transform(rd: _Reader, data, path) -> RigidTransform:
    if data is None:
        return RigidTransform.identity()
    if not isinstance(data, dict):
        rd.err(path, "expected a mapping with xyz/rpy")
        return RigidTransform.identity()
    xyz = rd.vec3(data.get("xyz", [0, 0, 0]), f"{path}.xyz")
    rpy = rd.vec3(data.get("rpy", [0, 0, 0]), f"{path}.rpy")
    return RigidTransform.from_rpy(xyz, rpy)


def _read_limits(rd: _Reader, value, path) -> tuple[float, float]:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, (int, float)) for v in value)):
        rd.err(path, "expected [lower, upper]")
        return (-1.0, 1.0)
    lo, hi = float(value[0]), float(value[1])
    if not lo <= hi:
        rd.err(path, f"lower {lo} exceeds upper {hi}")
        return (-1.0, 1.0)
    return (lo, hi)


def _read_joint(rd: _Reader, data, path, pending: list[Joint]) -> None:
    kind = rd.get(data, "kind", path, str, default=REVOLUTE)
    name = rd.get(data, "name", path, str, default=f"joint{len(pending)}")
    origin = _read_transform(rd, data.get("origin"), f"{path}.origin")
    if kind in (REVOLUTE, PRISMATIC):
        limits = _read_limits(rd, rd.get(data, "limits", path), f"{path}.limits")
        if kind == REVOLUTE and not (-math.pi < limits[0] and limits[1] < math.pi):
            rd.err(f"{path}.limits",
                   "revolute limits must be strictly inside (-pi, pi); "
                   "the tangent half-angle substitution is a bijection only "
                   "on the open interval")
            return
        child = rd.get(data, "child", path, str, required=False,
                       default=f"{name}_link")
        tip = _read_transform(rd, data.get("tip"), f"{path}.tip")
        parent = rd.get(data, "parent", path, str, required=False, default="")
        pending.append(Joint(kind, name, limits, origin, tip=tip,
                             child_link=child, parent=parent))
        return
    if kind in _COMPOSITE:
        steps, tail = expand_composite_joint(kind)
        lim_list = rd.get(data, "limits", path, list, default=[])
        if len(lim_list) != len(steps):
            rd.err(f"{path}.limits",
                   f"{kind} joint needs {len(steps)} limit pairs")
            return
        child = rd.get(data, "child", path, str, required=False,
                       default=f"{name}_link")
        parent = rd.get(data, "parent", path, str, required=False, default="")
        for i, ((sub_kind, sub_origin), lim) in enumerate(zip(steps, lim_list)):
            limits = _read_limits(rd, lim, f"{path}.limits[{i}]")
            if sub_kind == REVOLUTE and not (-math.pi < limits[0]
                                             and limits[1] < math.pi):
                rd.err(f"{path}.limits[{i}]",
                       "revolute limits must be strictly inside (-pi, pi)")
                return
            first = i == 0
            last = i == len(steps) - 1
            pending.append(Joint(
                sub_kind, f"{name}_{i}", limits,
                origin.compose(sub_origin) if first else sub_origin,
                tip=tail if last else RigidTransform.identity(),
                child_link=child if last else f"{name}_{i}_link",
                parent=parent if first else ""))
        return
    rd.err(f"{path}.kind", f"unknown joint kind {kind!r}")


def _read_body(rd: _Reader, data, path, index: int, links: set[str]):
    kind = rd.get(data, "kind", path, str, default="")
    name = rd.get(data, "name", path, str, required=False,
                  default=f"body{index}")
    link = rd.get(data, "link", path, str, required=False, default="world")
    if link not in links:
        rd.err(f"{path}.link", f"unknown link {link!r}")
        return None
    try:
        if kind == "box":
            center = rd.vec3(rd.get(data, "center", path), f"{path}.center")
            size = rd.vec3(rd.get(data, "size", path), f"{path}.size")
            if np.any(size <= 0):
                rd.err(f"{path}.size", "box edge lengths must be positive")
                return None
            return VPolytope(name, link, vertices=box_vertices(center, size))
        if kind == "vpolytope":
            verts = rd.get(data, "vertices", path, list, default=[])
            if not verts:
                rd.err(f"{path}.vertices", "polytope needs at least one vertex")
                return None
            return VPolytope(name, link,
                             vertices=np.array(verts, dtype=float).reshape(-1, 3))
        if kind == "sphere":
            return Sphere(name, link,
                          center=rd.vec3(rd.get(data, "center", path),
                                         f"{path}.center"),
                          radius=float(rd.get(data, "radius", path, (int, float),
                                              default=1.0)))
        if kind in ("capsule", "cylinder"):
            cls = Capsule if kind == "capsule" else Cylinder
            return cls(name, link,
                       p1=rd.vec3(rd.get(data, "p1", path), f"{path}.p1"),
                       p2=rd.vec3(rd.get(data, "p2", path), f"{path}.p2"),
                       r1=float(rd.get(data, "r1", path, (int, float), default=1.0)),
                       r2=float(rd.get(data, "r2", path, (int, float), default=1.0)))
    except ValueError as exc:
        rd.err(path, str(exc))
        return None
    rd.err(f"{path}.kind", f"unknown body kind {kind!r}")
    return None


def parse_scene_text(text: str) -> Scene:
    lines = _LineMap(text)
    rd = _Reader(lines)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SceneError([ValidationIssue(
            mark.line + 1 if mark else None, "", f"YAML parse error: {exc}")])
    if not isinstance(data, dict):
        raise SceneError([ValidationIssue(None, "", "scene must be a mapping")])

    name = rd.get(data, "name", "", str, required=False, default="scene")
    joints: list[Joint] = []
    joint_list = rd.get(data, "joints", "", list, required=False, default=[])
    for i, jd in enumerate(joint_list):
        if not isinstance(jd, dict):
            rd.err(f"joints[{i}]", "expected a mapping")
            continue
        try:
            _read_joint(rd, jd, f"joints[{i}]", joints)
        except ValueError as exc:
            rd.err(f"joints[{i}]", str(exc))
    try:
        chain = KinematicChain(joints)
    except ValueError as exc:
        rd.err("joints", str(exc))
        chain = KinematicChain([])

    links = set(chain.frames)
    bodies = []
    for i, bd in enumerate(rd.get(data, "bodies", "", list, required=False,
                                  default=[])):
        if not isinstance(bd, dict):
            rd.err(f"bodies[{i}]", "expected a mapping")
            continue
        body = _read_body(rd, bd, f"bodies[{i}]", i, links)
        if body is not None:
            bodies.append(body)
    names = [b.name for b in bodies]
    if len(set(names)) != len(names):
        rd.err("bodies", "duplicate body names")

    exclude = set()
    for i, pair in enumerate(rd.get(data, "exclude_pairs", "", list,
                                    required=False, default=[])):
        if (not isinstance(pair, (list, tuple)) or len(pair) != 2):
            rd.err(f"exclude_pairs[{i}]", "expected [bodyA, bodyB]")
            continue
        for nm in pair:
            if nm not in names:
                rd.err(f"exclude_pairs[{i}]", f"unknown body {nm!r}")
        exclude.add(frozenset(pair))

    options = rd.get(data, "options", "", dict, required=False, default={})
    if rd.issues:
        raise SceneError(rd.issues)
    return Scene(name, chain, bodies, exclude, dict(options), source_text=text)


def parse_scene(path: str) -> Scene:
    with open(path) as fh:
        return parse_scene_text(fh.read())


def serialize_scene(scene: Scene) -> str:
    """Regenerate scene YAML; parse(serialize(s)) builds an identical model."""
    doc: dict = {"name": scene.name, "joints": [], "bodies": []}
    for j in scene.chain.joints:
        entry = {"name": j.name, "kind": j.kind,
                 "limits": [float(j.limits[0]), float(j.limits[1])],
                 "child": j.child_link}
        if j.parent:
            entry["parent"] = j.parent
        entry["origin"] = _transform_doc(j.origin)
        tip = _transform_doc(j.tip)
        if tip != {"xyz": [0.0, 0.0, 0.0], "rpy": [0.0, 0.0, 0.0]}:
            # expanded composite joints carry a tail transform; serialize the
            # chain in expanded form to keep the format closed under round trip
            entry["tip"] = tip
        doc["joints"].append(entry)
    for b in scene.bodies:
        if isinstance(b, VPolytope):
            entry = {"name": b.name, "link": b.link, "kind": "vpolytope",
                     "vertices": [[float(v) for v in row] for row in b.vertices]}
        elif isinstance(b, Sphere):
            entry = {"name": b.name, "link": b.link, "kind": "sphere",
                     "center": [float(v) for v in b.center],
                     "radius": float(b.radius)}
        else:
            entry = {"name": b.name, "link": b.link,
                     "kind": "capsule" if isinstance(b, Capsule) else "cylinder",
                     "p1": [float(v) for v in b.p1],
                     "p2": [float(v) for v in b.p2],
                     "r1": float(b.r1), "r2": float(b.r2)}
        doc["bodies"].append(entry)
    if scene.exclude_pairs:
        doc["exclude_pairs"] = sorted(sorted(p) for p in scene.exclude_pairs)
    if scene.options:
        doc["options"] = scene.options
    return yaml.safe_dump(doc, sort_keys=False)


def _transform_doc(t: RigidTransform) -> dict:
    R, p = t.R, t.p
    pitch = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    if abs(R[2, 0]) < 1.0 - 1e-12:
        roll = math.atan2(R[2, 1], R[2, 2])
        yaw = math.atan2(R[1, 0], R[0, 0])
    else:
        roll = math.atan2(-R[0, 1], R[1, 1])
        yaw = 0.0
    return {"xyz": [float(v) for v in p],
            "rpy": [float(roll), float(pitch), float(yaw)]}


def bundled_scene_path(name: str) -> str:
    ref = importlib.resources.files("tcfree") / "scenes" / f"{name}.yaml"
    return str(ref)


def load_bundled_scene(name: str) -> Scene:
    return parse_scene(bundled_scene_path(name))
