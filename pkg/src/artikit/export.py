"""URDF, OBJ and scene export, plus a reader for the URDF dialect we emit.

Link frames: the ground link uses the ground part's frame; every other link
uses the moving frame of its parent joint, and the part geometry sits at
``Flip ∘ Fc⁻¹`` inside it.  Joint origins are therefore the parent connector
frame expressed in the parent link, with the joint axis along local z.
Cylindrical joints become revolute + prismatic through one massless link;
Ball joints become three revolute joints (z, y, x) through two massless links.
"""

from __future__ import annotations

import json
import math
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .assembler import FLIP, AssembledModel, joint_frames, keyframes
from .errors import EmptyProgram, ParseError, StoreIoError, UnsupportedElement
from .part import PartProgram, bounding_box, estimate_volume, meshify
from .plan import JointType
from .se3 import Pose, Rotation

MM = 1e-3
DENSITY = 1000.0  # kg/m^3
EFFORT = 100.0
VELOCITY = 1.0
UNBOUNDED_SLIDE = 10.0  # m, stands in for an unlimited prismatic range
OBJ_HEADER = "units: millimeters; URDF mesh references apply scale 0.001 (mm -> m)"


def rpy_from_rotation(r: Rotation) -> tuple[float, float, float]:
    """URDF fixed-axis roll/pitch/yaw, ``R = Rz(yaw) Ry(pitch) Rx(roll)``."""
    m = r.as_matrix()
    pitch = math.atan2(-m[2, 0], math.hypot(m[0, 0], m[1, 0]))
    if math.hypot(m[0, 0], m[1, 0]) < 1e-12:
        return (0.0, pitch, math.atan2(-m[0, 1], m[1, 1]))
    return (math.atan2(m[2, 1], m[2, 2]), pitch, math.atan2(m[1, 0], m[0, 0]))


def rotation_from_rpy(roll: float, pitch: float, yaw: float) -> Rotation:
    rz = Rotation.from_axis_angle((0, 0, 1), yaw)
    ry = Rotation.from_axis_angle((0, 1, 0), pitch)
    rx = Rotation.from_axis_angle((1, 0, 0), roll)
    return rz * ry * rx


def _fmt(vals: Sequence[float]) -> str:
    return " ".join(repr(float(v)) for v in vals)


@dataclass
class UrdfLink:
    name: str
    mass: float | None = None
    inertia: tuple[float, float, float] | None = None  # ixx, iyy, izz
    inertial_origin: Pose = Pose()
    visual_origin: Pose = Pose()
    mesh: str | None = None
    mesh_scale: tuple[float, float, float] = (MM, MM, MM)


@dataclass
class UrdfJoint:
    name: str
    type: str  # fixed | revolute | continuous | prismatic
    parent: str
    child: str
    origin: Pose = Pose()  # translation in meters
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    lower: float | None = None
    upper: float | None = None

    def motion(self, value: float) -> Pose:
        if self.type in ("revolute", "continuous"):
            return Pose(Rotation.from_axis_angle(self.axis, value))
        if self.type == "prismatic":
            a = np.asarray(self.axis) / np.linalg.norm(self.axis)
            return Pose(translation=tuple((a * value).tolist()))
        return Pose()


@dataclass
class UrdfDocument:
    name: str
    links: list[UrdfLink] = field(default_factory=list)
    joints: list[UrdfJoint] = field(default_factory=list)
    part_links: dict[str, str] = field(default_factory=dict)

    def link(self, name: str) -> UrdfLink:
        for l in self.links:
            if l.name == name:
                return l
        raise KeyError(name)

    def joint(self, name: str) -> UrdfJoint:
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(name)

    @property
    def root(self) -> str:
        children = {j.child for j in self.joints}
        roots = [l.name for l in self.links if l.name not in children]
        if len(roots) != 1:
            raise ParseError(f"expected one root link, found {roots}")
        return roots[0]

    def fk(self, values: Mapping[str, float] | None = None) -> dict[str, Pose]:
        """World pose of every link (meters); unspecified joints sit at 0."""
        values = values or {}
        poses = {self.root: Pose()}
        by_parent: dict[str, list[UrdfJoint]] = {}
        for j in self.joints:
            by_parent.setdefault(j.parent, []).append(j)
        stack = [self.root]
        while stack:
            name = stack.pop()
            for j in by_parent.get(name, []):
                poses[j.child] = poses[name].compose(j.origin).compose(j.motion(values.get(j.name, 0.0)))
                stack.append(j.child)
        return poses

    def part_poses(self, values: Mapping[str, float] | None = None) -> dict[str, Pose]:
        """Part-frame poses in millimeters, for comparison against kernel FK."""
        links = self.fk(values)
        out = {}
        for l in self.links:
            if l.mesh is None:
                continue
            p = links[l.name].compose(l.visual_origin)
            out[l.name] = Pose(p.rotation, tuple(c / MM for c in p.translation))
        return out

    def to_xml(self) -> str:
        robot = ET.Element("robot", name=self.name)
        for l in self.links:
            el = ET.SubElement(robot, "link", name=l.name)
            if l.mass is not None:
                inertial = ET.SubElement(el, "inertial")
                _origin(inertial, l.inertial_origin)
                ET.SubElement(inertial, "mass", value=repr(l.mass))
                ixx, iyy, izz = l.inertia or (0.0, 0.0, 0.0)
                ET.SubElement(
                    inertial, "inertia", ixx=repr(ixx), ixy="0.0", ixz="0.0", iyy=repr(iyy), iyz="0.0", izz=repr(izz)
                )
            if l.mesh is not None:
                for tag in ("visual", "collision"):
                    v = ET.SubElement(el, tag)
                    _origin(v, l.visual_origin)
                    g = ET.SubElement(v, "geometry")
                    ET.SubElement(g, "mesh", filename=l.mesh, scale=_fmt(l.mesh_scale))
        for j in self.joints:
            el = ET.SubElement(robot, "joint", name=j.name, type=j.type)
            ET.SubElement(el, "parent", link=j.parent)
            ET.SubElement(el, "child", link=j.child)
            _origin(el, j.origin)
            if j.type != "fixed":
                ET.SubElement(el, "axis", xyz=_fmt(j.axis))
            if j.type in ("revolute", "prismatic"):
                ET.SubElement(
                    el,
                    "limit",
                    lower=repr(j.lower),
                    upper=repr(j.upper),
                    effort=repr(EFFORT),
                    velocity=repr(VELOCITY),
                )
        ET.indent(robot)
        return '<?xml version="1.0"?>\n' + ET.tostring(robot, encoding="unicode") + "\n"

    def lint(self, base_dir: str | Path | None = None) -> list[str]:
        """Structural problems: duplicate names, non-tree topology, dangling meshes."""
        problems = []
        names = [l.name for l in self.links]
        if len(set(names)) != len(names):
            problems.append("duplicate link names")
        jnames = [j.name for j in self.joints]
        if len(set(jnames)) != len(jnames):
            problems.append("duplicate joint names")
        known = set(names)
        for j in self.joints:
            for end in (j.parent, j.child):
                if end not in known:
                    problems.append(f"joint {j.name} references unknown link {end}")
        children = [j.child for j in self.joints]
        if len(set(children)) != len(children):
            problems.append("a link has more than one parent joint")
        if len(self.joints) != len(self.links) - 1:
            problems.append("joint count is not links - 1")
        else:
            try:
                reached = set(self.fk())
                if reached != known:
                    problems.append(f"links unreachable from root: {sorted(known - reached)}")
            except (ParseError, KeyError) as exc:
                problems.append(str(exc))
        if base_dir is not None:
            for l in self.links:
                if l.mesh is not None and not (Path(base_dir) / l.mesh).is_file():
                    problems.append(f"link {l.name}: mesh {l.mesh} does not exist")
        return problems


def _origin(parent: ET.Element, pose: Pose) -> None:
    ET.SubElement(parent, "origin", xyz=_fmt(pose.translation), rpy=_fmt(rpy_from_rotation(pose.rotation)))


def _to_m(p: Pose) -> Pose:
    return Pose(p.rotation, tuple(c * MM for c in p.translation))


def link_offsets(model: AssembledModel) -> dict[str, Pose]:
    """Pose of each part frame inside its URDF link (millimeters)."""
    out = {model.plan.ground: Pose()}
    for joint in model.plan.joints:
        _, f_c = joint_frames(joint, model.geometries)
        off = f_c.inverse()
        out[joint.child.part] = FLIP.compose(off) if joint.flip else off
    return out


def _limit(lim, scale: float = 1.0) -> tuple[float | None, float | None]:
    if lim is None:
        return None, None
    return lim.lo * scale, lim.hi * scale


def _rot_joint(name: str, parent: str, child: str, origin: Pose, axis, lo, hi) -> UrdfJoint:
    if lo is None:
        return UrdfJoint(name, "continuous", parent, child, origin, axis)
    return UrdfJoint(name, "revolute", parent, child, origin, axis, lo, hi)


def _slide_joint(name: str, parent: str, child: str, origin: Pose, lo, hi) -> UrdfJoint:
    if lo is None:
        lo, hi = -UNBOUNDED_SLIDE, UNBOUNDED_SLIDE
    return UrdfJoint(name, "prismatic", parent, child, origin, (0.0, 0.0, 1.0), lo, hi)


def build_urdf(model: AssembledModel, mesh_dir: str = "meshes", volume_samples: int = 20000) -> UrdfDocument:
    plan = model.plan
    offsets = link_offsets(model)
    doc = UrdfDocument(plan.name)
    for pid in plan.part_ids:
        prog = model.geometries[pid]
        box = bounding_box(prog)
        vol_mm3 = estimate_volume(prog, volume_samples, seed=0)
        if vol_mm3 <= 0.0:
            raise EmptyProgram(f"part {pid!r} has no volume")
        mass = vol_mm3 * 1e-9 * DENSITY
        a, b, c = (box.extent * MM).tolist()
        inertia = (mass * (b * b + c * c) / 12, mass * (a * a + c * c) / 12, mass * (a * a + b * b) / 12)
        off = offsets[pid]
        center = off.compose(Pose(translation=tuple(box.center.tolist())))
        doc.links.append(
            UrdfLink(pid, mass, inertia, _to_m(Pose(off.rotation, center.translation)), _to_m(off), f"{mesh_dir}/{pid}.obj")
        )
        doc.part_links[pid] = pid
    z = (0.0, 0.0, 1.0)
    for joint in plan.tree_order():
        f_p, _ = joint_frames(joint, model.geometries)
        origin = _to_m(offsets[joint.parent.part].compose(f_p))
        parent, child, jid = joint.parent.part, joint.child.part, joint.id
        t = joint.type
        if t is JointType.FIXED:
            doc.joints.append(UrdfJoint(jid, "fixed", parent, child, origin))
        elif t is JointType.REVOLUTE:
            doc.joints.append(_rot_joint(jid, parent, child, origin, z, *_limit(joint.limit(0))))
        elif t is JointType.SLIDER:
            doc.joints.append(_slide_joint(jid, parent, child, origin, *_limit(joint.limit(0), MM)))
        elif t is JointType.CYLINDRICAL:
            mid = f"{jid}__l1"
            doc.links.append(UrdfLink(mid))
            doc.joints.append(_rot_joint(f"{jid}__rz", parent, mid, origin, z, *_limit(joint.limit(0))))
            doc.joints.append(_slide_joint(f"{jid}__tz", mid, child, Pose(), *_limit(joint.limit(1), MM)))
        else:
            l1, l2 = f"{jid}__l1", f"{jid}__l2"
            doc.links += [UrdfLink(l1), UrdfLink(l2)]
            # ZYX angles of any rotation fall in these ranges, and a tilt
            # cone bounds both the y and x angles, so the box contains the cone
            cone = joint.cone
            ry = (-cone, cone) if cone is not None else (-math.pi / 2, math.pi / 2)
            rx = (-cone, cone) if cone is not None else (-math.pi, math.pi)
            doc.joints.append(_rot_joint(f"{jid}__rz", parent, l1, origin, z, -math.pi, math.pi))
            doc.joints.append(_rot_joint(f"{jid}__ry", l1, l2, Pose(), (0.0, 1.0, 0.0), *ry))
            doc.joints.append(_rot_joint(f"{jid}__rx", l2, child, Pose(), (1.0, 0.0, 0.0), *rx))
    return doc


def euler_zyx(q: Sequence[float]) -> tuple[float, float, float]:
    """Angles ``(a, b, c)`` with ``exp(q) = Rz(a) Ry(b) Rx(c)``."""
    roll, pitch, yaw = rpy_from_rotation(Rotation.from_rotvec(q))
    return yaw, pitch, roll


def urdf_joint_values(model: AssembledModel, q: Mapping[str, Sequence[float]]) -> dict[str, float]:
    """Kernel coordinates (rad, mm) to URDF joint values (rad, m)."""
    out = {}
    for joint in model.plan.joints:
        v = q.get(joint.id, model.q[joint.id])
        t = joint.type
        if t is JointType.REVOLUTE:
            out[joint.id] = float(v[0])
        elif t is JointType.SLIDER:
            out[joint.id] = float(v[0]) * MM
        elif t is JointType.CYLINDRICAL:
            out[f"{joint.id}__rz"] = float(v[0])
            out[f"{joint.id}__tz"] = float(v[1]) * MM
        elif t is JointType.BALL:
            a, b, c = euler_zyx(v)
            out[f"{joint.id}__rz"], out[f"{joint.id}__ry"], out[f"{joint.id}__rx"] = a, b, c
    return out


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise StoreIoError(f"cannot write {path}: {exc}") from exc


def write_meshes(geometries: Mapping[str, PartProgram], out_dir: Path, resolution: int) -> dict[str, Path]:
    paths = {}
    for pid, prog in geometries.items():
        path = out_dir / f"{pid}.obj"
        _write(path, meshify(prog, resolution).to_obj(f"part {pid}\n{OBJ_HEADER}"))
        paths[pid] = path
    return paths


def export_urdf(model: AssembledModel, out_dir: str | Path, mesh_resolution: int = 64) -> tuple[UrdfDocument, Path]:
    out = Path(out_dir)
    doc = build_urdf(model)
    write_meshes(model.geometries, out / "meshes", mesh_resolution)
    path = out / f"{model.plan.name}.urdf"
    _write(path, doc.to_xml())
    return doc, path


# ------------------------------------------------------------------ import

_ALLOWED = {
    "robot": {"link", "joint"},
    "link": {"inertial", "visual", "collision"},
    "inertial": {"origin", "mass", "inertia"},
    "visual": {"origin", "geometry"},
    "collision": {"origin", "geometry"},
    "geometry": {"mesh"},
    "joint": {"parent", "child", "origin", "axis", "limit"},
}
_JOINT_TYPES = {"fixed", "revolute", "continuous", "prismatic"}


def _check_dialect(el: ET.Element) -> None:
    allowed = _ALLOWED.get(el.tag, set())
    for child in el:
        if child.tag not in allowed:
            raise UnsupportedElement(f"<{child.tag}> inside <{el.tag}> is outside the supported URDF dialect")
        _check_dialect(child)


def _floats(text: str | None, n: int, default: float = 0.0) -> tuple[float, ...]:
    if text is None:
        return (default,) * n
    vals = tuple(float(v) for v in text.split())
    if len(vals) != n:
        raise ParseError(f"expected {n} numbers, got {text!r}")
    return vals


def _read_origin(el: ET.Element | None) -> Pose:
    if el is None:
        return Pose()
    xyz = _floats(el.get("xyz"), 3)
    rpy = _floats(el.get("rpy"), 3)
    return Pose(rotation_from_rpy(*rpy), xyz)  # type: ignore[arg-type]


def import_urdf(source: str | Path) -> UrdfDocument:
    """Read a URDF written by :func:`export_urdf` (restricted dialect)."""
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, Path) or os.path.exists(str(source)) else str(source)
    if not text.strip():
        raise ParseError("empty URDF document")
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ParseError(f"malformed XML: {exc}") from None
    if root.tag != "robot":
        raise UnsupportedElement(f"root element <{root.tag}> is not <robot>")
    _check_dialect(root)
    doc = UrdfDocument(root.get("name", ""))
    for el in root.findall("link"):
        link = UrdfLink(el.get("name", ""))
        inertial = el.find("inertial")
        if inertial is not None:
            link.inertial_origin = _read_origin(inertial.find("origin"))
            m = inertial.find("mass")
            link.mass = float(m.get("value")) if m is not None else 0.0
            i = inertial.find("inertia")
            if i is not None:
                link.inertia = (float(i.get("ixx", 0)), float(i.get("iyy", 0)), float(i.get("izz", 0)))
        visual = el.find("visual")
        if visual is not None:
            link.visual_origin = _read_origin(visual.find("origin"))
            mesh = visual.find("geometry/mesh")
            if mesh is not None:
                link.mesh = mesh.get("filename")
                link.mesh_scale = _floats(mesh.get("scale"), 3, 1.0)  # type: ignore[assignment]
        doc.links.append(link)
        if link.mesh is not None:
            doc.part_links[link.name] = link.name
    for el in root.findall("joint"):
        jtype = el.get("type", "")
        if jtype not in _JOINT_TYPES:
            raise UnsupportedElement(f"joint type {jtype!r} is outside the supported URDF dialect")
        parent, child = el.find("parent"), el.find("child")
        if parent is None or child is None:
            raise ParseError(f"joint {el.get('name')!r} lacks parent or child")
        axis_el = el.find("axis")
        axis = _floats(axis_el.get("xyz") if axis_el is not None else None, 3)
        if axis_el is None:
            axis = (1.0, 0.0, 0.0)
        lim = el.find("limit")
        lower = upper = None
        if lim is not None and jtype in ("revolute", "prismatic"):
            lower, upper = float(lim.get("lower", 0.0)), float(lim.get("upper", 0.0))
        doc.joints.append(
            UrdfJoint(
                el.get("name", ""),
                jtype,
                parent.get("link", ""),
                child.get("link", ""),
                _read_origin(el.find("origin")),
                axis,  # type: ignore[arg-type]
                lower,
                upper,
            )
        )
    return doc


# ------------------------------------------------------------------- scene


def export_scene(
    model: AssembledModel,
    q: Mapping[str, Sequence[float]] | None,
    out_dir: str | Path,
    mesh_resolution: int = 64,
) -> Path:
    """One part-local OBJ per part plus ``scene.json`` with world poses."""
    out = Path(out_dir)
    posed = model.at(q or {})
    write_meshes(model.geometries, out / "meshes", mesh_resolution)
    data = posed.to_json()
    data["meshes"] = {pid: f"meshes/{pid}.obj" for pid in model.plan.part_ids}
    path = out / "scene.json"
    _write(path, json.dumps(data, indent=2))
    return path


def export_animation(model: AssembledModel, frames_per_dof: int, out_dir: str | Path) -> list[Path]:
    """One pose file per keyframe, same schema as the assembled-model JSON."""
    out = Path(out_dir)
    paths = []
    for i, (q, poses) in enumerate(keyframes(model, frames_per_dof)):
        data = {
            "plan": model.plan.name,
            "frame": i,
            "poses": {pid: poses[pid].to_pair() for pid in model.plan.part_ids},
            "q": {jid: list(v) for jid, v in sorted(q.items())},
        }
        path = out / f"frame_{i:03d}.json"
        _write(path, json.dumps(data, indent=2))
        paths.append(path)
    return paths


def load_poses(path: str | Path) -> dict[str, Pose]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {pid: Pose.from_pair(pair) for pid, pair in data["poses"].items()}
