"""Assembly plans: parts with connector frames, typed joints, ground, declared DOF.

A plan is produced by the design agent as JSON.  :func:`parse_plan` turns it
into immutable dataclasses, :func:`validate_plan` checks the kinematic tree
and DOF bookkeeping, and :func:`expand_derived` materializes derived parts
(rigid or mirrored copies) from their source geometry.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Mapping

from .errors import ArtikitError, MissingSource, ParseError, SchemaError
from .se3 import Plane, Pose, Vec3, frame_from_zx, reflect_frame

if TYPE_CHECKING:
    from .part import PartProgram


class JointType(str, Enum):
    FIXED = "Fixed"
    REVOLUTE = "Revolute"
    SLIDER = "Slider"
    CYLINDRICAL = "Cylindrical"
    BALL = "Ball"


DOF = {
    JointType.FIXED: 0,
    JointType.REVOLUTE: 1,
    JointType.SLIDER: 1,
    JointType.CYLINDRICAL: 2,
    JointType.BALL: 3,
}

# physical kind of each joint coordinate, in order
COORD_KINDS: dict[JointType, tuple[str, ...]] = {
    JointType.FIXED: (),
    JointType.REVOLUTE: ("rot",),
    JointType.SLIDER: ("trans",),
    JointType.CYLINDRICAL: ("rot", "trans"),
    JointType.BALL: ("rot", "rot", "rot"),
}

UNIT_KIND = {"deg": "rot", "mm": "trans"}


def dof(joint_type: JointType | str) -> int:
    return DOF[JointType(joint_type)]


def to_internal(value: float, kind: str) -> float:
    """Plan units (deg, mm) to kernel units (rad, mm)."""
    return math.radians(value) if kind == "rot" else float(value)


def to_plan_units(value: float, kind: str) -> float:
    return math.degrees(value) if kind == "rot" else float(value)


@dataclass(frozen=True)
class ConnectorFrame:
    name: str
    origin: Vec3
    z_axis: Vec3
    x_axis: Vec3
    label: str

    def frame(self) -> Pose:
        return frame_from_zx(self.origin, self.z_axis, self.x_axis)

    @classmethod
    def from_pose(cls, name: str, pose: Pose, label: str) -> ConnectorFrame:
        return cls(name, pose.translation, pose.axis(2), pose.axis(0), label)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "origin": list(self.origin),
            "z_axis": list(self.z_axis),
            "x_axis": list(self.x_axis),
            "label": self.label,
        }


@dataclass(frozen=True)
class ConnectorRef:
    part: str
    connector: str


@dataclass(frozen=True)
class Limit:
    """Closed interval on one joint coordinate, stored in kernel units."""

    lo: float
    hi: float
    unit: str


@dataclass(frozen=True)
class JointSpec:
    id: str
    type: JointType
    parent: ConnectorRef
    child: ConnectorRef
    limits: tuple[Limit | None, ...] | None = None
    cone: float | None = None  # Ball only: max tilt of child z from parent z, radians
    rest: tuple[float, ...] | None = None  # plan units (deg / mm)
    flip: bool = False

    @property
    def dof(self) -> int:
        return DOF[self.type]

    @property
    def kinds(self) -> tuple[str, ...]:
        return COORD_KINDS[self.type]

    def limit(self, i: int) -> Limit | None:
        if self.limits is None or i >= len(self.limits):
            return None
        return self.limits[i]

    def rest_coordinates(self) -> tuple[float, ...]:
        """Rest vector in kernel units, clamped into the declared limits."""
        kinds = self.kinds
        raw = self.rest if self.rest is not None else (0.0,) * len(kinds)
        q = [to_internal(v, k) for v, k in zip(raw, kinds)]
        for i in range(len(q)):
            lim = self.limit(i)
            if lim is not None:
                q[i] = min(max(q[i], lim.lo), lim.hi)
        return tuple(q)

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "id": self.id,
            "type": self.type.value,
            "parent": {"part": self.parent.part, "connector": self.parent.connector},
            "child": {"part": self.child.part, "connector": self.child.connector},
        }
        if self.type is JointType.BALL and self.cone is not None:
            out["limits"] = [{"cone": math.degrees(self.cone), "unit": "deg"}]
        elif self.limits is not None:
            out["limits"] = [
                None
                if lim is None
                else {
                    "min": to_plan_units(lim.lo, UNIT_KIND[lim.unit]),
                    "max": to_plan_units(lim.hi, UNIT_KIND[lim.unit]),
                    "unit": lim.unit,
                }
                for lim in self.limits
            ]
        if self.rest is not None:
            out["rest"] = list(self.rest)
        if self.flip:
            out["flip"] = True
        return out


@dataclass(frozen=True)
class Derive:
    source: str
    transform: Pose = Pose()
    mirror: Plane | None = None

    def apply(self, pose: Pose) -> Pose:
        """Map a source-local frame into the derived part (mirror first)."""
        if self.mirror is not None:
            pose = reflect_frame(pose, self.mirror)
        return self.transform.compose(pose)

    def to_json(self) -> dict:
        out: dict[str, Any] = {"source": self.source, "transform": self.transform.to_json()}
        if self.mirror is not None:
            out["mirror"] = self.mirror.to_json()
        return out


@dataclass(frozen=True)
class PartSpec:
    id: str
    description: str = ""
    parameters: Mapping[str, float] = field(default_factory=dict)
    orientation_hint: str = ""
    connectors: tuple[ConnectorFrame, ...] = ()
    derive: Derive | None = None

    def connector(self, name: str) -> ConnectorFrame | None:
        for c in self.connectors:
            if c.name == name:
                return c
        return None

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "id": self.id,
            "description": self.description,
            "parameters": dict(self.parameters),
        }
        if self.orientation_hint:
            out["orientation_hint"] = self.orientation_hint
        if self.connectors:
            out["connectors"] = [c.to_json() for c in self.connectors]
        if self.derive is not None:
            out["derive"] = self.derive.to_json()
        return out


@dataclass(frozen=True)
class AssemblyPlan:
    name: str
    parts: tuple[PartSpec, ...]
    joints: tuple[JointSpec, ...]
    ground: str
    declared_dof: int

    def part(self, part_id: str) -> PartSpec:
        for p in self.parts:
            if p.id == part_id:
                return p
        raise KeyError(part_id)

    def joint(self, joint_id: str) -> JointSpec:
        for j in self.joints:
            if j.id == joint_id:
                return j
        raise KeyError(joint_id)

    @property
    def part_ids(self) -> list[str]:
        return [p.id for p in self.parts]

    @property
    def computed_dof(self) -> int:
        return sum(j.dof for j in self.joints)

    def reference_connectors(self, part_id: str) -> tuple[ConnectorFrame, ...]:
        """Connectors a part exposes; derived parts inherit their source's."""
        spec = self.part(part_id)
        if spec.derive is None:
            return spec.connectors
        src = self.part(spec.derive.source)
        return tuple(
            ConnectorFrame.from_pose(c.name, spec.derive.apply(c.frame()), c.label)
            for c in src.connectors
        )

    def tree_order(self) -> list[JointSpec]:
        """Joints in BFS order from ground (assumes a validated plan)."""
        by_parent: dict[str, list[JointSpec]] = {}
        for j in self.joints:
            by_parent.setdefault(j.parent.part, []).append(j)
        order: list[JointSpec] = []
        queue = deque([self.ground])
        seen = {self.ground}
        while queue:
            pid = queue.popleft()
            for j in by_parent.get(pid, []):
                if j.child.part in seen:
                    continue
                seen.add(j.child.part)
                order.append(j)
                queue.append(j.child.part)
        return order

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "ground": self.ground,
            "declared_dof": self.declared_dof,
            "parts": [p.to_json() for p in self.parts],
            "joints": [j.to_json() for j in self.joints],
        }


# ---------------------------------------------------------------- parsing


def _obj(data: Any, path: str, required: set[str], optional: set[str]) -> dict:
    if not isinstance(data, dict):
        raise SchemaError(path, "expected an object")
    unknown = set(data) - required - optional
    if unknown:
        raise SchemaError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    missing = required - set(data)
    if missing:
        raise SchemaError(f"{path}.{sorted(missing)[0]}", "missing required field")
    return data


def _str(data: Any, path: str) -> str:
    if not isinstance(data, str):
        raise SchemaError(path, "expected a string")
    return data


def _num(data: Any, path: str) -> float:
    if isinstance(data, bool) or not isinstance(data, (int, float)) or not math.isfinite(data):
        raise SchemaError(path, "expected a finite number")
    return float(data)


def _vec(data: Any, path: str) -> Vec3:
    if not isinstance(data, list) or len(data) != 3:
        raise SchemaError(path, "expected [x, y, z]")
    return tuple(_num(v, f"{path}[{i}]") for i, v in enumerate(data))  # type: ignore[return-value]


def parse_connector(data: Any, path: str) -> ConnectorFrame:
    d = _obj(data, path, {"name", "origin", "z_axis", "x_axis"}, {"label"})
    return ConnectorFrame(
        name=_str(d["name"], f"{path}.name"),
        origin=_vec(d["origin"], f"{path}.origin"),
        z_axis=_vec(d["z_axis"], f"{path}.z_axis"),
        x_axis=_vec(d["x_axis"], f"{path}.x_axis"),
        label=_str(d.get("label", ""), f"{path}.label"),
    )


def _parse_ref(data: Any, path: str) -> ConnectorRef:
    d = _obj(data, path, {"part", "connector"}, set())
    return ConnectorRef(_str(d["part"], f"{path}.part"), _str(d["connector"], f"{path}.connector"))


def _parse_limit(data: Any, path: str) -> Limit | None:
    if data is None:
        return None
    d = _obj(data, path, {"min", "max", "unit"}, set())
    unit = _str(d["unit"], f"{path}.unit")
    if unit not in UNIT_KIND:
        raise SchemaError(f"{path}.unit", f"expected one of deg|mm, got {unit!r}")
    kind = UNIT_KIND[unit]
    lo = to_internal(_num(d["min"], f"{path}.min"), kind)
    hi = to_internal(_num(d["max"], f"{path}.max"), kind)
    return Limit(lo, hi, unit)


def parse_joint(data: Any, path: str) -> JointSpec:
    d = _obj(data, path, {"id", "type", "parent", "child"}, {"limits", "rest", "flip"})
    raw_type = _str(d["type"], f"{path}.type")
    try:
        jtype = JointType(raw_type)
    except ValueError:
        allowed = "|".join(t.value for t in JointType)
        raise SchemaError(f"{path}.type", f"unknown joint type {raw_type!r} (expected {allowed})") from None
    limits: tuple[Limit | None, ...] | None = None
    cone = None
    raw_limits = d.get("limits")
    if raw_limits is not None:
        if not isinstance(raw_limits, list):
            raise SchemaError(f"{path}.limits", "expected a list")
        if jtype is JointType.BALL:
            if len(raw_limits) != 1:
                raise SchemaError(f"{path}.limits", "Ball limits take a single {cone, unit} entry")
            c = _obj(raw_limits[0], f"{path}.limits[0]", {"cone", "unit"}, set())
            if c["unit"] != "deg":
                raise SchemaError(f"{path}.limits[0].unit", "cone angle must be in deg")
            cone = math.radians(_num(c["cone"], f"{path}.limits[0].cone"))
        else:
            limits = tuple(_parse_limit(v, f"{path}.limits[{i}]") for i, v in enumerate(raw_limits))
    rest = None
    if d.get("rest") is not None:
        if not isinstance(d["rest"], list):
            raise SchemaError(f"{path}.rest", "expected a list of numbers")
        rest = tuple(_num(v, f"{path}.rest[{i}]") for i, v in enumerate(d["rest"]))
    flip = d.get("flip", False)
    if not isinstance(flip, bool):
        raise SchemaError(f"{path}.flip", "expected a boolean")
    return JointSpec(
        id=_str(d["id"], f"{path}.id"),
        type=jtype,
        parent=_parse_ref(d["parent"], f"{path}.parent"),
        child=_parse_ref(d["child"], f"{path}.child"),
        limits=limits,
        cone=cone,
        rest=rest,
        flip=flip,
    )


def _parse_derive(data: Any, path: str) -> Derive:
    d = _obj(data, path, {"source"}, {"transform", "mirror"})
    transform = Pose.from_json(d["transform"], f"{path}.transform") if "transform" in d else Pose()
    mirror = None
    if d.get("mirror") is not None:
        m = _obj(d["mirror"], f"{path}.mirror", {"point", "normal"}, set())
        try:
            mirror = Plane(_vec(m["point"], f"{path}.mirror.point"), _vec(m["normal"], f"{path}.mirror.normal"))
        except ArtikitError as exc:
            raise SchemaError(f"{path}.mirror.normal", str(exc)) from None
    return Derive(_str(d["source"], f"{path}.source"), transform, mirror)


def parse_part(data: Any, path: str) -> PartSpec:
    d = _obj(
        data,
        path,
        {"id"},
        {"description", "parameters", "orientation_hint", "connectors", "derive"},
    )
    params = d.get("parameters", {})
    if not isinstance(params, dict):
        raise SchemaError(f"{path}.parameters", "expected an object of numbers")
    conns = d.get("connectors", [])
    if not isinstance(conns, list):
        raise SchemaError(f"{path}.connectors", "expected a list")
    return PartSpec(
        id=_str(d["id"], f"{path}.id"),
        description=_str(d.get("description", ""), f"{path}.description"),
        parameters={k: _num(v, f"{path}.parameters.{k}") for k, v in params.items()},
        orientation_hint=_str(d.get("orientation_hint", ""), f"{path}.orientation_hint"),
        connectors=tuple(parse_connector(c, f"{path}.connectors[{i}]") for i, c in enumerate(conns)),
        derive=_parse_derive(d["derive"], f"{path}.derive") if d.get("derive") is not None else None,
    )


def plan_from_dict(data: Any) -> AssemblyPlan:
    d = _obj(data, "$", {"name", "ground", "declared_dof", "parts", "joints"}, set())
    if not isinstance(d["parts"], list):
        raise SchemaError("$.parts", "expected a list")
    if not isinstance(d["joints"], list):
        raise SchemaError("$.joints", "expected a list")
    ddof = d["declared_dof"]
    if isinstance(ddof, bool) or not isinstance(ddof, int):
        raise SchemaError("$.declared_dof", "expected an integer")
    return AssemblyPlan(
        name=_str(d["name"], "$.name"),
        parts=tuple(parse_part(p, f"$.parts[{i}]") for i, p in enumerate(d["parts"])),
        joints=tuple(parse_joint(j, f"$.joints[{i}]") for i, j in enumerate(d["joints"])),
        ground=_str(d["ground"], "$.ground"),
        declared_dof=ddof,
    )


def parse_plan(document: str) -> AssemblyPlan:
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{exc.msg} (line {exc.lineno}, column {exc.colno})", "$") from None
    return plan_from_dict(data)


# ------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    cls: str = "DESIGN"

    def to_json(self) -> dict:
        return {"code": self.code, "message": self.message, "class": self.cls}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]
    computed_dof: int
    declared_dof: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "computed_dof": self.computed_dof,
            "declared_dof": self.declared_dof,
            "violations": [v.to_json() for v in self.violations],
        }


def validate_plan(p: AssemblyPlan) -> ValidationReport:
    out: list[Violation] = []

    def bad(code: str, msg: str) -> None:
        out.append(Violation(code, msg))

    ids = [q.id for q in p.parts]
    parts = {q.id: q for q in p.parts}
    if not ids:
        bad("no_parts", "plan has no parts")
    if len(set(ids)) != len(ids):
        bad("duplicate_part", "part ids are not unique")
    if p.ground not in parts:
        bad("ground", f"ground part {p.ground!r} is not declared")
    jids = [j.id for j in p.joints]
    if len(set(jids)) != len(jids):
        bad("duplicate_joint", "joint ids are not unique")

    # derive graph: sources exist and are not themselves derived (depth 1)
    for q in p.parts:
        if q.derive is None:
            continue
        src = parts.get(q.derive.source)
        if src is None or q.derive.source == q.id:
            bad("derive_source", f"part {q.id!r}: derive source {q.derive.source!r} does not exist")
        elif src.derive is not None:
            bad("derive_depth", f"part {q.id!r}: derive source {src.id!r} is itself derived")
        if q.connectors:
            bad("derive_connectors", f"part {q.id!r}: derived parts take connectors from their source")

    for q in p.parts:
        names = [c.name for c in q.connectors]
        if len(set(names)) != len(names):
            bad("duplicate_connector", f"part {q.id!r}: connector names are not unique")
        for c in q.connectors:
            if not c.label.strip():
                bad("connector_label", f"{q.id}.{c.name}: empty label")
            try:
                c.frame()
            except ArtikitError as exc:
                bad("frame", f"{q.id}.{c.name}: {exc}")

    n = len(p.parts)
    if len(p.joints) != max(n - 1, 0):
        bad("joint_count", f"{len(p.joints)} joints for {n} parts; a tree needs exactly {n - 1}")

    child_count: dict[str, int] = {}
    for j in p.joints:
        where = f"joint {j.id!r}"
        if j.parent.part == j.child.part:
            bad("self_joint", f"{where}: parent and child are the same part")
        for side, ref in (("parent", j.parent), ("child", j.child)):
            if ref.part not in parts:
                bad("unresolved_part", f"{where}: {side} part {ref.part!r} not declared")
                continue
            src = parts[ref.part]
            if src.derive is not None and src.derive.source in parts:
                src = parts[src.derive.source]
            if src.connector(ref.connector) is None:
                bad("unresolved_connector", f"{where}: {side} connector {ref.part}.{ref.connector} not declared")
        child_count[j.child.part] = child_count.get(j.child.part, 0) + 1
        _check_limits(j, bad)

    if p.ground in child_count:
        bad("tree_root", f"ground part {p.ground!r} is the child of a joint")
    for pid, cnt in child_count.items():
        if cnt > 1:
            bad("tree_parent", f"part {pid!r} has {cnt} parent joints")
    if p.ground in parts:
        reached = {p.ground} | {j.child.part for j in p.tree_order()}
        unreached = [pid for pid in ids if pid not in reached]
        if unreached:
            bad("tree_connectivity", f"parts not reachable from ground (cycle or disconnected): {unreached}")

    computed = p.computed_dof
    if computed != p.declared_dof:
        bad("dof", f"declared_dof {p.declared_dof} != sum of joint DOF {computed}")
    return ValidationReport(tuple(out), computed, p.declared_dof)


def _check_limits(j: JointSpec, bad) -> None:
    where = f"joint {j.id!r}"
    kinds = j.kinds
    if j.limits is not None:
        if len(j.limits) != len(kinds):
            bad("limit_arity", f"{where}: {len(j.limits)} limits for {len(kinds)} coordinates")
        for i, (lim, kind) in enumerate(zip(j.limits, kinds)):
            if lim is None:
                continue
            if UNIT_KIND[lim.unit] != kind:
                bad("limit_unit", f"{where}: coordinate {i} is a {kind} coordinate, got unit {lim.unit}")
            if lim.lo > lim.hi:
                bad("limit_order", f"{where}: coordinate {i} has min > max")
    if j.cone is not None and not (0.0 < j.cone <= math.pi):
        bad("limit_cone", f"{where}: cone angle must lie in (0, 180] deg")
    if j.rest is not None and len(j.rest) != len(kinds):
        bad("rest_arity", f"{where}: rest has {len(j.rest)} values for {len(kinds)} coordinates")


# ------------------------------------------------------------ derive


def expand_derived(
    p: AssemblyPlan, geometries: Mapping[str, PartProgram]
) -> dict[str, PartProgram]:
    """Return geometries for every part, copying derived parts from their source.

    Derived parts never go through a generation agent; their steps and
    connectors are the source's, mapped through the mirror (if any) and then
    the rigid transform.
    """
    out = {pid: geom for pid, geom in geometries.items()}
    for q in p.parts:
        if q.derive is None:
            continue
        src = geometries.get(q.derive.source)
        if src is None:
            raise MissingSource(f"part {q.id!r}: no geometry for derive source {q.derive.source!r}")
        out[q.id] = src.derived(q.id, q.derive)
    return out
