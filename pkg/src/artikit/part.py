"""Part programs: ordered CSG over boxes, cylinders, spheres and cones.

A program is a fold over ``(op, primitive)`` steps where ``add`` marks the
primitive's points as solid and ``subtract`` clears them, so step order
matters just like a CAD feature history.  Every query here is pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import (
    ArtikitError,
    DegenerateSolid,
    EmptyProgram,
    MirrorUnsupportedPrimitive,
    ParseError,
    SchemaError,
)
from .plan import AssemblyPlan, ConnectorFrame, Derive, PartSpec, expand_derived, parse_connector
from .report import CODE, Check, Report
from .se3 import Pose

PRIMITIVE_PARAMS = {
    "box": ("lx", "ly", "lz"),
    "cylinder": ("r", "h"),
    "sphere": ("r",),
    "cone": ("r1", "r2", "h"),
}
# every supported primitive is symmetric under negating its local x axis
MIRROR_SAFE = frozenset(PRIMITIVE_PARAMS)
OPS = ("add", "subtract")


@dataclass(frozen=True)
class AABB:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    @classmethod
    def of_points(cls, pts: np.ndarray) -> AABB:
        pts = np.asarray(pts, dtype=float)
        return cls(tuple(pts.min(axis=0).tolist()), tuple(pts.max(axis=0).tolist()))

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.hi) + np.asarray(self.lo)) / 2.0

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    @property
    def volume(self) -> float:
        return float(np.prod(np.clip(self.extent, 0.0, None)))

    def union(self, other: AABB) -> AABB:
        return AABB(
            tuple(np.minimum(self.lo, other.lo).tolist()),
            tuple(np.maximum(self.hi, other.hi).tolist()),
        )

    def overlaps(self, other: AABB) -> bool:
        return bool(np.all(np.asarray(self.lo) <= other.hi) and np.all(np.asarray(other.lo) <= self.hi))

    def corners(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])

    def transformed(self, pose: Pose) -> AABB:
        return AABB.of_points(pose.apply(self.corners()))

    def distance_outside(self, p: Sequence[float]) -> float:
        p = np.asarray(p, dtype=float)
        d = np.maximum(np.maximum(np.asarray(self.lo) - p, p - np.asarray(self.hi)), 0.0)
        return float(np.linalg.norm(d))

    def to_json(self) -> dict:
        return {"min": list(self.lo), "max": list(self.hi)}


@dataclass(frozen=True)
class Primitive:
    """One solid in its local frame; cylinder and cone axes run along +z from the base."""

    kind: str
    params: tuple[float, ...]
    placement: Pose = Pose()

    def __post_init__(self) -> None:
        if self.kind not in PRIMITIVE_PARAMS:
            raise SchemaError("kind", f"unknown primitive kind {self.kind!r}")
        names = PRIMITIVE_PARAMS[self.kind]
        if len(self.params) != len(names):
            raise SchemaError("params", f"{self.kind} takes {names}, got {len(self.params)} values")
        if self.kind == "cone":
            r1, r2, h = self.params
            if r1 < 0 or r2 < 0 or (r1 == 0 and r2 == 0) or h <= 0:
                raise SchemaError("params", "cone needs h > 0, r1, r2 >= 0 and not both zero")
        elif any(v <= 0 for v in self.params):
            raise SchemaError("params", f"{self.kind} dimensions must be positive")

    @property
    def named(self) -> dict[str, float]:
        return dict(zip(PRIMITIVE_PARAMS[self.kind], self.params))

    def contains_local(self, p: np.ndarray) -> np.ndarray:
        x, y, z = p[:, 0], p[:, 1], p[:, 2]
        k, v = self.kind, self.params
        if k == "box":
            return (np.abs(x) <= v[0] / 2) & (np.abs(y) <= v[1] / 2) & (np.abs(z) <= v[2] / 2)
        if k == "sphere":
            return x * x + y * y + z * z <= v[0] * v[0]
        if k == "cylinder":
            return (z >= 0) & (z <= v[1]) & (x * x + y * y <= v[0] * v[0])
        r1, r2, h = v
        radius = r1 + (r2 - r1) * np.clip(z / h, 0.0, 1.0)
        return (z >= 0) & (z <= h) & (np.hypot(x, y) <= radius)

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.contains_local(self.placement.apply_inverse(points))

    def local_aabb(self) -> AABB:
        k, v = self.kind, self.params
        if k == "box":
            return AABB((-v[0] / 2, -v[1] / 2, -v[2] / 2), (v[0] / 2, v[1] / 2, v[2] / 2))
        if k == "sphere":
            return AABB((-v[0],) * 3, (v[0],) * 3)
        if k == "cylinder":
            return AABB((-v[0], -v[0], 0.0), (v[0], v[0], v[1]))
        r = max(v[0], v[1])
        return AABB((-r, -r, 0.0), (r, r, v[2]))

    def aabb(self) -> AABB:
        """Tight world-space AABB of the placed primitive."""
        pose = self.placement
        k, v = self.kind, self.params
        if k == "box":
            return self.local_aabb().transformed(pose)
        c = np.asarray(pose.translation)
        if k == "sphere":
            return AABB(tuple((c - v[0]).tolist()), tuple((c + v[0]).tolist()))
        axis = np.asarray(pose.axis(2))
        # half-extent of a disk of radius r with normal `axis` along world axis i;
        # summing the other two squares avoids cancellation in 1 - a_i^2
        sq = axis * axis
        spread = np.sqrt(np.array([sq[1] + sq[2], sq[0] + sq[2], sq[0] + sq[1]]) / sq.sum())
        if k == "cylinder":
            r0, r1, h = v[0], v[0], v[1]
        else:
            r0, r1, h = v
        top = c + h * axis
        lo = np.minimum(c - r0 * spread, top - r1 * spread)
        hi = np.maximum(c + r0 * spread, top + r1 * spread)
        return AABB(tuple(lo.tolist()), tuple(hi.tolist()))

    def _faces(self) -> list[tuple[str, float]]:
        k, v = self.kind, self.params
        if k == "box":
            a, b, c = v
            return [("x", b * c), ("x", b * c), ("y", a * c), ("y", a * c), ("z", a * b), ("z", a * b)]
        if k == "sphere":
            return [("sphere", 4 * math.pi * v[0] ** 2)]
        if k == "cylinder":
            r, h = v
            return [("bottom", math.pi * r * r), ("top", math.pi * r * r), ("side", 2 * math.pi * r * h)]
        r1, r2, h = v
        slant = math.hypot(h, r1 - r2)
        return [("bottom", math.pi * r1 * r1), ("top", math.pi * r2 * r2), ("side", math.pi * (r1 + r2) * slant)]

    def area(self) -> float:
        return sum(a for _, a in self._faces())

    def sample_surface_local(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Area-uniform points on the primitive boundary with outward normals."""
        faces = self._faces()
        areas = np.array([a for _, a in faces])
        counts = rng.multinomial(n, areas / areas.sum())
        pts, nrm = [], []
        k, v = self.kind, self.params
        for fi, ((name, _), m) in enumerate(zip(faces, counts)):
            if m == 0:
                continue
            if k == "box":
                axis = "xyz".index(name)
                sign = 1.0 if fi % 2 == 0 else -1.0
                p = (rng.random((m, 3)) - 0.5) * np.asarray(v)
                p[:, axis] = sign * v[axis] / 2
                nv = np.zeros((m, 3))
                nv[:, axis] = sign
            elif k == "sphere":
                d = rng.normal(size=(m, 3))
                d /= np.linalg.norm(d, axis=1, keepdims=True)
                p, nv = d * v[0], d
            else:
                if k == "cylinder":
                    r1 = r2 = v[0]
                    h = v[1]
                else:
                    r1, r2, h = v
                phi = rng.random(m) * 2 * math.pi
                cs, sn = np.cos(phi), np.sin(phi)
                if name in ("bottom", "top"):
                    rr = (r1 if name == "bottom" else r2) * np.sqrt(rng.random(m))
                    zz = np.zeros(m) if name == "bottom" else np.full(m, h)
                    p = np.stack([rr * cs, rr * sn, zz], axis=1)
                    nv = np.zeros((m, 3))
                    nv[:, 2] = -1.0 if name == "bottom" else 1.0
                else:
                    u = rng.random(m)
                    if r1 == r2:
                        t = u
                    else:
                        # lateral area density grows linearly with radius
                        rr = np.sqrt(r1 * r1 + u * (r2 * r2 - r1 * r1))
                        t = (rr - r1) / (r2 - r1)
                    rr = r1 + (r2 - r1) * t
                    p = np.stack([rr * cs, rr * sn, t * h], axis=1)
                    nv = np.stack([cs * h, sn * h, np.full(m, r1 - r2)], axis=1)
                    nv /= np.linalg.norm(nv, axis=1, keepdims=True)
            pts.append(p)
            nrm.append(nv)
        return np.concatenate(pts), np.concatenate(nrm)

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.named, "placement": self.placement.to_json()}


@dataclass(frozen=True)
class Step:
    op: str
    primitive: Primitive


@dataclass(frozen=True)
class PartProgram:
    part_id: str
    steps: tuple[Step, ...]
    connectors: tuple[ConnectorFrame, ...] = ()
    meta: Mapping[str, Any] = field(default_factory=dict)

    def connector(self, name: str) -> ConnectorFrame | None:
        for c in self.connectors:
            if c.name == name:
                return c
        return None

    def derived(self, new_id: str, derive: Derive) -> PartProgram:
        steps = []
        for s in self.steps:
            prim = s.primitive
            if derive.mirror is not None and prim.kind not in MIRROR_SAFE:
                raise MirrorUnsupportedPrimitive(prim.kind)
            steps.append(Step(s.op, Primitive(prim.kind, prim.params, derive.apply(prim.placement))))
        conns = tuple(
            ConnectorFrame.from_pose(c.name, derive.apply(c.frame()), c.label) for c in self.connectors
        )
        return PartProgram(new_id, tuple(steps), conns, {"derived_from": self.part_id})

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "part_id": self.part_id,
            "steps": [{"op": s.op, **s.primitive.to_json()} for s in self.steps],
            "connectors": [c.to_json() for c in self.connectors],
        }
        if self.meta:
            out["meta"] = dict(self.meta)
        return out

    def canonical(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()


def program_from_dict(data: Any) -> PartProgram:
    if not isinstance(data, dict):
        raise SchemaError("$", "part program must be an object")
    unknown = set(data) - {"part_id", "steps", "connectors", "meta"}
    if unknown:
        raise SchemaError(f"$.{sorted(unknown)[0]}", "unknown field")
    if not isinstance(data.get("part_id"), str):
        raise SchemaError("$.part_id", "expected a string")
    raw_steps = data.get("steps")
    if not isinstance(raw_steps, list):
        raise SchemaError("$.steps", "expected a list")
    steps = []
    for i, s in enumerate(raw_steps):
        path = f"$.steps[{i}]"
        if not isinstance(s, dict):
            raise SchemaError(path, "expected an object")
        extra = set(s) - {"op", "kind", "params", "placement"}
        if extra:
            raise SchemaError(f"{path}.{sorted(extra)[0]}", "unknown field")
        op = s.get("op")
        if op not in OPS:
            raise SchemaError(f"{path}.op", f"expected add|subtract, got {op!r}")
        kind = s.get("kind")
        if kind not in PRIMITIVE_PARAMS:
            raise SchemaError(f"{path}.kind", f"unknown primitive kind {kind!r}")
        params = s.get("params")
        names = PRIMITIVE_PARAMS[kind]
        if not isinstance(params, dict) or set(params) != set(names):
            raise SchemaError(f"{path}.params", f"{kind} takes exactly {list(names)}")
        vals = []
        for n in names:
            v = params[n]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SchemaError(f"{path}.params.{n}", "expected a number")
            vals.append(float(v))
        placement = Pose.from_json(s["placement"], f"{path}.placement") if "placement" in s else Pose()
        try:
            prim = Primitive(kind, tuple(vals), placement)
        except SchemaError as exc:
            raise SchemaError(f"{path}.{exc.field}", str(exc)) from None
        steps.append(Step(op, prim))
    if steps and steps[0].op != "add":
        raise SchemaError("$.steps[0].op", "the first step must be add")
    conns = data.get("connectors", [])
    if not isinstance(conns, list):
        raise SchemaError("$.connectors", "expected a list")
    meta = data.get("meta", {})
    if not isinstance(meta, dict):
        raise SchemaError("$.meta", "expected an object")
    return PartProgram(
        data["part_id"],
        tuple(steps),
        tuple(parse_connector(c, f"$.connectors[{i}]") for i, c in enumerate(conns)),
        meta,
    )


def parse_program(document: str) -> PartProgram:
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    return program_from_dict(data)


# ------------------------------------------------------------------ queries


def membership(prog: PartProgram, points: np.ndarray | Sequence[float]) -> np.ndarray | bool:
    """Sequential CSG fold; accepts one point or an ``(n, 3)`` array."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    inside = np.zeros(len(pts), dtype=bool)
    for s in prog.steps:
        hit = s.primitive.contains(pts)
        if s.op == "add":
            inside |= hit
        else:
            inside &= ~hit
    return bool(inside[0]) if single else inside


def bounding_box(prog: PartProgram) -> AABB:
    """Union of the add-primitives' AABBs; subtracts are ignored (conservative)."""
    boxes = [s.primitive.aabb() for s in prog.steps if s.op == "add"]
    if not boxes:
        raise EmptyProgram(f"part {prog.part_id!r} has no add steps")
    out = boxes[0]
    for b in boxes[1:]:
        out = out.union(b)
    return out


def boundary_epsilon(prog: PartProgram) -> float:
    return 1e-6 * bounding_box(prog).diagonal


def on_boundary(prog: PartProgram, points: np.ndarray, normals: np.ndarray, eps: float) -> np.ndarray:
    return membership(prog, points + eps * normals) ^ membership(prog, points - eps * normals)


def sample_surface(prog: PartProgram, count: int, seed: int) -> np.ndarray:
    """Area-weighted points on the boundary of the final solid.

    Candidates are drawn on every primitive's boundary (adds and subtracts)
    and kept when stepping ``eps`` along the normal flips membership.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    eps = boundary_epsilon(prog)
    rng = np.random.default_rng(seed)
    prims = [s.primitive for s in prog.steps]
    areas = np.array([p.area() for p in prims])
    probs = areas / areas.sum()
    budget = 100 * count
    batch_size = max(count, 64)
    kept: list[np.ndarray] = []
    n_kept = used = 0
    while n_kept < count and used < budget:
        batch = min(batch_size, budget - used)
        per_prim = rng.multinomial(batch, probs)
        pts, nrm = [], []
        for prim, m in zip(prims, per_prim):
            if m == 0:
                continue
            lp, ln = prim.sample_surface_local(int(m), rng)
            rot = prim.placement.rotation.as_matrix()
            pts.append(lp @ rot.T + np.asarray(prim.placement.translation))
            nrm.append(ln @ rot.T)
        p = np.concatenate(pts)
        n = np.concatenate(nrm)
        order = rng.permutation(len(p))
        p, n = p[order], n[order]
        used += batch
        keep = on_boundary(prog, p, n, eps)
        kept.append(p[keep])
        n_kept += int(keep.sum())
    if n_kept / used < 1e-3:
        raise DegenerateSolid(
            f"part {prog.part_id!r}: kept {n_kept} of {used} boundary candidates; solid is empty"
        )
    return np.concatenate(kept)[:count]


def sample_interior(prog: PartProgram, count: int, rng: np.random.Generator, max_tries: int = 1000) -> np.ndarray:
    """Uniform interior points by rejection from the bounding box."""
    box = bounding_box(prog)
    lo, ext = np.asarray(box.lo), box.extent
    out: list[np.ndarray] = []
    got = tries = 0
    while got < count:
        if tries >= max_tries:
            raise DegenerateSolid(f"part {prog.part_id!r}: no interior found by rejection sampling")
        tries += 1
        cand = lo + rng.random((max(count, 256), 3)) * ext
        inside = cand[membership(prog, cand)]
        out.append(inside)
        got += len(inside)
    return np.concatenate(out)[:count]


def estimate_volume(prog: PartProgram, samples: int = 20000, seed: int = 0) -> float:
    box = bounding_box(prog)
    rng = np.random.default_rng(seed)
    cand = np.asarray(box.lo) + rng.random((samples, 3)) * box.extent
    return box.volume * float(membership(prog, cand).mean())


# ------------------------------------------------------------------- meshing


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def volume(self) -> float:
        v = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)

    def area_per_face(self) -> np.ndarray:
        v = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def is_watertight(self) -> bool:
        """Every directed edge is matched by exactly one opposite edge."""
        f = self.faces
        edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        fwd = {tuple(e) for e in edges.tolist()}
        if len(fwd) != len(edges):
            return False
        return all((b, a) in fwd for a, b in fwd)

    def sample(self, count: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        areas = self.area_per_face()
        idx = rng.choice(len(self.faces), size=count, p=areas / areas.sum())
        u, v = rng.random(count), rng.random(count)
        flip = u + v > 1
        u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
        tri = self.vertices[self.faces[idx]]
        return tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) + v[:, None] * (tri[:, 2] - tri[:, 0])

    def to_obj(self, header: str = "") -> str:
        lines = [f"# {line}" for line in header.splitlines()]
        lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in self.vertices.tolist()]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.faces.tolist()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_obj(cls, text: str) -> TriangleMesh:
        verts, faces = [], []
        for ln, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(c) for c in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
        if not verts or not faces:
            raise ParseError("OBJ has no triangles")
        return cls(np.asarray(verts, dtype=float), np.asarray(faces, dtype=np.int64))


def load_programs(plan: AssemblyPlan, parts_dir: str | Path) -> dict[str, PartProgram]:
    """Read every ``*.json`` program in ``parts_dir`` and expand derived parts."""
    d = Path(parts_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"parts directory {parts_dir} not found")
    progs = {}
    for f in sorted(d.glob("*.json")):
        prog = parse_program(f.read_text(encoding="utf-8"))
        progs[prog.part_id] = prog
    geoms = expand_derived(plan, {pid: p for pid, p in progs.items() if pid in plan.part_ids})
    return {pid: geoms[pid] for pid in plan.part_ids if pid in geoms}


def meshify(prog: PartProgram, resolution: int = 64) -> TriangleMesh:
    """Marching cubes over the binary membership field on a padded grid.

    Resolution counts cells along the longest AABB side.  On a 0/1 field the
    0.5 iso-level puts every vertex at an edge midpoint.
    """
    from skimage.measure import marching_cubes

    if not 8 <= resolution <= 512:
        raise ValueError("resolution must lie in [8, 512]")
    box = bounding_box(prog)
    h = float(box.extent.max()) / resolution
    cells = np.ceil(box.extent / h).astype(int) + 2
    origin = box.center - cells * h / 2.0
    axes = [origin[i] + h * np.arange(cells[i] + 1) for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    field_ = membership(prog, grid).reshape(tuple(cells + 1)).astype(np.float64)
    if not field_.any():
        raise DegenerateSolid(f"part {prog.part_id!r}: membership field is empty at resolution {resolution}")
    verts, faces, _, _ = marching_cubes(field_, level=0.5, spacing=(h, h, h), allow_degenerate=False)
    # skimage winds faces inward for a solid that is the high-valued region
    faces = faces[:, ::-1].astype(np.int64)
    return TriangleMesh(verts + origin, faces)


# ---------------------------------------------------------------- validation

DIMENSION_TOL = 0.10
CONNECTOR_SLACK = 0.10


def _dimension_actual(name: str, extent: np.ndarray) -> float:
    if name == "lx":
        return float(extent[0])
    if name == "ly":
        return float(extent[1])
    if name in ("lz", "h"):
        return float(extent[2])
    return float(max(extent[0], extent[1])) / 2.0  # r


def check_realization(prog: PartProgram, spec: PartSpec, reference: Sequence[ConnectorFrame] | None = None) -> Report:
    """Rule-based local validation of a generated part against its plan entry."""
    report = Report()
    ref = spec.connectors if reference is None else tuple(reference)
    want = {c.name for c in ref}
    have = {c.name for c in prog.connectors}
    pid = spec.id
    missing = sorted(want - have)
    extra = sorted(have - want)
    if missing:
        report.checks.append(
            Check("connectors", False, CODE, f"connector missing: {', '.join(missing)}", {"missing": missing}, pid)
        )
    elif extra:
        report.checks.append(
            Check("connectors", False, CODE, f"unexpected connector: {', '.join(extra)}", {"extra": extra}, pid)
        )
    else:
        report.checks.append(Check("connectors", True, part=pid))

    try:
        box = bounding_box(prog)
        sample_surface(prog, 64, seed=0)
    except (EmptyProgram, DegenerateSolid) as exc:
        report.checks.append(Check("solid", False, CODE, f"empty solid: {exc}", part=pid))
        return report
    report.checks.append(Check("solid", True, part=pid))

    slack = CONNECTOR_SLACK * box.diagonal
    for c in prog.connectors:
        d = box.distance_outside(c.origin)
        ok = d <= slack
        report.checks.append(
            Check(
                f"connector_placement:{c.name}",
                ok,
                None if ok else CODE,
                "" if ok else f"connector {c.name} lies {d:.3g} mm outside the part (limit {slack:.3g})",
                {"distance": d, "limit": slack},
                pid,
            )
        )
    for c in prog.connectors:
        try:
            c.frame()
        except ArtikitError as exc:
            report.checks.append(Check(f"connector_frame:{c.name}", False, CODE, str(exc), part=pid))

    extent = box.extent
    for name in ("lx", "ly", "lz", "r", "h"):
        if name not in spec.parameters:
            continue
        declared = float(spec.parameters[name])
        actual = _dimension_actual(name, extent)
        dev = abs(actual - declared) / abs(declared) if declared else math.inf
        ok = dev <= DIMENSION_TOL
        report.checks.append(
            Check(
                f"dimension:{name}",
                ok,
                None if ok else CODE,
                "" if ok else f"dimension mismatch: {name} declared {declared:g}, generated {actual:g}",
                {"declared": declared, "actual": actual, "deviation": dev},
                pid,
            )
        )
    return report
