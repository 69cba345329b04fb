"""Shared builders for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from artikit.assembler import AssembledModel, assemble_at_rest
from artikit.part import PartProgram, program_from_dict
from artikit.plan import AssemblyPlan, JointType, plan_from_dict

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

JOINT_DOF = {"Fixed": 0, "Revolute": 1, "Slider": 1, "Cylindrical": 2, "Ball": 3}


def load_json(rel: str):
    return json.loads((FIXTURES / rel).read_text(encoding="utf-8"))


def fixture_plan(name: str) -> AssemblyPlan:
    return plan_from_dict(load_json(f"{name}.json"))


def fixture_parts(plan: AssemblyPlan, name: str) -> dict[str, PartProgram]:
    return {pid: program_from_dict(load_json(f"parts/{name}/{pid}.json")) for pid in plan.part_ids}


def fixture_model(name: str) -> AssembledModel:
    plan = fixture_plan(name)
    return assemble_at_rest(plan, fixture_parts(plan, name))


def box_step(lx: float, ly: float, lz: float, center=(0.0, 0.0, 0.0), op: str = "add") -> dict:
    return {
        "op": op,
        "kind": "box",
        "params": {"lx": lx, "ly": ly, "lz": lz},
        "placement": {"rotation": [1, 0, 0, 0], "translation": list(center)},
    }


def connector(name: str, origin, z=(0, 0, 1), x=(1, 0, 0), label: str | None = None) -> dict:
    return {"name": name, "origin": list(origin), "z_axis": list(z), "x_axis": list(x), "label": label or name}


def random_connector(rng: np.random.Generator, name: str) -> dict:
    z = rng.normal(size=3)
    z /= np.linalg.norm(z)
    x = rng.normal(size=3)
    x -= x.dot(z) * z
    x /= np.linalg.norm(x)
    return connector(name, rng.uniform(-100, 100, 3).tolist(), z.tolist(), x.tolist())


def _random_limits(rng: np.random.Generator, jtype: str) -> list | None:
    if rng.random() < 0.3:
        return None
    if jtype == "Ball":
        return [{"cone": float(rng.uniform(5, 180)), "unit": "deg"}]
    kinds = {"Revolute": ["deg"], "Slider": ["mm"], "Cylindrical": ["deg", "mm"]}.get(jtype, [])
    out = []
    for unit in kinds:
        if rng.random() < 0.2:
            out.append(None)
            continue
        span = 180.0 if unit == "deg" else 100.0
        lo, hi = sorted(rng.uniform(-span, span, 2).tolist())
        out.append({"min": lo, "max": hi, "unit": unit})
    return out


def random_plan_dict(rng: np.random.Generator, n_parts: int) -> tuple[dict, dict[str, dict]]:
    """A valid random tree plan plus matching box programs (as JSON dicts)."""
    types = [t.value for t in JointType]
    pids = [f"p{i}" for i in range(n_parts)]
    conns: dict[str, list[dict]] = {pid: [] for pid in pids}
    joints = []
    for i in range(1, n_parts):
        parent = pids[int(rng.integers(0, i))]
        child = pids[i]
        jtype = types[int(rng.integers(0, len(types)))]
        out_name = f"out{i}"
        conns[parent].append(random_connector(rng, out_name))
        conns[child].append(random_connector(rng, "in"))
        j = {
            "id": f"j{i}",
            "type": jtype,
            "parent": {"part": parent, "connector": out_name},
            "child": {"part": child, "connector": "in"},
            "flip": bool(rng.random() < 0.5),
        }
        limits = _random_limits(rng, jtype)
        if limits is not None:
            j["limits"] = limits
        n = JOINT_DOF[jtype]
        if n and rng.random() < 0.7:
            span = 60.0 if jtype == "Ball" else 200.0
            j["rest"] = rng.uniform(-span, span, n).tolist()
        joints.append(j)
    plan = {
        "name": "random",
        "ground": "p0",
        "declared_dof": sum(JOINT_DOF[j["type"]] for j in joints),
        "parts": [{"id": pid, "description": f"block {pid}", "connectors": conns[pid]} for pid in pids],
        "joints": joints,
    }
    programs = {pid: {"part_id": pid, "steps": [box_step(50, 50, 50)], "connectors": conns[pid]} for pid in pids}
    return plan, programs


def random_plan(rng: np.random.Generator, n_parts: int) -> tuple[AssemblyPlan, dict[str, PartProgram]]:
    plan, programs = random_plan_dict(rng, n_parts)
    return plan_from_dict(plan), {pid: program_from_dict(p) for pid, p in programs.items()}


# ------------------------------------------------------- chain fixtures

CUBE = 100.0


def chain_connectors() -> list[dict]:
    return [
        connector("top", (0, 0, CUBE / 2), label="top face centre"),
        connector("bottom", (0, 0, -CUBE / 2), label="bottom face centre"),
    ]


def chain_plan_dict(n: int) -> dict:
    """``n`` stacked cubes joined by revolute joints about the stacking axis."""
    parts = [
        {
            "id": f"c{i}",
            "description": f"cube {i} of a stacked column",
            "parameters": {"lx": CUBE, "ly": CUBE, "lz": CUBE},
            "connectors": chain_connectors(),
        }
        for i in range(n)
    ]
    joints = [
        {
            "id": f"r{i}",
            "type": "Revolute",
            "parent": {"part": f"c{i - 1}", "connector": "top"},
            "child": {"part": f"c{i}", "connector": "bottom"},
            "limits": [{"min": 0, "max": 90, "unit": "deg"}],
        }
        for i in range(1, n)
    ]
    return {"name": f"chain{n}", "ground": "c0", "declared_dof": n - 1, "parts": parts, "joints": joints}


def chain_program(pid: str, with_top: bool = True) -> dict:
    conns = chain_connectors()
    if not with_top:
        conns = conns[1:]
    return {"part_id": pid, "steps": [box_step(CUBE, CUBE, CUBE)], "connectors": conns}


def random_q(plan: AssemblyPlan, rng: np.random.Generator) -> dict[str, tuple[float, ...]]:
    """Random in-limit coordinates; unlimited coordinates draw from (-3, 3)."""
    from artikit.assembler import ball_tilt

    q = {}
    for j in plan.joints:
        if j.type is JointType.BALL:
            while True:
                v = rng.uniform(-1.0, 1.0, 3)
                if j.cone is None or ball_tilt(v) <= j.cone:
                    break
            q[j.id] = tuple(v.tolist())
            continue
        vals = []
        for i in range(len(j.kinds)):
            lim = j.limit(i)
            lo, hi = (lim.lo, lim.hi) if lim is not None else (-3.0, 3.0)
            vals.append(float(rng.uniform(lo, hi)))
        q[j.id] = tuple(vals)
    return q
