"""Regenerate the JSON fixtures under fixtures/.

Run from the repository root: ``python3 tools/make_fixtures.py``.
"""

from __future__ import annotations

import json
import math
import shutil
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures"

Q_X90 = [math.cos(math.pi / 4), math.sin(math.pi / 4), 0.0, 0.0]


def conn(name, origin, z, x, label):
    return {"name": name, "origin": origin, "z_axis": z, "x_axis": x, "label": label}


def step(op, kind, params, t=(0, 0, 0), rot=(1, 0, 0, 0)):
    return {"op": op, "kind": kind, "params": params, "placement": {"rotation": list(rot), "translation": list(t)}}


def box(op, lo, hi):
    size = [h - l for l, h in zip(lo, hi)]
    center = [(l + h) / 2 for l, h in zip(lo, hi)]
    return step(op, "box", {"lx": size[0], "ly": size[1], "lz": size[2]}, center)


HINGE = conn("hinge", [-5, -5, 250], [0, 0, -1], [1, 0, 0], "door hinge axis, left front edge")
SLIDE = conn("slide", [200, 5, 25], [0, -1, 0], [1, 0, 0], "drawer runner, pull direction")
DOOR_HINGE = conn("hinge", [0, 0, 0], [0, 0, -1], [1, 0, 0], "hinge edge of the door")
DRAWER_SLIDE = conn("slide", [0, 0, 0], [0, -1, 0], [1, 0, 0], "drawer front, pull direction")

CABINET_SPEC = {
    "id": "cabinet",
    "description": "cabinet carcass with an upper and a lower compartment, open at the front",
    "parameters": {"lx": 400, "ly": 300, "lz": 600},
    "connectors": [HINGE, SLIDE],
}
CABINET_DOOR_ONLY_SPEC = {**CABINET_SPEC, "connectors": [HINGE]}
DOOR_SPEC = {
    "id": "door",
    "description": "flat door panel covering the upper compartment",
    "parameters": {"lx": 390, "ly": 20, "lz": 330},
    "orientation_hint": "panel in the xz plane, hinge along its left edge",
    "connectors": [DOOR_HINGE],
}
DOOR_CLIP_SPEC = {
    **DOOR_SPEC,
    "description": "door panel with a latch tab behind the hinge",
    "parameters": {"lx": 545, "ly": 40, "lz": 330},
}
DRAWER_SPEC = {
    "id": "drawer",
    "description": "open-top drawer box with a round front handle",
    "parameters": {"lx": 350, "ly": 290, "lz": 200},
    "connectors": [DRAWER_SLIDE],
}

DOOR_JOINT = {
    "id": "door_hinge",
    "type": "Revolute",
    "parent": {"part": "cabinet", "connector": "hinge"},
    "child": {"part": "door", "connector": "hinge"},
    "limits": [{"min": 0, "max": 120, "unit": "deg"}],
}
DRAWER_JOINT = {
    "id": "drawer_slide",
    "type": "Slider",
    "parent": {"part": "cabinet", "connector": "slide"},
    "child": {"part": "drawer", "connector": "slide"},
    "limits": [{"min": 0, "max": 250, "unit": "mm"}],
}


def cabinet_program(with_slide=True):
    return {
        "part_id": "cabinet",
        "steps": [
            box("add", [0, 0, 0], [400, 300, 600]),
            box("subtract", [20, -1, 250], [380, 280, 580]),
            box("subtract", [20, -1, 20], [380, 280, 230]),
        ],
        "connectors": [HINGE, SLIDE] if with_slide else [HINGE],
    }


def door_program(stopper=False):
    steps = [box("add", [5, -20, 0], [395, 0, 330])]
    if stopper:
        # latch tab behind the hinge; it lands inside the carcass side wall at 90 deg only
        steps.append(box("add", [-150, 10, 0], [-45, 20, 330]))
    return {"part_id": "door", "steps": steps, "connectors": [DOOR_HINGE]}


DRAWER_PROGRAM = {
    "part_id": "drawer",
    "steps": [
        box("add", [-175, 0, 0], [175, 270, 200]),
        box("subtract", [-165, 10, 10], [165, 260, 210]),
        step("add", "cylinder", {"r": 8, "h": 20}, (0, 0, 100), Q_X90),
    ],
    "connectors": [DRAWER_SLIDE],
}


def plan(name, parts, joints, ground="cabinet"):
    dof = sum({"Fixed": 0, "Revolute": 1, "Slider": 1, "Cylindrical": 2, "Ball": 3}[j["type"]] for j in joints)
    return {"name": name, "ground": ground, "declared_dof": dof, "parts": parts, "joints": joints}


DOOR_PLAN = plan("door", [CABINET_DOOR_ONLY_SPEC, DOOR_SPEC], [DOOR_JOINT])
CABINET_PLAN = plan("cabinet", [CABINET_SPEC, DOOR_SPEC, DRAWER_SPEC], [DOOR_JOINT, DRAWER_JOINT])
CABINET_CLIP_PLAN = plan("cabinet", [CABINET_SPEC, DOOR_CLIP_SPEC, DRAWER_SPEC], [DOOR_JOINT, DRAWER_JOINT])

CYCLE_PLAN = {
    "name": "cycle",
    "ground": "a",
    "declared_dof": 3,
    "parts": [
        {"id": p, "description": f"block {p}", "connectors": [conn("c", [0, 0, 0], [0, 0, 1], [1, 0, 0], "pin")]}
        for p in "abc"
    ],
    "joints": [
        {"id": f"j{i}", "type": "Revolute", "parent": {"part": a, "connector": "c"}, "child": {"part": b, "connector": "c"}}
        for i, (a, b) in enumerate([("a", "b"), ("b", "c"), ("c", "a")])
    ],
}

# Cylindrical: a rod turning and sliding inside a tube
PISTON_PLAN = plan(
    "piston",
    [
        {
            "id": "tube",
            "description": "hollow guide tube",
            "parameters": {"r": 30, "h": 100},
            "connectors": [conn("bore", [0, 0, 0], [0, 0, 1], [1, 0, 0], "tube axis at the bottom face")],
        },
        {
            "id": "rod",
            "description": "solid rod riding in the tube",
            "parameters": {"r": 15, "h": 150},
            "connectors": [conn("base", [0, 0, 0], [0, 0, 1], [1, 0, 0], "rod axis at its lower end")],
        },
    ],
    [
        {
            "id": "rod_joint",
            "type": "Cylindrical",
            "parent": {"part": "tube", "connector": "bore"},
            "child": {"part": "rod", "connector": "base"},
            "limits": [None, {"min": 0, "max": 50, "unit": "mm"}],
        }
    ],
    ground="tube",
)
TUBE_PROGRAM = {
    "part_id": "tube",
    "steps": [
        step("add", "cylinder", {"r": 30, "h": 100}),
        step("subtract", "cylinder", {"r": 20, "h": 102}, (0, 0, -1)),
    ],
    "connectors": PISTON_PLAN["parts"][0]["connectors"],
}
ROD_PROGRAM = {
    "part_id": "rod",
    "steps": [step("add", "cylinder", {"r": 15, "h": 150})],
    "connectors": PISTON_PLAN["parts"][1]["connectors"],
}

# Ball: an arm on a socket post
BALL_PLAN = plan(
    "ball",
    [
        {
            "id": "base",
            "description": "square plate with a socket post",
            "parameters": {"lx": 100, "ly": 100},
            "connectors": [conn("socket", [0, 0, 40], [0, 0, 1], [1, 0, 0], "socket centre")],
        },
        {
            "id": "arm",
            "description": "cylindrical arm",
            "parameters": {"r": 10, "h": 200},
            "connectors": [conn("pivot", [0, 0, -20], [0, 0, 1], [1, 0, 0], "pivot below the arm end")],
        },
    ],
    [
        {
            "id": "shoulder",
            "type": "Ball",
            "parent": {"part": "base", "connector": "socket"},
            "child": {"part": "arm", "connector": "pivot"},
            "limits": [{"cone": 45, "unit": "deg"}],
        }
    ],
    ground="base",
)
BASE_PROGRAM = {
    "part_id": "base",
    "steps": [
        box("add", [-50, -50, 0], [50, 50, 20]),
        step("add", "cylinder", {"r": 6, "h": 10}, (0, 0, 20)),
        step("add", "sphere", {"r": 12}, (0, 0, 40)),
    ],
    "connectors": BALL_PLAN["parts"][0]["connectors"],
}
ARM_PROGRAM = {
    "part_id": "arm",
    "steps": [step("add", "cylinder", {"r": 10, "h": 200})],
    "connectors": BALL_PLAN["parts"][1]["connectors"],
}


def write(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def main() -> None:
    for sub in ("agents", "parts"):
        shutil.rmtree(ROOT / sub, ignore_errors=True)
    write(ROOT / "door.json", DOOR_PLAN)
    write(ROOT / "cabinet.json", CABINET_PLAN)
    write(ROOT / "cycle.json", CYCLE_PLAN)
    write(ROOT / "piston.json", PISTON_PLAN)
    write(ROOT / "ball.json", BALL_PLAN)

    write(ROOT / "parts/door/cabinet.json", cabinet_program(with_slide=False))
    write(ROOT / "parts/door/door.json", door_program())
    write(ROOT / "parts/cabinet/cabinet.json", cabinet_program())
    write(ROOT / "parts/cabinet/door.json", door_program())
    write(ROOT / "parts/cabinet/drawer.json", DRAWER_PROGRAM)
    write(ROOT / "parts/piston/tube.json", TUBE_PROGRAM)
    write(ROOT / "parts/piston/rod.json", ROD_PROGRAM)
    write(ROOT / "parts/ball/base.json", BASE_PROGRAM)
    write(ROOT / "parts/ball/arm.json", ARM_PROGRAM)

    write(ROOT / "task.json", {"requirement": "a cabinet with a single hinged door", "seed": 7})
    write(ROOT / "agents/door/design/000.json", DOOR_PLAN)
    write(ROOT / "agents/door/generation/cabinet/000.json", cabinet_program(with_slide=False))
    write(ROOT / "agents/door/generation/door/000.json", door_program())

    write(
        ROOT / "cabinet_task.json",
        {"requirement": "a cabinet with a hinged door on top and a sliding drawer below", "seed": 7},
    )
    write(ROOT / "agents/cabinet/design/000.json", CABINET_PLAN)
    write(ROOT / "agents/cabinet/generation/cabinet/000.json", cabinet_program())
    write(ROOT / "agents/cabinet/generation/door/000.json", door_program())
    write(ROOT / "agents/cabinet/generation/drawer/000.json", DRAWER_PROGRAM)

    # first design has a door whose stopper tab hits the carcass when swung
    write(ROOT / "agents/cabinet_clip/design/000.json", CABINET_CLIP_PLAN)
    write(ROOT / "agents/cabinet_clip/design/001.json", CABINET_PLAN)
    write(ROOT / "agents/cabinet_clip/generation/cabinet/000.json", cabinet_program())
    write(ROOT / "agents/cabinet_clip/generation/door/000.json", door_program(stopper=True))
    write(ROOT / "agents/cabinet_clip/generation/door/001.json", door_program())
    write(ROOT / "agents/cabinet_clip/generation/drawer/000.json", DRAWER_PROGRAM)

    # brainstorm: two alternatives sharing one carcass
    write(
        ROOT / "agents/brainstorm/design/000.json",
        {
            "alternatives": [
                {"summary": "cabinet with one hinged door", "plan": plan("door", [CABINET_SPEC, DOOR_SPEC], [DOOR_JOINT])},
                {"summary": "cabinet with a hinged door and a drawer", "plan": CABINET_PLAN},
            ]
        },
    )
    for pid, prog in (("cabinet", cabinet_program()), ("door", door_program()), ("drawer", DRAWER_PROGRAM)):
        write(ROOT / f"agents/brainstorm/generation/{pid}/000.json", prog)


if __name__ == "__main__":
    main()
