import json
import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from artikit.errors import DegenerateSolid, EmptyProgram, SchemaError
from artikit.part import (
    AABB,
    TriangleMesh,
    bounding_box,
    boundary_epsilon,
    check_realization,
    estimate_volume,
    load_programs,
    meshify,
    membership,
    parse_program,
    program_from_dict,
    sample_surface,
)
from artikit.plan import parse_part
from artikit.se3 import Rotation

from helpers import FIXTURES, box_step, connector, fixture_parts, fixture_plan

Q_X90 = [math.cos(math.pi / 4), math.sin(math.pi / 4), 0.0, 0.0]


def prog(*steps, conns=()) -> object:
    return program_from_dict({"part_id": "p", "steps": list(steps), "connectors": list(conns)})


def prim(kind: str, params: dict, op: str = "add", t=(0, 0, 0), rot=(1, 0, 0, 0)) -> dict:
    return {"op": op, "kind": kind, "params": params, "placement": {"rotation": list(rot), "translation": list(t)}}


SHELL = prog(box_step(100, 100, 100), box_step(80, 80, 80, op="subtract"))


# ------------------------------------------------------------- membership


def test_membership_fold_order():
    solid = prog(box_step(100, 100, 100))
    assert membership(solid, (0, 0, 0)) is True
    assert membership(SHELL, (0, 0, 0)) is False
    # subtracting from nothing then adding leaves the point inside
    reversed_prog = program_from_dict(
        {"part_id": "p", "steps": [box_step(100, 100, 100), box_step(80, 80, 80, op="subtract"), box_step(100, 100, 100)]}
    )
    assert membership(reversed_prog, (0, 0, 0)) is True


def test_first_step_must_be_add():
    with pytest.raises(SchemaError):
        prog(box_step(80, 80, 80, op="subtract"), box_step(100, 100, 100))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["add", "subtract"]), st.floats(5, 100), st.floats(-50, 50)), min_size=1, max_size=5))
def test_membership_matches_hand_fold(steps):
    steps = [("add", *steps[0][1:])] + steps[1:]
    p = prog(*[box_step(s, s, s, (c, 0, 0), op) for op, s, c in steps])
    pts = np.random.default_rng(0).uniform(-120, 120, (500, 3))
    want = np.zeros(len(pts), dtype=bool)
    for op, s, c in steps:
        hit = np.all(np.abs(pts - [c, 0, 0]) <= s / 2, axis=1)
        want = want | hit if op == "add" else want & ~hit
    assert np.array_equal(membership(p, pts), want)


def test_primitive_membership():
    cyl = prog(prim("cylinder", {"r": 10, "h": 40}))
    assert membership(cyl, (0, 0, 20)) and not membership(cyl, (0, 0, -1)) and not membership(cyl, (11, 0, 5))
    cone = prog(prim("cone", {"r1": 10, "r2": 0, "h": 10}))
    assert membership(cone, (4.9, 0, 5)) and not membership(cone, (5.1, 0, 5))
    sph = prog(prim("sphere", {"r": 5}, t=(1, 1, 1)))
    assert membership(sph, (1, 1, 5.9)) and not membership(sph, (1, 1, 6.1))


def test_bad_primitive_rejected():
    with pytest.raises(SchemaError):
        prog(prim("torus", {"r": 1}))
    with pytest.raises(SchemaError):
        prog(prim("box", {"lx": 1, "ly": -1, "lz": 1}))
    with pytest.raises(SchemaError):
        prog(prim("cone", {"r1": 0, "r2": 0, "h": 1}))


# ---------------------------------------------------------- bounding box


def test_bounding_box_examples():
    b = bounding_box(prog(box_step(100, 100, 100)))
    assert b.lo == (-50, -50, -50) and b.hi == (50, 50, 50)
    c = bounding_box(prog(prim("cylinder", {"r": 10, "h": 40}, rot=Q_X90)))
    # rotating +z by 90 deg about x sends it to -y; extreme points of the end discs
    np.testing.assert_allclose(c.extent, (20, 40, 20), atol=1e-9)
    np.testing.assert_allclose(c.lo, (-10, -40, -10), atol=1e-9)
    u = bounding_box(prog(box_step(10, 10, 10), prim("sphere", {"r": 5}, t=(100, 0, 0))))
    np.testing.assert_allclose(u.lo, (-5, -5, -5))
    np.testing.assert_allclose(u.hi, (105, 5, 5))


def test_bounding_box_ignores_subtracts_and_empty_fails():
    assert bounding_box(SHELL).extent.tolist() == [100, 100, 100]
    with pytest.raises(EmptyProgram):
        bounding_box(program_from_dict({"part_id": "p", "steps": []}))


@settings(max_examples=100, deadline=None)
@given(
    st.sampled_from(["box", "cylinder", "sphere", "cone"]),
    st.tuples(*[st.floats(-1, 1)] * 4).filter(lambda q: sum(c * c for c in q) > 0.01),
    st.tuples(*[st.floats(-50, 50)] * 3),
)
@example("cylinder", (0.0, 0.0, 1.0, 2.2255689416931868e-10), (0.0, 0.0, 0.0))  # axis a hair off -z
def test_bounding_box_contains_dense_samples(kind, q, t):
    params = {"box": {"lx": 10, "ly": 20, "lz": 30}, "cylinder": {"r": 8, "h": 25},
              "sphere": {"r": 12}, "cone": {"r1": 9, "r2": 3, "h": 20}}[kind]
    p = prog(prim(kind, params, t=t, rot=Rotation(*q).quat))
    b = bounding_box(p)
    pts = sample_surface(p, 300, seed=1)
    assert np.all(pts >= np.asarray(b.lo) - 1e-9) and np.all(pts <= np.asarray(b.hi) + 1e-9)
    # tight: samples reach within 10% of each face
    assert np.all(pts.min(axis=0) - b.lo <= 0.1 * b.extent + 1e-9)
    assert np.all(b.hi - pts.max(axis=0) <= 0.1 * b.extent + 1e-9)


# --------------------------------------------------------------- sampling


def test_solid_box_samples_on_faces():
    pts = sample_surface(prog(box_step(100, 100, 100)), 500, seed=3)
    assert len(pts) == 500
    np.testing.assert_allclose(np.abs(pts).max(axis=1), 50.0, atol=1e-9)


def test_hollow_shell_samples_include_cavity_walls():
    pts = sample_surface(SHELL, 2000, seed=0)
    linf = np.abs(pts).max(axis=1)
    inner = np.isclose(linf, 40.0, atol=1e-9)
    outer = np.isclose(linf, 50.0, atol=1e-9)
    assert inner.any() and outer.any() and np.all(inner | outer)
    # membership-flip oracle: stepping along the outward L-inf direction changes membership
    eps = boundary_epsilon(SHELL)
    for p in pts[inner][:50]:
        axis = int(np.argmax(np.abs(p)))
        n = np.zeros(3)
        n[axis] = np.sign(p[axis])
        assert membership(SHELL, p + eps * n) != membership(SHELL, p - eps * n)


def test_sampling_is_deterministic():
    a = sample_surface(SHELL, 300, seed=11)
    b = sample_surface(SHELL, 300, seed=11)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_surface(SHELL, 300, seed=12))


def test_fully_subtracted_program_is_degenerate():
    gone = prog(box_step(10, 10, 10), box_step(20, 20, 20, op="subtract"))
    with pytest.raises(DegenerateSolid):
        sample_surface(gone, 100, seed=0)


# ----------------------------------------------------------------- meshing


def test_sphere_mesh_vertices_within_one_cell_diagonal():
    sphere = prog(prim("sphere", {"r": 30}))
    mesh = meshify(sphere, 64)
    cell = 60.0 / 64
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.all(np.abs(r - 30.0) <= cell * math.sqrt(3))
    assert mesh.is_watertight()


def test_box_mesh_volume_within_ten_percent():
    mesh = meshify(prog(box_step(100, 100, 100)), 32)
    assert mesh.volume() == pytest.approx(1e6, rel=0.10)
    # divergence-theorem volume via the OBJ round trip
    again = TriangleMesh.from_obj(mesh.to_obj("header"))
    assert again.volume() == pytest.approx(mesh.volume(), rel=1e-12)


@pytest.mark.parametrize(
    "step,exact",
    [(prim("sphere", {"r": 30}), 4 / 3 * math.pi * 30**3), (box_step(100, 60, 40), 100 * 60 * 40)],
)
def test_mesh_volume_converges(step, exact):
    errs = [abs(meshify(prog(step), r).volume() - exact) / exact for r in (16, 32, 64)]
    assert errs[0] > errs[1] > errs[2]


def test_mesh_of_empty_program_fails():
    with pytest.raises(EmptyProgram):
        meshify(program_from_dict({"part_id": "p", "steps": []}))


def test_mesh_winding_is_outward():
    mesh = meshify(prog(prim("sphere", {"r": 10})), 24)
    assert mesh.volume() > 0


def test_volume_estimate():
    assert estimate_volume(SHELL, 40000, 0) == pytest.approx(100**3 - 80**3, rel=0.05)


# ------------------------------------------------------------ realization


def door_spec(**params):
    return parse_part(
        {"id": "p", "parameters": params or {"h": 200, "r": 10}, "connectors": [connector("hinge_m", (0, 0, 0))]}, "$"
    )


def test_matching_program_passes():
    p = prog(prim("cylinder", {"r": 10, "h": 200}), conns=[connector("hinge_m", (0, 0, 0))])
    assert check_realization(p, door_spec()).passed


def test_missing_connector_fails_code():
    p = prog(prim("cylinder", {"r": 10, "h": 200}))
    report = check_realization(p, door_spec())
    (fail,) = report.failures
    assert fail.cls == "CODE" and "connector missing" in fail.evidence


@pytest.mark.parametrize("h,ok", [(200, True), (181, True), (179, False), (90, False), (219, True), (221, False)])
def test_dimension_threshold(h, ok):
    p = prog(prim("cylinder", {"r": 10, "h": h}), conns=[connector("hinge_m", (0, 0, 0))])
    report = check_realization(p, door_spec())
    assert report.passed is ok
    if not ok:
        assert {c.cls for c in report.failures} == {"CODE"}
        assert any("dimension mismatch" in c.evidence for c in report.failures)


def test_far_connector_and_empty_solid_fail():
    far = prog(prim("cylinder", {"r": 10, "h": 200}), conns=[connector("hinge_m", (0, 0, 300))])
    assert not check_realization(far, door_spec()).passed
    empty = prog(box_step(10, 10, 10), box_step(20, 20, 20, op="subtract"), conns=[connector("hinge_m", (0, 0, 0))])
    report = check_realization(empty, door_spec(lx=10))
    assert any(c.name == "solid" for c in report.failures)


def test_program_json_round_trip():
    text = json.dumps(SHELL.to_json())
    assert parse_program(text).canonical() == SHELL.canonical()


def test_aabb_helpers():
    a = AABB((0, 0, 0), (1, 2, 3))
    assert a.volume == 6 and a.overlaps(AABB((1, 2, 3), (4, 4, 4)))
    assert not a.overlaps(AABB((1.1, 0, 0), (2, 1, 1)))
    assert a.distance_outside((0.5, 1, 1)) == 0.0 and a.distance_outside((4, 2, 3)) == 3.0


def test_load_programs_reads_a_parts_directory(tmp_path):
    plan = fixture_plan("cabinet")
    loaded = load_programs(plan, FIXTURES / "parts" / "cabinet")
    want = fixture_parts(plan, "cabinet")
    assert {k: v.canonical() for k, v in loaded.items()} == {k: v.canonical() for k, v in want.items()}
    with pytest.raises(FileNotFoundError):
        load_programs(plan, tmp_path / "nowhere")
