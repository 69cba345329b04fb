import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artikit.errors import MissingSource, ParseError, SchemaError
from artikit.part import program_from_dict
from artikit.plan import JointType, dof, expand_derived, parse_plan, plan_from_dict, validate_plan
from artikit.se3 import Plane, Pose, reflect_frame

from helpers import JOINT_DOF, box_step, connector, fixture_plan

PIN = connector("pin", (0, 0, 0), label="pivot pin")


def minimal_plan(**over) -> dict:
    d = {"name": "solo", "ground": "base", "declared_dof": 0, "parts": [{"id": "base"}], "joints": []}
    d.update(over)
    return d


def star_plan(types: list[str], declared: int | None = None) -> dict:
    """Ground part with one child per joint type."""
    parts = [{"id": "g", "connectors": [connector(f"c{i}", (i, 0, 0)) for i in range(len(types))]}]
    joints = []
    for i, t in enumerate(types):
        parts.append({"id": f"k{i}", "connectors": [PIN]})
        joints.append({"id": f"j{i}", "type": t, "parent": {"part": "g", "connector": f"c{i}"},
                       "child": {"part": f"k{i}", "connector": "pin"}})
    total = sum(JOINT_DOF[t] for t in types)
    return {"name": "star", "ground": "g", "declared_dof": total if declared is None else declared,
            "parts": parts, "joints": joints}


def codes(report) -> set[str]:
    return {v.code for v in report.violations}


# ------------------------------------------------------------------ parse


def test_minimal_single_part_plan_is_valid():
    plan = parse_plan(json.dumps(minimal_plan()))
    report = validate_plan(plan)
    assert report.ok and report.computed_dof == 0
    assert plan.tree_order() == []


def test_door_fixture_fields():
    plan = fixture_plan("door")
    assert plan.name == "door" and plan.ground == "cabinet" and plan.declared_dof == 1
    assert plan.part_ids == ["cabinet", "door"]
    (j,) = plan.joints
    assert j.type is JointType.REVOLUTE
    assert (j.parent.part, j.parent.connector) == ("cabinet", "hinge")
    assert (j.child.part, j.child.connector) == ("door", "hinge")
    assert j.limits[0].lo == 0.0
    assert j.limits[0].hi == pytest.approx(math.radians(120))
    hinge = plan.part("cabinet").connector("hinge")
    assert hinge.origin == (-5.0, -5.0, 250.0) and hinge.z_axis == (0.0, 0.0, -1.0)
    assert validate_plan(plan).ok


def test_unknown_joint_type_is_schema_error():
    d = star_plan(["Revolute"])
    d["joints"][0]["type"] = "hinge"
    with pytest.raises(SchemaError) as exc:
        plan_from_dict(d)
    assert exc.value.field.endswith(".type")


def test_unknown_field_rejected_and_malformed_json():
    with pytest.raises(SchemaError) as exc:
        plan_from_dict(minimal_plan(colour="red"))
    assert "colour" in exc.value.field
    with pytest.raises(ParseError):
        parse_plan('{"name": ')


def test_plan_json_round_trip():
    plan = fixture_plan("cabinet")
    assert plan_from_dict(json.loads(json.dumps(plan.to_json()))) == plan


# -------------------------------------------------------------- validate


def test_mixed_joint_dof_sum():
    report = validate_plan(plan_from_dict(star_plan(["Revolute", "Fixed", "Ball"], 4)))
    assert report.ok and report.computed_dof == 4


@pytest.mark.parametrize("t,d", [("Fixed", 0), ("Revolute", 1), ("Slider", 1), ("Cylindrical", 2), ("Ball", 3)])
def test_dof_table(t, d):
    assert dof(t) == d


def test_dof_mismatch_flagged():
    report = validate_plan(plan_from_dict(star_plan(["Revolute", "Slider"], 3)))
    assert "dof" in codes(report)
    assert all(v.cls == "DESIGN" for v in report.violations)


def test_exhaustive_dof_accounting():
    names = [t.value for t in JointType]
    for size in range(0, 5):
        for combo in itertools.product(names, repeat=size):
            report = validate_plan(plan_from_dict(star_plan(list(combo))))
            assert report.computed_dof == sum(JOINT_DOF[t] for t in combo)
            assert report.ok


def test_cycle_fixture_violates_tree():
    report = validate_plan(fixture_plan("cycle"))
    assert {"joint_count", "tree_root"} <= codes(report)


def test_unresolved_connector_and_self_joint():
    d = star_plan(["Revolute"])
    d["joints"][0]["child"]["connector"] = "nope"
    assert "unresolved_connector" in codes(validate_plan(plan_from_dict(d)))
    d = star_plan(["Revolute"])
    d["joints"][0]["child"] = {"part": "g", "connector": "c0"}
    assert "self_joint" in codes(validate_plan(plan_from_dict(d)))


def test_two_parents_and_unreachable_part_flagged():
    d = star_plan(["Revolute", "Fixed"])
    d["parts"][2]["connectors"].append(connector("out", (0, 0, 0)))
    d["joints"][1]["parent"] = {"part": "k1", "connector": "out"}
    d["joints"][1]["child"] = {"part": "k0", "connector": "pin"}
    assert {"tree_parent", "tree_connectivity"} <= codes(validate_plan(plan_from_dict(d)))


def test_bad_frame_and_empty_label():
    d = star_plan(["Fixed"])
    d["parts"][1]["connectors"] = [connector("pin", (0, 0, 0), (0, 0, 1), (0, 0.5, 1))]
    d["parts"][0]["connectors"][0]["label"] = " "
    c = codes(validate_plan(plan_from_dict(d)))
    assert {"frame", "connector_label"} <= c


def test_limit_unit_and_order_checked():
    d = star_plan(["Revolute"])
    d["joints"][0]["limits"] = [{"min": 10, "max": 0, "unit": "mm"}]
    c = codes(validate_plan(plan_from_dict(d)))
    assert {"limit_unit", "limit_order"} <= c


def test_rest_clamped_into_limits():
    d = star_plan(["Revolute"])
    d["joints"][0]["limits"] = [{"min": 10, "max": 20, "unit": "deg"}]
    j = plan_from_dict(d).joints[0]
    assert j.rest_coordinates() == (pytest.approx(math.radians(10)),)


# ---------------------------------------------------------------- derive


def derived_plan(derive: dict, src_conns=None) -> dict:
    conns = src_conns or [connector("a", (10, 0, 0)), connector("b", (0, 20, 5), (0, 1, 0), (1, 0, 0))]
    return {
        "name": "legs",
        "ground": "top",
        "declared_dof": 0,
        "parts": [
            {"id": "top", "connectors": [connector("l0", (0, 0, 0)), connector("l1", (400, 0, 0))]},
            {"id": "leg", "connectors": conns},
            {"id": "leg2", "derive": derive},
        ],
        "joints": [
            {"id": "f0", "type": "Fixed", "parent": {"part": "top", "connector": "l0"}, "child": {"part": "leg", "connector": "a"}},
            {"id": "f1", "type": "Fixed", "parent": {"part": "top", "connector": "l1"}, "child": {"part": "leg2", "connector": "a"}},
        ],
    }


def leg_program(conns) -> dict:
    return {"part_id": "leg", "steps": [box_step(20, 20, 300, (5, 5, -150)), box_step(5, 5, 5, (0, 0, 0), "subtract")],
            "connectors": conns}


def test_translate_derive_shifts_everything():
    d = derived_plan({"source": "leg", "transform": {"translation": [400, 0, 0]}})
    plan = plan_from_dict(d)
    assert validate_plan(plan).ok
    src = program_from_dict(leg_program(d["parts"][1]["connectors"]))
    geoms = expand_derived(plan, {"top": src, "leg": src})
    copy = geoms["leg2"]
    for s0, s1 in zip(src.steps, copy.steps):
        np.testing.assert_allclose(np.subtract(s1.primitive.placement.translation, s0.primitive.placement.translation), (400, 0, 0))
    for c0, c1 in zip(src.connectors, copy.connectors):
        np.testing.assert_allclose(np.subtract(c1.origin, c0.origin), (400, 0, 0))
    assert geoms["leg"] is src


def test_mirror_derive_reflects_connectors():
    d = derived_plan({"source": "leg", "mirror": {"point": [0, 0, 0], "normal": [1, 0, 0]}})
    plan = plan_from_dict(d)
    src = program_from_dict(leg_program(d["parts"][1]["connectors"]))
    copy = expand_derived(plan, {"top": src, "leg": src})["leg2"]
    plane = Plane((0, 0, 0), (1, 0, 0))
    for c0, c1 in zip(src.connectors, copy.connectors):
        want = reflect_frame(c0.frame(), plane)
        got = c1.frame()
        np.testing.assert_allclose(got.matrix(), want.matrix(), atol=1e-12)
        # z reflected by the Householder matrix; x reflected then negated
        h = plane.householder()
        np.testing.assert_allclose(c1.z_axis, h @ np.asarray(c0.z_axis), atol=1e-12)
        np.testing.assert_allclose(c1.x_axis, -(h @ np.asarray(c0.x_axis)), atol=1e-12)
        assert np.linalg.det(got.rotation.as_matrix()) == pytest.approx(1.0)
    # the mirrored solid is the reflection of the source solid
    from artikit.part import membership

    rng = np.random.default_rng(1)
    pts = rng.uniform(-200, 200, (2000, 3))
    mirrored = pts * np.array([-1, 1, 1])
    assert np.array_equal(membership(src, pts), membership(copy, mirrored))


def test_derive_of_derived_part_is_a_violation():
    d = derived_plan({"source": "leg"})
    d["parts"].append({"id": "leg3", "derive": {"source": "leg2"}})
    d["parts"][0]["connectors"].append(connector("l2", (0, 400, 0)))
    d["joints"].append({"id": "f2", "type": "Fixed", "parent": {"part": "top", "connector": "l2"},
                        "child": {"part": "leg3", "connector": "a"}})
    assert "derive_depth" in codes(validate_plan(plan_from_dict(d)))


def test_missing_source_geometry():
    plan = plan_from_dict(derived_plan({"source": "leg"}))
    with pytest.raises(MissingSource):
        expand_derived(plan, {"top": None})


vec = st.tuples(*[st.floats(-100, 100, allow_nan=False)] * 3)
unit = vec.filter(lambda v: np.linalg.norm(v) > 1e-2)


@settings(max_examples=100, deadline=None)
@given(st.lists(vec, min_size=2, max_size=5), st.floats(-math.pi, math.pi), unit, vec, st.booleans(), unit)
def test_derive_is_an_isometry_on_connector_origins(origins, angle, axis, shift, mirror, normal):
    from artikit.se3 import Rotation

    conns = [connector(f"c{i}", o) for i, o in enumerate(origins)]
    derive = {"source": "leg", "transform": Pose(Rotation.from_axis_angle(axis, angle), shift).to_json()}
    if mirror:
        derive["mirror"] = {"point": list(shift), "normal": list(normal)}
    d = derived_plan(derive, conns)
    d["joints"][0]["child"]["connector"] = "c0"
    d["joints"][1]["child"]["connector"] = "c0"
    plan = plan_from_dict(d)
    src = program_from_dict(leg_program(conns))
    copy = expand_derived(plan, {"top": src, "leg": src})["leg2"]
    a = np.array([c.origin for c in src.connectors])
    b = np.array([c.origin for c in copy.connectors])
    da = np.linalg.norm(a[:, None] - a[None], axis=-1)
    db = np.linalg.norm(b[:, None] - b[None], axis=-1)
    np.testing.assert_allclose(db, da, atol=1e-9)
