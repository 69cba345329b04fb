"""Deterministic assembly of a kinematic tree by connector-frame alignment.

For a joint with parent pose ``P``, parent connector frame ``Fp``, child
connector frame ``Fc`` and coordinates ``q``::

    child = P ∘ Fp ∘ M(type, q) ∘ Flip ∘ Fc⁻¹

where ``Flip`` is a half turn about x when the joint asks for it.  Joint
coordinates are radians for rotations and millimeters for translations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ArityMismatch, MissingGeometry, UnknownJointId
from .part import PartProgram
from .plan import DOF, AssemblyPlan, JointSpec, JointType
from .se3 import Pose, Rotation, frame_from_zx, rot_x, rot_z, trans_z

log = logging.getLogger(__name__)

FLIP = rot_x(math.pi)
DEFAULT_SWEEP = {"rot": math.radians(90.0), "trans": 50.0}

JointCoordinates = dict[str, tuple[float, ...]]


def joint_motion(joint_type: JointType | str, q: Sequence[float]) -> Pose:
    jt = JointType(joint_type)
    if len(q) != DOF[jt]:
        raise ArityMismatch(f"{jt.value} takes {DOF[jt]} coordinates, got {len(q)}")
    if jt is JointType.FIXED:
        return Pose()
    if jt is JointType.REVOLUTE:
        return rot_z(q[0])
    if jt is JointType.SLIDER:
        return trans_z(q[0])
    if jt is JointType.CYLINDRICAL:
        return rot_z(q[0]).compose(trans_z(q[1]))
    return Pose(Rotation.from_rotvec(q))


def ball_tilt(q: Sequence[float]) -> float:
    """Angle between z and its image under the rotation vector ``q``."""
    z = Rotation.from_rotvec(q).rotate((0.0, 0.0, 1.0))
    return math.atan2(math.hypot(z[0], z[1]), z[2])


def clamp_ball(q: Sequence[float], cone: float) -> tuple[float, float, float]:
    """Limit tilt to ``cone`` via swing-twist decomposition; twist is kept."""
    if ball_tilt(q) <= cone:
        return tuple(float(v) for v in q)  # type: ignore[return-value]
    r = Rotation.from_rotvec(q)
    n = math.hypot(r.w, r.z)
    twist = Rotation(r.w / n, 0.0, 0.0, r.z / n) if n > 1e-12 else Rotation()
    swing = r * twist.inverse()
    axis = (swing.x, swing.y, swing.z)
    swing = Rotation.from_axis_angle(axis, cone)
    return (swing * twist).as_rotvec()


def joint_frames(joint: JointSpec, geometries: Mapping[str, PartProgram]) -> tuple[Pose, Pose]:
    frames = []
    for ref in (joint.parent, joint.child):
        geom = geometries.get(ref.part)
        if geom is None:
            raise MissingGeometry(ref.part)
        conn = geom.connector(ref.connector)
        if conn is None:
            raise MissingGeometry(f"{ref.part}.{ref.connector}")
        frames.append(frame_from_zx(conn.origin, conn.z_axis, conn.x_axis))
    return frames[0], frames[1]


def joint_anchor(parent_pose: Pose, f_parent: Pose, joint: JointSpec, q: Sequence[float]) -> Pose:
    """World pose of the moving side of a joint: ``P ∘ Fp ∘ M(q) ∘ Flip``."""
    pose = parent_pose.compose(f_parent).compose(joint_motion(joint.type, q))
    return pose.compose(FLIP) if joint.flip else pose


def clamp_coordinates(joint: JointSpec, q: Sequence[float]) -> tuple[float, ...]:
    if len(q) != joint.dof:
        raise ArityMismatch(f"joint {joint.id!r} takes {joint.dof} coordinates, got {len(q)}")
    out = [float(v) for v in q]
    if joint.type is JointType.BALL:
        if joint.cone is not None:
            out = list(clamp_ball(out, joint.cone))
    else:
        for i in range(len(out)):
            lim = joint.limit(i)
            if lim is not None:
                out[i] = min(max(out[i], lim.lo), lim.hi)
    return tuple(out)


def within_limits(joint: JointSpec, q: Sequence[float], tol: float = 1e-12) -> bool:
    if joint.type is JointType.BALL:
        return joint.cone is None or ball_tilt(q) <= joint.cone + tol
    for i, v in enumerate(q):
        lim = joint.limit(i)
        if lim is not None and not (lim.lo - tol <= v <= lim.hi + tol):
            return False
    return True


@dataclass
class AssembledModel:
    plan: AssemblyPlan
    geometries: dict[str, PartProgram]
    poses: dict[str, Pose]
    q: JointCoordinates
    warnings: list[str] = field(default_factory=list)

    def rest_q(self) -> JointCoordinates:
        return {j.id: j.rest_coordinates() for j in self.plan.joints}

    def at(self, q: Mapping[str, Sequence[float]]) -> AssembledModel:
        full = self.rest_q()
        full.update(self.q)
        for jid, v in q.items():
            full[jid] = tuple(float(c) for c in v)
        poses, clamped, warnings = _solve(self.plan, self.geometries, full)
        return AssembledModel(self.plan, self.geometries, poses, clamped, warnings)

    def coordinate_vector(self) -> np.ndarray:
        return np.array([v for j in self.plan.joints for v in self.q[j.id]], dtype=float)

    def to_json(self) -> dict:
        return {
            "plan": self.plan.name,
            "poses": {pid: self.poses[pid].to_pair() for pid in self.plan.part_ids},
            "q": {j.id: list(self.q[j.id]) for j in self.plan.joints},
        }


def _solve(
    plan: AssemblyPlan, geometries: Mapping[str, PartProgram], q: Mapping[str, Sequence[float]]
) -> tuple[dict[str, Pose], JointCoordinates, list[str]]:
    if plan.ground not in geometries:
        raise MissingGeometry(plan.ground)
    poses = {plan.ground: Pose()}
    used: JointCoordinates = {}
    warnings: list[str] = []
    for joint in plan.tree_order():
        raw = tuple(float(v) for v in q[joint.id])
        qj = clamp_coordinates(joint, raw)
        if not within_limits(joint, raw):
            msg = f"joint {joint.id!r}: coordinates {list(raw)} clamped to limits {list(qj)}"
            log.warning(msg)
            warnings.append(msg)
        f_p, f_c = joint_frames(joint, geometries)
        anchor = joint_anchor(poses[joint.parent.part], f_p, joint, qj)
        poses[joint.child.part] = anchor.compose(f_c.inverse())
        used[joint.id] = qj
    for pid in plan.part_ids:
        if pid not in geometries:
            raise MissingGeometry(pid)
    return poses, used, warnings


def assemble_at_rest(plan: AssemblyPlan, geometries: Mapping[str, PartProgram]) -> AssembledModel:
    """Pose every part at its joints' rest coordinates; no agent involvement."""
    geoms = dict(geometries)
    q = {j.id: j.rest_coordinates() for j in plan.joints}
    poses, used, warnings = _solve(plan, geoms, q)
    return AssembledModel(plan, geoms, poses, used, warnings)


def forward_kinematics(model: AssembledModel, q: Mapping[str, Sequence[float]]) -> dict[str, Pose]:
    """Poses for coordinates ``q``; joints not mentioned stay at rest."""
    known = {j.id for j in model.plan.joints}
    for jid in q:
        if jid not in known:
            raise UnknownJointId(jid)
    full = model.rest_q()
    full.update({jid: tuple(float(c) for c in v) for jid, v in q.items()})
    poses, _, _ = _solve(model.plan, model.geometries, full)
    return poses


def coordinate_ranges(joint: JointSpec) -> list[tuple[float, float]]:
    """Sweep interval for each coordinate; unlimited ones use the default sweep."""
    out = []
    for i, kind in enumerate(joint.kinds):
        if joint.type is JointType.BALL:
            if joint.cone is not None and i < 2:
                out.append((-joint.cone, joint.cone))
            else:
                out.append((0.0, DEFAULT_SWEEP["rot"]))
            continue
        lim = joint.limit(i)
        out.append((lim.lo, lim.hi) if lim is not None else (0.0, DEFAULT_SWEEP[kind]))
    return out


def keyframes(model: AssembledModel, frames_per_dof: int = 5) -> list[tuple[JointCoordinates, dict[str, Pose]]]:
    """One linear sweep per movable coordinate with all others at rest.

    Joints are visited in id order; a model without movable joints yields the
    single rest frame.
    """
    if frames_per_dof < 2:
        raise ValueError("frames_per_dof must be at least 2")
    rest = model.rest_q()
    frames: list[tuple[JointCoordinates, dict[str, Pose]]] = []
    for joint in sorted(model.plan.joints, key=lambda j: j.id):
        for i, (lo, hi) in enumerate(coordinate_ranges(joint)):
            for v in np.linspace(lo, hi, frames_per_dof).tolist():
                q = dict(rest)
                qj = list(rest[joint.id])
                qj[i] = v
                q[joint.id] = tuple(qj)
                frames.append((q, forward_kinematics(model, q)))
    if not frames:
        frames.append((dict(rest), dict(model.poses)))
    return frames
