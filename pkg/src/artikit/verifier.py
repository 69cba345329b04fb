"""Rule-based global verification of an assembled model.

Three checks: connector coincidence per joint (CODE class), pairwise
interference at rest, and interference across the motion keyframes (both
DESIGN class).  Interference is a seeded Monte-Carlo estimate: interior points
of one part are mapped into the other's frame and tested for membership.
"""

from __future__ import annotations

from itertools import combinations
from typing import Mapping

import numpy as np

from .assembler import AssembledModel, joint_anchor, joint_frames, keyframes
from .part import bounding_box, membership, sample_interior
from .report import CODE, DESIGN, Check, Report
from .se3 import Pose, geodesic_distance

COINCIDENCE_TOL = 1e-9
DEFAULT_SAMPLES = 2048
DEFAULT_THRESHOLD = 0.005
ADJACENT_THRESHOLD = 0.02


def joint_gap(model: AssembledModel, joint_id: str) -> tuple[float, float]:
    """Translation gap (mm) and rotation gap (rad) between the two sides of a joint."""
    joint = model.plan.joint(joint_id)
    f_p, f_c = joint_frames(joint, model.geometries)
    lhs = joint_anchor(model.poses[joint.parent.part], f_p, joint, model.q[joint.id])
    rhs = model.poses[joint.child.part].compose(f_c)
    gap = float(np.linalg.norm(np.subtract(lhs.translation, rhs.translation)))
    return gap, geodesic_distance(lhs.rotation, rhs.rotation)


def check_coincidence(model: AssembledModel, tol: float = COINCIDENCE_TOL) -> list[Check]:
    out = []
    for joint in model.plan.joints:
        gap, ang = joint_gap(model, joint.id)
        ok = gap <= tol and ang <= tol
        out.append(
            Check(
                f"coincidence:{joint.id}",
                ok,
                None if ok else CODE,
                "" if ok else f"joint {joint.id} connectors misaligned: gap {gap:.3g} mm, {ang:.3g} rad",
                {"gap_mm": gap, "angle_rad": ang},
                part=joint.child.part,
            )
        )
    return out


def overlap_fraction(
    model: AssembledModel,
    poses: Mapping[str, Pose],
    a: str,
    b: str,
    samples: int,
    rng: np.random.Generator,
) -> float:
    """Fraction of ``a``'s volume lying inside ``b`` (Monte-Carlo)."""
    pts = sample_interior(model.geometries[a], samples, rng)
    world = poses[a].apply(pts)
    return float(membership(model.geometries[b], poses[b].apply_inverse(world)).mean())


def adjacent_pairs(model: AssembledModel) -> set[frozenset[str]]:
    return {frozenset((j.parent.part, j.child.part)) for j in model.plan.joints}


def _pair_fractions(
    model: AssembledModel, poses: Mapping[str, Pose], samples: int, seed: int
) -> dict[tuple[str, str], float]:
    ids = model.plan.part_ids
    boxes = {pid: bounding_box(model.geometries[pid]).transformed(poses[pid]) for pid in ids}
    out = {}
    for k, (a, b) in enumerate(combinations(ids, 2)):
        if not boxes[a].overlaps(boxes[b]):
            out[(a, b)] = 0.0
            continue
        rng = np.random.default_rng([seed, k])
        # report the larger of the two directed fractions so a small part
        # buried in a large one is not diluted by the large part's volume
        out[(a, b)] = max(
            overlap_fraction(model, poses, a, b, samples, rng),
            overlap_fraction(model, poses, b, a, samples, rng),
        )
    return out


def check_interference(
    model: AssembledModel,
    samples: int = DEFAULT_SAMPLES,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
    poses: Mapping[str, Pose] | None = None,
    adjacent_threshold: float = ADJACENT_THRESHOLD,
) -> list[Check]:
    if samples < 256:
        raise ValueError("samples must be at least 256")
    poses = model.poses if poses is None else poses
    adjacent = adjacent_pairs(model)
    out = []
    for (a, b), frac in _pair_fractions(model, poses, samples, seed).items():
        limit = adjacent_threshold if frozenset((a, b)) in adjacent else threshold
        ok = frac <= limit
        out.append(
            Check(
                f"interference:{a}|{b}",
                ok,
                None if ok else DESIGN,
                "" if ok else f"parts {a} and {b} interfere: {frac:.1%} overlap (limit {limit:.1%})",
                {"fraction": frac, "threshold": limit},
            )
        )
    return out


def sweep_check(
    model: AssembledModel,
    frames_per_dof: int = 5,
    samples: int = DEFAULT_SAMPLES,
    threshold: float = DEFAULT_THRESHOLD,
    seed: int = 0,
) -> list[Check]:
    """Interference at every keyframe; one entry per part pair with its worst frame."""
    frames = keyframes(model, frames_per_dof)
    adjacent = adjacent_pairs(model)
    per_pair: dict[tuple[str, str], list[float]] = {}
    for _, poses in frames:
        for pair, frac in _pair_fractions(model, poses, samples, seed).items():
            per_pair.setdefault(pair, []).append(frac)
    out = []
    for (a, b), fracs in per_pair.items():
        limit = ADJACENT_THRESHOLD if frozenset((a, b)) in adjacent else threshold
        failing = [i for i, f in enumerate(fracs) if f > limit]
        worst = int(np.argmax(fracs))
        ok = not failing
        out.append(
            Check(
                f"sweep:{a}|{b}",
                ok,
                None if ok else DESIGN,
                ""
                if ok
                else f"parts {a} and {b} interfere during motion at keyframes {failing} "
                f"(worst {fracs[worst]:.1%} at frame {worst})",
                {
                    "worst_frame": worst,
                    "worst_fraction": fracs[worst],
                    "failing_frames": failing,
                    "fractions": fracs,
                    "threshold": limit,
                },
            )
        )
    return out


def verify(
    model: AssembledModel,
    samples: int = DEFAULT_SAMPLES,
    threshold: float = DEFAULT_THRESHOLD,
    frames_per_dof: int = 5,
    seed: int = 0,
) -> Report:
    report = Report()
    report.extend(check_coincidence(model))
    report.extend(check_interference(model, samples, threshold, seed))
    if any(j.dof for j in model.plan.joints):
        report.extend(sweep_check(model, frames_per_dof, samples, threshold, seed))
    return report
