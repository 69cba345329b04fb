"""Geometric and kinematic evaluation metrics.

Point-cloud metrics (chamfer, Hausdorff) use exact brute-force nearest
neighbours; clouds are ``(n, 3)`` arrays.  Failed predictions are scored with
the worst case in the unit cube: ``sqrt(3)`` for distances, 0 for IoGT.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateCloud, EmptyCloud, ZeroGtVolume
from .part import AABB
from .se3 import Pose

log = logging.getLogger(__name__)

PCD_FAIL = math.sqrt(3.0)
HD_FAIL = math.sqrt(3.0)
IOGT_FAIL = 0.0


@dataclass(frozen=True)
class Similarity:
    """``p' = scale * p + offset``"""

    scale: float
    offset: tuple[float, float, float]

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(pts, dtype=float) + np.asarray(self.offset)


def _cloud(pts, name: str = "cloud") -> np.ndarray:
    a = np.asarray(pts, dtype=float)
    if a.size == 0:
        raise EmptyCloud(f"{name} is empty")
    return a.reshape(-1, 3)


def normalize(cloud, mode: str = "unitCube") -> tuple[np.ndarray, Similarity]:
    """``unitCube``: AABB min to origin, longest side 1.  ``diagonal``: centroid
    to origin, AABB diagonal 1."""
    pts = _cloud(cloud)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    ext = hi - lo
    if mode in ("unitCube", "unit-cube"):
        size = float(ext.max())
        if size <= 0.0:
            raise DegenerateCloud("cloud has fewer than two distinct points")
        s = 1.0 / size
        off = -lo * s
    elif mode == "diagonal":
        size = float(np.linalg.norm(ext))
        if size <= 0.0:
            raise DegenerateCloud("cloud has fewer than two distinct points")
        s = 1.0 / size
        off = -pts.mean(axis=0) * s
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    sim = Similarity(s, tuple(off.tolist()))
    return sim.apply(pts), sim


def pairwise_distances(a: np.ndarray, b: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty((len(a), len(b)))
    for i in range(0, len(a), chunk):
        d = a[i : i + chunk, None, :] - b[None, :, :]
        out[i : i + chunk] = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    return out


def nearest(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each point of ``a``: distance to and index of its nearest point in ``b``."""
    d = pairwise_distances(a, b)
    idx = d.argmin(axis=1)
    return d[np.arange(len(a)), idx], idx


def chamfer(a, b) -> float:
    """Average of the two directed mean nearest-neighbour distances."""
    a, b = _cloud(a, "a"), _cloud(b, "b")
    d = pairwise_distances(a, b)
    return 0.5 * (float(d.min(axis=1).mean()) + float(d.min(axis=0).mean()))


def hausdorff(a, b) -> float:
    a, b = _cloud(a, "a"), _cloud(b, "b")
    d = pairwise_distances(a, b)
    return max(float(d.min(axis=1).max()), float(d.min(axis=0).max()))


def iogt(pred: AABB, gt: AABB) -> float:
    """Intersection volume over ground-truth volume for axis-aligned boxes."""
    if gt.volume <= 0.0:
        raise ZeroGtVolume("ground-truth box has zero volume")
    lo = np.maximum(pred.lo, gt.lo)
    hi = np.minimum(pred.hi, gt.hi)
    inter = float(np.prod(np.clip(hi - lo, 0.0, None)))
    return inter / gt.volume


def kabsch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Least-squares rotation and translation mapping ``src`` onto ``dst``.

    Returns ``(R, t, ok)``; ``ok`` is false when the covariance is rank
    deficient and the rotation is not unique.
    """
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, s, vt = np.linalg.svd(h)
    ok = bool(s[1] > 1e-12 * max(s[0], 1e-300))
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, cd - r @ cs, ok


@dataclass
class IcpResult:
    pose: Pose
    residual: float
    iterations: int
    history: list[float] = field(default_factory=list)
    warning: str | None = None


def icp_align(source, target, max_iter: int = 50, tol: float = 1e-7) -> IcpResult:
    """Point-to-point ICP without scaling; the pose maps ``source`` onto ``target``.

    The returned residual is the RMS nearest-neighbour distance.  ``history``
    is non-increasing: an iteration that would worsen the fit is discarded.
    """
    src, dst = _cloud(source, "source"), _cloud(target, "target")
    for name, c in (("source", src), ("target", dst)):
        if np.ptp(c, axis=0).max() <= 0.0:
            raise DegenerateCloud(f"{name} has fewer than two distinct points")
    r_total, t_total = np.eye(3), np.zeros(3)
    cur = src.copy()
    dist, idx = nearest(cur, dst)
    rms = float(np.sqrt(np.mean(dist**2)))
    history = [rms]
    warning = None
    it = 0
    for it in range(1, max_iter + 1):
        r, t, ok = kabsch(cur, dst[idx])
        if not ok:
            warning = "rank-deficient correspondence covariance; returning best-so-far"
            log.warning(warning)
            break
        moved = cur @ r.T + t
        new_dist, new_idx = nearest(moved, dst)
        new_rms = float(np.sqrt(np.mean(new_dist**2)))
        if new_rms > rms:
            break
        r_total, t_total = r @ r_total, r @ t_total + t
        improvement = rms - new_rms
        cur, dist, idx, rms = moved, new_dist, new_idx, new_rms
        history.append(rms)
        if improvement < tol:
            break
    m = np.eye(4)
    m[:3, :3], m[:3, 3] = r_total, t_total
    return IcpResult(Pose.from_matrix(m), rms, it, history, warning)


# --------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class ShapeScores:
    pcd: float
    hd: float
    iogt: float
    failed: bool = False

    def to_json(self) -> dict:
        return {"pcd": self.pcd, "hd": self.hd, "iogt": self.iogt, "failed": self.failed}


FAILED_SCORES = ShapeScores(PCD_FAIL, HD_FAIL, IOGT_FAIL, failed=True)


def evaluate_clouds(pred, gt, use_icp: bool = True, mode: str = "unitCube") -> ShapeScores:
    """ICP-align ``pred`` to ``gt``, normalize each cloud, then score.

    ``pred=None`` marks a failed sample and returns the worst-case scores.
    """
    if pred is None:
        return FAILED_SCORES
    p, g = _cloud(pred, "pred"), _cloud(gt, "gt")
    if use_icp:
        p = icp_align(p, g).pose.apply(p)
    pn, _ = normalize(p, mode)
    gn, _ = normalize(g, mode)
    return ShapeScores(chamfer(pn, gn), hausdorff(pn, gn), iogt(AABB.of_points(pn), AABB.of_points(gn)))


# ------------------------------------------------------------------ joints


@dataclass(frozen=True)
class JointRecord:
    type: str
    origin: tuple[float, float, float]
    axis: tuple[float, float, float]

    def __post_init__(self) -> None:
        a = np.asarray(self.axis, dtype=float)
        n = float(np.linalg.norm(a))
        if n == 0.0:
            raise ValueError("joint axis must be non-zero")
        object.__setattr__(self, "axis", tuple((a / n).tolist()))
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))

    @property
    def movable(self) -> bool:
        return self.type != "Fixed"


def axis_angle_unsigned(a: Sequence[float], b: Sequence[float]) -> float:
    """Angle between two lines in ``[0, pi/2]``."""
    c = abs(float(np.dot(a, b)))
    s = float(np.linalg.norm(np.cross(a, b)))
    return math.atan2(s, c)


def joint_cost(p: JointRecord, g: JointRecord) -> float:
    return float(np.linalg.norm(np.subtract(p.origin, g.origin))) + 0.5 * axis_angle_unsigned(p.axis, g.axis)


def match_joints(
    predicted: Sequence[JointRecord], ground_truth: Sequence[JointRecord], threshold: float = 0.25
) -> list[tuple[int, int]]:
    """One-to-one matching: most pairs within ``threshold``, then least total cost."""
    if not predicted or not ground_truth:
        return []
    cost = np.array([[joint_cost(p, g) for g in ground_truth] for p in predicted])
    feasible = cost <= threshold
    big = threshold * (len(predicted) + len(ground_truth)) + 1.0
    rows, cols = linear_sum_assignment(np.where(feasible, cost, big))
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if feasible[r, c])


def joint_set_metrics(
    predicted: Sequence[JointRecord], ground_truth: Sequence[JointRecord], match_threshold: float = 0.25
) -> dict:
    pred = [j for j in predicted if j.movable]
    gt = [j for j in ground_truth if j.movable]
    if not pred and not gt:
        return {"typeAccuracy": 1.0, "f1": 1.0, "matches": []}
    pairs = match_joints(pred, gt, match_threshold)
    m = len(pairs)
    f1 = 2.0 * m / (len(pred) + len(gt))
    acc = sum(pred[i].type == gt[j].type for i, j in pairs) / m if m else 0.0
    return {"typeAccuracy": acc, "f1": f1, "matches": pairs}
