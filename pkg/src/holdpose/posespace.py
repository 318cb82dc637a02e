"""The 16 holding poses: one gripper-down reference plus three groups of five.

The gripper frame has its approach direction along local -z and the finger
closing axis (pad normal) along local +y. The reference orientation is the
identity, so the gripper faces straight down in the world frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial.transform import Rotation

N_POSES = 16
GROUP_SIZE = 5
APPROACH_LOCAL = np.array([0.0, 0.0, -1.0])
CLOSING_AXIS_LOCAL = np.array([0.0, 1.0, 0.0])


class PoseGroup(str, Enum):
    REFERENCE = "Reference"
    G1 = "G1"
    G2 = "G2"
    G3 = "G3"


NON_REFERENCE_GROUPS = (PoseGroup.G1, PoseGroup.G2, PoseGroup.G3)


def _pitch90() -> tuple[float, float, float, float]:
    return tuple(Rotation.from_rotvec([0.0, np.pi / 2, 0.0]).as_quat())


@dataclass(frozen=True)
class PoseSpaceConfig:
    """Per-group rotation axis, start angle and increment (degrees).

    ``group_bases`` are quaternions (x, y, z, w) applied before the group
    rotation; the overhead group starts from a 90 degree pitch.
    """

    group_axes: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (1.0, 0.0, 0.0))
    group_start_angles: tuple = (30.0, 30.0, 15.0)
    group_increments: tuple = (30.0, 30.0, 15.0)
    group_bases: tuple = field(default_factory=lambda: ((0.0, 0.0, 0.0, 1.0), (0.0, 0.0, 0.0, 1.0), _pitch90()))

    def validate(self) -> None:
        for name in ("group_axes", "group_start_angles", "group_increments", "group_bases"):
            if len(getattr(self, name)) != 3:
                raise ValueError(f"{name} must have one entry per group (3)")
        for ax in self.group_axes:
            n = np.linalg.norm(ax)
            if len(ax) != 3 or abs(n - 1.0) > 1e-9:
                raise ValueError(f"group axis {ax} is not a unit 3-vector")
        for inc in self.group_increments:
            if inc == 0 or not np.isfinite(inc):
                raise ValueError("group increment must be nonzero")
        for q in self.group_bases:
            if len(q) != 4 or abs(np.linalg.norm(q) - 1.0) > 1e-9:
                raise ValueError(f"group base {q} is not a unit quaternion")


@dataclass(frozen=True)
class HoldingPose:
    pose_id: int
    group: PoseGroup
    quat_xyzw: tuple[float, float, float, float]
    index_in_group: int
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    angle_deg: float = 0.0

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.quat_xyzw)

    @property
    def matrix(self) -> np.ndarray:
        """World-from-gripper rotation matrix."""
        return self.rotation.as_matrix()

    @property
    def approach(self) -> np.ndarray:
        return self.rotation.apply(APPROACH_LOCAL)

    @property
    def closing_axis(self) -> np.ndarray:
        return self.rotation.apply(CLOSING_AXIS_LOCAL)


def pose_group(pose_id: int) -> PoseGroup:
    if isinstance(pose_id, bool) or int(pose_id) != pose_id or not 1 <= pose_id <= N_POSES:
        raise ValueError(f"pose id {pose_id!r} outside 1..{N_POSES}")
    if pose_id == 1:
        return PoseGroup.REFERENCE
    return NON_REFERENCE_GROUPS[(pose_id - 2) // GROUP_SIZE]


def group_pose_ids(group: PoseGroup) -> tuple[int, ...]:
    group = PoseGroup(group)
    if group is PoseGroup.REFERENCE:
        return (1,)
    g = NON_REFERENCE_GROUPS.index(group)
    first = 2 + g * GROUP_SIZE
    return tuple(range(first, first + GROUP_SIZE))


def generate_pose_space(cfg: PoseSpaceConfig | None = None) -> list[HoldingPose]:
    cfg = cfg or PoseSpaceConfig()
    cfg.validate()
    reference = Rotation.identity()
    poses = [HoldingPose(1, PoseGroup.REFERENCE, tuple(reference.as_quat()), 0)]
    for g, group in enumerate(NON_REFERENCE_GROUPS):
        axis = np.asarray(cfg.group_axes[g], dtype=float)
        base = Rotation.from_quat(cfg.group_bases[g])
        for k in range(GROUP_SIZE):
            angle = cfg.group_start_angles[g] + k * cfg.group_increments[g]
            rot = Rotation.from_rotvec(np.deg2rad(angle) * axis) * base * reference
            q = rot.as_quat()
            if q[3] < 0:  # canonical sign
                q = -q
            poses.append(
                HoldingPose(
                    pose_id=2 + g * GROUP_SIZE + k,
                    group=group,
                    quat_xyzw=tuple(float(v) for v in q),
                    index_in_group=k,
                    axis=tuple(float(v) for v in axis),
                    angle_deg=float(angle),
                )
            )
    return poses


def pose_table(poses: list[HoldingPose]) -> list[dict]:
    """Serializable table (id, group, axis, angle, quaternion)."""
    return [
        {
            "pose_id": p.pose_id,
            "group": p.group.value,
            "axis": list(p.axis),
            "angle_deg": p.angle_deg,
            "quat_xyzw": list(p.quat_xyzw),
            "index_in_group": p.index_in_group,
        }
        for p in poses
    ]


def poses_from_table(rows: list[dict]) -> list[HoldingPose]:
    return [
        HoldingPose(
            pose_id=int(r["pose_id"]),
            group=PoseGroup(r["group"]),
            quat_xyzw=tuple(r["quat_xyzw"]),
            index_in_group=int(r.get("index_in_group", 0)),
            axis=tuple(r.get("axis", (0.0, 0.0, 1.0))),
            angle_deg=float(r.get("angle_deg", 0.0)),
        )
        for r in rows
    ]
