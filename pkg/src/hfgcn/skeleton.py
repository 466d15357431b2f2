"""Skeleton layouts: joint names, bone pairs and reference joints."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Layout:
    name: str
    joints: tuple[str, ...]
    # (child, parent); the root is paired with itself
    bones: tuple[tuple[int, int], ...]
    center: int

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    @property
    def root(self) -> int:
        return next(c for c, p in self.bones if c == p)

    def parent(self) -> list[int]:
        par = [-1] * self.num_joints
        for c, p in self.bones:
            par[c] = p
        return par

    def edges(self) -> list[tuple[int, int]]:
        """Undirected physical edges (self pairs dropped)."""
        return [(c, p) for c, p in self.bones if c != p]


NTU25_JOINTS = (
    "spine_base", "spine_mid", "neck", "head",
    "shoulder_left", "elbow_left", "wrist_left", "hand_left",
    "shoulder_right", "elbow_right", "wrist_right", "hand_right",
    "hip_left", "knee_left", "ankle_left", "foot_left",
    "hip_right", "knee_right", "ankle_right", "foot_right",
    "spine_shoulder", "handtip_left", "thumb_left", "handtip_right", "thumb_right",
)

# 1-based NTU pairs, rooted at the spine-shoulder joint (21)
_NTU25_PAIRS_1 = (
    (1, 2), (2, 21), (3, 21), (4, 3), (5, 21), (6, 5), (7, 6), (8, 7),
    (9, 21), (10, 9), (11, 10), (12, 11), (13, 1), (14, 13), (15, 14), (16, 15),
    (17, 1), (18, 17), (19, 18), (20, 19), (21, 21), (22, 23), (23, 8), (24, 25),
    (25, 12),
)

NTU25 = Layout(
    name="ntu25",
    joints=NTU25_JOINTS,
    bones=tuple((c - 1, p - 1) for c, p in _NTU25_PAIRS_1),
    center=1,
)

LAYOUTS = {"ntu25": NTU25}


def get_layout(name: str) -> Layout:
    try:
        return LAYOUTS[name]
    except KeyError:
        raise ValueError(f"unknown skeleton layout {name!r}; known: {sorted(LAYOUTS)}") from None


def validate_bones(bones, v: int) -> None:
    children = [c for c, _ in bones]
    if len(bones) != v or sorted(children) != list(range(v)):
        raise ValueError("bone list must name every joint exactly once as child")
    if any(not (0 <= p < v) for _, p in bones):
        raise ValueError("bone parent index out of range")
