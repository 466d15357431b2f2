"""Skeleton sequences: text parsing, temporal resizing, modalities, container I/O."""
from __future__ import annotations

import io
import os
import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .skeleton import Layout, get_layout

MODALITIES = ("joint", "bone", "jmotion", "bmotion")

CONTAINER_MAGIC = b"HFG1"
CONTAINER_VERSION = 1


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class LayoutError(ValueError):
    pass


class ContainerError(ValueError):
    pass


@dataclass(eq=False)
class SkeletonSequence:
    """coords is (M_max, T_raw, V, 3), float32 meters; absent bodies are zeros."""
    coords: np.ndarray
    label: int
    sample_id: str

    def __post_init__(self):
        self.coords = np.ascontiguousarray(self.coords, dtype=np.float32)
        if self.coords.ndim != 4 or self.coords.shape[-1] != 3:
            raise ValueError(f"coords must be (M, T, V, 3), got {self.coords.shape}")
        if not np.isfinite(self.coords).all():
            raise ValueError(f"{self.sample_id}: coords contain NaN/Inf")

    @property
    def persons(self) -> int:
        return self.coords.shape[0]

    @property
    def frames(self) -> int:
        return self.coords.shape[1]

    @property
    def joints(self) -> int:
        return self.coords.shape[2]

    @property
    def present(self) -> np.ndarray:
        """(M, T) mask: a body is present in a frame if any coordinate is nonzero."""
        return np.any(self.coords != 0, axis=(2, 3))

    def __eq__(self, other):
        return (isinstance(other, SkeletonSequence) and self.label == other.label
                and self.sample_id == other.sample_id
                and self.coords.shape == other.coords.shape
                and np.array_equal(self.coords, other.coords))


@dataclass
class ModalityTensor:
    modality: str
    data: np.ndarray  # (3, T, V, M) float64

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")


# parsing -------------------------------------------------------------------

def motion_energy(track: np.ndarray) -> float:
    """Summed frame-to-frame joint displacement of one body (T, V, 3)."""
    if track.shape[0] < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(track, axis=0), axis=-1).sum())


def select_bodies(tracks: Sequence[np.ndarray], m_max: int) -> list[int]:
    """Indices of the ``m_max`` highest-energy tracks, kept in original order."""
    if len(tracks) <= m_max:
        return list(range(len(tracks)))
    energy = [motion_energy(t) for t in tracks]
    ranked = sorted(range(len(tracks)), key=lambda i: (-energy[i], i))
    return sorted(ranked[:m_max])


def parse_skeleton_text(text: str, layout: str | Layout = "ntu25", m_max: int = 2,
                        label: int = 0, sample_id: str = "") -> SkeletonSequence:
    """Read the NTU text skeleton format.

    Structure: frame count; per frame a body count; per body an info line
    whose first token is the body id, a joint count, then one line per
    joint starting with x y z.
    """
    lay = get_layout(layout) if isinstance(layout, str) else layout
    lines = text.splitlines()
    pos = 0

    def next_line() -> tuple[int, list[str]]:
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise ParseError("unexpected end of file", pos + 1)
        pos += 1
        return pos, lines[pos - 1].split()

    def read_int() -> tuple[int, int]:
        ln, toks = next_line()
        if len(toks) != 1:
            raise ParseError(f"expected a single count, got {len(toks)} tokens", ln)
        try:
            return ln, int(toks[0])
        except ValueError:
            raise ParseError(f"expected an integer, got {toks[0]!r}", ln) from None

    _, n_frames = read_int()
    if n_frames < 1:
        raise ParseError("sequence has no frames", 1)
    bodies: dict[str, np.ndarray] = {}
    order: list[str] = []
    for t in range(n_frames):
        _, n_bodies = read_int()
        for _ in range(n_bodies):
            ln, info = next_line()
            if not info:
                raise ParseError("missing body info line", ln)
            body_id = info[0]
            ln, n_joints = read_int()
            if n_joints != lay.num_joints:
                raise LayoutError(
                    f"line {ln}: {n_joints} joints but layout {lay.name} has {lay.num_joints}")
            if body_id not in bodies:
                bodies[body_id] = np.zeros((n_frames, lay.num_joints, 3), dtype=np.float32)
                order.append(body_id)
            for v in range(n_joints):
                ln, toks = next_line()
                if len(toks) < 3:
                    raise ParseError(f"joint line needs at least 3 values, got {len(toks)}", ln)
                try:
                    xyz = [float(s) for s in toks[:3]]
                except ValueError:
                    raise ParseError("non-numeric joint coordinate", ln) from None
                if not all(np.isfinite(xyz)):
                    raise ParseError("non-finite joint coordinate", ln)
                bodies[body_id][t, v] = xyz
    rest = [ln for ln in lines[pos:] if ln.strip()]
    if rest:
        raise ParseError(f"{len(rest)} trailing lines after the last frame", pos + 1)
    tracks = [bodies[b] for b in order]
    keep = select_bodies(tracks, m_max)
    coords = np.zeros((m_max, n_frames, lay.num_joints, 3), dtype=np.float32)
    for slot, i in enumerate(keep):
        coords[slot] = tracks[i]
    return SkeletonSequence(coords, label, sample_id)


_NTU_NAME = re.compile(r"S(\d{3})C(\d{3})P(\d{3})R(\d{3})A(\d{3})")


def label_from_name(name: str) -> int:
    """0-based action class from an NTU file name (``...A0xx``)."""
    m = _NTU_NAME.search(name)
    if not m:
        raise ParseError(f"cannot read an action label from {name!r}")
    return int(m.group(5)) - 1


def read_skeleton_file(path: str | os.PathLike, layout="ntu25", m_max: int = 2) -> SkeletonSequence:
    p = Path(path)
    return parse_skeleton_text(p.read_text(), layout, m_max, label_from_name(p.name), p.stem)


def format_skeleton_text(seq: SkeletonSequence) -> str:
    """Write a sequence back in the NTU text format (zeros for extra fields)."""
    out = io.StringIO()
    present = seq.present
    out.write(f"{seq.frames}\n")
    for t in range(seq.frames):
        ms = [m for m in range(seq.persons) if present[m, t]]
        out.write(f"{len(ms)}\n")
        for m in ms:
            out.write(f"{72057594037930000 + m} 0 1 1 1 1 0 0 0 2\n{seq.joints}\n")
            for v in range(seq.joints):
                x, y, z = (repr(float(c)) for c in seq.coords[m, t, v])
                out.write(f"{x} {y} {z} 0 0 0 0 0 0 0 0 2\n")
    return out.getvalue()


# temporal ------------------------------------------------------------------

def resize_temporal(seq: SkeletonSequence, t_target: int) -> SkeletonSequence:
    """Linear interpolation to ``t_target`` frames; endpoints map exactly."""
    if seq.frames < 1:
        raise ValueError("cannot resize an empty sequence")
    if t_target < 1:
        raise ValueError("t_target must be >= 1")
    if seq.frames == t_target:
        return SkeletonSequence(seq.coords.copy(), seq.label, seq.sample_id)
    return SkeletonSequence(interpolate_frames(seq.coords, t_target, axis=1), seq.label, seq.sample_id)


def interpolate_frames(a: np.ndarray, t_target: int, axis: int) -> np.ndarray:
    a = np.moveaxis(np.asarray(a), axis, 0)
    t_raw = a.shape[0]
    src = a.astype(np.float64)
    if t_raw == 1 or t_target == 1:
        pos = np.zeros(t_target)
    else:
        pos = np.arange(t_target) * ((t_raw - 1) / (t_target - 1))
    lo = np.minimum(np.floor(pos).astype(int), t_raw - 1)
    hi = np.minimum(lo + 1, t_raw - 1)
    w = (pos - lo).reshape((-1,) + (1,) * (a.ndim - 1))
    out = src[lo] * (1.0 - w) + src[hi] * w
    return np.moveaxis(out.astype(a.dtype), 0, axis)


def center_sequence(seq: SkeletonSequence, center_joint: int) -> np.ndarray:
    """Float64 copy with the first frame's center joint (first body) subtracted.

    Absent body-frames stay zero.
    """
    coords = seq.coords.astype(np.float64)
    origin = coords[0, 0, center_joint].copy()
    mask = seq.present
    coords[mask] -= origin
    return coords


def joint_modality(seq: SkeletonSequence, t_target: int, layout: str | Layout = "ntu25",
                   center: bool = True) -> ModalityTensor:
    lay = get_layout(layout) if isinstance(layout, str) else layout
    if seq.joints != lay.num_joints:
        raise LayoutError(f"{seq.sample_id}: {seq.joints} joints, layout expects {lay.num_joints}")
    coords = center_sequence(seq, lay.center) if center else seq.coords.astype(np.float64)
    if coords.shape[1] != t_target:
        coords = interpolate_frames(coords, t_target, axis=1)
    # (M, T, V, 3) -> (3, T, V, M)
    return ModalityTensor("joint", np.ascontiguousarray(coords.transpose(3, 1, 2, 0)))


def derive_bone(joint: ModalityTensor, bones) -> ModalityTensor:
    if joint.modality != "joint":
        raise ValueError(f"derive_bone expects the joint modality, got {joint.modality}")
    d = joint.data
    child = np.array([c for c, _ in bones])
    parent = np.array([p for _, p in bones])
    out = np.zeros_like(d)
    out[:, :, child] = d[:, :, child] - d[:, :, parent]
    return ModalityTensor("bone", out)


def derive_motion(x: ModalityTensor) -> ModalityTensor:
    kinds = {"joint": "jmotion", "bone": "bmotion"}
    if x.modality not in kinds:
        raise ValueError(f"no motion modality for {x.modality}")
    d = x.data
    if d.shape[1] < 2:
        raise ValueError("motion needs at least two frames")
    out = np.zeros_like(d)
    out[:, :-1] = d[:, 1:] - d[:, :-1]
    return ModalityTensor(kinds[x.modality], out)


def make_modality(seq: SkeletonSequence, modality: str, t_target: int,
                  layout: str | Layout = "ntu25", center: bool = True) -> ModalityTensor:
    lay = get_layout(layout) if isinstance(layout, str) else layout
    x = joint_modality(seq, t_target, lay, center)
    if modality in ("bone", "bmotion"):
        x = derive_bone(x, lay.bones)
    if modality in ("jmotion", "bmotion"):
        x = derive_motion(x)
    if x.modality != modality:
        raise ValueError(f"unknown modality {modality!r}")
    return x


@dataclass
class Dataset:
    """Batched model input (N, 3, T, V, M) with labels and sample ids."""
    x: np.ndarray
    y: np.ndarray
    ids: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.y)


def build_dataset(samples: Iterable[SkeletonSequence], modality: str, t_target: int,
                  layout: str | Layout = "ntu25", center: bool = True) -> Dataset:
    xs, ys, ids = [], [], []
    for s in samples:
        xs.append(make_modality(s, modality, t_target, layout, center).data)
        ys.append(s.label)
        ids.append(s.sample_id)
    if not xs:
        raise ValueError("empty dataset")
    return Dataset(np.stack(xs), np.asarray(ys, dtype=np.int64), ids)


# container -----------------------------------------------------------------

def write_container(samples: Sequence[SkeletonSequence], path, v: int | None = None,
                    m_max: int | None = None) -> None:
    samples = list(samples)
    if samples:
        v = samples[0].joints if v is None else v
        m_max = samples[0].persons if m_max is None else m_max
    v = 25 if v is None else v
    m_max = 2 if m_max is None else m_max
    buf = io.BytesIO()
    buf.write(CONTAINER_MAGIC)
    buf.write(struct.pack("<IIII", CONTAINER_VERSION, len(samples), v, m_max))
    for s in samples:
        if s.joints != v or s.persons != m_max:
            raise ContainerError(f"{s.sample_id}: shape {s.coords.shape} does not match V={v}, M={m_max}")
        sid = s.sample_id.encode("utf-8")
        payload = (struct.pack("<I", len(sid)) + sid + struct.pack("<II", s.label, s.frames)
                   + s.coords.astype("<f4").tobytes())
        buf.write(payload)
        buf.write(struct.pack("<I", zlib.crc32(payload)))
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "xb") as f:
        f.write(buf.getvalue())
    os.replace(tmp, path)


def read_container(path) -> list[SkeletonSequence]:
    raw = Path(path).read_bytes()
    if raw[:4] != CONTAINER_MAGIC:
        raise ContainerError("bad magic; not an HFG1 container")
    try:
        version, count, v, m_max = struct.unpack_from("<IIII", raw, 4)
    except struct.error:
        raise ContainerError("truncated header") from None
    if version != CONTAINER_VERSION:
        raise ContainerError(f"unsupported container version {version}")
    pos = 20
    out = []
    try:
        for k in range(count):
            start = pos
            (n,) = struct.unpack_from("<I", raw, pos)
            label, t_raw = struct.unpack_from("<II", raw, pos + 4 + n)
            nbytes = 4 * m_max * t_raw * v * 3
            end = pos + 12 + n + nbytes
            if end + 4 > len(raw):
                raise ContainerError(f"sample {k}: truncated payload")
            (crc,) = struct.unpack_from("<I", raw, end)
            if zlib.crc32(raw[start:end]) != crc:
                raise ContainerError(f"sample {k}: checksum mismatch")
            sid = raw[pos + 4:pos + 4 + n].decode("utf-8")
            coords = np.frombuffer(raw, dtype="<f4", count=nbytes // 4, offset=pos + 12 + n)
            pos = end + 4
            out.append(SkeletonSequence(coords.reshape(m_max, t_raw, v, 3).astype(np.float32),
                                        label, sid))
    except struct.error:
        raise ContainerError("truncated container") from None
    if pos != len(raw):
        raise ContainerError(f"{len(raw) - pos} trailing bytes after last sample")
    return out
