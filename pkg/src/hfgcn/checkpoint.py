"""HFGW1 weight files: named float64 blobs plus a JSON header.

Layout: magic ``HFGW1``, u32 header length, UTF-8 JSON header, the blobs
back to back, then a CRC32 of everything before it. The header echoes the
model config and lists each blob's name, shape and byte offset.
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import HFGCN, ModelConfig

MAGIC = b"HFGW1"


class CheckpointError(ValueError):
    pass


@dataclass
class CheckpointState:
    config: ModelConfig
    epoch: int
    velocity: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def _blobs(model: HFGCN, velocity: dict) -> dict[str, np.ndarray]:
    out = {f"param/{n}": p.data for n, p in model.named_parameters()}
    for n, s in model.named_stats():
        out[f"stats/{n}.mean"] = s.mean
        out[f"stats/{n}.var"] = s.var
    for n, v in velocity.items():
        out[f"velocity/{n}"] = v
    return out


def save_checkpoint(path, model: HFGCN, epoch: int = 0, velocity: dict | None = None,
                    extra: dict | None = None) -> None:
    blobs = _blobs(model, velocity or {})
    entries, offset = [], 0
    for name, arr in blobs.items():
        nbytes = arr.size * 8
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += nbytes
    header = {
        "config": model.cfg.to_dict(),
        "epoch": int(epoch),
        "stats_ready": {n: bool(s.ready) for n, s in model.named_stats()},
        "entries": entries,
        "extra": extra or {},
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<I", len(hb)) + hb + b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes() for a in blobs.values())
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body)))
    os.replace(tmp, path)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise CheckpointError(f"{path}: not an HFGW1 checkpoint")
    if len(raw) < 13:
        raise CheckpointError(f"{path}: truncated")
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) != crc:
        raise CheckpointError(f"{path}: checksum mismatch")
    (hlen,) = struct.unpack_from("<I", raw, 5)
    header = json.loads(raw[9:9 + hlen].decode("utf-8"))
    base = 9 + hlen
    blobs = {}
    for e in header["entries"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        start = base + e["offset"]
        if start + 8 * count > len(raw) - 4:
            raise CheckpointError(f"{path}: blob {e['name']} runs past the end")
        blobs[e["name"]] = np.frombuffer(raw, dtype="<f8", count=count,
                                         offset=start).reshape(e["shape"]).astype(np.float64)
    return header, blobs


def config_from_header(header: dict) -> ModelConfig:
    return ModelConfig(**header["config"])


def load_checkpoint(path, model: HFGCN) -> CheckpointState:
    """Restore parameters and BN statistics into ``model`` in place."""
    header, blobs = read_checkpoint(path)
    cfg = config_from_header(header)
    if cfg != model.cfg:
        raise CheckpointError("checkpoint config differs from the model config")
    for n, p in model.named_parameters():
        key = f"param/{n}"
        if key not in blobs or blobs[key].shape != p.shape:
            raise CheckpointError(f"missing or misshapen parameter {n}")
        p.data[...] = blobs[key]
    ready = header.get("stats_ready", {})
    for n, s in model.named_stats():
        s.mean = blobs[f"stats/{n}.mean"].copy()
        s.var = blobs[f"stats/{n}.var"].copy()
        s.ready = bool(ready.get(n, True))
    velocity = {k[len("velocity/"):]: v for k, v in blobs.items() if k.startswith("velocity/")}
    return CheckpointState(cfg, int(header["epoch"]), velocity, header.get("extra", {}))


def model_from_checkpoint(path) -> tuple[HFGCN, CheckpointState]:
    header, _ = read_checkpoint(path)
    model = HFGCN(config_from_header(header))
    return model, load_checkpoint(path, model)
