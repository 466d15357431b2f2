"""Optimizer, schedule, train/evaluate loops, score fusion and a synthetic benchmark."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import core
from .core import Parameter
from .data import Dataset, SkeletonSequence, build_dataset
from .model import HFGCN
from .skeleton import NTU25


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 120
    momentum: float = 0.9
    weight_decay: float = 0.0004
    base_lr: float = 0.1
    warmup_epochs: int = 5
    milestones: tuple = (60, 90)
    decay: float = 0.1
    label_smooth: float = 0.1
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        self.validate()

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.base_lr <= 0 or self.decay <= 0:
            raise ValueError("base_lr and decay must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0 or self.warmup_epochs < 0:
            raise ValueError("weight_decay and warmup_epochs must be non-negative")
        if not 0 <= self.label_smooth < 1:
            raise ValueError("label_smooth must lie in [0, 1)")
        ms = list(self.milestones)
        if ms != sorted(set(ms)) or any(m <= 0 or m >= self.epochs for m in ms):
            raise ValueError(f"milestones {ms} must be ascending and inside (0, {self.epochs})")

    def to_dict(self) -> dict:
        return asdict(self)


# schedule and optimizer ----------------------------------------------------

def lr_at(epoch: int, step: int, cfg: TrainConfig, steps_per_epoch: int = 1) -> float:
    """Linear per-step warmup from zero, then step decay at each milestone."""
    if steps_per_epoch < 1 or not 0 <= step < steps_per_epoch:
        raise ValueError(f"step {step} outside an epoch of {steps_per_epoch} steps")
    if epoch < cfg.warmup_epochs:
        done = epoch * steps_per_epoch + step
        return cfg.base_lr * done / (cfg.warmup_epochs * steps_per_epoch)
    passed = sum(1 for m in cfg.milestones if epoch >= m)
    # dividing by the inverse factor keeps 0.1 -> 0.01 -> 0.001 exact in binary floats
    return cfg.base_lr / (1.0 / cfg.decay) ** passed


def sgd_step(params: Sequence[Parameter], velocity: dict, lr: float, momentum: float,
             weight_decay: float) -> None:
    """v <- m v + g + wd w (wd only where ``param.decay``); w <- w - lr v.

    ``velocity`` maps id(param) to its buffer and is updated in place.
    """
    params = list(params)
    if any(p.grad is None for p in params):
        raise TrainingError("sgd_step before backward: a parameter has no gradient")
    for p in params:
        g = p.grad
        if p.decay and weight_decay:
            g = g + weight_decay * p.data
        v = velocity.get(id(p))
        v = g.copy() if v is None else momentum * v + g
        velocity[id(p)] = v
        if lr:
            p.data -= lr * v


class SGD:
    def __init__(self, named_params, momentum: float, weight_decay: float):
        self.named = list(named_params)
        self.momentum, self.weight_decay = momentum, weight_decay
        self.velocity: dict[int, np.ndarray] = {}

    @property
    def params(self) -> list[Parameter]:
        return [p for _, p in self.named]

    def step(self, lr: float) -> None:
        sgd_step(self.params, self.velocity, lr, self.momentum, self.weight_decay)

    def state(self) -> dict[str, np.ndarray]:
        return {n: self.velocity[id(p)] for n, p in self.named if id(p) in self.velocity}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        self.velocity = {}
        for n, p in self.named:
            if n in state:
                self.velocity[id(p)] = np.array(state[n], dtype=np.float64)


# scores and metrics --------------------------------------------------------

@dataclass
class ScoreTable:
    ids: list
    labels: np.ndarray
    scores: np.ndarray  # (N, K)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.ids = list(self.ids)
        if self.scores.ndim != 2 or len(self.ids) != self.scores.shape[0] != len(self.labels):
            raise ValueError("ids, labels and score rows disagree")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate sample ids in score table")

    @property
    def num_classes(self) -> int:
        return self.scores.shape[1]

    def predictions(self) -> np.ndarray:
        return self.scores.argmax(axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "label"] + [f"score_{k}" for k in range(self.num_classes)])
            for sid, lab, row in zip(self.ids, self.labels, self.scores):
                w.writerow([sid, int(lab)] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "ScoreTable":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:2] != ["sample_id", "label"]:
            raise ValueError(f"{path}: not a score table")
        k = len(rows[0]) - 2
        body = rows[1:]
        if any(len(r) != k + 2 for r in body):
            raise ValueError(f"{path}: ragged rows")
        return cls([r[0] for r in body], [int(r[1]) for r in body],
                   np.array([[float(v) for v in r[2:]] for r in body]).reshape(len(body), k))


@dataclass
class Metrics:
    top1: float
    per_class: dict
    loss: float | None = None
    loss_curve: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.top1 <= 1.0:
            raise ValueError("accuracy outside [0, 1]")


def accuracy_metrics(labels: np.ndarray, preds: np.ndarray, num_classes: int,
                     loss: float | None = None) -> Metrics:
    labels, preds = np.asarray(labels), np.asarray(preds)
    per_class = {}
    for k in range(num_classes):
        sel = labels == k
        if sel.any():
            per_class[k] = float((preds[sel] == k).mean())
    return Metrics(float((preds == labels).mean()), per_class, loss)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(ds: Dataset, num_classes: int):
    if len(ds) == 0:
        raise ValueError("empty dataset")
    if np.any(ds.y < 0) or np.any(ds.y >= num_classes):
        raise ValueError(f"label outside [0, {num_classes})")


def predict_logits(model: HFGCN, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    was = model.training
    model.eval()
    try:
        out = [model(x[i:i + batch_size]).data for i in range(0, len(x), batch_size)]
    finally:
        model.train(was)
    return np.concatenate(out)


def evaluate(model: HFGCN, ds: Dataset, batch_size: int = 64,
             label_smooth: float = 0.0) -> tuple[Metrics, ScoreTable]:
    """Eval-mode pass; the score table holds softmax probabilities."""
    _check_labels(ds, model.cfg.num_classes)
    logits = predict_logits(model, ds.x, batch_size)
    loss = core.label_smoothing_ce(core.Tensor(logits), ds.y, label_smooth).item()
    ids = ds.ids or [str(i) for i in range(len(ds))]
    table = ScoreTable(ids, ds.y, _softmax(logits))
    return accuracy_metrics(ds.y, table.predictions(), model.cfg.num_classes, loss), table


def fuse_scores(tables: Sequence[ScoreTable], weights: Sequence[float] | None = None,
                space: str = "prob") -> tuple[ScoreTable, np.ndarray]:
    """Weighted sum of per-stream scores; returns the fused table and argmax.

    ``space="log"`` sums log-probabilities. Per sample, log-softmax differs
    from the logits by a constant, so this ranks classes exactly as a
    weighted sum of logits would.
    """
    tables = list(tables)
    if not tables:
        raise ValueError("no score tables to fuse")
    weights = [1.0] * len(tables) if weights is None else [float(w) for w in weights]
    if len(weights) != len(tables):
        raise ValueError(f"{len(weights)} weights for {len(tables)} tables")
    if space not in ("prob", "log"):
        raise ValueError(f"unknown fusion space {space!r}")
    ref = tables[0]
    order = {sid: i for i, sid in enumerate(ref.ids)}
    fused = np.zeros_like(ref.scores)
    for t, w in zip(tables, weights):
        if set(t.ids) != set(ref.ids) or len(t.ids) != len(ref.ids):
            raise ValueError("score tables cover different sample ids")
        if t.num_classes != ref.num_classes:
            raise ValueError("score tables disagree on the class count")
        idx = np.array([order[s] for s in t.ids])
        if np.any(ref.labels[idx] != t.labels):
            raise ValueError("score tables disagree on labels")
        s = np.log(np.maximum(t.scores, 1e-300)) if space == "log" else t.scores
        fused[idx] += w * s
    out = ScoreTable(ref.ids, ref.labels, fused)
    return out, out.predictions()


# training loop -------------------------------------------------------------

@dataclass
class TrainResult:
    metrics: Metrics
    epochs_run: int
    history: list


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(model: HFGCN, ds: Dataset, cfg: TrainConfig, checkpoint_path=None,
          metrics_path=None, resume_from=None, stop_at: float | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """SGD with momentum over shuffled mini-batches.

    Shuffling is derived from (seed, epoch), so a run resumed from a
    checkpoint replays the same batches as an uninterrupted one. With
    ``stop_at`` the run ends once eval-mode accuracy on ``ds`` reaches it.
    """
    from .checkpoint import load_checkpoint, save_checkpoint

    _check_labels(ds, model.cfg.num_classes)
    n = len(ds)
    steps = math.ceil(n / cfg.batch_size)
    opt = SGD(model.named_parameters(), cfg.momentum, cfg.weight_decay)
    start = 0
    if resume_from is not None:
        state = load_checkpoint(resume_from, model)
        opt.load_state(state.velocity)
        start = state.epoch
    history = []
    metrics_fh = open(metrics_path, "a") if metrics_path is not None else None
    epoch = start
    try:
        for epoch in range(start, cfg.epochs):
            model.train()
            order = epoch_order(cfg.seed, epoch, n)
            total, correct = 0.0, 0
            for step in range(steps):
                sel = order[step * cfg.batch_size:(step + 1) * cfg.batch_size]
                lr = lr_at(epoch, step, cfg, steps)
                model.zero_grad()
                with core.Tape() as tape:
                    logits = model(ds.x[sel])
                    loss = core.label_smoothing_ce(logits, ds.y[sel], cfg.label_smooth)
                if not np.isfinite(loss.data):
                    raise TrainingError(f"non-finite loss at epoch {epoch} step {step}")
                tape.backward(loss)
                opt.step(lr)
                total += loss.item() * len(sel)
                correct += int((logits.data.argmax(axis=1) == ds.y[sel]).sum())
            rec = {"epoch": epoch + 1, "loss": total / n, "train_top1_running": correct / n,
                   "lr": lr}
            if stop_at is not None and correct / n >= stop_at:
                rec["train_top1"] = evaluate(model, ds)[0].top1
            history.append(rec)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(rec) + "\n")
                metrics_fh.flush()
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, model, epoch + 1, opt.state(),
                                extra={"train": cfg.to_dict()})
            if on_epoch is not None:
                on_epoch(rec)
            if stop_at is not None and rec.get("train_top1", 0.0) >= stop_at:
                epoch += 1
                break
        else:
            epoch = cfg.epochs
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    metrics = evaluate(model, ds)[0]
    metrics.loss_curve = [r["loss"] for r in history]
    return TrainResult(metrics, epoch, history)


# synthetic benchmark -------------------------------------------------------

# approximate standing pose in meters (x right, y up, z toward the camera)
REST_POSE = np.array([
    [0.00, 0.00, 0.00], [0.00, 0.30, 0.00], [0.00, 0.58, 0.00], [0.00, 0.72, 0.00],
    [-0.18, 0.52, 0.00], [-0.22, 0.26, 0.00], [-0.24, 0.02, 0.00], [-0.25, -0.05, 0.00],
    [0.18, 0.52, 0.00], [0.22, 0.26, 0.00], [0.24, 0.02, 0.00], [0.25, -0.05, 0.00],
    [-0.09, -0.02, 0.00], [-0.10, -0.42, 0.00], [-0.10, -0.80, 0.00], [-0.10, -0.85, 0.10],
    [0.09, -0.02, 0.00], [0.10, -0.42, 0.00], [0.10, -0.80, 0.00], [0.10, -0.85, 0.10],
    [0.00, 0.50, 0.00], [-0.25, -0.12, 0.00], [-0.22, -0.06, 0.03],
    [0.25, -0.12, 0.00], [0.22, -0.06, 0.03],
])

# body parts as (pivot joint, members)
BODY_PARTS = (
    (0, (0, 1, 2, 3, 20)),
    (4, (4, 5, 6, 7, 21, 22)),
    (8, (8, 9, 10, 11, 23, 24)),
    (12, (12, 13, 14, 15)),
    (16, (16, 17, 18, 19)),
)


def _rotate(points: np.ndarray, axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Rodrigues rotation of (P, 3) points by per-frame angles (T,) -> (T, P, 3)."""
    c, s = np.cos(angle)[:, None, None], np.sin(angle)[:, None, None]
    cross = np.cross(axis, points)
    dot = (points @ axis)[:, None] * axis
    return points * c + cross * s + dot * (1 - c)


@dataclass(frozen=True)
class ClassFamily:
    freq: np.ndarray   # (K, P) cycles per sequence
    amp: np.ndarray    # (K, P) radians
    phase: np.ndarray  # (K, P)
    axis: np.ndarray   # (K, P, 3) unit vectors


def class_families(k: int, seed: int) -> ClassFamily:
    rng = np.random.default_rng([seed, 0xC1A55])
    p = len(BODY_PARTS)
    axis = rng.normal(size=(k, p, 3))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    return ClassFamily(rng.integers(1, 4, size=(k, p)).astype(float),
                       rng.uniform(0.2, 0.8, size=(k, p)),
                       rng.uniform(0, 2 * np.pi, size=(k, p)), axis)


def synth_sequences(classes: int, per_class: int, frames: int, joints: int = 25,
                    seed: int = 0, noise: float = 0.0, class_seed: int | None = None,
                    persons: int = 1) -> list[SkeletonSequence]:
    """Rotating body-part trajectories on the 25-joint skeleton.

    Every class fixes a frequency, amplitude, phase and rotation axis per
    body part (drawn from ``class_seed``, default ``seed``). Each sample
    adds phase and amplitude jitter and a random placement (from ``seed``),
    plus Gaussian coordinate noise of std ``noise`` meters.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    if joints != NTU25.num_joints:
        raise ValueError(f"synthetic skeletons have {NTU25.num_joints} joints, not {joints}")
    if per_class < 1 or frames < 2 or persons < 1 or noise < 0:
        raise ValueError("invalid synthetic dataset shape or noise")
    fam = class_families(classes, seed if class_seed is None else class_seed)
    rng = np.random.default_rng([seed, 0x5A4D])
    t = np.arange(frames) / frames
    out = []
    for c in range(classes):
        for i in range(per_class):
            pose = np.repeat(REST_POSE[None], frames, axis=0)
            for p, (pivot, members) in enumerate(BODY_PARTS):
                jitter = rng.normal(0, 0.25)
                scale = rng.uniform(0.85, 1.15)
                angle = scale * fam.amp[c, p] * np.sin(2 * np.pi * fam.freq[c, p] * t
                                                       + fam.phase[c, p] + jitter)
                rel = REST_POSE[list(members)] - REST_POSE[pivot]
                pose[:, list(members)] = REST_POSE[pivot] + _rotate(rel, fam.axis[c, p], angle)
            pose = pose + np.array([rng.normal(0, 0.5), 0.0, 3.0 + rng.normal(0, 0.3)])
            if noise:
                pose = pose + rng.normal(0, noise, size=pose.shape)
            coords = np.zeros((persons, frames, joints, 3), dtype=np.float32)
            coords[0] = pose
            out.append(SkeletonSequence(coords, c, f"synth{seed}_{c:03d}_{i:04d}"))
    return out


def synth_dataset(classes: int, per_class: int, frames: int, joints: int = 25, seed: int = 0,
                  noise: float = 0.0, modality: str = "joint", class_seed: int | None = None,
                  persons: int = 1) -> Dataset:
    seqs = synth_sequences(classes, per_class, frames, joints, seed, noise, class_seed, persons)
    return build_dataset(seqs, modality, frames, NTU25)


def nearest_centroid_accuracy(train: Dataset, test: Dataset) -> float:
    """Accuracy of assigning each test sample to the closest class-mean training sample."""
    x = train.x.reshape(len(train), -1)
    classes = np.unique(train.y)
    cent = np.stack([x[train.y == k].mean(axis=0) for k in classes])
    xt = test.x.reshape(len(test), -1)
    d = ((xt[:, None, :] - cent[None]) ** 2).sum(axis=-1)
    return float((classes[d.argmin(axis=1)] == test.y).mean())
