"""Gradient checks of the network pieces at a tiny configuration."""
from __future__ import annotations

import numpy as np

from . import core
from .model import HFGCN, HypergraphAttention, HypergraphConv, ModelConfig, MultiScaleTemporalConv
from .topology import Topology, apply_hypergraphs

GRAD_TOLERANCE = 1e-4
CHECKS = ("ham", "hgcm", "mstc", "model")
ALL_OPS = ("conv1x1", "contract", "temporal_conv", "batchnorm", "tanh", "softmax")

# B=2 sequences, C=8 channels, T=8 frames, V=25 joints, K=4 classes
TINY = dict(batch=2, channels=8, frames=8, classes=4)


def tiny_model_config() -> ModelConfig:
    c = TINY["channels"]
    return ModelConfig(num_classes=TINY["classes"], blocks=((3, c, 1), (c, c, 2)),
                       num_persons=2, window=TINY["frames"])


def _named(module):
    names, params = zip(*module.named_parameters())
    return params, names


def check(name: str, seed: int = 0, samples: int = 3) -> core.GradReport:
    rng = np.random.default_rng([seed, CHECKS.index(name)])
    topo = Topology.build()
    B, C, T = TINY["batch"], TINY["channels"], TINY["frames"]
    V = topo.adjacency.shape[0]
    S = len(topo.hypergraphs)
    x = core.Tensor(rng.normal(size=(B, C, T, V)))
    if name == "model":
        cfg = tiny_model_config()
        model = HFGCN(cfg, topo, seed=seed)
        xin = rng.normal(size=(B, cfg.in_channels, T, V, cfg.num_persons))
        y = rng.integers(0, cfg.num_classes, size=B)
        params, names = _named(model)
        return core.gradient_report(lambda: core.label_smoothing_ce(model(xin), y),
                                    params, samples=samples, rng=rng, names=names)
    hx = apply_hypergraphs(x, topo.hypergraphs)
    ham = HypergraphAttention(C, C, S, rng)
    if name == "ham":
        r = rng.normal(size=(S, B, T, V, V))
        params, names = _named(ham)
        return core.gradient_report(lambda: (ham(x, hx) * r).sum(), params,
                                    samples=samples, rng=rng, names=names)
    if name == "hgcm":
        hgcm = HypergraphConv(C, C, C, S, rng)
        ha = ham(x, hx)
        r = rng.normal(size=(B, C, T, V))
        params, names = _named(hgcm)
        return core.gradient_report(lambda: (hgcm(x, hx, ha, topo.adjacency) * r).sum(),
                                    params, samples=samples, rng=rng, names=names)
    if name == "mstc":
        ms = MultiScaleTemporalConv(C, 2, rng)
        r = rng.normal(size=(B, C, core.out_frames(T, 2), V))
        params, names = _named(ms)
        return core.gradient_report(lambda: (ms(x) * r).sum(), params,
                                    samples=samples, rng=rng, names=names)
    raise ValueError(f"unknown check {name!r}; choose from {CHECKS}")


def run_checks(names=CHECKS, corrupt: bool = False, seed: int = 0,
               samples: int = 3) -> dict[str, core.GradReport]:
    """Run the named checks; ``corrupt`` scales every op adjoint (negative control)."""
    out = {}
    for n in names:
        if corrupt:
            with core.corrupt_adjoint(*ALL_OPS):
                out[n] = check(n, seed, samples)
        else:
            out[n] = check(n, seed, samples)
    return out


MAX_SKIPPED_FRACTION = 0.25


def passed(report: core.GradReport) -> bool:
    """Below tolerance, with at most a quarter of coordinates lost to kinks."""
    total = report.checked + report.skipped
    return (report.checked > 0 and report.max_error < GRAD_TOLERANCE
            and report.skipped <= MAX_SKIPPED_FRACTION * total)
