"""HFGCN: hypergraph attention + hypergraph convolution + multi-scale temporal conv."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import core
from .core import Parameter, Tensor
from .nn import BatchNorm, Conv1x1, Module, TemporalConv
from .topology import HYPERGRAPH_NAMES, Topology, apply_hypergraphs

DEFAULT_BLOCKS = (
    (3, 64, 1), (64, 64, 1), (64, 64, 1), (64, 64, 1),
    (64, 128, 2), (128, 128, 1), (128, 128, 1),
    (128, 256, 2), (256, 256, 1), (256, 256, 1),
)

ATTENTION_MODES = ("ham", "am", "none")
GCN_MODES = ("hgcm", "gcm", "plain")
HAM_MODES = ("per-branch", "summed")
XI_INPUTS = ("hx", "x")
TEMPORAL_KERNEL = 5
TEMPORAL_DILATIONS = (1, 2)
POOL_KERNEL = 3
PLAIN_SUBSETS = 3


def reduced_blocks(n_blocks: int, base: int, in_channels: int = 3) -> tuple:
    """Smaller block table: width doubles with stride 2 once (short nets) or twice."""
    if n_blocks < 1:
        raise ValueError("need at least one block")
    if n_blocks >= 8:
        ups = {2 * n_blocks // 5, 7 * n_blocks // 10}
    else:
        ups = {n_blocks // 2} if n_blocks >= 2 else set()
    table, cin, width = [], in_channels, base
    for i in range(n_blocks):
        stride = 1
        if i in ups:
            width, stride = width * 2, 2
        table.append((cin, width, stride))
        cin = width
    return tuple(table)


@dataclass(frozen=True)
class ModelConfig:
    layout: str = "ntu25"
    num_joints: int = 25
    num_classes: int = 60
    num_persons: int = 2
    window: int = 64
    in_channels: int = 3
    blocks: tuple = DEFAULT_BLOCKS
    reduction: int = 8
    min_embed: int = 8
    hypergraphs: tuple = HYPERGRAPH_NAMES
    attention: str = "ham"
    gcn: str = "hgcm"
    ham_mode: str = "per-branch"
    xi_input: str = "hx"

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(tuple(int(v) for v in b) for b in self.blocks))
        object.__setattr__(self, "hypergraphs", tuple(self.hypergraphs))
        self.validate()

    def validate(self):
        if not self.blocks:
            raise ValueError("block table is empty")
        if self.blocks[0][0] != self.in_channels:
            raise ValueError(f"first block must take {self.in_channels} input channels")
        for (_, cout, _), (cin, _, _) in zip(self.blocks, self.blocks[1:]):
            if cout != cin:
                raise ValueError("block widths do not chain")
        for cin, cout, stride in self.blocks:
            if stride not in (1, 2):
                raise ValueError(f"temporal stride must be 1 or 2, got {stride}")
            if cout < 4:
                raise ValueError("blocks need at least 4 output channels")
        if self.attention not in ATTENTION_MODES:
            raise ValueError(f"attention must be one of {ATTENTION_MODES}")
        if self.gcn not in GCN_MODES:
            raise ValueError(f"gcn must be one of {GCN_MODES}")
        if self.ham_mode not in HAM_MODES:
            raise ValueError(f"ham_mode must be one of {HAM_MODES}")
        if self.xi_input not in XI_INPUTS:
            raise ValueError(f"xi_input must be one of {XI_INPUTS}")
        if self.gcn == "plain" and self.attention != "none":
            raise ValueError("the plain graph convolution takes no attention maps")
        unknown = set(self.hypergraphs) - set(HYPERGRAPH_NAMES)
        if unknown:
            raise ValueError(f"unknown hypergraphs {sorted(unknown)}")
        if len(set(self.hypergraphs)) != len(self.hypergraphs):
            raise ValueError("hypergraph listed twice")
        if self.uses_hypergraphs and not self.hypergraphs:
            raise ValueError("at least one hypergraph must be enabled")
        if self.reduction < 1 or self.num_classes < 2 or self.num_persons < 1:
            raise ValueError("invalid reduction / class count / person count")

    @property
    def uses_hypergraphs(self) -> bool:
        return self.attention == "ham" or self.gcn == "hgcm"

    @property
    def needs_hx(self) -> bool:
        return self.attention == "ham" or (self.gcn == "hgcm" and self.xi_input == "hx")

    @property
    def branches(self) -> int:
        return len(self.hypergraphs) if self.uses_hypergraphs else PLAIN_SUBSETS

    def embed_width(self, cin: int) -> int:
        return max(cin // self.reduction, self.min_embed)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kw) -> "ModelConfig":
        return replace(self, **kw)


PRESETS = {
    "full": {},
    "baseline": {"attention": "none", "gcn": "plain"},
    "gcm": {"attention": "none", "gcn": "gcm"},
    "hgcm": {"attention": "none", "gcn": "hgcm"},
    "hgcm-am": {"attention": "am", "gcn": "hgcm"},
    "h1": {"hypergraphs": ("h1",)},
    "h2": {"hypergraphs": ("h2",)},
    "h3": {"hypergraphs": ("h3",)},
    "h1+h2": {"hypergraphs": ("h1", "h2")},
    "h1+h3": {"hypergraphs": ("h1", "h3")},
    "h2+h3": {"hypergraphs": ("h2", "h3")},
}

# Published (params M, GFLOPs) budgets for the NTU-120 ablation configurations.
BUDGETS = {
    "baseline": (1.18, 1.46), "gcm": (1.46, 1.97), "hgcm": (1.63, 2.03),
    "hgcm-am": (1.58, 1.98), "full": (1.81, 2.24),
    "h1": (1.08, 1.34), "h2": (1.08, 1.34), "h3": (1.08, 1.34),
    "h1+h2": (1.44, 1.80), "h1+h3": (1.44, 1.80), "h2+h3": (1.44, 1.80),
}


def preset(name: str, **overrides) -> ModelConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    kw = {"num_classes": 120, **PRESETS[name], **overrides}
    return ModelConfig(**kw)


# modules ---------------------------------------------------------------------

class HypergraphAttention(Module):
    """Per-frame joint-to-joint maps mixing pairwise and point-group terms.

    Branch s scores joint pairs with q.k + q.hk_s, where hk_s embeds the
    features propagated through hypergraph s, and normalizes over the last
    joint axis. ``summed`` mode folds every hk_s into one shared map.
    """

    def __init__(self, cin: int, ce: int, branches: int, rng, mode: str = "per-branch",
                 use_hypergraphs: bool = True):
        n_qk = 1 if mode == "summed" else branches
        self.q = [Conv1x1(cin, ce, rng) for _ in range(n_qk)]
        self.k = [Conv1x1(cin, ce, rng) for _ in range(n_qk)]
        self.hk = [Conv1x1(cin, ce, rng) for _ in range(branches)] if use_hypergraphs else []
        self.mode, self.branches, self.ce = mode, branches, ce

    def logits(self, x: Tensor, hx: Tensor | None) -> list[Tensor]:
        scale = 1.0 / math.sqrt(self.ce)
        hks = [hk(hx[s]) for s, hk in enumerate(self.hk)]
        if self.mode == "summed":
            keys = self.k[0](x)
            for h in hks:
                keys = keys + h
            z = core.contract("bcti,bctj->btij", self.q[0](x), keys)
            return [core.scale(z, scale)] * self.branches
        out = []
        for s in range(self.branches):
            keys = self.k[s](x) + hks[s] if hks else self.k[s](x)
            z = core.contract("bcti,bctj->btij", self.q[s](x), keys)
            out.append(core.scale(z, scale))
        return out

    def forward(self, x: Tensor, hx: Tensor | None) -> Tensor:
        """(B, C, T, V), (S, B, C, T, V) -> HA of shape (S, B, T, V, V)."""
        if self.hk and (hx is None or hx.shape[0] != self.branches):
            raise core.ShapeError(f"expected {self.branches} hypergraph feature groups")
        return core.stack([core.softmax(z) for z in self.logits(x, hx)], axis=0)


class HypergraphConv(Module):
    """Three-branch channel-wise topology refinement, one set of weights per branch.

    right:  delta(x) over tanh(phi(xbar)_i - psi(xbar)_j) lifted to C_out, plus A
    left:   delta(x) over tanh(phi(xbar)_i - xi(hbar)_j) lifted to C_out
    middle: gated delta(x) over the attention map of the same branch
    """

    def __init__(self, cin: int, cout: int, ce: int, branches: int, rng,
                 hypergraph_branch: bool = True, attention: bool = True, xi_input: str = "hx"):
        self.phi = [Conv1x1(cin, ce, rng) for _ in range(branches)]
        self.psi = [Conv1x1(cin, ce, rng) for _ in range(branches)]
        self.xi = [Conv1x1(cin, ce, rng) for _ in range(branches)] if hypergraph_branch else []
        self.delta = [Conv1x1(cin, cout, rng) for _ in range(branches)]
        self.lift_r = [Conv1x1(ce, cout, rng) for _ in range(branches)]
        self.lift_l = [Conv1x1(ce, cout, rng) for _ in range(branches)] if hypergraph_branch else []
        self.gates = Parameter(np.full(branches, 1.0 / branches)) if attention else None
        self.branches, self.xi_input = branches, xi_input

    def forward(self, x: Tensor, hx: Tensor | None, ha: Tensor | None, a: np.ndarray) -> Tensor:
        B, _, _, V = x.shape
        if ha is not None and not np.allclose(ha.data.sum(axis=-1), 1.0, atol=1e-6):
            raise ValueError("attention rows are not normalized")
        xbar = x.mean(axis=2)
        hbar = None
        if self.xi:
            hbar = hx.mean(axis=(0, 3)) if self.xi_input == "hx" else xbar
        y = None
        for s in range(self.branches):
            f = self.phi[s](xbar)
            ce = f.shape[1]
            fi = f.reshape(B, ce, V, 1)
            topo = self.lift_r[s](core.tanh(fi - self.psi[s](xbar).reshape(B, ce, 1, V))) + a
            if self.xi:
                ml = core.tanh(fi - self.xi[s](hbar).reshape(B, ce, 1, V))
                topo = topo + self.lift_l[s](ml)
            d = self.delta[s](x)
            ys = core.contract("bcij,bctj->bcti", topo, d)
            if ha is not None:
                ys = ys + self.gates[s] * core.contract("btij,bctj->bcti", ha[s], d)
            y = ys if y is None else y + ys
        return y


class GraphConv(Module):
    """Plain spatial graph convolution: aggregate over each fixed subset, then mix channels."""

    def __init__(self, cin: int, cout: int, subsets: int, rng):
        self.delta = [Conv1x1(cin, cout, rng) for _ in range(subsets)]

    def forward(self, x: Tensor, subsets: np.ndarray) -> Tensor:
        y = None
        for s, conv in enumerate(self.delta):
            ys = conv(core.contract("vu,bctu->bctv", subsets[s], x))
            y = ys if y is None else y + ys
        return y


def branch_widths(channels: int) -> tuple[int, int, int]:
    q = channels // 4
    return q, q, channels - 2 * q


class MultiScaleTemporalConv(Module):
    """Dilated K=5 (d=1, d=2) and max-pool branches, concatenated on channels."""

    def __init__(self, channels: int, stride: int, rng):
        widths = branch_widths(channels)
        if min(widths) < 1:
            raise ValueError(f"{channels} channels is too narrow for three temporal branches")
        self.widths, self.stride = widths, stride
        self.reduce = [Conv1x1(channels, w, rng) for w in widths]
        self.reduce_bn = [BatchNorm(w) for w in widths]
        self.tconv = [TemporalConv(w, w, TEMPORAL_KERNEL, rng, stride, d)
                      for w, d in zip(widths, TEMPORAL_DILATIONS)]
        self.out_bn = [BatchNorm(w) for w in widths]

    def forward(self, x: Tensor) -> Tensor:
        outs = []
        for i in range(3):
            h = core.relu(self.reduce_bn[i](self.reduce[i](x)))
            if i < len(self.tconv):
                h = self.tconv[i](h)
            else:
                h = core.max_pool_time(h, POOL_KERNEL, self.stride)
            outs.append(self.out_bn[i](h))
        return core.concat(outs, axis=1)


class GraphUnit(Module):
    def __init__(self, cin: int, cout: int, cfg: ModelConfig, rng):
        ce = cfg.embed_width(cin)
        self.cfg = cfg
        self.gcn = self.ham = self.hgcm = None
        if cfg.gcn == "plain":
            self.gcn = GraphConv(cin, cout, PLAIN_SUBSETS, rng)
        else:
            if cfg.attention != "none":
                self.ham = HypergraphAttention(cin, ce, cfg.branches, rng, cfg.ham_mode,
                                               use_hypergraphs=cfg.attention == "ham")
            self.hgcm = HypergraphConv(cin, cout, ce, cfg.branches, rng,
                                       hypergraph_branch=cfg.gcn == "hgcm",
                                       attention=self.ham is not None, xi_input=cfg.xi_input)
        self.bn = BatchNorm(cout)
        self.down_conv = Conv1x1(cin, cout, rng) if cin != cout else None
        self.down_bn = BatchNorm(cout) if cin != cout else None

    def forward(self, x: Tensor, topo: Topology) -> Tensor:
        if self.gcn is not None:
            y = self.gcn(x, topo.subsets)
        else:
            hx = apply_hypergraphs(x, topo.hypergraphs) if self.cfg.needs_hx else None
            ha = self.ham(x, hx) if self.ham is not None else None
            y = self.hgcm(x, hx, ha, topo.adjacency)
        res = x if self.down_conv is None else self.down_bn(self.down_conv(x))
        return core.relu(self.bn(y) + res)


class Block(Module):
    def __init__(self, cin: int, cout: int, stride: int, cfg: ModelConfig, rng):
        self.unit = GraphUnit(cin, cout, cfg, rng)
        self.tcn = MultiScaleTemporalConv(cout, stride, rng)
        self.stride = stride
        self.identity = cin == cout and stride == 1
        if not self.identity:
            self.res_conv = Conv1x1(cin, cout, rng)
            self.res_bn = BatchNorm(cout)

    def forward(self, x: Tensor, topo: Topology) -> Tensor:
        if self.identity:
            res = x
        else:
            xs = x[:, :, ::self.stride] if self.stride > 1 else x
            res = self.res_bn(self.res_conv(xs))
        return core.relu(self.tcn(self.unit(x, topo)) + res)


class HFGCN(Module):
    def __init__(self, cfg: ModelConfig, topology: Topology | None = None, seed: int = 0):
        self.cfg = cfg
        self.topology = topology or Topology.build(cfg.layout, cfg.hypergraphs)
        if self.topology.adjacency.shape[0] != cfg.num_joints:
            raise ValueError("topology and config disagree on the joint count")
        if self.topology.hypergraphs.names != cfg.hypergraphs:
            raise ValueError("topology hypergraphs differ from the configured subset")
        rng = np.random.default_rng(seed)
        self.data_bn = BatchNorm(cfg.num_persons * cfg.num_joints * cfg.in_channels)
        self.blocks = [Block(cin, cout, s, cfg, rng) for cin, cout, s in cfg.blocks]
        self.fc = Conv1x1(cfg.blocks[-1][1], cfg.num_classes, rng)

    def forward(self, x) -> Tensor:
        """(B, C, T, V, M) -> logits (B, K)."""
        x = core.as_tensor(x)
        cfg = self.cfg
        if x.ndim != 5:
            raise core.ShapeError(f"expected (B, C, T, V, M) input, got {x.shape}")
        B, C, T, V, M = x.shape
        if (C, V, M) != (cfg.in_channels, cfg.num_joints, cfg.num_persons):
            raise core.ShapeError(f"input {x.shape} does not match the model config")
        h = x.transpose(0, 4, 3, 1, 2).reshape(B, M * V * C, T)
        h = self.data_bn(h)
        h = h.reshape(B, M, V, C, T).transpose(0, 1, 3, 4, 2).reshape(B * M, C, T, V)
        for blk in self.blocks:
            h = blk(h, self.topology)
        c_last = h.shape[1]
        h = h.mean(axis=(2, 3)).reshape(B, M, c_last).mean(axis=1)
        return self.fc(h)


# budgets -------------------------------------------------------------------

def count_params(cfg: ModelConfig) -> int:
    return HFGCN(cfg).num_parameters()


def count_flops(cfg: ModelConfig, input_shape=(3, 64, 25, 2)) -> int:
    """Multiply-accumulates for one sample of shape (C, T, V, M).

    Counts every channel mix, temporal convolution and tensor contraction.
    One multiply-accumulate counts as one FLOP, the convention of the
    published GFLOP budgets.
    """
    C, T, V, M = input_shape
    if C != cfg.in_channels:
        raise ValueError("input channels do not match the config")
    total = 0
    S = cfg.branches
    for cin, cout, stride in cfg.blocks:
        ce = cfg.embed_width(cin)
        t_out = core.out_frames(T, stride)
        n = 0
        if cfg.gcn == "plain":
            n += PLAIN_SUBSETS * (cin * T * V * V + cin * cout * T * V)
        else:
            if cfg.needs_hx:
                n += len(cfg.hypergraphs) * cin * T * V * V
            if cfg.attention != "none":
                n_qk = 1 if cfg.ham_mode == "summed" else S
                n += 2 * n_qk * cin * ce * T * V
                if cfg.attention == "ham":
                    n += S * cin * ce * T * V
                n += n_qk * ce * T * V * V
            hyper = cfg.gcn == "hgcm"
            n += S * (2 + hyper) * cin * ce * V
            n += S * (1 + hyper) * ce * cout * V * V
            n += S * (cin * cout * T * V + cout * T * V * V)
            if cfg.attention != "none":
                n += S * cout * T * V * V
        if cin != cout:
            n += cin * cout * T * V
        w = branch_widths(cout)
        n += cout * cout * T * V
        n += sum(wi * wi * TEMPORAL_KERNEL for wi in w[:2]) * t_out * V
        if not (cin == cout and stride == 1):
            n += cin * cout * t_out * V
        total += n
        T = t_out
    return M * total + cfg.blocks[-1][1] * cfg.num_classes
