"""Physical adjacency, partition hypergraphs and their propagation operators."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import core
from .skeleton import Layout, get_layout

HYPERGRAPH_NAMES = ("h1", "h2", "h3")


class PartitionError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def physical_graph(bones, v: int) -> np.ndarray:
    a = np.zeros((v, v))
    for c, p in bones:
        if c != p:
            a[c, p] = a[p, c] = 1.0
    return a


def build_adjacency(bones, v: int) -> np.ndarray:
    """Symmetric normalized D^-1/2 (A + I) D^-1/2 of the bone graph."""
    a = physical_graph(bones, v) + np.eye(v)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return _frozen(d[:, None] * a * d[None, :])


def spatial_subsets(bones, v: int) -> np.ndarray:
    """Self / inward / outward subsets, column-normalized by in-degree.

    Used by the plain graph-convolution baseline. Inward edges point from
    child to parent, i.e. toward the layout root.
    """
    inward = np.zeros((v, v))
    for c, p in bones:
        if c != p:
            inward[p, c] = 1.0

    def norm(m):
        deg = m.sum(axis=0)
        out = m.copy()
        nz = deg > 0
        out[:, nz] /= deg[nz]
        return out

    return _frozen(np.stack([np.eye(v), norm(inward), norm(inward.T)]))


def hop_distances(bones, v: int, source: int) -> np.ndarray:
    adj = [[] for _ in range(v)]
    for c, p in bones:
        if c != p:
            adj[c].append(p)
            adj[p].append(c)
    dist = np.full(v, -1)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def ring_partition(bones, v: int, source: int, bounds=(2, 5)) -> list[list[int]]:
    """Group joints into rings of hop distance; ``bounds`` are inclusive upper edges."""
    dist = hop_distances(bones, v, source)
    if np.any(dist < 0):
        raise PartitionError("bone graph is disconnected")
    edges = list(bounds) + [int(dist.max())]
    rings, lo = [], 0
    for hi in edges:
        rings.append([j for j in range(v) if lo <= dist[j] <= hi])
        lo = hi + 1
    return [r for r in rings if r]


def parse_partition(text: str) -> list[list[int]]:
    groups = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        groups.append([int(tok) for tok in line.split(",") if tok.strip()])
    return groups


def load_partition(layout: str, name: str, directory: str | Path | None = None) -> list[list[int]]:
    fname = f"{layout}_{name}.txt"
    if directory is not None:
        text = Path(directory, fname).read_text()
    else:
        text = resources.files("hfgcn.partitions").joinpath(fname).read_text()
    return parse_partition(text)


def build_partition_hypergraph(partition: Sequence[Sequence[int]], v: int) -> np.ndarray:
    """Incidence matrix H (V, E) with H[v, e] = 1 iff joint v is in group e."""
    seen: dict[int, int] = {}
    overlap, outside = set(), set()
    for e, group in enumerate(partition):
        if not group:
            raise PartitionError(f"hyperedge {e} is empty")
        for j in group:
            if not 0 <= j < v:
                outside.add(j)
            elif j in seen:
                overlap.add(j)
            seen.setdefault(j, e)
    missing = sorted(set(range(v)) - set(seen))
    if overlap or outside or missing:
        raise PartitionError(
            f"not a partition of 0..{v - 1}: overlapping={sorted(overlap)} "
            f"missing={missing} out_of_range={sorted(outside)}")
    h = np.zeros((v, len(partition)))
    for e, group in enumerate(partition):
        h[list(group), e] = 1.0
    return _frozen(h)


def propagation_matrix(h: np.ndarray) -> np.ndarray:
    """S = Dv^-1 H De^-1 H^T with unit hyperedge weights (row-stochastic)."""
    h = np.asarray(h, dtype=np.float64)
    dv = h.sum(axis=1)
    de = h.sum(axis=0)
    if np.any(dv == 0) or np.any(de == 0):
        raise PartitionError("incidence has an isolated vertex or empty hyperedge")
    return _frozen((h / dv[:, None]) @ (h / de[None, :]).T)


@dataclass(frozen=True)
class HypergraphSet:
    names: tuple[str, ...]
    incidences: tuple[np.ndarray, ...]
    propagation: np.ndarray  # (S, V, V)

    def __len__(self):
        return len(self.names)

    @classmethod
    def from_incidences(cls, names, incidences) -> "HypergraphSet":
        props = np.stack([propagation_matrix(h) for h in incidences]) if incidences else np.zeros((0, 0, 0))
        return cls(tuple(names), tuple(_frozen(h) for h in incidences), _frozen(props))

    def permuted(self, perm) -> "HypergraphSet":
        perm = np.asarray(perm)
        return HypergraphSet.from_incidences(self.names, [h[perm] for h in self.incidences])


def load_hypergraphs(layout: str | Layout = "ntu25", names=HYPERGRAPH_NAMES,
                     directory=None) -> HypergraphSet:
    lay = get_layout(layout) if isinstance(layout, str) else layout
    hs = [build_partition_hypergraph(load_partition(lay.name, n, directory), lay.num_joints)
          for n in names]
    return HypergraphSet.from_incidences(names, hs)


def apply_hypergraphs(x, hs: HypergraphSet | np.ndarray) -> core.Tensor:
    """hX[s, b, c, t, v] = sum_u S_s[v, u] x[b, c, t, u] -> (S, B, C, T, V)."""
    props = hs.propagation if isinstance(hs, HypergraphSet) else np.asarray(hs)
    x = core.as_tensor(x)
    if x.ndim != 4 or x.shape[3] != props.shape[-1]:
        raise core.ShapeError(f"apply_hypergraphs: x {x.shape} vs operators {props.shape}")
    return core.contract("svu,bctu->sbctv", props, x)


@dataclass(frozen=True)
class Topology:
    """Everything graph-shaped the network consumes, for one layout."""
    layout: Layout
    adjacency: np.ndarray
    subsets: np.ndarray
    hypergraphs: HypergraphSet

    @classmethod
    def build(cls, layout: str | Layout = "ntu25", hypergraphs=HYPERGRAPH_NAMES,
              partition_dir=None) -> "Topology":
        lay = get_layout(layout) if isinstance(layout, str) else layout
        v = lay.num_joints
        return cls(lay, build_adjacency(lay.bones, v), spatial_subsets(lay.bones, v),
                   load_hypergraphs(lay, tuple(hypergraphs), partition_dir))

    def permuted(self, perm) -> "Topology":
        """Relabel joints: new joint i is old joint perm[i]."""
        perm = np.asarray(perm)
        p = np.ix_(perm, perm)
        return Topology(self.layout, _frozen(self.adjacency[p]),
                        _frozen(self.subsets[:, perm][:, :, perm]),
                        self.hypergraphs.permuted(perm))


# export --------------------------------------------------------------------

def matrix_csv(m: np.ndarray) -> str:
    return "\n".join(",".join(f"{x:.10g}" for x in row) for row in m) + "\n"


def hypergraph_dot(name: str, h: np.ndarray, layout: Layout) -> str:
    lines = [f"graph {name} {{", "  compound=true;"]
    for e in range(h.shape[1]):
        lines.append(f"  subgraph cluster_{e} {{")
        lines.append(f'    label="{name}:e{e}";')
        for j in np.flatnonzero(h[:, e]):
            lines.append(f'    j{j} [label="{j}:{layout.joints[j]}"];')
        lines.append("  }")
    for c, p in layout.edges():
        lines.append(f"  j{c} -- j{p};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def adjacency_dot(a: np.ndarray, layout: Layout) -> str:
    lines = ["graph adjacency {"]
    for j, name in enumerate(layout.joints):
        lines.append(f'  j{j} [label="{j}:{name}"];')
    v = a.shape[0]
    for i in range(v):
        for j in range(i + 1, v):
            if a[i, j] != 0:
                lines.append(f'  j{i} -- j{j} [weight="{a[i, j]:.6g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
