"""Dense float64 tensors with tape-based reverse-mode gradients.

Only the handful of operators the network needs are provided. Every
operator records a node on the active :class:`Tape`; ``Tape.backward``
replays the adjoints in exact reverse execution order and accumulates
gradients into leaf tensors (normally :class:`Parameter` objects).
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

_TAPES: list["Tape"] = []
_CORRUPT: set[str] = set()
_MACS: list[int] = []


class TapeError(RuntimeError):
    pass


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"<Tensor{tag} shape={self.shape}>"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


class Parameter(Tensor):
    """Trainable leaf tensor. ``decay`` marks it for weight decay."""

    __slots__ = ("decay",)

    def __init__(self, data, name: str | None = None, decay: bool = True):
        super().__init__(data, requires_grad=True, name=name)
        self.decay = decay

    def zero_grad(self):
        """Drop the accumulated gradient; the next backward pass starts fresh."""
        self.grad = None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("op", "out", "inputs", "adjoint")

    def __init__(self, op, out, inputs, adjoint):
        self.op = op
        self.out = out
        self.inputs = inputs
        self.adjoint = adjoint


class Tape:
    """Ordered record of executed operators.

    Use as a context manager around the forward pass, then call
    :meth:`backward` once on a scalar result.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._spent = False

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def record(self, op: str, out: Tensor, inputs: Sequence[Tensor], adjoint: Callable):
        if self._spent:
            raise TapeError("tape already consumed by backward(); run a new forward pass")
        self.nodes.append(_Node(op, out, tuple(inputs), adjoint))

    def backward(self, loss: Tensor) -> None:
        if self._spent:
            raise TapeError("backward() called twice without a new forward pass")
        if loss.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.shape}")
        produced = {id(n.out) for n in self.nodes}
        if id(loss) not in produced:
            raise TapeError("loss was not computed on this tape")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            in_grads = node.adjoint(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                if id(t) in produced:
                    prev = grads.get(id(t))
                    grads[id(t)] = gi if prev is None else prev + gi
                else:
                    t.grad = gi.copy() if t.grad is None else t.grad + gi
        self.nodes.clear()
        self._spent = True


def _record(op, out_data, inputs, adjoint) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if needs and _TAPES:
        _TAPES[-1].record(op, out, inputs, adjoint)
    return out


def _count(macs: int):
    if _MACS:
        _MACS[-1] += int(macs)


@contextlib.contextmanager
def count_macs():
    """Collect multiply-accumulate counts of conv and contraction ops."""
    _MACS.append(0)
    box = [0]
    try:
        yield box
    finally:
        box[0] = _MACS.pop()


@contextlib.contextmanager
def corrupt_adjoint(*ops: str):
    """Deliberately scale the named ops' adjoints (negative control)."""
    _CORRUPT.update(ops)
    try:
        yield
    finally:
        _CORRUPT.difference_update(ops)


def _corrupted(op: str, g: np.ndarray) -> np.ndarray:
    return g * 1.5 if op in _CORRUPT else g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _record("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _record("mul", ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return _record("scale", a.data * c, (a,), lambda g: (g * c,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _record("tanh", y, (x,), lambda g: (_corrupted("tanh", g * (1.0 - y * y)),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def adjoint(g):
        return (_corrupted("softmax", y * (g - (g * y).sum(axis=-1, keepdims=True))),)

    return _record("softmax", y, (x,), adjoint)


# shape ---------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _record("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _record("transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def _is_basic(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def getitem(x: Tensor, idx) -> Tensor:
    shape = x.shape
    basic = _is_basic(idx)

    def adjoint(g):
        full = np.zeros(shape)
        if basic:
            # basic indexing never repeats an element
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _record("getitem", x.data[idx], (x,), adjoint)


def concat(xs: Sequence[Tensor], axis: int) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    sizes = [t.shape[axis] for t in xs]
    cuts = np.cumsum(sizes)[:-1]
    return _record("concat", np.concatenate([t.data for t in xs], axis=axis), xs,
                   lambda g: tuple(np.split(g, cuts, axis=axis)))


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(t) for t in xs]

    def adjoint(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return _record("stack", np.stack([t.data for t in xs], axis=axis), xs, adjoint)


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    shape = x.shape
    ax = _norm_axes(axis, x.ndim)

    def adjoint(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, shape).copy(),)

    return _record("sum", x.data.sum(axis=ax, keepdims=keepdims), (x,), adjoint)


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    ax = _norm_axes(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in ax])) if ax else 1
    return scale(tsum(x, ax, keepdims), 1.0 / n)


def _norm_axes(axis, ndim) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# contractions --------------------------------------------------------------

def _parse_spec(spec: str):
    spec = spec.replace(" ", "")
    if "->" not in spec:
        raise ShapeError(f"contraction spec needs '->': {spec!r}")
    lhs, out = spec.split("->")
    parts = lhs.split(",")
    if len(parts) != 2:
        raise ShapeError(f"contraction spec needs two operands: {spec!r}")
    sa, sb = parts
    for s in (sa, sb, out):
        if len(set(s)) != len(s):
            raise ShapeError(f"repeated axis label in {s!r}")
    for c in out:
        if c not in sa and c not in sb:
            raise ShapeError(f"output axis {c!r} not found in operands")
    return sa, sb, out


def _contract_np(spec: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sa, sb, out = _parse_spec(spec)
    if a.ndim != len(sa) or b.ndim != len(sb):
        raise ShapeError(f"{spec!r}: operand ranks {a.ndim},{b.ndim} do not match")
    dims = {}
    for s, arr in ((sa, a), (sb, b)):
        for c, n in zip(s, arr.shape):
            if dims.setdefault(c, n) != n:
                raise ShapeError(f"{spec!r}: axis {c!r} has extents {dims[c]} and {n}")
    # axes private to one operand and absent from the output are summed first
    a_only = [c for c in sa if c not in sb and c not in out]
    if a_only:
        a = a.sum(axis=tuple(sa.index(c) for c in a_only))
        sa = "".join(c for c in sa if c not in a_only)
    b_only = [c for c in sb if c not in sa and c not in out]
    if b_only:
        b = b.sum(axis=tuple(sb.index(c) for c in b_only))
        sb = "".join(c for c in sb if c not in b_only)
    batch = [c for c in out if c in sa and c in sb]
    afree = [c for c in out if c in sa and c not in sb]
    bfree = [c for c in out if c in sb and c not in sa]
    contr = [c for c in sa if c in sb and c not in out]
    nb = int(np.prod([dims[c] for c in batch]))
    na = int(np.prod([dims[c] for c in afree]))
    nf = int(np.prod([dims[c] for c in bfree]))
    nc = int(np.prod([dims[c] for c in contr]))
    a2 = a.transpose([sa.index(c) for c in batch + afree + contr]).reshape(nb, na, nc)
    b2 = b.transpose([sb.index(c) for c in batch + contr + bfree]).reshape(nb, nc, nf)
    _count(nb * na * nc * nf)
    r = np.matmul(a2, b2).reshape([dims[c] for c in batch + afree + bfree])
    order = batch + afree + bfree
    return r.transpose([order.index(c) for c in out])


def contract(spec: str, a, b) -> Tensor:
    """Batched two-operand tensor contraction in einsum notation.

    Axes shared by both operands but missing from the output are summed;
    axes present everywhere act as batch axes.
    """
    a, b = as_tensor(a), as_tensor(b)
    sa, sb, out = _parse_spec(spec)
    y = _contract_np(spec, a.data, b.data)
    ad, bd = a.data, b.data

    def back(g, s_self, s_other, other, self_shape):
        keep = "".join(c for c in s_self if c in out or c in s_other)
        r = _contract_np(f"{out},{s_other}->{keep}", g, other)
        if keep != s_self:
            r = np.expand_dims(r, tuple(i for i, c in enumerate(s_self) if c not in keep))
            r = np.broadcast_to(r, self_shape).copy()
        return r

    def adjoint(g):
        ga = back(g, sa, sb, bd, ad.shape) if a.requires_grad else None
        gb = back(g, sb, sa, ad, bd.shape) if b.requires_grad else None
        if ga is not None:
            ga = _corrupted("contract", ga)
        return ga, gb

    return _record("contract", y, (a, b), adjoint)


def conv1x1(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Pointwise channel mix over axis 1: (B, C, ...) x (O, C) -> (B, O, ...)."""
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv1x1: input has {x.shape[1]} channels, weight expects {w.shape[1]}")
    B, C = x.shape[:2]
    rest = x.shape[2:]
    xr = x.data.reshape(B, C, -1)
    wd = w.data
    _count(B * wd.shape[0] * C * xr.shape[2])
    y = np.matmul(wd, xr)
    if b is not None:
        y = y + b.data[None, :, None]
    y = y.reshape((B, wd.shape[0]) + rest)

    def adjoint(g):
        gr = g.reshape(B, wd.shape[0], -1)
        gx = np.matmul(wd.T, gr).reshape(x.shape) if x.requires_grad else None
        gw = np.matmul(gr, xr.transpose(0, 2, 1)).sum(axis=0)
        gw = _corrupted("conv1x1", gw)
        grads = [gx, gw]
        if b is not None:
            grads.append(gr.sum(axis=(0, 2)))
        return tuple(grads)

    inputs = (x, w) if b is None else (x, w, b)
    return _record("conv1x1", y, inputs, adjoint)


def _time_windows(xp: np.ndarray, k: int, dilation: int, stride: int, t_out: int) -> np.ndarray:
    span = stride * (t_out - 1) + 1
    return np.stack([xp[:, :, i * dilation:i * dilation + span:stride] for i in range(k)], axis=2)


def _fold_windows(cols: np.ndarray, t_pad: int, dilation: int, stride: int) -> np.ndarray:
    B, C, K, T_out = cols.shape[:4]
    out = np.zeros((B, C, t_pad) + cols.shape[4:])
    span = stride * (T_out - 1) + 1
    for i in range(K):
        out[:, :, i * dilation:i * dilation + span:stride] += cols[:, :, i]
    return out


def out_frames(t: int, stride: int) -> int:
    return -(-t // stride)


def temporal_conv(x: Tensor, w: Tensor, b: Tensor | None = None,
                  stride: int = 1, dilation: int = 1) -> Tensor:
    """1-D zero-padded 'same' convolution along T for (B, C, T, V) input."""
    if stride < 1 or dilation < 1:
        raise ValueError(f"stride and dilation must be >= 1, got {stride}, {dilation}")
    O, C, K = w.shape
    if K % 2 == 0:
        raise ValueError(f"temporal kernel must be odd, got {K}")
    if x.shape[1] != C:
        raise ShapeError(f"temporal_conv: input has {x.shape[1]} channels, weight expects {C}")
    B, _, T, V = x.shape
    pad = dilation * (K - 1) // 2
    t_out = out_frames(T, stride)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (0, 0)))
    cols = _time_windows(xp, K, dilation, stride, t_out).reshape(B, C * K, t_out * V)
    w2 = w.data.reshape(O, C * K)
    _count(B * O * C * K * t_out * V)
    y = np.matmul(w2, cols)
    if b is not None:
        y = y + b.data[None, :, None]
    y = y.reshape(B, O, t_out, V)

    def adjoint(g):
        gr = g.reshape(B, O, t_out * V)
        gw = np.matmul(gr, cols.transpose(0, 2, 1)).sum(axis=0).reshape(O, C, K)
        gw = _corrupted("temporal_conv", gw)
        gx = None
        if x.requires_grad:
            gcols = np.matmul(w2.T, gr).reshape(B, C, K, t_out, V)
            gx = _fold_windows(gcols, T + 2 * pad, dilation, stride)[:, :, pad:pad + T]
        grads = [gx, gw]
        if b is not None:
            grads.append(gr.sum(axis=(0, 2)))
        return tuple(grads)

    inputs = (x, w) if b is None else (x, w, b)
    return _record("temporal_conv", y, inputs, adjoint)


def max_pool_time(x: Tensor, k: int = 3, stride: int = 1) -> Tensor:
    """Temporal max pooling with -inf 'same' padding."""
    B, C, T, V = x.shape
    pad = (k - 1) // 2
    t_out = out_frames(T, stride)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (0, 0)), constant_values=-np.inf)
    win = _time_windows(xp, k, 1, stride, t_out)
    arg = win.argmax(axis=2)
    y = np.take_along_axis(win, arg[:, :, None], axis=2)[:, :, 0]

    def adjoint(g):
        gw = np.zeros_like(win)
        np.put_along_axis(gw, arg[:, :, None], g[:, :, None], axis=2)
        return (_fold_windows(gw, T + 2 * pad, 1, stride)[:, :, pad:pad + T],)

    return _record("max_pool_time", y, (x,), adjoint)


# normalization -------------------------------------------------------------

class RunningStats:
    """Per-channel running mean/variance for batch normalization."""

    def __init__(self, channels: int):
        self.mean = np.zeros(channels)
        self.var = np.ones(channels)
        self.ready = False

    def reset(self):
        self.mean[:] = 0.0
        self.var[:] = 1.0
        self.ready = True


def _chan_sum(a: np.ndarray) -> np.ndarray:
    """Sum over every axis except 1, keeping a (1, C, 1, ...) shape."""
    r = a.reshape(a.shape[0], a.shape[1], -1).sum(axis=2).sum(axis=0)
    return r.reshape((1, a.shape[1]) + (1,) * (a.ndim - 2))


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, stats: RunningStats,
              training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Normalize channel axis 1 using statistics over all other axes."""
    C = x.shape[1]
    bshape = (1, C) + (1,) * (x.ndim - 2)
    g_ = gamma.data.reshape(bshape)
    if training:
        n = x.size // C
        mu = _chan_sum(x.data) / n
        xc = x.data - mu
        var = _chan_sum(xc * xc) / n
        unbiased = var * n / (n - 1) if n > 1 else var
        stats.mean = (1 - momentum) * stats.mean + momentum * mu.reshape(C)
        stats.var = (1 - momentum) * stats.var + momentum * unbiased.reshape(C)
        stats.ready = True
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv

        def adjoint(g):
            gxhat = g * g_
            gx = None
            s2g = _chan_sum(g * xhat)
            if x.requires_grad:
                s1 = _chan_sum(gxhat)
                s2 = s2g * g_
                gx = inv / n * (n * gxhat - s1 - xhat * s2)
                gx = _corrupted("batchnorm", gx)
            return gx, s2g.reshape(C), _chan_sum(g).reshape(C)
    else:
        if not stats.ready:
            raise RuntimeError("batchnorm in eval mode before running statistics exist")
        inv = 1.0 / np.sqrt(stats.var + eps)
        xhat = (x.data - stats.mean.reshape(bshape)) * inv.reshape(bshape)

        def adjoint(g):
            gx = g * g_ * inv.reshape(bshape) if x.requires_grad else None
            return gx, _chan_sum(g * xhat).reshape(C), _chan_sum(g).reshape(C)

    y = xhat * g_ + beta.data.reshape(bshape)
    return _record("batchnorm", y, (x, gamma, beta), adjoint)


# losses --------------------------------------------------------------------

def label_smoothing_ce(logits: Tensor, target, eps: float = 0.1) -> Tensor:
    """Mean cross-entropy against (1 - eps) * onehot + eps / K."""
    z = logits.data
    if z.ndim != 2:
        raise ShapeError(f"logits must be (B, K), got {z.shape}")
    B, K = z.shape
    if K < 2:
        raise ValueError("need at least two classes")
    target = np.asarray(target, dtype=np.int64).reshape(-1)
    if target.shape[0] != B:
        raise ShapeError(f"{target.shape[0]} targets for {B} rows")
    if np.any(target < 0) or np.any(target >= K):
        raise ValueError(f"target index outside [0, {K})")
    zs = z - z.max(axis=1, keepdims=True)
    logp = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    q = np.full((B, K), eps / K)
    q[np.arange(B), target] += 1.0 - eps
    loss = -(q * logp).sum() / B
    p = np.exp(logp)
    return _record("label_smoothing_ce", loss, (logits,), lambda g: (g * (p - q) / B,))


# verification --------------------------------------------------------------

@dataclass
class GradReport:
    max_error: float
    checked: int
    skipped: int
    worst: str = ""


def _central(f, flat, i, h) -> float:
    orig = flat[i]
    flat[i] = orig + h
    up = f().item()
    flat[i] = orig - h
    down = f().item()
    flat[i] = orig
    if not (math.isfinite(up) and math.isfinite(down)):
        raise FloatingPointError("loss is not finite under perturbation")
    return (up - down) / (2 * h)


def gradient_report(f: Callable[[], Tensor], params, h: float = 1e-5,
                    samples: int | None = 20, rng: np.random.Generator | None = None,
                    names: Sequence[str] | None = None, smooth_tol: float = 1e-6,
                    retries: int = 2) -> GradReport:
    """Central-difference check that steps around non-differentiable points.

    Each sampled coordinate is differenced at h and h/2. On a smooth
    stretch the two estimates agree to O(h^2). If they disagree, a ReLU
    or max-pool switch lies inside the stencil, so the coordinate is
    retried with a 100x smaller step; coordinates still non-smooth after
    ``retries`` refinements are skipped and counted.
    """
    params = list(params)
    names = list(names) if names is not None else [p.name or f"param{k}" for k, p in enumerate(params)]
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("loss is not finite")
    tape.backward(loss)
    rep = GradReport(0.0, 0, 0)
    for name, p in zip(names, params):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if samples is not None and flat.size > samples:
            idx = rng.choice(flat.size, size=samples, replace=False)
        analytic = (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1)
        for i in idx:
            step, numeric = h, None
            for _ in range(retries + 1):
                a = _central(f, flat, i, step)
                b = _central(f, flat, i, step / 2)
                if abs(a - b) <= smooth_tol * max(1.0, abs(b)):
                    numeric = a
                    break
                step /= 100
            if numeric is None:
                rep.skipped += 1
                continue
            rep.checked += 1
            err = abs(analytic[i] - numeric) / max(1.0, abs(numeric))
            if err > rep.max_error:
                rep.max_error, rep.worst = err, f"{name}[{i}]"
    return rep


def finite_diff_check(f: Callable[[], Tensor], params: Iterable[Parameter],
                      h: float = 1e-5, samples: int | None = 20,
                      rng: np.random.Generator | None = None) -> float:
    """Compare tape gradients with central differences.

    ``f`` runs a full forward pass and returns a scalar tensor. For every
    parameter, up to ``samples`` coordinates are perturbed. Returns the
    max over checked coordinates of |analytic - numeric| / max(1, |numeric|).
    """
    return gradient_report(f, params, h, samples, rng).max_error
