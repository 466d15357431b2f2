"""Slow reference implementations written as explicit loops."""
from __future__ import annotations

import itertools
import math

import numpy as np


def contract_loops(spec: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    lhs, out = spec.split("->")
    sa, sb = lhs.split(",")
    dims = dict(zip(sa, a.shape))
    dims.update(zip(sb, b.shape))
    labels = sorted(dims)
    res = np.zeros([dims[c] for c in out])
    for vals in itertools.product(*(range(dims[c]) for c in labels)):
        env = dict(zip(labels, vals))
        res[tuple(env[c] for c in out)] += (a[tuple(env[c] for c in sa)]
                                            * b[tuple(env[c] for c in sb)])
    return res


def conv1x1_loops(x, w, b=None):
    B, C = x.shape[:2]
    O = w.shape[0]
    rest = x.shape[2:]
    y = np.zeros((B, O) + rest)
    for n in range(B):
        for o in range(O):
            for pos in np.ndindex(*rest):
                acc = 0.0 if b is None else b[o]
                for c in range(C):
                    acc += w[o, c] * x[(n, c) + pos]
                y[(n, o) + pos] = acc
    return y


def temporal_conv_loops(x, w, b=None, stride=1, dilation=1):
    B, C, T, V = x.shape
    O, _, K = w.shape
    pad = dilation * (K - 1) // 2
    t_out = -(-T // stride)
    y = np.zeros((B, O, t_out, V))
    for n, o, t, v in itertools.product(range(B), range(O), range(t_out), range(V)):
        acc = 0.0 if b is None else b[o]
        for c in range(C):
            for k in range(K):
                src = t * stride + k * dilation - pad
                if 0 <= src < T:
                    acc += w[o, c, k] * x[n, c, src, v]
        y[n, o, t, v] = acc
    return y


def max_pool_loops(x, k=3, stride=1):
    B, C, T, V = x.shape
    pad = (k - 1) // 2
    t_out = -(-T // stride)
    y = np.zeros((B, C, t_out, V))
    for n, c, t, v in itertools.product(range(B), range(C), range(t_out), range(V)):
        best = -math.inf
        for i in range(k):
            src = t * stride + i - pad
            if 0 <= src < T:
                best = max(best, x[n, c, src, v])
        y[n, c, t, v] = best
    return y


def batchnorm_loops(x, gamma, beta, eps=1e-5):
    C = x.shape[1]
    y = np.zeros_like(x)
    for c in range(C):
        vals = [x[idx] for idx in np.ndindex(*x.shape) if idx[1] == c]
        mu = sum(vals) / len(vals)
        var = sum((v - mu) ** 2 for v in vals) / len(vals)
        for idx in np.ndindex(*x.shape):
            if idx[1] == c:
                y[idx] = gamma[c] * (x[idx] - mu) / math.sqrt(var + eps) + beta[c]
    return y


def softmax_loops(z):
    out = np.zeros_like(z)
    for idx in np.ndindex(*z.shape[:-1]):
        row = z[idx]
        m = max(row)
        e = [math.exp(v - m) for v in row]
        s = sum(e)
        out[idx] = [v / s for v in e]
    return out


def smoothed_ce_loops(logits, target, eps):
    B, K = logits.shape
    total = 0.0
    for i in range(B):
        m = max(logits[i])
        lse = m + math.log(sum(math.exp(v - m) for v in logits[i]))
        for k in range(K):
            q = eps / K + (1 - eps if k == target[i] else 0.0)
            total -= q * (logits[i, k] - lse)
    return total / B


def propagation_loops(h):
    V, E = h.shape
    dv = [sum(h[v, e] for e in range(E)) for v in range(V)]
    de = [sum(h[v, e] for v in range(V)) for e in range(E)]
    s = np.zeros((V, V))
    for i, j, e in itertools.product(range(V), range(V), range(E)):
        s[i, j] += h[i, e] * h[j, e] / (dv[i] * de[e])
    return s


def ham_loops(x, hx, wq, bq, wk, bk, whk, bhk):
    """Per-branch attention with explicit sums; weights are lists over branches."""
    B, C, T, V = x.shape
    S = len(whk)
    ce = wq[0].shape[0]
    out = np.zeros((S, B, T, V, V))
    for s in range(S):
        q = conv1x1_loops(x, wq[s], bq[s])
        k = conv1x1_loops(x, wk[s], bk[s])
        hk = conv1x1_loops(hx[s], whk[s], bhk[s])
        for n, t in itertools.product(range(B), range(T)):
            for i in range(V):
                logits = np.zeros(V)
                for j in range(V):
                    acc = 0.0
                    for c in range(ce):
                        acc += q[n, c, t, i] * (k[n, c, t, j] + hk[n, c, t, j])
                    logits[j] = acc / math.sqrt(ce)
                out[s, n, t, i] = softmax_loops(logits[None])[0]
    return out


def hgcm_loops(x, hx, ha, a, layers, gates, xi_input="hx"):
    """``layers[s]`` maps names phi/psi/xi/delta/lift_r/lift_l to (weight, bias)."""
    B, C, T, V = x.shape
    xbar = x.mean(axis=2)
    hbar = hx.mean(axis=(0, 3)) if xi_input == "hx" else xbar
    cout = layers[0]["delta"][0].shape[0]
    y = np.zeros((B, cout, T, V))
    for s, L in enumerate(layers):
        f = conv1x1_loops(xbar, *L["phi"])
        g = conv1x1_loops(xbar, *L["psi"])
        r = conv1x1_loops(hbar, *L["xi"])
        d = conv1x1_loops(x, *L["delta"])
        ce = f.shape[1]
        right = np.zeros((B, ce, V, V))
        left = np.zeros((B, ce, V, V))
        for n, c, i, j in itertools.product(range(B), range(ce), range(V), range(V)):
            right[n, c, i, j] = math.tanh(f[n, c, i] - g[n, c, j])
            left[n, c, i, j] = math.tanh(f[n, c, i] - r[n, c, j])
        topo = conv1x1_loops(right, *L["lift_r"]) + a + conv1x1_loops(left, *L["lift_l"])
        for n, o, t, i in itertools.product(range(B), range(cout), range(T), range(V)):
            acc = 0.0
            for j in range(V):
                acc += (topo[n, o, i, j] + gates[s] * ha[s, n, t, i, j]) * d[n, o, t, j]
            y[n, o, t, i] += acc
    return y
