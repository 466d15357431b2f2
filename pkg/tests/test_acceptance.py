"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL summary that is echoed at the end of the run.
"""
import math
import time

import numpy as np
from threadpoolctl import threadpool_limits

from hfgcn import core
from hfgcn.core import Tensor
from hfgcn.data import MODALITIES
from hfgcn.model import HFGCN, HypergraphAttention, HypergraphConv, ModelConfig, count_flops, \
    count_params, preset, reduced_blocks
from hfgcn.topology import apply_hypergraphs, build_partition_hypergraph, propagation_matrix
from hfgcn.training import TrainConfig, evaluate, fuse_scores, lr_at, synth_dataset, train
from hfgcn.verify import CHECKS, passed, run_checks

import oracles
from _report import record

V = 25
INPUT = (3, 64, V, 2)


def test_criterion_1_parameter_budget():
    p = {n: count_params(preset(n)) for n in ("h1", "h1+h2", "full")}
    rel = p["full"] / 1.81e6 - 1
    d1, d2 = p["h1+h2"] - p["h1"], p["full"] - p["h1+h2"]
    mismatch = abs(d1 - d2) / max(d1, d2)
    ok = abs(rel) <= 0.10 and p["h1"] < p["h1+h2"] < p["full"] and mismatch <= 0.01
    record(1, ok, f"full {p['full'] / 1e6:.3f} M ({rel:+.1%}); h1 {p['h1'] / 1e6:.3f}, "
                  f"h1+h2 {p['h1+h2'] / 1e6:.3f}; delta mismatch {mismatch:.2%}")
    assert ok


def test_criterion_2_flop_budget():
    full = count_flops(preset("full"), INPUT) / 1e9
    base = count_flops(preset("baseline"), INPUT) / 1e9
    rf, rb = full / 2.24 - 1, base / 1.46 - 1
    ok = abs(rf) <= 0.15 and abs(rb) <= 0.15
    record(2, ok, f"full {full:.3f} G ({rf:+.1%}), baseline {base:.3f} G ({rb:+.1%})")
    assert ok


def test_criterion_3_gradient_integrity():
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        good = run_checks(CHECKS)
        bad = run_checks(("ham",), corrupt=True, samples=2)
    secs = time.perf_counter() - t0
    ok = all(passed(r) for r in good.values()) and not passed(bad["ham"]) and secs < 120
    errs = ", ".join(f"{n} {r.max_error:.1e}" for n, r in good.items())
    record(3, ok, f"{errs}; corrupted ham {bad['ham'].max_error:.1e}; {secs:.0f}s")
    assert ok


def test_criterion_4_learnability():
    k = 8
    ds = synth_dataset(k, 8, 32, seed=7)
    cfg = ModelConfig(num_classes=k, blocks=reduced_blocks(4, 32), num_persons=1, window=32)
    untrained = HFGCN(cfg, seed=0)
    untrained.reset_running_stats()
    chance, _ = evaluate(untrained, ds)
    # three binomial standard deviations around chance
    band = 3 * math.sqrt((1 / k) * (1 - 1 / k) / len(ds))
    model = HFGCN(cfg, seed=0)
    tcfg = TrainConfig(epochs=200, milestones=(120, 170), batch_size=16, seed=7)
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        res = train(model, ds, tcfg, stop_at=0.99)
    secs = time.perf_counter() - t0
    ok = res.metrics.top1 >= 0.99 and res.epochs_run <= 200 and secs < 600 \
        and abs(chance.top1 - 1 / k) <= band
    record(4, ok, f"train top-1 {res.metrics.top1:.3f} after {res.epochs_run} epochs in "
                  f"{secs:.0f}s; untrained {chance.top1:.3f} (1/K {1 / k:.3f} +- {band:.3f})")
    assert ok


# calibrated operating point of the synthetic benchmark (see README)
ENSEMBLE = dict(classes=8, train_per_class=8, test_per_class=16, frames=16, noise=0.08,
                class_seed=3, train_seed=11, test_seed=12, blocks=3, width=16, epochs=30)


def test_criterion_5_ensemble():
    e = ENSEMBLE
    tables = []
    with threadpool_limits(limits=1):
        for mod in MODALITIES:
            kw = dict(noise=e["noise"], modality=mod, class_seed=e["class_seed"])
            tr = synth_dataset(e["classes"], e["train_per_class"], e["frames"], seed=e["train_seed"], **kw)
            te = synth_dataset(e["classes"], e["test_per_class"], e["frames"], seed=e["test_seed"], **kw)
            cfg = ModelConfig(num_classes=e["classes"], blocks=reduced_blocks(e["blocks"], e["width"]),
                              num_persons=1, window=e["frames"])
            model = HFGCN(cfg, seed=0)
            tcfg = TrainConfig(epochs=e["epochs"], milestones=(int(0.7 * e["epochs"]),),
                               warmup_epochs=2, batch_size=16, seed=0)
            train(model, tr, tcfg)
            tables.append(evaluate(model, te)[1])
    labels = tables[0].labels
    singles = [float((t.predictions() == labels).mean()) for t in tables]
    fused, pred = fuse_scores(tables)
    oracle = sum(t.scores for t in tables).argmax(axis=1)
    top1 = float((pred == labels).mean())
    in_band = [0.70 <= s <= 0.90 for s in singles]
    ok = top1 >= max(singles) and np.array_equal(pred, oracle)
    streams = ", ".join(f"{m} {s:.3f}{'' if b else '*'}" for m, s, b in zip(MODALITIES, singles, in_band))
    record(5, ok, f"fused {top1:.3f} vs best single {max(singles):.3f}; {streams}; "
                  f"mean single {np.mean(singles):.3f} (* outside 70-90%)")
    assert 0.70 <= np.mean(singles) <= 0.90
    assert ok


def test_criterion_6_invariants(topology):
    rng = np.random.default_rng(6)
    detail = []
    # attention rows
    x = rng.normal(size=(2, 8, 4, V)) * 20
    hx = apply_hypergraphs(x, topology.hypergraphs)
    ha = HypergraphAttention(8, 4, 3, rng)(Tensor(x), hx).data
    rows = float(np.abs(ha.sum(axis=-1) - 1).max())
    detail.append(f"HA rows {rows:.1e}")
    # permutation
    cfg = ModelConfig(num_classes=4, blocks=((3, 8, 1), (8, 8, 2)), num_persons=2, window=8)
    perm = rng.permutation(V)
    m, mp = HFGCN(cfg, topology, seed=5), HFGCN(cfg, topology.permuted(perm), seed=5)
    xin = rng.normal(size=(2, 3, 8, V, 2))
    perm_err = float(np.abs(mp(xin[:, :, :, perm]).data - m(xin).data).max())
    detail.append(f"permutation {perm_err:.1e}")
    # propagation rows
    s_err = float(max(np.abs(s.sum(axis=1) - 1).max() for s in topology.hypergraphs.propagation))
    detail.append(f"S rows {s_err:.1e}")
    # schedule
    tc = TrainConfig()
    lrs = (lr_at(59, 0, tc), lr_at(60, 0, tc), lr_at(90, 0, tc))
    lr_ok = lrs == (0.1, 0.01, 0.001)
    detail.append("lr " + "/".join(f"{v:g}" for v in lrs))
    # loss on uniform logits
    k = 60
    loss = core.label_smoothing_ce(Tensor(np.full((3, k), 2.5)), np.array([0, 7, 59])).item()
    ce_err = abs(loss - math.log(k))
    detail.append(f"ln K {ce_err:.1e}")
    ok = rows <= 1e-6 and perm_err <= 1e-9 and s_err <= 1e-9 and lr_ok and ce_err <= 1e-12
    record(6, ok, "; ".join(detail))
    assert ok


def _random_case(op, rng):
    """Returns (got, want) for one randomized shape of ``op``."""
    r = lambda lo, hi: int(rng.integers(lo, hi))
    if op == "contract":
        spec = ["bcti,bctj->btij", "bcij,bctj->bcti", "btij,bctj->bcti", "svu,bctu->sbctv",
                "vu,bctu->bctv", "ij,jk->ik"][r(0, 6)]
        lhs = spec.split("->")[0].split(",")
        dims = {c: r(1, 4) for c in set("".join(lhs))}
        a, b = (rng.normal(size=[dims[c] for c in s]) for s in lhs)
        return core.contract(spec, a, b).data, oracles.contract_loops(spec, a, b)
    if op == "conv1x1":
        B, C, O, T, W = (r(1, 4) for _ in range(5))
        x, w, b = rng.normal(size=(B, C, T, W)), rng.normal(size=(O, C)), rng.normal(size=O)
        return core.conv1x1(Tensor(x), Tensor(w), Tensor(b)).data, oracles.conv1x1_loops(x, w, b)
    if op == "temporal_conv":
        B, C, O, W, T = r(1, 3), r(1, 3), r(1, 3), r(1, 3), r(1, 10)
        k, s, d = [1, 3, 5][r(0, 3)], r(1, 3), r(1, 3)
        x, w, b = rng.normal(size=(B, C, T, W)), rng.normal(size=(O, C, k)), rng.normal(size=O)
        return (core.temporal_conv(Tensor(x), Tensor(w), Tensor(b), s, d).data,
                oracles.temporal_conv_loops(x, w, b, s, d))
    if op == "max_pool":
        x, s = rng.normal(size=(r(1, 3), r(1, 3), r(1, 10), r(1, 3))), r(1, 3)
        return core.max_pool_time(Tensor(x), 3, s).data, oracles.max_pool_loops(x, 3, s)
    if op == "batchnorm":
        B, C, T, W = (r(1, 4) for _ in range(4))
        x = rng.normal(size=(B, C, T, W)) * 3 + 1
        g, b = rng.normal(size=C), rng.normal(size=C)
        got = core.batchnorm(Tensor(x), Tensor(g), Tensor(b), core.RunningStats(C), training=True)
        return got.data, oracles.batchnorm_loops(x, g, b)
    if op == "softmax":
        z = rng.normal(size=tuple(r(1, 5) for _ in range(r(1, 4)))) * 5
        return core.softmax(Tensor(z)).data, oracles.softmax_loops(z)
    if op == "smoothed_ce":
        b, k = r(1, 5), r(2, 7)
        z, t, eps = rng.normal(size=(b, k)) * 3, rng.integers(0, k, size=b), float(rng.uniform(0, .5))
        return core.label_smoothing_ce(Tensor(z), t, eps).item(), oracles.smoothed_ce_loops(z, t, eps)
    if op == "propagation":
        v = r(2, 12)
        labels = rng.integers(0, r(1, 5), size=v)
        groups = [list(np.flatnonzero(labels == e)) for e in np.unique(labels)]
        h = build_partition_hypergraph(groups, v)
        return propagation_matrix(h), oracles.propagation_loops(h)
    raise ValueError(op)


OPS = ("contract", "conv1x1", "temporal_conv", "max_pool", "batchnorm", "softmax", "smoothed_ce",
       "propagation")


def _formula_errors(topology, rng):
    x = rng.normal(size=(1, 8, 2, V))
    hx = apply_hypergraphs(x, topology.hypergraphs)
    ham = HypergraphAttention(8, 8, 3, rng)
    wb = lambda convs: list(zip(*[(c.weight.data, c.bias.data) for c in convs]))
    ha = ham(Tensor(x), hx)
    e_ham = np.abs(ha.data - oracles.ham_loops(x, hx.data, *wb(ham.q), *wb(ham.k), *wb(ham.hk))).max()
    hgcm = HypergraphConv(8, 6, 8, 3, rng)
    hgcm.gates.data[:] = rng.normal(size=3)
    keys = ("phi", "psi", "xi", "delta", "lift_r", "lift_l")
    for k in keys:
        for c in getattr(hgcm, k):
            c.bias.data[:] = rng.normal(size=c.bias.shape)
    layers = [{k: (getattr(hgcm, k)[s].weight.data, getattr(hgcm, k)[s].bias.data) for k in keys}
              for s in range(3)]
    got = hgcm(Tensor(x), hx, ha, topology.adjacency).data
    want = oracles.hgcm_loops(x, hx.data, ha.data, topology.adjacency, layers, hgcm.gates.data)
    return float(e_ham), float(np.abs(got - want).max())


def test_criterion_7_oracle_equivalence(topology):
    rng = np.random.default_rng(7)
    worst = {}
    for op in OPS:
        errs = []
        for _ in range(100):
            got, want = _random_case(op, rng)
            errs.append(float(np.max(np.abs(np.asarray(got) - np.asarray(want)))))
        worst[op] = max(errs)
    e_ham, e_hgcm = _formula_errors(topology, rng)
    ok = max(worst.values()) <= 1e-9 and e_ham <= 1e-9 and e_hgcm <= 1e-9
    record(7, ok, f"{len(OPS)} ops x 100 shapes, worst {max(worst.values()):.1e} "
                  f"({max(worst, key=worst.get)}); HAM {e_ham:.1e}, HGCM {e_hgcm:.1e}")
    assert ok
