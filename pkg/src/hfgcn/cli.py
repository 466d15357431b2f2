"""Command-line entry point: ``hfgcn <command> [options]``.

Exit codes: 0 success, 1 validation error, 2 runtime error,
3 acceptance check failed.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from threadpoolctl import threadpool_limits

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


def _exists_guard(paths, force: bool) -> bool:
    """True when every output already exists and --force is absent."""
    paths = [Path(p) for p in paths]
    if not force and paths and all(p.exists() for p in paths):
        print(f"outputs exist, skipping (use --force to overwrite): {', '.join(map(str, paths))}")
        return True
    return False


# run-config plumbing -------------------------------------------------------

_FLAG_KEYS = ("seed", "ham_mode", "xi_input", "hypergraphs", "modality", "preset",
              "attention", "gcn", "threads", "out_dir", "epochs", "batch_size")


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ham-mode", choices=["per-branch", "summed"])
    p.add_argument("--xi-input", choices=["hx", "x"])
    p.add_argument("--hypergraphs", help="comma list, e.g. h1,h2,h3")
    p.add_argument("--modality", choices=["joint", "bone", "jmotion", "bmotion"])
    p.add_argument("--preset")
    p.add_argument("--attention", choices=["ham", "am", "none"])
    p.add_argument("--gcn", choices=["hgcm", "gcm", "plain"])
    p.add_argument("--out-dir")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def _run_config(args):
    from .config import load_run_config
    over = {k: getattr(args, k, None) for k in _FLAG_KEYS}
    for item in args.set:
        if "=" not in item:
            raise CliError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        over[k.strip()] = v.strip()
    return load_run_config(args.config, over)


def _write_resolved(rc, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.resolved.txt").write_text(rc.dump())


def _dataset(rc, split: str):
    from .data import build_dataset, read_container
    from .training import synth_dataset
    if rc.synth_classes:
        train = split == "train"
        return synth_dataset(rc.synth_classes,
                             rc.synth_per_class if train else rc.synth_test_per_class,
                             rc.window, seed=rc.synth_seed if train else rc.synth_test_seed,
                             noise=rc.synth_noise, modality=rc.modality,
                             class_seed=rc.synth_seed, persons=rc.num_persons)
    name = rc.train_data if split == "train" else rc.test_data
    if not name:
        raise CliError(f"no {split}_data configured and no synthetic dataset requested")
    path = rc.data_path(name)
    if not path.exists():
        raise CliError(f"missing data file {path}")
    return build_dataset(read_container(path), rc.modality, rc.window)


# commands ------------------------------------------------------------------

def cmd_convert(args) -> int:
    from .data import ParseError, LayoutError, read_skeleton_file, write_container
    in_dir, out = Path(args.in_dir), Path(args.out_file)
    if not in_dir.is_dir():
        raise CliError(f"{in_dir} is not a directory")
    if _exists_guard([out], args.force):
        return EXIT_OK
    files = sorted(in_dir.glob("*.skeleton"))
    samples, failures = [], []
    for f in files:
        try:
            samples.append(read_skeleton_file(f, args.layout, args.max_bodies))
        except (ParseError, LayoutError, ValueError) as e:
            failures.append((f.name, str(e)))
    for name, msg in failures:
        print(f"{name}: {msg}", file=sys.stderr)
    if failures and args.strict:
        raise CliError(f"{len(failures)} of {len(files)} files failed to parse")
    if out.exists():
        out.unlink()
    write_container(samples, out, m_max=args.max_bodies)
    print(f"wrote {len(samples)} samples to {out} ({len(failures)} skipped)")
    return EXIT_OK


def cmd_export_topology(args) -> int:
    from .skeleton import get_layout
    from .topology import Topology, adjacency_dot, hypergraph_dot, matrix_csv
    if args.format not in ("csv", "dot"):
        raise CliError(f"unknown format {args.format!r}")
    names = tuple(h.strip() for h in args.hypergraphs.split(",") if h.strip())
    lay = get_layout(args.layout)
    topo = Topology.build(lay, names, args.partition_dir)
    out = Path(args.out)
    ext = args.format
    targets = [out / f"adjacency.{ext}"] + [out / f"{n}.{ext}" for n in names]
    if ext == "csv":
        targets += [out / f"{n}_incidence.csv" for n in names]
    if _exists_guard(targets, args.force):
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    hs = topo.hypergraphs
    if ext == "csv":
        (out / "adjacency.csv").write_text(matrix_csv(topo.adjacency))
        for n, h, s in zip(hs.names, hs.incidences, hs.propagation):
            (out / f"{n}.csv").write_text(matrix_csv(s))
            (out / f"{n}_incidence.csv").write_text(matrix_csv(h))
    else:
        (out / "adjacency.dot").write_text(adjacency_dot(topo.adjacency, lay))
        for n, h in zip(hs.names, hs.incidences):
            (out / f"{n}.dot").write_text(hypergraph_dot(n, h, lay))
    print(f"wrote {len(targets)} files to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .checkpoint import save_checkpoint
    from .model import HFGCN
    from .training import evaluate, train
    rc = _run_config(args)
    out = Path(rc.out_dir)
    ckpt, metrics = out / "checkpoint.hfgw", out / "metrics.jsonl"
    if not args.resume and _exists_guard([ckpt], args.force):
        return EXIT_OK
    mcfg, tcfg = rc.model_config(), rc.train_config()
    ds = _dataset(rc, "train")
    _write_resolved(rc, out)
    model = HFGCN(mcfg, seed=rc.model_seed)
    resume = None
    if args.resume:
        if not ckpt.exists():
            raise CliError(f"--resume given but {ckpt} does not exist")
        resume = out / "resume.hfgw"
        resume.write_bytes(ckpt.read_bytes())
    elif metrics.exists():
        metrics.unlink()
    t0 = time.perf_counter()

    def log(rec):
        print(json.dumps(rec), flush=True)

    res = train(model, ds, tcfg, checkpoint_path=ckpt, metrics_path=metrics,
                resume_from=resume, stop_at=rc.stop_at or None, on_epoch=log)
    if resume is not None:
        resume.unlink()
    if not ckpt.exists():
        save_checkpoint(ckpt, model, res.epochs_run, extra={"train": tcfg.to_dict()})
    _, table = evaluate(model, ds)
    table.to_csv(out / "scores_train.csv")
    summary = {"train_top1": res.metrics.top1, "epochs": res.epochs_run,
               "seconds": round(time.perf_counter() - t0, 2)}
    if rc.synth_classes or rc.test_data:
        met, table = evaluate(model, _dataset(rc, "test"))
        table.to_csv(out / "scores.csv")
        summary["test_top1"] = met.top1
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .checkpoint import model_from_checkpoint
    from .training import evaluate
    rc = _run_config(args)
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise CliError(f"missing checkpoint {ckpt}")
    out = Path(args.out) if args.out else Path(rc.out_dir) / "scores.csv"
    if _exists_guard([out], args.force):
        return EXIT_OK
    model, _ = model_from_checkpoint(ckpt)
    if model.cfg.window != rc.window or model.cfg.num_persons != rc.num_persons:
        rc.window, rc.num_persons = model.cfg.window, model.cfg.num_persons
    met, table = evaluate(model, _dataset(rc, args.split))
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out)
    print(json.dumps({"top1": met.top1, "loss": met.loss, "scores": str(out)}))
    return EXIT_OK


def cmd_fuse(args) -> int:
    from .training import ScoreTable, accuracy_metrics, fuse_scores
    for p in args.scores:
        if not Path(p).exists():
            raise CliError(f"missing score file {p}")
    out = Path(args.out)
    if _exists_guard([out], args.force):
        return EXIT_OK
    tables = [ScoreTable.from_csv(p) for p in args.scores]
    weights = [float(w) for w in args.weights.split(",")] if args.weights else None
    try:
        fused, pred = fuse_scores(tables, weights, args.space)
    except ValueError as e:
        raise CliError(str(e)) from None
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write("sample_id,label,prediction\n")
        for sid, lab, p in zip(fused.ids, fused.labels, pred):
            fh.write(f"{sid},{int(lab)},{int(p)}\n")
    report = {"fused_top1": accuracy_metrics(fused.labels, pred, fused.num_classes).top1}
    for path, t in zip(args.scores, tables):
        report[Path(path).name] = accuracy_metrics(t.labels, t.predictions(), t.num_classes).top1
    print(json.dumps(report))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .verify import CHECKS, GRAD_TOLERANCE, passed, run_checks
    names = CHECKS if args.module == "all" else (args.module,)
    t0 = time.perf_counter()
    reports = run_checks(names, corrupt=args.corrupt, seed=args.seed or 0, samples=args.samples)
    ok = True
    for n, r in reports.items():
        good = passed(r)
        ok &= good
        print(f"{n:6s} max_rel_err={r.max_error:.3e} checked={r.checked} "
              f"skipped={r.skipped} {'PASS' if good else 'FAIL'}"
              + ("" if good else f" worst={r.worst}"))
    print(f"tolerance {GRAD_TOLERANCE:g}; {time.perf_counter() - t0:.1f}s"
          + (" (corrupted adjoints)" if args.corrupt else ""))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_params(args) -> int:
    from .model import BUDGETS, count_flops, count_params
    rc = _run_config(args)
    cfg = rc.model_config().replace(num_classes=args.classes)
    shape = (cfg.in_channels, args.frames or 64, cfg.num_joints, cfg.num_persons)
    params, flops = count_params(cfg), count_flops(cfg, shape)
    line = f"{rc.preset}: params {params / 1e6:.3f} M, GFLOPs {flops / 1e9:.3f} G at input {shape}"
    target = BUDGETS.get(rc.preset)
    if target is not None and cfg.num_classes == 120 and shape[1] == 64:
        line += (f" | target {target[0]:.2f} M ({params / 1e6 / target[0] - 1:+.1%}),"
                 f" {target[1]:.2f} G ({flops / 1e9 / target[1] - 1:+.1%})")
    print(line)
    return EXIT_OK


# parser --------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hfgcn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="parse NTU skeleton files into a container")
    p.add_argument("in_dir")
    p.add_argument("out_file")
    p.add_argument("--layout", default="ntu25")
    p.add_argument("--max-bodies", type=int, default=2)
    p.add_argument("--strict", action="store_true", help="fail if any file does not parse")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("export-topology", help="write adjacency and hypergraphs as CSV or DOT")
    p.add_argument("--format", default="csv")
    p.add_argument("--out", default="topology")
    p.add_argument("--layout", default="ntu25")
    p.add_argument("--hypergraphs", default="h1,h2,h3")
    p.add_argument("--partition-dir", help="directory of <layout>_<name>.txt partitions")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_export_topology)

    p = sub.add_parser("train", help="train one stream")
    _add_run_flags(p)
    p.add_argument("--resume", action="store_true", help="continue from out_dir/checkpoint.hfgw")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a dataset with a checkpoint")
    _add_run_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fuse", help="fuse per-stream score tables")
    p.add_argument("scores", nargs="+")
    p.add_argument("--weights", help="comma list, one per score file")
    p.add_argument("--space", choices=["prob", "log"], default="prob")
    p.add_argument("--out", default="fused.csv")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks at a tiny config")
    p.add_argument("--module", choices=["all", "ham", "hgcm", "mstc", "model"], default="all")
    p.add_argument("--corrupt", action="store_true", help="negative control: corrupt adjoints")
    p.add_argument("--samples", type=int, default=3, help="coordinates per parameter tensor")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="parameter count and GFLOPs")
    _add_run_flags(p)
    p.add_argument("--frames", type=int, help="input frames (default 64)")
    p.add_argument("--classes", type=int, default=120, help="classifier width (default 120)")
    p.set_defaults(func=cmd_params)
    return ap


def main(argv=None) -> int:
    from .checkpoint import CheckpointError
    from .config import ConfigError
    from .data import ContainerError
    args = build_parser().parse_args(argv)
    threads = getattr(args, "threads", None) or 1
    try:
        with threadpool_limits(limits=threads):
            return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (ConfigError, ContainerError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, RuntimeError, FloatingPointError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
