"""
Command line driver: ``generate -> label -> train -> evaluate``, plus ``assess``
for step-by-step replay and ``pipeline`` to run every stage in one go.

Data goes to stdout, diagnostics to stderr. Exit status is 0 on success,
1 on a runtime failure and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, lstm, semilabel, simgen
from .core import Label, read_dataset, read_header, write_dataset
from .errors import StvsError
from .metrics import EvaluationReport
from .pipeline import (DEFAULT_TRAIN_FRACTION, MODEL_KINDS, LoadedModel, evaluate_checkpoint,
                       prepare, sha256_file, train_model)
from .report import write_report

log = logging.getLogger("stvslab")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# config / manifest helpers


def read_section(path: str | None, section: str) -> dict:
    if not path:
        return {}
    import yaml

    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: config must be a mapping")
    if section in raw:
        return dict(raw[section] or {})
    sections = {"grid", "label", "train", "baselines", "evaluate", "pipeline"}
    if sections & set(raw):
        return {}
    return dict(raw)


def check_keys(section: str, got: dict, allowed) -> dict:
    unknown = set(got) - set(allowed)
    if unknown:
        raise UsageError(f"unknown {section} config keys: {sorted(unknown)}")
    return got


def write_manifest(path: Path, command: str, config: dict, seeds: dict, inputs, outputs, timings: dict):
    manifest = {
        "tool": "stvslab",
        "version": __version__,
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
        "timings_s": timings,
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json") if out.suffix else out / "manifest.json"


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    return p


# ---------------------------------------------------------------------------
# generate


def grid_from_args(args) -> simgen.GridConfig:
    d = simgen.GridConfig().to_dict()
    d.update(read_section(args.config, "grid"))
    overrides = {
        "seed": args.seed, "n_buses": args.n_buses, "n_samples": args.n_samples,
        "noise_sigma": args.noise_sigma, "m": args.steps,
    }
    d.update({k: v for k, v in overrides.items() if v is not None})
    return simgen.GridConfig.from_dict(d)


def cmd_generate(args) -> int:
    t0 = time.perf_counter()
    cfg = grid_from_args(args)
    out = Path(args.out)
    ds = simgen.generate_dataset(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(out, ds)
    elapsed = time.perf_counter() - t0
    truth = ds.truth_indices()
    n_unstable = int(truth.sum())
    print(f"wrote {len(ds)} instances to {out} (L={ds.n_buses}, d={ds.n_channels}, m={ds.m}, dt_s={ds.dt_s})")
    print(f"scenario grid: {cfg.grid_size} combinations; {len(ds)} instances")
    print(f"truth balance: stable {len(ds) - n_unstable} ({(len(ds) - n_unstable) / len(ds):.1%}), "
          f"unstable {n_unstable} ({n_unstable / len(ds):.1%})")
    write_manifest(manifest_path(out), "generate", cfg.to_dict(), {"master": cfg.seed},
                   [], [out, out.with_name(out.name + ".header.json")], {"generate": elapsed})
    return 0


# ---------------------------------------------------------------------------
# label


def cmd_label(args) -> int:
    t0 = time.perf_counter()
    src = _require_file(args.input)
    opts = {"v_stable": 0.9, "v_unstable": 0.7, "tail_fraction": 0.2, "max_iter": 100}
    opts.update(check_keys("label", read_section(args.config, "label"), opts))
    for key in opts:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    ds = read_dataset(src)
    already = sum(1 for i in ds if i.label is not None)
    cs = semilabel.derive_constraints(ds, opts["v_stable"], opts["v_unstable"], opts["tail_fraction"])
    res = semilabel.run_cop_kmeans(ds, cs, max_iter=int(opts["max_iter"]), seed=args.seed or 0)
    bad = semilabel.violations(res.assignment, cs)
    if bad:
        raise StvsError(f"internal error: {len(bad)} constraint violations")
    labeled = semilabel.apply_labels(ds, res.labels)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(out, labeled)

    lines = []
    if already:
        lines.append(f"note: overwrote {already} existing labels")
    n_st = sum(1 for v in res.labels.values() if v is Label.STABLE)
    lines += [
        f"seeds: stable {len(cs.seed_stable)}, unstable {len(cs.seed_unstable)}",
        f"constraints: {len(cs.must_links)} must-link, {len(cs.cannot_links)} cannot-link",
        f"iterations: {res.iterations} (converged: {res.converged}, reseeds: {res.reseeds})",
        f"cluster sizes: stable {n_st}, unstable {len(res.labels) - n_st}",
    ]
    truth = labeled.truth_indices()
    if truth is not None:
        agree = float(np.mean(labeled.label_indices() == truth))
        lines.append(f"agreement with generator truth: {agree:.4f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    write_manifest(manifest_path(out), "label", opts, {"seed": args.seed}, [src], [out],
                   {"label": time.perf_counter() - t0})
    return 0


# ---------------------------------------------------------------------------
# train


def train_options(args) -> tuple[lstm.TrainConfig, dict]:
    tc = read_section(args.config, "train")
    bl = check_keys("baselines", read_section(args.config, "baselines"),
                    ("max_depth", "min_leaf", "lam", "svm_epochs", "seed"))
    split = {"train_fraction": tc.pop("train_fraction", DEFAULT_TRAIN_FRACTION),
             "seed": tc.pop("split_seed", 0)}
    for key, attr in (("hidden_dim", "hidden_dim"), ("epochs", "epochs"),
                      ("learning_rate", "learning_rate"), ("batch_size", "batch_size"),
                      ("dropout_rate", "dropout_rate"), ("loss", "loss")):
        val = getattr(args, attr, None)
        if val is not None:
            tc[key] = val
    if args.seed is not None:
        tc["seed"] = args.seed
    if getattr(args, "split_seed", None) is not None:
        split["seed"] = args.split_seed
    bl.setdefault("seed", tc.get("seed", 0))
    return lstm.TrainConfig.from_dict(tc), {"split": split, "baselines": bl}


def run_train(ds, kind, otw, cfg: lstm.TrainConfig, extra: dict, out: Path):
    if kind not in MODEL_KINDS:
        raise UsageError(f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}")
    split = extra["split"]
    prep = prepare(ds, otw, split["seed"], split["train_fraction"])
    bl = dict(extra["baselines"])
    seed = bl.pop("seed", cfg.seed)
    payload, history, echo = train_model(
        kind, prep, seed=seed, train_cfg=cfg,
        log=(lambda msg: log.info(msg)) if kind == "lstm" else None, **bl)
    out.parent.mkdir(parents=True, exist_ok=True)
    lstm.save_checkpoint(out, kind, payload, otw_steps=otw, norm_stats=prep.stats, config=echo,
                         extra={"split": split, "history": [list(r) for r in history],
                                "dims": {"L": ds.n_buses, "d": ds.n_channels, "dt_s": ds.dt_s}})
    hist_path = out.with_name(out.stem + ".history.csv")
    with open(hist_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,loss,accuracy\n")
        for e, l, a in history:
            fh.write(f"{e},{l!r},{a!r}\n")
    return history, hist_path


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    src = _require_file(args.input)
    cfg, extra = train_options(args)
    ds = read_dataset(src)
    out = Path(args.out)
    history, hist_path = run_train(ds, args.model, args.otw, cfg, extra, out)
    last = history[-1]
    print(f"trained {args.model} at OTW={args.otw}: final loss {last[1]:.6f}, held-out accuracy {last[2]:.4f}")
    print(f"checkpoint: {out}\nhistory: {hist_path}")
    write_manifest(manifest_path(out), "train", {"model": args.model, "otw": args.otw,
                                                 "train": cfg.to_dict(), **extra},
                   {"train": cfg.seed, "split": extra["split"]["seed"]}, [src], [out, hist_path],
                   {"train": time.perf_counter() - t0})
    return 0


# ---------------------------------------------------------------------------
# evaluate


def run_evaluate(ds, checkpoints, otws, partition, out_dir: Path) -> EvaluationReport:
    if not otws:
        raise UsageError("--otw needs at least one value")
    report = EvaluationReport()
    for path in checkpoints:
        ck = LoadedModel.from_file(_require_file(path))
        if ck.otw_steps not in otws:
            log.warning("skipping %s: trained at OTW %d, not in %s", path, ck.otw_steps, otws)
            continue
        try:
            row, curve, _ = evaluate_checkpoint(ck, ds, partition)
        except ValueError as exc:
            raise StvsError(f"checkpoint {path}: {exc}") from None
        report.add(row, curve)
        hist = ck.payload.get("history") or []
        report.histories[f"{ck.kind}_otw{ck.otw_steps}"] = [list(r) for r in hist]
    report.rows.sort(key=lambda r: (MODEL_KINDS.index(r.model) if r.model in MODEL_KINDS else 99,
                                    r.model, r.otw_steps))
    report.annotations = {
        "partition": partition,
        "reference_figures": "reference_* columns come from a 39-bus benchmark simulated in PSD-BPA; "
                             "synthetic data cannot reproduce them, so they are for orientation only.",
    }
    write_report(report, out_dir)
    return report


def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    src = _require_file(args.input)
    ds = read_dataset(src)
    out_dir = Path(args.out)
    report = run_evaluate(ds, args.checkpoints, args.otw or [], args.partition, out_dir)
    print("model,otw_steps,accuracy,f1,auc")
    for r in report.rows:
        print(f"{r.model},{r.otw_steps},{r.accuracy:.4f},{r.f1:.4f},{r.auc:.4f}")
    write_manifest(out_dir / "manifest.json", "evaluate", {"otw": args.otw, "partition": args.partition},
                   {}, [src, *args.checkpoints], [out_dir / "report.json", out_dir / "table.csv"],
                   {"evaluate": time.perf_counter() - t0})
    return 0


# ---------------------------------------------------------------------------
# assess


def assess_stream(ck: LoadedModel, series: np.ndarray, min_steps: int, stream: bool):
    """Yield ``(steps, label, p_stable, latency_s, at_trained_otw)`` while replaying one record."""
    n = series.shape[0]
    target = ck.otw_steps
    if ck.kind == "lstm":
        model = ck.model
        state = lstm.CellState(np.zeros(model.hidden_dim), np.zeros(model.hidden_dim))
        last = min(n, max(target, n if stream else target))
        for k in range(1, last + 1):
            t_start = time.perf_counter_ns()
            x = ck.normalize(series[k - 1])
            state, _ = lstm.cell_forward(x, state, model)
            probs = lstm.softmax(state.h @ model.W_s.T + model.b_s)
            latency = (time.perf_counter_ns() - t_start) * 1e-9
            if k == target or (stream and k >= min_steps):
                p = float(probs[0])
                yield k, Label.from_index(int(lstm.classify(probs))), p, latency, k == target
    else:
        t_start = time.perf_counter_ns()
        p = float(ck.scores(series[None])[0])
        latency = (time.perf_counter_ns() - t_start) * 1e-9
        yield target, (Label.STABLE if p > 0.5 else Label.UNSTABLE), p, latency, True


def cmd_assess(args) -> int:
    ck = LoadedModel.from_file(_require_file(args.checkpoint))
    ds = read_dataset(_require_file(args.input))
    if ds.n_channels != ck.n_channels:
        raise StvsError(f"checkpoint {args.checkpoint} expects {ck.n_channels} channels, "
                        f"dataset has {ds.n_channels}")
    wanted = set(args.id) if args.id else None
    min_steps = args.min_otw if args.min_otw is not None else 1
    print("id,elapsed_steps,class,p_stable,latency_s,at_trained_otw")
    for inst in ds:
        if wanted is not None and inst.id not in wanted:
            continue
        if inst.m < ck.otw_steps:
            log.warning("instance %d has %d steps, checkpoint needs %d; skipped",
                        inst.id, inst.m, ck.otw_steps)
            continue
        for k, label, p, latency, at_otw in assess_stream(ck, inst.series, min_steps, args.stream):
            print(f"{inst.id},{k},{label.value},{p:.6f},{latency:.3e},{int(at_otw)}")
    return 0


# ---------------------------------------------------------------------------
# pipeline


def cmd_pipeline(args) -> int:
    timings = {}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipe = {"otw": [3, 6, 9, 12], "models": list(MODEL_KINDS)}
    pipe.update(check_keys("pipeline", read_section(args.config, "pipeline"), pipe))
    otws = args.otw or pipe["otw"]
    models = args.models or pipe["models"]

    t0 = time.perf_counter()
    gen_args = argparse.Namespace(config=args.config, seed=args.seed, n_buses=None, n_samples=None,
                                  noise_sigma=None, steps=None, out=str(out / "dataset.jsonl"))
    cmd_generate(gen_args)
    timings["generate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lab_args = argparse.Namespace(config=args.config, seed=args.seed, input=gen_args.out,
                                  out=str(out / "labeled.jsonl"), report=str(out / "label_report.txt"),
                                  v_stable=None, v_unstable=None, tail_fraction=None, max_iter=None)
    cmd_label(lab_args)
    timings["label"] = time.perf_counter() - t0

    ds = read_dataset(lab_args.out)
    cfg, extra = train_options(argparse.Namespace(config=args.config, seed=None, split_seed=None))
    ckpts = []
    for kind in models:
        for otw in otws:
            t0 = time.perf_counter()
            path = out / "checkpoints" / f"{kind}_otw{otw}.json"
            run_train(ds, kind, otw, cfg, extra, path)
            ckpts.append(path)
            timings[f"train_{kind}_otw{otw}"] = time.perf_counter() - t0
            log.info("trained %s at OTW %d in %.1fs", kind, otw, timings[f"train_{kind}_otw{otw}"])

    t0 = time.perf_counter()
    report = run_evaluate(ds, ckpts, otws, "test", out / "report")
    timings["evaluate"] = time.perf_counter() - t0
    print("model,otw_steps,accuracy,f1,auc")
    for r in report.rows:
        print(f"{r.model},{r.otw_steps},{r.accuracy:.4f},{r.f1:.4f},{r.auc:.4f}")
    write_manifest(out / "manifest.json", "pipeline", {"config": args.config, "otw": otws, "models": models},
                   {"master": args.seed}, [], [Path(gen_args.out), Path(lab_args.out), *ckpts], timings)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stvslab", description=__doc__.strip().splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a post-disturbance dataset")
    g.add_argument("--config")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.add_argument("--n-buses", type=int)
    g.add_argument("--n-samples", type=int)
    g.add_argument("--noise-sigma", type=float)
    g.add_argument("--steps", type=int, help="samples per instance (m)")
    g.set_defaults(func=cmd_generate)

    lb = sub.add_parser("label", help="label instances with seeded COP k-means")
    lb.add_argument("--in", dest="input", required=True)
    lb.add_argument("--out", required=True)
    lb.add_argument("--config")
    lb.add_argument("--seed", type=int)
    lb.add_argument("--v-stable", type=float)
    lb.add_argument("--v-unstable", type=float)
    lb.add_argument("--tail-fraction", type=float)
    lb.add_argument("--max-iter", type=int)
    lb.add_argument("--report", help="also write the clustering report here")
    lb.set_defaults(func=cmd_label)

    t = sub.add_parser("train", help="train one classifier at one OTW")
    t.add_argument("--in", dest="input", required=True)
    t.add_argument("--model", required=True, choices=MODEL_KINDS)
    t.add_argument("--otw", type=int, required=True, help="observation window in samples")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--split-seed", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--hidden-dim", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--dropout-rate", type=float)
    t.add_argument("--loss", choices=("l2", "cross_entropy"))
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score checkpoints and write the comparison report")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--checkpoints", nargs="+", required=True)
    e.add_argument("--otw", type=int, nargs="*", default=None)
    e.add_argument("--partition", choices=("test", "train", "all"), default="test")
    e.add_argument("--config")
    e.add_argument("--seed", type=int)
    e.add_argument("--out", required=True, help="output directory")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("assess", help="replay records step by step through a checkpoint")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--id", type=int, nargs="*")
    a.add_argument("--stream", action="store_true", help="emit a verdict at every step")
    a.add_argument("--min-otw", type=int)
    a.add_argument("--config")
    a.add_argument("--seed", type=int)
    a.add_argument("--out")
    a.set_defaults(func=cmd_assess)

    pl = sub.add_parser("pipeline", help="run generate, label, train and evaluate")
    pl.add_argument("--config")
    pl.add_argument("--seed", type=int)
    pl.add_argument("--out", required=True, help="run directory")
    pl.add_argument("--otw", type=int, nargs="*")
    pl.add_argument("--models", nargs="*", choices=MODEL_KINDS)
    pl.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    log.propagate = False
    out_path = getattr(args, "out", None)
    if args.command == "assess" and out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            stdout, sys.stdout = sys.stdout, fh
            try:
                return _run(args, parser)
            finally:
                sys.stdout = stdout
    return _run(args, parser)


def _run(args, parser) -> int:
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"stvslab: error: {exc}", file=sys.stderr)
        return 2
    except (StvsError, OSError, ValueError) as exc:
        print(f"stvslab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
