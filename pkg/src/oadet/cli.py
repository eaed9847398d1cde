"""Command-line entry point: gen-data, train, infer, eval, ablate.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric failure. Failures print one diagnostic line to stderr and remove
any output the command had started to create.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import tempfile
from dataclasses import fields, replace
from pathlib import Path

from .data.io import FormatError, read_features, read_labels, write_features, write_labels
from .data.synth import SynthConfig, generate_split
from .experiments import LG_SWEEP, STREAM_SWEEP, Benchmark, BenchmarkConfig, mean_table
from .metrics import evaluate_files
from .model import Model
from .numerics import ShapeError
from .streaming import StreamConfig, run_offline_file
from .training import NumericError, TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

FEATURE_SUFFIX = ".features"
LABEL_SUFFIX = ".labels"

SPLIT_DEFAULTS = {"n_train": 40, "train_len": 400, "n_test": 6, "test_len": 320}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: str | None, overrides: list[str] | None = None) -> dict:
    """JSON config with ``section.key=value`` overrides applied; no validation yet."""
    cfg: dict = {}
    if path:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError(f"config {path} must hold a JSON object")
    for item in overrides or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"override {item!r} must look like section.key=value")
        *parents, leaf = key.split(".")
        node = cfg
        for p in parents:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise UsageError(f"override {item!r}: {p} is not a section")
        node[leaf] = _parse_value(value)
    allowed = {"synth", "train", "stream", "split", "seeds"}
    unknown = set(cfg) - allowed
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def _section(kind, values: dict | None, what: str, base=None):
    values = values or {}
    if not isinstance(values, dict):
        raise UsageError(f"config section {what} must be an object")
    known = {f.name for f in fields(kind)}
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"unknown {what} keys: {sorted(unknown)}")
    obj = replace(base, **values) if base is not None else kind(**values)
    try:
        obj.validate()
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid {what} config: {exc}") from None
    return obj


def _split(cfg: dict, defaults: dict = SPLIT_DEFAULTS) -> dict:
    values = cfg.get("split") or {}
    unknown = set(values) - set(defaults)
    if unknown:
        raise UsageError(f"unknown split keys: {sorted(unknown)}")
    out = {**defaults, **values}
    if any(not isinstance(v, int) or v < 1 for v in out.values()):
        raise UsageError("split sizes must be positive integers")
    return out


class _Outputs:
    """Tracks paths a command creates so they can be removed on failure."""

    def __init__(self):
        self.paths: list[Path] = []

    def claim(self, path) -> Path:
        p = Path(path)
        if not p.exists():
            self.paths.append(p)
        return p

    def discard(self) -> None:
        for p in reversed(self.paths):
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            else:
                p.unlink(missing_ok=True)


def write_split(directory: Path, split, K: int) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(split) - 1)))
    for i, (x, y) in enumerate(split):
        stem = directory / f"seq{i:0{width}d}"
        write_features(stem.with_suffix(FEATURE_SUFFIX), x, K)
        write_labels(stem.with_suffix(LABEL_SUFFIX), y, K)


def load_split(directory, num_classes: int | None = None):
    """Pairs of (features, labels) for every ``*.features`` file in ``directory``."""
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"data directory {d} does not exist")
    files = sorted(d.glob("*" + FEATURE_SUFFIX))
    if not files:
        raise DataError(f"no {FEATURE_SUFFIX} files in {d}")
    out = []
    for f in files:
        x, _ = read_features(f)
        lab = f.with_suffix(LABEL_SUFFIX)
        if not lab.exists():
            raise DataError(f"missing label file {lab}")
        y, lh = read_labels(lab)
        if len(y) != len(x):
            raise DataError(f"{lab}: {len(y)} labels for {len(x)} frames")
        if num_classes is not None and y.max(initial=0) > num_classes:
            raise DataError(f"{lab}: class index {int(y.max())} exceeds K={num_classes}")
        out.append((x, y))
    return out


def cmd_gen_data(args, out: _Outputs) -> None:
    cfg = load_config(args.config, args.set)
    synth = _section(SynthConfig, cfg.get("synth"), "synth")
    if args.seed is not None:
        synth = replace(synth, seed=args.seed)
    split = _split(cfg)
    root = out.claim(args.out)
    if root.exists() and any(root.iterdir()):
        raise UsageError(f"output directory {root} is not empty")
    root.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=root.name + ".", dir=root.parent))
    try:
        # each split shares one class world; test sequences use distinct indices
        write_split(tmp / "train", generate_split(synth, split["n_train"], split["train_len"]), synth.num_classes)
        write_split(tmp / "test", generate_split(synth, split["n_test"], split["test_len"], offset=split["n_train"]), synth.num_classes)
        with open(tmp / "synth.json", "w") as fh:
            json.dump({"synth": synth.to_dict(), "split": split}, fh, sort_keys=True, indent=2)
            fh.write("\n")
        if root.exists():
            root.rmdir()
        tmp.rename(root)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    print(f"wrote {split['n_train']} train and {split['n_test']} test sequences to {root}")


def cmd_train(args, out: _Outputs) -> None:
    cfg = load_config(args.config, args.set)
    tc = _section(TrainConfig, cfg.get("train"), "train")
    flags = {
        "epochs": args.epochs,
        "seed": args.seed,
        "lr": args.lr,
        "l_g": args.lg,
        "batches_per_epoch": args.batches_per_epoch,
    }
    tc = _section(TrainConfig, {k: v for k, v in flags.items() if v is not None}, "train", base=tc)
    dataset = load_split(args.data, tc.K)
    dims = {x.shape[1] for x, _ in dataset}
    if dims != {tc.D}:
        raise DataError(f"feature dims {sorted(dims)} do not match train.D={tc.D}")
    ckpt = out.claim(args.out)
    report = open(out.claim(args.report), "w") if args.report else None
    try:
        _, rep = train(dataset, tc, ckpt, report_stream=_Tee(sys.stdout, report))
    finally:
        if report is not None:
            report.close()
    if tc.epochs == 0:
        print(json.dumps({"epochs": 0, "checkpoint": str(ckpt)}))


class _Tee:
    def __init__(self, *streams):
        self.streams = [s for s in streams if s is not None]

    def write(self, text: str) -> None:
        for s in self.streams:
            s.write(text)

    def flush(self) -> None:
        for s in self.streams:
            s.flush()


def cmd_infer(args, out: _Outputs) -> None:
    model, meta = Model.load(args.checkpoint)
    trained = meta.get("train", {})
    sc = StreamConfig(
        l_m=args.lm if args.lm is not None else trained.get("l_m", 32),
        l_g=args.lg if args.lg is not None else trained.get("l_g", 8),
        n=args.streams,
        smoothing=args.smoothing or trained.get("smoothing", "learned"),
    )
    try:
        sc.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    T = run_offline_file(args.features, model, sc, out.claim(args.out))
    print(f"wrote {T} frames of predictions to {args.out}")


def cmd_eval(args, out: _Outputs) -> None:
    res = evaluate_files(args.predictions, args.labels, args.classes)
    if args.json:
        p = out.claim(args.json)
        p.write_text(res.to_json() + "\n")
    print(res.to_table())


def cmd_ablate(args, out: _Outputs) -> None:
    cfg = load_config(args.config, args.set)
    base = BenchmarkConfig()
    synth = _section(SynthConfig, cfg.get("synth"), "synth", base=base.synth)
    tc = _section(TrainConfig, cfg.get("train"), "train", base=base.train)
    split = _split(cfg, {k: getattr(base, k) for k in SPLIT_DEFAULTS})
    stream = cfg.get("stream") or {}
    unknown = set(stream) - {"n"}
    if unknown:
        raise UsageError(f"unknown stream keys for ablate: {sorted(unknown)}")
    seeds = tuple(cfg.get("seeds", base.seeds))
    try:
        bench_cfg = BenchmarkConfig(synth, tc, seeds=seeds, streams=stream.get("n", base.streams), **split)
        bench_cfg.validate()
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid ablation config: {exc}") from None
    lg_values = tuple(args.lg) if args.lg else LG_SWEEP
    n_values = tuple(args.streams) if args.streams else STREAM_SWEEP
    for n in n_values:
        if tc.l_m % n:
            raise UsageError(f"stream count {n} does not divide l_m={tc.l_m}")
    bench = Benchmark(bench_cfg)
    lg_res = bench.lg_sweep(lg_values)
    n_res = bench.stream_sweep(n_values)
    text = "\n\n".join(
        [
            mean_table(f"mAP (%) by anticipation length, n={bench_cfg.streams}", "l_g", lg_res),
            mean_table(f"mAP (%) by stream count, l_g={tc.l_g}", "n", n_res),
        ]
    )
    print(text)
    if args.json:
        p = out.claim(args.json)
        doc = {
            "config": bench_cfg.to_dict(),
            "l_g": {str(k): v for k, v in lg_res.items()},
            "streams": {str(k): v for k, v in n_res.items()},
        }
        p.write_text(json.dumps(doc, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oadet", description="Feature-level online action detection.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")

    p = sub.add_parser("gen-data", help="write synthetic train/test splits")
    with_config(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory (created)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a directory of sequences")
    with_config(p)
    p.add_argument("--data", required=True, help="directory of .features/.labels pairs")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--report", help="also write per-epoch JSON lines here")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lg", type=int)
    p.add_argument("--batches-per-epoch", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="stream a feature file through a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="prediction file")
    p.add_argument("--streams", type=int, default=4)
    p.add_argument("--lg", type=int)
    p.add_argument("--lm", type=int)
    p.add_argument("--smoothing", choices=("learned", "uniform", "none"))
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="per-class AP and cAP of a prediction file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--json", help="write the result as JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="anticipation-length and stream-count sweeps on synthetic data")
    with_config(p)
    p.add_argument("--lg", type=int, nargs="+", help=f"l_g values (default {list(LG_SWEEP)})")
    p.add_argument("--streams", type=int, nargs="+", help=f"stream counts (default {list(STREAM_SWEEP)})")
    p.add_argument("--json", help="write per-seed results as JSON here")
    p.set_defaults(func=cmd_ablate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out = _Outputs()
    try:
        args.func(args, out)
        return EXIT_OK
    except UsageError as exc:
        code, msg = EXIT_USAGE, str(exc)
    except (DataError, FormatError, ShapeError, FileNotFoundError, IsADirectoryError) as exc:
        code, msg = EXIT_DATA, str(exc)
    except NumericError as exc:
        code, msg = EXIT_NUMERIC, str(exc)
    except OSError as exc:
        code, msg = EXIT_DATA, f"{exc.filename}: {exc.strerror}" if exc.filename else str(exc)
    except ValueError as exc:
        code, msg = EXIT_USAGE, str(exc)
    out.discard()
    print(f"oadet {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
