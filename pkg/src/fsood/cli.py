"""Command-line entry point: ``fsood <subcommand> ...``."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields
from pathlib import Path

from .bench import PIPELINES, emit_report, run_benchmark, utc_timestamp
from .config import ALL_METHODS, FUSED_VARIANTS, SCORE_METHODS, RunConfig, TrainConfig, parse_methods, parse_shot
from .core import check_labels, few_shot_indices
from .dsgf import fuse_features, save_head, train_head
from .errors import FSOODError
from .evaluation import evaluate_scores, id_accuracy
from .io import load_matrix, save_bundle, save_matrix
from .knn import FusedKnnIndex, build_index, knn_score_batch
from .scores import score_batch
from .synth import SynthConfig, synth_bundle

SEED_ENV = "OODBENCH_SEED"


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise FSOODError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _shots(text: str):
    try:
        return [parse_shot(s.strip()) for s in text.split(",") if s.strip()]
    except FSOODError as e:
        raise argparse.ArgumentTypeError(str(e))


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default: ${SEED_ENV} or 0)")


def _add_train(p):
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--momentum", type=float, default=0.0)


def _train_cfg(args, seed) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        momentum=args.momentum,
        seed=seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsood", description="Few-shot OOD detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic two-stream bundle")
    p.add_argument("--out-dir", required=True, type=Path)
    _add_seed(p)
    for f in fields(SynthConfig):
        if f.name == "seed":
            continue
        p.add_argument("--" + f.name.replace("_", "-"), type=type(f.default), default=f.default)

    p = sub.add_parser("score", help="logit-based score for every row of a logit file")
    p.add_argument("--method", required=True, choices=SCORE_METHODS)
    p.add_argument("--logits", required=True, type=Path)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("knn", help="cosine k-NN score of query features against a training bank")
    p.add_argument("--train", required=True, type=Path)
    p.add_argument("--query", required=True, type=Path)
    p.add_argument("--train-ft", type=Path, help="second stream; enables fused scoring")
    p.add_argument("--query-ft", type=Path)
    p.add_argument("--variant", choices=FUSED_VARIANTS, default="concat-then-normalize")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("train-head", help="train the linear head (fused when --features-ft is given)")
    p.add_argument("--features", required=True, type=Path)
    p.add_argument("--features-ft", type=Path)
    p.add_argument("--labels", required=True, type=Path)
    p.add_argument("--n-classes", type=int, default=None)
    p.add_argument("--shots", type=parse_shot, default="all")
    _add_seed(p)
    _add_train(p)
    p.add_argument("--out-dir", required=True, type=Path)

    p = sub.add_parser("eval", help="FPR@95 / AUROC from score files")
    p.add_argument("--id-scores", required=True, type=Path)
    p.add_argument("--ood-scores", required=True, action="append", metavar="NAME=PATH")
    p.add_argument("--method", default="score", help="label for the report rows")
    p.add_argument("--logits", type=Path, help="ID logits for accuracy")
    p.add_argument("--labels", type=Path, help="ID labels for accuracy")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("bench", help="run the shots x pipelines x methods grid")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest", type=Path)
    src.add_argument("--synth-default", action="store_true", help="use the default synthetic bundle")
    p.add_argument("--shots", type=_shots, default=[2, 4, 8, 16, "all"])
    p.add_argument("--methods", default=",".join(ALL_METHODS))
    p.add_argument("--pipelines", default=",".join(PIPELINES))
    p.add_argument("--variant", choices=FUSED_VARIANTS, default="concat-then-normalize")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--ft-logits", choices=("head", "supplied"), default="head")
    _add_seed(p)
    _add_train(p)
    p.add_argument("--format", choices=("json", "csv"), default=None, help="default: from --out suffix")
    p.add_argument("--timestamp", action="store_true", help="record the current UTC time in the metadata")
    p.add_argument("--out", required=True, type=Path)
    return parser


def _cmd_synth(args, seed):
    kwargs = {f.name: getattr(args, f.name) for f in fields(SynthConfig) if f.name != "seed"}
    bundle = synth_bundle(SynthConfig(seed=seed, **kwargs))
    path = save_bundle(bundle, args.out_dir)
    print(path)


def _cmd_score(args, seed):
    logits = load_matrix(args.logits, "logit")
    save_matrix(score_batch(logits, args.method, args.temperature), args.out, "score")


def _cmd_knn(args, seed):
    train = load_matrix(args.train, "feature")
    query = load_matrix(args.query, "feature")
    if (args.train_ft is None) != (args.query_ft is None):
        raise FSOODError("--train-ft and --query-ft must be given together")
    if args.train_ft is None:
        scores = knn_score_batch(build_index(train), query, args.k)
    else:
        fused = FusedKnnIndex.build(train, load_matrix(args.train_ft, "feature"))
        scores = fused.score_batch(query, load_matrix(args.query_ft, "feature"), args.variant, args.k)
    save_matrix(scores, args.out, "score")


def _cmd_train_head(args, seed):
    feats = load_matrix(args.features, "feature")
    labels = load_matrix(args.labels, "label", n_classes=args.n_classes)
    if args.features_ft is not None:
        feats = fuse_features(feats, load_matrix(args.features_ft, "feature"))
    idx = few_shot_indices(labels, args.shots, seed)
    cfg = _train_cfg(args, seed)
    head = train_head(feats[idx], labels[idx], cfg, n_classes=args.n_classes)
    save_head(head, args.out_dir, cfg, extra={"shots": args.shots, "fused": args.features_ft is not None})


def _cmd_eval(args, seed):
    id_scores = load_matrix(args.id_scores, "score")
    ood = {}
    for item in args.ood_scores:
        name, sep, path = item.partition("=")
        if not sep or not name:
            raise FSOODError(f"--ood-scores expects NAME=PATH, got {item!r}")
        ood[name] = load_matrix(path, "score")
    acc = None
    if (args.logits is None) != (args.labels is None):
        raise FSOODError("--logits and --labels must be given together")
    if args.logits is not None:
        logits = load_matrix(args.logits, "logit")
        acc = id_accuracy(logits, check_labels(load_matrix(args.labels, "label"), n_classes=logits.shape[1]))
    report = evaluate_scores({args.method: id_scores}, {args.method: ood}, [args.method], list(ood), id_acc=acc)
    args.out.write_text(report.to_json() if args.format == "json" else report.to_csv())


def _cmd_bench(args, seed):
    methods = parse_methods(args.methods)
    pipelines = tuple(p.strip() for p in args.pipelines.split(",") if p.strip())
    cfg = RunConfig(
        temperature=args.temperature,
        knn_k=args.k,
        seed=seed,
        methods=methods,
        variant=args.variant,
        train=_train_cfg(args, seed),
        ft_logits=args.ft_logits,
    )
    report = run_benchmark(
        None if args.synth_default else args.manifest,
        shots=args.shots,
        cfg=cfg,
        pipelines=pipelines,
        timestamp=utc_timestamp() if args.timestamp else None,
    )
    fmt = args.format or ("csv" if args.out.suffix.lower() == ".csv" else "json")
    emit_report(report, fmt, args.out)


_COMMANDS = {
    "synth": _cmd_synth,
    "score": _cmd_score,
    "knn": _cmd_knn,
    "train-head": _cmd_train_head,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        seed = args.seed if getattr(args, "seed", None) is not None else _default_seed()
        _COMMANDS[args.command](args, seed)
    except (FSOODError, OSError) as e:
        print(f"fsood {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
