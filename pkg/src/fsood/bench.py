"""Benchmark grid: shots x pipelines x methods x OOD sets.

Three pipelines are compared at every shot setting, all trained on the same
seeded few-shot subset:

* ``baseline-ft``   linear head and k-NN bank on fine-tuned features
* ``baseline-orig`` linear head and k-NN bank on original features
* ``dsgf``          head on concatenated features, fused k-NN bank
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import FUSED_VARIANTS, SCORE_METHODS, RunConfig, parse_methods, parse_shot
from .core import DatasetBundle, few_shot_indices, validate_bundle
from .dsgf import dsgf_pipeline, head_forward, train_head
from .errors import ConfigError, FSOODError
from .evaluation import EvalReport, auroc, evaluate_scores, fpr_at_tpr, id_accuracy
from .io import load_bundle
from .knn import FusedKnnIndex, build_index, fused_knn_score, knn_score_batch
from .scores import score_batch
from .synth import SynthConfig, synth_bundle

PIPELINES = ("baseline-ft", "baseline-orig", "dsgf")


@dataclass
class BenchReport:
    grid: dict = field(default_factory=dict)  # (shot, pipeline) -> EvalReport
    variants: dict = field(default_factory=dict)  # (shot, variant) -> ood_set -> {"fpr95", "auroc"}
    witness: dict | None = None
    metadata: dict = field(default_factory=dict)

    def cell(self, shot, pipeline) -> EvalReport:
        return self.grid[(shot, pipeline)]

    def to_dict(self) -> dict:
        grid = [
            {"shot": shot, "pipeline": pipeline, **rep.to_dict()}
            for (shot, pipeline), rep in self.grid.items()
        ]
        variants = []
        for (shot, variant), cells in self.variants.items():
            vals = list(cells.values())
            variants.append(
                {
                    "shot": shot,
                    "variant": variant,
                    "cells": cells,
                    "average": {
                        "fpr95": float(sum(v["fpr95"] for v in vals) / len(vals)),
                        "auroc": float(sum(v["auroc"] for v in vals) / len(vals)),
                    },
                }
            )
        return {
            "metadata": self.metadata,
            "grid": grid,
            "fused_knn_variants": variants,
            "variant_witness": self.witness,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchReport":
        grid = {
            (c["shot"], c["pipeline"]): EvalReport(cells=c["methods"], id_accuracy=c.get("id_accuracy"))
            for c in d["grid"]
        }
        variants = {(v["shot"], v["variant"]): v["cells"] for v in d.get("fused_knn_variants", [])}
        return cls(grid=grid, variants=variants, witness=d.get("variant_witness"), metadata=d.get("metadata", {}))


def bundle_digest(bundle: DatasetBundle) -> str:
    h = hashlib.sha256()
    arrays = [
        bundle.train_orig, bundle.train_ft, bundle.train_labels, bundle.train_logits,
        bundle.id_test_orig, bundle.id_test_ft, bundle.id_test_labels, bundle.id_test_logits,
    ]
    for s in bundle.ood_sets:
        h.update(s.name.encode())
        arrays += [s.orig, s.ft, s.logits]
    for a in arrays:
        if a is None:
            h.update(b"-")
            continue
        a = np.ascontiguousarray(a)
        h.update(f"{a.dtype.str}{a.shape}".encode())
        h.update(a.tobytes())
    return h.hexdigest()


def variant_divergence_witness() -> dict:
    """Two paired queries that normalize-then-concat and score-sum rank oppositely.

    Bank: orig rows e1, e2 and ft rows e1, e2. Query A matches train row 0 in
    the orig stream but train row 1 in the ft stream; query B is at 45 degrees
    to every row in both streams.
    """
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    diag = np.array([1.0, 1.0])
    index_o = build_index(np.stack([e1, e2]))
    index_ft = build_index(np.stack([e1, e2]))
    queries = {"A": (e1, e2), "B": (diag, diag)}
    scores = {
        v: {name: fused_knn_score(index_o, index_ft, qo, qf, v) for name, (qo, qf) in queries.items()}
        for v in FUSED_VARIANTS
    }

    def more_ood(v):
        return "A" if scores[v]["A"] > scores[v]["B"] else "B"

    return {
        "train_orig": [e1.tolist(), e2.tolist()],
        "train_ft": [e1.tolist(), e2.tolist()],
        "queries": {name: {"orig": qo.tolist(), "ft": qf.tolist()} for name, (qo, qf) in queries.items()},
        "scores": scores,
        "more_ood": {v: more_ood(v) for v in FUSED_VARIANTS},
        "orderings_agree": len({more_ood(v) for v in FUSED_VARIANTS}) == 1,
    }


def _resolve_source(source):
    if isinstance(source, DatasetBundle):
        return source, {"kind": "bundle"}
    if isinstance(source, SynthConfig):
        return synth_bundle(source), {"kind": "synth", "config": source.to_dict()}
    if source is None:
        cfg = SynthConfig()
        return synth_bundle(cfg), {"kind": "synth", "config": cfg.to_dict()}
    path = Path(source)
    return load_bundle(path), {"kind": "manifest", "path": str(path)}


def _single_stream(bundle, stream, idx, cfg, methods, use_supplied_logits=False):
    """Scores and ID logits for one feature stream ("orig" or "ft")."""
    train = getattr(bundle, f"train_{stream}")[idx]
    labels = bundle.train_labels[idx]
    id_feats = getattr(bundle, f"id_test_{stream}")
    ood_feats = {s.name: getattr(s, stream) for s in bundle.ood_sets}
    logit_methods = [m for m in methods if m in SCORE_METHODS]

    id_logits = ood_logits = None
    if use_supplied_logits:
        id_logits = bundle.id_test_logits
        ood_logits = {s.name: s.logits for s in bundle.ood_sets}
        if id_logits is None or any(v is None for v in ood_logits.values()):
            raise FSOODError("ft_logits='supplied' but the bundle lacks ID or OOD logits")
    else:
        head = train_head(train, labels, cfg.train, n_classes=bundle.num_classes)
        id_logits = head_forward(head, id_feats)
        ood_logits = {name: head_forward(head, f) for name, f in ood_feats.items()}

    id_scores = {m: score_batch(id_logits, m, cfg.temperature) for m in logit_methods}
    ood_scores = {m: {n: score_batch(z, m, cfg.temperature) for n, z in ood_logits.items()} for m in logit_methods}
    if "knn" in methods:
        index = build_index(train)
        id_scores["knn"] = knn_score_batch(index, id_feats, cfg.knn_k)
        ood_scores["knn"] = {n: knn_score_batch(index, f, cfg.knn_k) for n, f in ood_feats.items()}
    return id_scores, ood_scores, id_logits


def _dsgf(bundle, cfg, methods, variants):
    res = dsgf_pipeline(bundle, cfg)
    logit_methods = [m for m in methods if m in SCORE_METHODS]
    id_scores = {m: score_batch(res.id_logits, m, cfg.temperature) for m in logit_methods}
    ood_scores = {
        m: {n: score_batch(z, m, cfg.temperature) for n, z in res.ood_logits.items()} for m in logit_methods
    }
    fused = FusedKnnIndex.build(res.train_orig, res.train_ft)

    def knn_scores(variant):
        ids = fused.score_batch(bundle.id_test_orig, bundle.id_test_ft, variant, cfg.knn_k)
        oods = {s.name: fused.score_batch(s.orig, s.ft, variant, cfg.knn_k) for s in bundle.ood_sets}
        return ids, oods

    if "knn" in methods:
        id_scores["knn"], ood_scores["knn"] = knn_scores(cfg.variant)
    variant_cells = {}
    for v in variants:
        ids, oods = knn_scores(v)
        variant_cells[v] = {
            name: {"fpr95": fpr_at_tpr(ids, o), "auroc": auroc(ids, o)} for name, o in oods.items()
        }
    return id_scores, ood_scores, res.id_logits, variant_cells


def config_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def run_benchmark(
    source=None,
    shots=(2, 4, 8, 16, "all"),
    methods=None,
    variants=FUSED_VARIANTS,
    cfg: RunConfig | None = None,
    pipelines=PIPELINES,
    timestamp: str | None = None,
) -> BenchReport:
    """Run the full grid on a bundle, a SynthConfig, or a manifest path.

    ``source=None`` uses the default synthetic bundle. ``methods`` defaults
    to ``cfg.methods``. Errors are re-raised with the failing grid cell.
    """
    cfg = cfg or RunConfig()
    methods = parse_methods(methods) if methods is not None else cfg.methods
    shots = [parse_shot(s) for s in shots]
    if not shots:
        raise ConfigError("shot grid must not be empty")
    bad = [p for p in pipelines if p not in PIPELINES]
    if bad or not pipelines:
        raise ConfigError(f"pipelines must be a non-empty subset of {PIPELINES}")
    bad = [v for v in variants if v not in FUSED_VARIANTS]
    if bad:
        raise ConfigError(f"unknown variant(s) {bad}; valid variants: " + ", ".join(FUSED_VARIANTS))

    bundle, source_meta = _resolve_source(source)
    validate_bundle(bundle)
    ood_names = [s.name for s in bundle.ood_sets]

    report = BenchReport()
    for shot in shots:
        shot_cfg = replace(cfg, shot=shot, methods=methods)
        for pipeline in pipelines:
            try:
                idx = few_shot_indices(bundle.train_labels, shot, cfg.seed)
                if pipeline == "dsgf":
                    id_s, ood_s, id_logits, vcells = _dsgf(bundle, shot_cfg, methods, variants)
                    for v, cells in vcells.items():
                        report.variants[(shot, v)] = cells
                else:
                    stream = "ft" if pipeline == "baseline-ft" else "orig"
                    supplied = stream == "ft" and cfg.ft_logits == "supplied"
                    id_s, ood_s, id_logits = _single_stream(bundle, stream, idx, shot_cfg, methods, supplied)
                acc = id_accuracy(id_logits, bundle.id_test_labels)
                report.grid[(shot, pipeline)] = evaluate_scores(id_s, ood_s, methods, ood_names, id_acc=acc)
            except FSOODError as e:
                raise FSOODError(f"grid cell shot={shot} pipeline={pipeline}: {e}") from e

    report.witness = variant_divergence_witness()
    hashed = {
        "source": source_meta,
        "bundle_sha256": bundle_digest(bundle),
        "run_config": cfg.to_dict(),
        "shots": shots,
        "methods": list(methods),
        "pipelines": list(pipelines),
        "variants": list(variants),
    }
    report.metadata = {
        **hashed,
        "ood_sets": ood_names,
        "seed": cfg.seed,
        "config_hash": config_hash(hashed),
        "timestamp": timestamp,
    }
    return report


def utc_timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()


def report_csv(report: BenchReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["shot", "pipeline", "method", "ood_set", "fpr95", "auroc"])
    for (shot, pipeline), rep in report.grid.items():
        for row in rep.csv_rows():
            w.writerow([shot, pipeline, *row])
    return buf.getvalue()


def emit_report(report: BenchReport, fmt: str, path) -> None:
    """Write the report as JSON or flat CSV."""
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2) + "\n"
    elif fmt == "csv":
        text = report_csv(report)
    else:
        raise ConfigError(f"unknown report format {fmt!r}; expected json or csv")
    Path(path).write_text(text)
