"""Detection metrics: threshold rule, AUROC, FPR at a target TPR, ID accuracy.

ID samples are the positives. Scores follow the uncertainty orientation, so
a sample is flagged OOD when its score is strictly above the threshold.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .core import check_labels, check_logits, check_scores
from .errors import ValidationError

ID, OOD = 0, 1


def detect(scores, threshold: float) -> np.ndarray:
    """Label each sample ``OOD`` (1) if its score exceeds ``threshold``, else ``ID`` (0)."""
    if not np.isfinite(threshold):
        raise ValidationError(f"threshold must be finite, got {threshold!r}")
    s = check_scores(scores)
    return np.where(s > threshold, OOD, ID)


def _nonempty(id_scores, ood_scores):
    a = check_scores(id_scores, "id_scores")
    b = check_scores(ood_scores, "ood_scores")
    if a.size == 0 or b.size == 0:
        raise ValidationError("id_scores and ood_scores must both be non-empty")
    return a, b


def auroc(id_scores, ood_scores) -> float:
    """P(score_id < score_ood) over all pairs, ties counted as 1/2.

    Computed from average ranks (Mann-Whitney U of the OOD sample).
    """
    a, b = _nonempty(id_scores, ood_scores)
    ranks = rankdata(np.concatenate([a, b]), method="average")
    u = ranks[a.size :].sum() - b.size * (b.size + 1) / 2.0
    return float(u / (a.size * b.size))


def fpr_at_tpr(id_scores, ood_scores, tpr_target: float = 0.95) -> float:
    """Fraction of OOD samples accepted as ID at the first threshold reaching the target TPR.

    The threshold is the smallest observed ID score ``t`` with
    ``#{id <= t} / n_id >= tpr_target``; OOD samples with score ``<= t`` are
    false positives.
    """
    if not (0 < tpr_target <= 1):
        raise ValidationError(f"tpr_target must lie in (0, 1], got {tpr_target!r}")
    a, b = _nonempty(id_scores, ood_scores)
    a = np.sort(a)
    tpr = np.arange(1, a.size + 1) / a.size
    k = int(np.argmax(tpr >= tpr_target))
    threshold = a[k]
    return float(np.count_nonzero(b <= threshold) / b.size)


def id_accuracy(logits, labels) -> float:
    """Top-1 accuracy; argmax ties go to the lowest class index."""
    z = check_logits(np.asarray(logits, dtype=np.float64))
    y = check_labels(labels, n_classes=z.shape[1])
    if y.shape[0] != z.shape[0]:
        raise ValidationError(f"{z.shape[0]} logit rows vs {y.shape[0]} labels")
    return float(np.mean(np.argmax(z, axis=1) == y))


@dataclass
class EvalReport:
    """Per (method, OOD set) FPR@95 and AUROC, per-method averages, ID accuracy."""

    cells: dict = field(default_factory=dict)  # method -> ood_set -> {"fpr95", "auroc"}
    id_accuracy: float | None = None

    @property
    def methods(self) -> list[str]:
        return list(self.cells)

    def averages(self) -> dict:
        out = {}
        for method, per_set in self.cells.items():
            vals = list(per_set.values())
            out[method] = {
                "fpr95": float(sum(v["fpr95"] for v in vals) / len(vals)),
                "auroc": float(sum(v["auroc"] for v in vals) / len(vals)),
            }
        return out

    def to_dict(self) -> dict:
        return {"methods": self.cells, "averages": self.averages(), "id_accuracy": self.id_accuracy}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(cells=d["methods"], id_accuracy=d.get("id_accuracy"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def csv_rows(self):
        for method, per_set in self.cells.items():
            for ood_set, v in per_set.items():
                yield [method, ood_set, repr(v["fpr95"]), repr(v["auroc"])]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "ood_set", "fpr95", "auroc"])
        w.writerows(self.csv_rows())
        return buf.getvalue()


def evaluate_scores(id_scores: dict, ood_scores: dict, methods, ood_names, id_acc=None, tpr_target=0.95) -> EvalReport:
    """Build a report from ``id_scores[method]`` and ``ood_scores[method][ood_set]`` vectors."""
    missing = []
    for m in methods:
        if m not in id_scores:
            missing.append(f"{m}/id")
        for name in ood_names:
            if name not in ood_scores.get(m, {}):
                missing.append(f"{m}/{name}")
    if missing:
        raise ValidationError("missing score vectors: " + ", ".join(missing))
    cells = {}
    for m in methods:
        cells[m] = {}
        for name in ood_names:
            cells[m][name] = {
                "fpr95": fpr_at_tpr(id_scores[m], ood_scores[m][name], tpr_target),
                "auroc": auroc(id_scores[m], ood_scores[m][name]),
            }
    return EvalReport(cells=cells, id_accuracy=id_acc)


def evaluate_suite(bundle, cfg, artifacts: dict) -> EvalReport:
    """Evaluate every configured method on ID vs each OOD set of ``bundle``.

    ``artifacts`` carries ``"id_scores"`` (method -> vector), ``"ood_scores"``
    (method -> set name -> vector) and optionally ``"id_logits"`` for the ID
    accuracy (falls back to the bundle's supplied ID logits).
    """
    logits = artifacts.get("id_logits")
    if logits is None:
        logits = bundle.id_test_logits
    acc = id_accuracy(logits, bundle.id_test_labels) if logits is not None else None
    return evaluate_scores(
        artifacts.get("id_scores", {}),
        artifacts.get("ood_scores", {}),
        cfg.methods,
        [s.name for s in bundle.ood_sets],
        id_acc=acc,
    )
