"""Matrix contracts, the dataset bundle, row normalization and few-shot subsampling.

Feature, logit and label matrices are plain numpy arrays; the ``check_*``
functions enforce their invariants and report the first offending row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BundleError, ValidationError
from .rng import fisher_yates

MIN_ROW_NORM = 1e-12


def _first_bad_row(mask: np.ndarray) -> int:
    return int(np.flatnonzero(mask)[0])


def check_features(x, name: str = "features") -> np.ndarray:
    """Validate an n x d feature matrix: finite, non-empty, no zero-norm rows."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValidationError(f"{name}: expected a non-empty 2-D matrix, got shape {x.shape}")
    if not np.issubdtype(x.dtype, np.floating):
        raise ValidationError(f"{name}: expected floating dtype, got {x.dtype}")
    bad = ~np.isfinite(x).all(axis=1)
    if bad.any():
        raise ValidationError(f"{name}: non-finite value in row {_first_bad_row(bad)}")
    with np.errstate(over="ignore"):  # an overflowing norm is still non-zero
        norms = np.linalg.norm(x.astype(np.float64), axis=1)
    small = norms <= MIN_ROW_NORM
    if small.any():
        raise ValidationError(f"{name}: zero-norm row {_first_bad_row(small)}")
    return x


def check_logits(z, name: str = "logits", n_classes: int | None = None) -> np.ndarray:
    z = np.asarray(z)
    if z.ndim != 2 or z.shape[0] < 1:
        raise ValidationError(f"{name}: expected a non-empty 2-D matrix, got shape {z.shape}")
    if z.shape[1] < 2:
        raise ValidationError(f"{name}: need at least 2 classes, got {z.shape[1]}")
    if n_classes is not None and z.shape[1] != n_classes:
        raise ValidationError(f"{name}: {z.shape[1]} columns but {n_classes} classes")
    if not np.issubdtype(z.dtype, np.floating):
        raise ValidationError(f"{name}: expected floating dtype, got {z.dtype}")
    bad = ~np.isfinite(z).all(axis=1)
    if bad.any():
        raise ValidationError(f"{name}: non-finite value in row {_first_bad_row(bad)}")
    return z


def check_labels(y, name: str = "labels", n_classes: int | None = None) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValidationError(f"{name}: expected a 1-D vector, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise ValidationError(f"{name}: expected integer dtype, got {y.dtype}")
    neg = y < 0
    if neg.any():
        raise ValidationError(f"{name}: label out of range at row {_first_bad_row(neg)} (value {y[neg][0]})")
    if n_classes is not None:
        over = y >= n_classes
        if over.any():
            i = _first_bad_row(over)
            raise ValidationError(f"{name}: label out of range at row {i} (value {y[i]}, K={n_classes})")
    return y


def check_scores(s, name: str = "scores") -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise ValidationError(f"{name}: expected a 1-D vector, got shape {s.shape}")
    bad = ~np.isfinite(s)
    if bad.any():
        raise ValidationError(f"{name}: non-finite score at row {_first_bad_row(bad)}")
    return s


def l2_normalize_rows(m) -> np.ndarray:
    """Scale every row to unit L2 norm (float64 result)."""
    m = check_features(m)
    x = m.astype(np.float64)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@dataclass(frozen=True)
class OODSet:
    name: str
    orig: np.ndarray
    ft: np.ndarray
    logits: np.ndarray | None = None


@dataclass(frozen=True)
class DatasetBundle:
    """Exported features (and optional logits) for one benchmark unit.

    ``orig`` arrays come from the frozen pre-trained backbone, ``ft`` arrays
    from the fine-tuned one; row i of each pair describes the same sample.
    OOD sets are unlabeled.
    """

    train_orig: np.ndarray
    train_ft: np.ndarray
    train_labels: np.ndarray
    id_test_orig: np.ndarray
    id_test_ft: np.ndarray
    id_test_labels: np.ndarray
    ood_sets: tuple[OODSet, ...] = field(default_factory=tuple)
    train_logits: np.ndarray | None = None
    id_test_logits: np.ndarray | None = None
    n_classes: int | None = None

    @property
    def num_classes(self) -> int:
        if self.n_classes is not None:
            return int(self.n_classes)
        for z in (self.train_logits, self.id_test_logits):
            if z is not None and np.ndim(z) == 2:
                return int(np.shape(z)[1])
        return int(np.max(self.train_labels)) + 1

    def ood(self, name: str) -> OODSet:
        for s in self.ood_sets:
            if s.name == name:
                return s
        raise KeyError(name)


def validate_bundle(b: DatasetBundle) -> None:
    """Check every bundle invariant and raise one BundleError listing all violations."""
    problems = []

    def run(check, value, name, **kw):
        if value is None:
            return None
        try:
            return check(value, name, **kw)
        except ValidationError as e:
            problems.append(str(e))
            return None

    try:
        k = b.num_classes
    except (TypeError, ValueError):
        problems.append("train_labels: cannot infer class count")
        k = None
    if k is not None and k < 2:
        problems.append(f"n_classes: need at least 2 classes, got {k}")

    run(check_features, b.train_orig, "train_orig")
    run(check_features, b.train_ft, "train_ft")
    run(check_labels, b.train_labels, "train_labels", n_classes=k)
    run(check_features, b.id_test_orig, "id_test_orig")
    run(check_features, b.id_test_ft, "id_test_ft")
    run(check_labels, b.id_test_labels, "id_test_labels", n_classes=k)
    run(check_logits, b.train_logits, "train_logits", n_classes=k)
    run(check_logits, b.id_test_logits, "id_test_logits", n_classes=k)

    def rows(a):
        return np.shape(a)[0] if np.ndim(a) >= 1 else None

    def cols(a):
        return np.shape(a)[1] if np.ndim(a) == 2 else None

    n_train = rows(b.train_orig)
    for fname in ("train_ft", "train_labels", "train_logits"):
        a = getattr(b, fname)
        if a is not None and rows(a) != n_train:
            problems.append(f"{fname}: length mismatch ({rows(a)} rows vs train_orig {n_train})")
    n_id = rows(b.id_test_orig)
    for fname in ("id_test_ft", "id_test_labels", "id_test_logits"):
        a = getattr(b, fname)
        if a is not None and rows(a) != n_id:
            problems.append(f"{fname}: length mismatch ({rows(a)} rows vs id_test_orig {n_id})")

    d_o, d_ft = cols(b.train_orig), cols(b.train_ft)
    if cols(b.id_test_orig) != d_o:
        problems.append(f"id_test_orig: feature dim {cols(b.id_test_orig)} != train_orig dim {d_o}")
    if cols(b.id_test_ft) != d_ft:
        problems.append(f"id_test_ft: feature dim {cols(b.id_test_ft)} != train_ft dim {d_ft}")

    if not b.ood_sets:
        problems.append("ood_sets: at least one OOD set is required")
    seen = set()
    for s in b.ood_sets:
        tag = f"ood_sets[{s.name}]"
        if s.name in seen:
            problems.append(f"{tag}: duplicate OOD set name")
        seen.add(s.name)
        run(check_features, s.orig, f"{tag}.orig")
        run(check_features, s.ft, f"{tag}.ft")
        run(check_logits, s.logits, f"{tag}.logits", n_classes=k)
        if rows(s.ft) != rows(s.orig):
            problems.append(f"{tag}.ft: length mismatch ({rows(s.ft)} rows vs orig {rows(s.orig)})")
        if s.logits is not None and rows(s.logits) != rows(s.orig):
            problems.append(f"{tag}.logits: length mismatch ({rows(s.logits)} rows vs orig {rows(s.orig)})")
        if cols(s.orig) != d_o:
            problems.append(f"{tag}.orig: feature dim {cols(s.orig)} != train_orig dim {d_o}")
        if cols(s.ft) != d_ft:
            problems.append(f"{tag}.ft: feature dim {cols(s.ft)} != train_ft dim {d_ft}")

    if problems:
        raise BundleError(problems)


def few_shot_indices(labels, shots, seed: int) -> np.ndarray:
    """Row indices of a seeded M-per-class subset, in ascending original order.

    For class c the class-c row indices are shuffled by Fisher-Yates under a
    SplitMix64 stream keyed by ``seed ^ c``; the first ``shots`` are kept.
    ``shots == "all"`` keeps every row.
    """
    labels = check_labels(labels)
    if shots == "all":
        return np.arange(labels.shape[0])
    if isinstance(shots, bool) or not isinstance(shots, (int, np.integer)) or shots < 1:
        raise ValidationError(f"shots must be a positive integer or 'all', got {shots!r}")
    chosen = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.size < shots:
            raise ValidationError(f"class {int(c)} has {members.size} samples, fewer than {shots} shots")
        order = fisher_yates(members.tolist(), (int(seed) ^ int(c)) & ((1 << 64) - 1))
        chosen.extend(order[:shots])
    return np.sort(np.asarray(chosen, dtype=np.int64))


def few_shot_subsample(features, labels, shots, seed: int):
    """Return ``(features[idx], labels[idx], idx)`` with exactly ``shots`` rows per class.

    Reuse ``idx`` to subsample a paired feature stream identically.
    """
    features = np.asarray(features)
    labels = check_labels(labels)
    if features.shape[0] != labels.shape[0]:
        raise ValidationError(f"length mismatch: {features.shape[0]} feature rows vs {labels.shape[0]} labels")
    idx = few_shot_indices(labels, shots, seed)
    return features[idx], labels[idx], idx
