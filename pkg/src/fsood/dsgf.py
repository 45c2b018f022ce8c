"""Feature fusion and the retrained linear head.

Original (frozen backbone) and fine-tuned features are concatenated per
sample, and a softmax-regression head is trained on the fused vectors with
minibatch SGD. The head's logits feed the post-hoc scores; the fused
features feed the fused k-NN scores.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, TrainConfig
from .core import DatasetBundle, check_features, check_labels, few_shot_indices
from .errors import FSOODError, ValidationError
from .io import load_matrix, save_matrix
from .rng import fisher_yates
from .scores import _log_softmax, log_softmax

__all__ = [
    "LinearHead",
    "TrainConfig",
    "DSGFResult",
    "fuse_features",
    "head_forward",
    "cross_entropy",
    "head_objective",
    "head_gradient",
    "train_head",
    "dsgf_pipeline",
    "save_head",
    "load_head",
]


@dataclass(frozen=True)
class LinearHead:
    weights: np.ndarray  # K x D
    bias: np.ndarray  # K

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValidationError(f"head shapes inconsistent: weights {w.shape}, bias {b.shape}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValidationError("head parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @classmethod
    def zeros(cls, n_classes: int, dim: int) -> "LinearHead":
        return cls(np.zeros((n_classes, dim)), np.zeros(n_classes))

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def fuse_features(f_o, f_ft) -> np.ndarray:
    """Row-wise concatenation ``[f_o | f_ft]``."""
    f_o, f_ft = np.asarray(f_o), np.asarray(f_ft)
    if f_o.ndim != 2 or f_ft.ndim != 2:
        raise ValidationError(f"expected 2-D feature matrices, got {f_o.shape} and {f_ft.shape}")
    if f_o.shape[0] != f_ft.shape[0]:
        raise ValidationError(f"row-count mismatch: {f_o.shape[0]} orig rows vs {f_ft.shape[0]} ft rows")
    return np.hstack([f_o, f_ft])


def head_forward(head: LinearHead, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.dim:
        raise ValidationError(f"feature dim mismatch: head expects {head.dim}, got shape {x.shape}")
    return x @ head.weights.T + head.bias


def cross_entropy(logits, labels) -> float:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    z = np.asarray(logits, dtype=np.float64)
    y = check_labels(labels, n_classes=z.shape[1] if z.ndim == 2 else None)
    if z.ndim != 2 or z.shape[0] != y.shape[0]:
        raise ValidationError(f"logits {z.shape} do not match {y.shape[0]} labels")
    logp = log_softmax(z)
    return float(-logp[np.arange(y.shape[0]), y].mean())


def head_objective(head: LinearHead, features, labels, weight_decay: float = 0.0) -> float:
    """Cross-entropy plus the L2 penalty ``weight_decay/2 * ||W||^2`` (bias unpenalized)."""
    loss = cross_entropy(head_forward(head, features), labels)
    return loss + 0.5 * weight_decay * float(np.sum(head.weights**2))


def _loss_and_grad(w, b, x, y, weight_decay):
    logp, _ = _log_softmax(x @ w.T + b)
    n = x.shape[0]
    rows = np.arange(n)
    loss = -logp[rows, y].mean() + 0.5 * weight_decay * np.sum(w * w)
    resid = np.exp(logp)
    resid[rows, y] -= 1.0
    resid /= n
    return loss, resid.T @ x + weight_decay * w, resid.sum(axis=0)


def head_gradient(head: LinearHead, features, labels, weight_decay: float = 0.0):
    """Analytic gradient of :func:`head_objective` as ``(dW, db)``.

    dW = (P - Y)^T X / n + weight_decay * W and db = mean of (P - Y) rows,
    where P holds the softmax rows and Y the one-hot labels.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.dim:
        raise ValidationError(f"feature dim mismatch: head expects {head.dim}, got shape {x.shape}")
    y = check_labels(labels, n_classes=head.n_classes)
    if y.shape[0] != x.shape[0]:
        raise ValidationError(f"{x.shape[0]} feature rows vs {y.shape[0]} labels")
    _, gw, gb = _loss_and_grad(head.weights, head.bias, x, y, weight_decay)
    return gw, gb


def train_head(features, labels, cfg: TrainConfig | None = None, n_classes: int | None = None) -> LinearHead:
    """Fit a linear softmax head by minibatch SGD from zero initialization.

    Each epoch visits the rows in a Fisher-Yates order keyed by
    ``cfg.seed ^ epoch``; the last partial batch is used as is. With
    momentum ``mu`` the update is ``v = mu * v + g; W -= lr * v``.
    """
    cfg = cfg or TrainConfig()
    x = check_features(features).astype(np.float64)
    y = check_labels(labels)
    if y.shape[0] != x.shape[0]:
        raise ValidationError(f"{x.shape[0]} feature rows vs {y.shape[0]} labels")
    k = int(n_classes) if n_classes is not None else int(y.max()) + 1
    check_labels(y, n_classes=k)
    w = np.zeros((k, x.shape[1]))
    b = np.zeros(k)
    vw = np.zeros_like(w)
    vb = np.zeros_like(b)
    n = x.shape[0]
    # divergence is detected explicitly below
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            order = np.asarray(fisher_yates(range(n), (cfg.seed ^ epoch) & ((1 << 64) - 1)), dtype=np.int64)
            for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
                idx = order[start : start + cfg.batch_size]
                loss, gw, gb = _loss_and_grad(w, b, x[idx], y[idx], cfg.weight_decay)
                if not np.isfinite(loss):
                    raise FSOODError(f"non-finite training loss at epoch {epoch}, batch {batch_no}")
                if cfg.momentum:
                    vw = cfg.momentum * vw + gw
                    vb = cfg.momentum * vb + gb
                    gw, gb = vw, vb
                w = w - cfg.lr * gw
                b = b - cfg.lr * gb
                if not (np.isfinite(w).all() and np.isfinite(b).all()):
                    raise FSOODError(f"non-finite head parameters after epoch {epoch}, batch {batch_no}")
    return LinearHead(w, b)


@dataclass(frozen=True)
class DSGFResult:
    """Everything downstream scoring needs from one fused run.

    ``train_orig``/``train_ft`` are the few-shot subsets (rows ``train_index``
    of the bundle); ``*_fused`` hold the raw concatenated features.
    """

    head: LinearHead
    train_index: np.ndarray
    train_orig: np.ndarray
    train_ft: np.ndarray
    train_labels: np.ndarray
    train_fused: np.ndarray
    id_fused: np.ndarray
    id_logits: np.ndarray
    ood_fused: dict
    ood_logits: dict


def dsgf_pipeline(bundle: DatasetBundle, cfg: RunConfig) -> DSGFResult:
    idx = few_shot_indices(bundle.train_labels, cfg.shot, cfg.seed)
    train_o = bundle.train_orig[idx]
    train_ft = bundle.train_ft[idx]
    labels = bundle.train_labels[idx]
    train_fused = fuse_features(train_o, train_ft)
    head = train_head(train_fused, labels, cfg.train, n_classes=bundle.num_classes)
    id_fused = fuse_features(bundle.id_test_orig, bundle.id_test_ft)
    ood_fused = {s.name: fuse_features(s.orig, s.ft) for s in bundle.ood_sets}
    return DSGFResult(
        head=head,
        train_index=idx,
        train_orig=train_o,
        train_ft=train_ft,
        train_labels=labels,
        train_fused=train_fused,
        id_fused=id_fused,
        id_logits=head_forward(head, id_fused),
        ood_fused=ood_fused,
        ood_logits={name: head_forward(head, f) for name, f in ood_fused.items()},
    )


def save_head(head: LinearHead, out_dir, cfg: TrainConfig | None = None, extra: dict | None = None) -> Path:
    """Write ``weights.npy`` (K x D, <f8), ``bias.npy`` and a ``head.json`` sidecar."""
    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    save_matrix(head.weights, out_dir / "weights.npy", "param")
    save_matrix(head.bias, out_dir / "bias.npy", "param")
    sidecar = {
        "n_classes": head.n_classes,
        "dim": head.dim,
        "weights": "weights.npy",
        "bias": "bias.npy",
        "train_config": asdict(cfg) if cfg is not None else None,
    }
    if extra:
        sidecar.update(extra)
    path = out_dir / "head.json"
    path.write_text(json.dumps(sidecar, indent=2) + "\n")
    return path


def load_head(path) -> LinearHead:
    """Load a head from its directory or its ``head.json`` sidecar."""
    path = Path(path)
    if path.is_dir():
        path = path / "head.json"
    meta = json.loads(path.read_text())
    w = load_matrix(path.parent / meta["weights"], "param")
    b = load_matrix(path.parent / meta["bias"], "param")
    return LinearHead(w, b)
