"""Cosine k-NN scoring against a bank of training features.

The score of a query is the negated k-th largest cosine similarity to the
training rows (k=1: the nearest neighbour). Search is exact and brute force.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import FUSED_VARIANTS
from .core import check_features, l2_normalize_rows
from .errors import ValidationError

# queries per similarity block; bounds the n_query x n_train buffer
_BLOCK = 1024


@dataclass(frozen=True)
class KnnIndex:
    """Unit-normalized training rows plus the raw rows they came from."""

    rows: np.ndarray
    raw: np.ndarray

    @property
    def n_train(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def build_index(train) -> KnnIndex:
    train = check_features(train, "train")
    rows = l2_normalize_rows(train)
    rows.setflags(write=False)
    raw = np.array(train, dtype=np.float64)
    raw.setflags(write=False)
    return KnnIndex(rows=rows, raw=raw)


def similarities(index: KnnIndex, queries) -> np.ndarray:
    """Cosine similarity of every query row to every training row.

    Uses an elementwise einsum rather than BLAS so each entry depends only on
    its own pair of rows: a query scores identically alone or in a batch.
    """
    q = np.asarray(queries)
    if q.ndim != 2 or q.shape[1] != index.dim:
        raise ValidationError(f"query dim mismatch: expected (n, {index.dim}), got {q.shape}")
    qn = l2_normalize_rows(check_features(q, "queries"))
    out = np.empty((qn.shape[0], index.n_train))
    for start in range(0, qn.shape[0], _BLOCK):
        stop = start + _BLOCK
        out[start:stop] = np.einsum("qd,nd->qn", qn[start:stop], index.rows)
    return out


def kth_largest(sims: np.ndarray, k: int) -> np.ndarray:
    """Row-wise k-th largest value (k=1 is the maximum)."""
    n = sims.shape[1]
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise ValidationError(f"k must be a positive integer, got {k!r}")
    if k > n:
        raise ValidationError(f"k={k} exceeds the {n} training rows")
    if k == 1:
        return sims.max(axis=1)
    return np.partition(sims, n - k, axis=1)[:, n - k]


def knn_score_batch(index: KnnIndex, queries, k: int = 1) -> np.ndarray:
    return -kth_largest(similarities(index, queries), k)


def knn_score(index: KnnIndex, query, k: int = 1) -> float:
    query = np.asarray(query)
    if query.ndim != 1:
        raise ValidationError(f"expected a single feature row, got shape {query.shape}")
    return float(knn_score_batch(index, query[None, :], k)[0])


# -- fused two-stream scoring ------------------------------------------------


def _check_paired(index_o: KnnIndex, index_ft: KnnIndex) -> None:
    if index_o.n_train != index_ft.n_train:
        raise ValidationError(
            f"unpaired indices: {index_o.n_train} orig rows vs {index_ft.n_train} ft rows"
        )


@dataclass(frozen=True)
class FusedKnnIndex:
    """Paired orig/ft indices plus the two concatenated banks.

    ``concat`` holds normalize(raw_o || raw_ft); ``split`` holds
    normalize(normalize(raw_o) || normalize(raw_ft)).
    """

    orig: KnnIndex
    ft: KnnIndex
    concat: KnnIndex
    split: KnnIndex

    @classmethod
    def from_indices(cls, index_o: KnnIndex, index_ft: KnnIndex) -> "FusedKnnIndex":
        _check_paired(index_o, index_ft)
        concat = build_index(np.hstack([index_o.raw, index_ft.raw]))
        split = build_index(np.hstack([index_o.rows, index_ft.rows]))
        return cls(orig=index_o, ft=index_ft, concat=concat, split=split)

    @classmethod
    def build(cls, train_o, train_ft) -> "FusedKnnIndex":
        return cls.from_indices(build_index(train_o), build_index(train_ft))

    def score_batch(self, q_o, q_ft, variant: str, k: int = 1) -> np.ndarray:
        q_o, q_ft = np.asarray(q_o), np.asarray(q_ft)
        if q_o.ndim != 2 or q_ft.ndim != 2 or q_o.shape[0] != q_ft.shape[0]:
            raise ValidationError(f"paired queries must be 2-D with equal rows, got {q_o.shape} and {q_ft.shape}")
        if variant == "concat-then-normalize":
            return knn_score_batch(self.concat, np.hstack([q_o, q_ft]), k)
        if variant == "normalize-then-concat":
            q = np.hstack([l2_normalize_rows(q_o), l2_normalize_rows(q_ft)])
            return knn_score_batch(self.split, q, k)
        if variant == "score-sum":
            return knn_score_batch(self.orig, q_o, k) + knn_score_batch(self.ft, q_ft, k)
        raise ValidationError(f"unknown variant {variant!r}; valid variants: " + ", ".join(FUSED_VARIANTS))


def fused_knn_score(index_o: KnnIndex, index_ft: KnnIndex, q_o, q_ft, variant: str, k: int = 1) -> float:
    """Score one paired query under one of the three fusion variants."""
    fused = FusedKnnIndex.from_indices(index_o, index_ft)
    q_o, q_ft = np.asarray(q_o), np.asarray(q_ft)
    if q_o.ndim != 1 or q_ft.ndim != 1:
        raise ValidationError("expected single feature rows for q_o and q_ft")
    return float(fused.score_batch(q_o[None, :], q_ft[None, :], variant, k)[0])
