"""Logit-based uncertainty scores.

Every score is oriented so that a larger value means "more likely OOD":
probability-type confidences (MSP, variance) and the max logit are negated,
energy is the negative log-sum-exp. All arithmetic runs in float64.
"""

from __future__ import annotations

import numpy as np

from .config import SCORE_METHODS
from .core import check_logits
from .errors import ValidationError


def _scaled(z, T: float) -> np.ndarray:
    if not (np.isfinite(T) and T > 0):
        raise ValidationError(f"temperature must be positive and finite, got {T!r}")
    z = check_logits(np.atleast_2d(np.asarray(z, dtype=np.float64)))
    return z / T


def _log_softmax(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise (log-softmax, log-sum-exp) of already temperature-scaled logits.

    The dominant term is split off so the normalizer is ``m + log1p(rest)``;
    this keeps small entropies and near-one probabilities accurate.
    """
    top = np.argmax(u, axis=1)
    m = u[np.arange(u.shape[0]), top]
    e = np.exp(u - m[:, None])
    e[np.arange(u.shape[0]), top] = 0.0
    tail = np.log1p(e.sum(axis=1))
    return (u - m[:, None]) - tail[:, None], m + tail


def log_softmax(logits, T: float = 1.0) -> np.ndarray:
    """Row-wise log-probabilities of an n x K logit matrix."""
    return _log_softmax(_scaled(logits, T))[0]


def softmax(z, T: float = 1.0) -> np.ndarray:
    """Temperature-scaled softmax ``exp(z_i/T) / sum_j exp(z_j/T)``.

    Accepts one row or an n x K matrix and returns the same shape.
    """
    single = np.ndim(z) == 1
    logp, _ = _log_softmax(_scaled(z, T))
    p = np.exp(logp)
    return p[0] if single else p


def energy_batch(logits, T: float = 1.0) -> np.ndarray:
    _, lse = _log_softmax(_scaled(logits, T))
    return -lse


def entropy_batch(logits, T: float = 1.0) -> np.ndarray:
    logp, _ = _log_softmax(_scaled(logits, T))
    # exp(logp) underflows to 0 for negligible classes, giving 0 * finite = 0
    return -(np.exp(logp) * logp).sum(axis=1)


def variance_batch(logits, T: float = 1.0) -> np.ndarray:
    logp, _ = _log_softmax(_scaled(logits, T))
    k = logp.shape[1]
    dev = np.exp(logp) - 1.0 / k
    return -(dev * dev).sum(axis=1) / k


def msp_batch(logits, T: float = 1.0) -> np.ndarray:
    logp, _ = _log_softmax(_scaled(logits, T))
    return -np.exp(logp.max(axis=1))


def maxlogit_batch(logits, T: float = 1.0) -> np.ndarray:
    return -_scaled(logits, T).max(axis=1)


_BATCH = {
    "energy": energy_batch,
    "entropy": entropy_batch,
    "variance": variance_batch,
    "msp": msp_batch,
    "maxlogit": maxlogit_batch,
}


def score_batch(logits, method: str, T: float = 1.0) -> np.ndarray:
    """Apply one score method to every row of an n x K logit matrix."""
    if method not in _BATCH:
        raise ValidationError(f"unknown score method {method!r}; valid methods: " + ", ".join(SCORE_METHODS))
    z = np.asarray(logits)
    if z.ndim != 2:
        raise ValidationError(f"logits: expected a 2-D matrix, got shape {z.shape}")
    return _BATCH[method](z, T)


def _row(fn, z, T):
    z = np.asarray(z)
    if z.ndim != 1:
        raise ValidationError(f"expected a single logit row, got shape {z.shape}")
    return float(fn(z[None, :], T)[0])


def energy_score(z, T: float = 1.0) -> float:
    """``-log sum_j exp(z_j / T)``."""
    return _row(energy_batch, z, T)


def entropy_score(z, T: float = 1.0) -> float:
    """Shannon entropy (nats) of ``softmax(z, T)``."""
    return _row(entropy_batch, z, T)


def variance_score(z, T: float = 1.0) -> float:
    """Negative population variance of the K softmax probabilities."""
    return _row(variance_batch, z, T)


def msp_score(z, T: float = 1.0) -> float:
    return _row(msp_batch, z, T)


def maxlogit_score(z, T: float = 1.0) -> float:
    return _row(maxlogit_batch, z, T)
