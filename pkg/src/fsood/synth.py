"""Seeded two-stream synthetic bundles.

The "orig" stream mimics a frozen general-purpose backbone: all ID classes
sit close together around one direction (weak class structure) while each
OOD set is shifted towards its own direction (easy to reject). The "ft"
stream mimics a fine-tuned backbone: classes are far apart (easy to
classify) but OOD samples land on shrunken copies of the class means, i.e.
they overlap the ID clusters. Test-set logits are a fixed linear map of the
ft features.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import DatasetBundle, OODSet
from .errors import ConfigError
from .rng import SplitMix64


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 10
    train_per_class: int = 32
    test_per_class: int = 50
    d_o: int = 16
    d_ft: int = 16
    sep_o: float = 1.0
    sep_ft: float = 8.0
    ood_shift: float = 6.0
    n_ood: int = 200
    n_ood_sets: int = 2
    # norm of the shared ID centre in the orig stream
    center_o: float = 6.0
    # OOD ft samples sit at ood_overlap * (a random class mean)
    ood_overlap: float = 0.7
    noise: float = 1.0
    logit_scale: float = 1.0
    seed: int = 7

    def __post_init__(self):
        for name in ("n_classes", "train_per_class", "test_per_class", "n_ood", "n_ood_sets"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be at least 2")
        for name in ("d_o", "d_ft"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 2:
                raise ConfigError(f"{name} must be an integer >= 2, got {v!r}")
        for name in ("sep_o", "sep_ft", "ood_shift", "center_o", "ood_overlap", "logit_scale"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and non-negative, got {v!r}")
        if not (np.isfinite(self.noise) and self.noise > 0):
            raise ConfigError(f"noise must be positive, got {self.noise!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)


def _unit(rng: SplitMix64, d: int) -> np.ndarray:
    v = rng.next_normal(d)
    return v / np.linalg.norm(v)


def _cluster(rng: SplitMix64, mean: np.ndarray, n: int, noise: float) -> np.ndarray:
    return mean + noise * rng.next_normal(n * mean.size).reshape(n, mean.size)


def synth_bundle(cfg: SynthConfig | None = None) -> DatasetBundle:
    """Generate a bundle; identical configs give bit-identical arrays."""
    cfg = cfg or SynthConfig()
    rng = SplitMix64(cfg.seed)
    k = cfg.n_classes

    center_dir = _unit(rng, cfg.d_o)
    center = cfg.center_o * center_dir
    means_o = np.stack([center + cfg.sep_o * _unit(rng, cfg.d_o) for _ in range(k)])
    dirs_ft = np.stack([_unit(rng, cfg.d_ft) for _ in range(k)])
    means_ft = cfg.sep_ft * dirs_ft
    logit_map = cfg.logit_scale * dirs_ft  # K x d_ft

    def logits(ft32):
        return (ft32.astype(np.float64) @ logit_map.T).astype(np.float32)

    def id_split(per_class):
        orig, ft, labels = [], [], []
        for c in range(k):
            orig.append(_cluster(rng, means_o[c], per_class, cfg.noise))
            ft.append(_cluster(rng, means_ft[c], per_class, cfg.noise))
            labels.append(np.full(per_class, c, dtype=np.int64))
        return np.vstack(orig), np.vstack(ft), np.concatenate(labels)

    train_o, train_ft, train_y = id_split(cfg.train_per_class)
    test_o, test_ft, test_y = id_split(cfg.test_per_class)

    ood_sets = []
    for s in range(cfg.n_ood_sets):
        shift = rng.next_normal(cfg.d_o)
        shift -= (shift @ center_dir) * center_dir
        shift /= np.linalg.norm(shift)
        ood_o = _cluster(rng, center + cfg.ood_shift * shift, cfg.n_ood, cfg.noise)
        which = (rng.next_u64(cfg.n_ood) % np.uint64(k)).astype(np.int64)
        noise = rng.next_normal(cfg.n_ood * cfg.d_ft).reshape(cfg.n_ood, cfg.d_ft)
        ood_ft = (cfg.ood_overlap * means_ft[which] + cfg.noise * noise).astype(np.float32)
        ood_sets.append(OODSet(f"ood{s}", ood_o.astype(np.float32), ood_ft, logits(ood_ft)))

    train_ft32 = train_ft.astype(np.float32)
    test_ft32 = test_ft.astype(np.float32)
    return DatasetBundle(
        train_orig=train_o.astype(np.float32),
        train_ft=train_ft32,
        train_labels=train_y,
        train_logits=logits(train_ft32),
        id_test_orig=test_o.astype(np.float32),
        id_test_ft=test_ft32,
        id_test_labels=test_y,
        id_test_logits=logits(test_ft32),
        ood_sets=tuple(ood_sets),
        n_classes=k,
    )
