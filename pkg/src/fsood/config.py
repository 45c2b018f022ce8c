"""Run and training configuration."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .errors import ConfigError

SCORE_METHODS = ("energy", "entropy", "variance", "msp", "maxlogit")
ALL_METHODS = SCORE_METHODS + ("knn",)
FUSED_VARIANTS = ("concat-then-normalize", "normalize-then-concat", "score-sum")
SHOT_GRID = (2, 4, 8, 16, "all")

# Stage-2 (fused head) learning rate / weight decay per ID dataset and
# fine-tuning paradigm, one entry per shot setting 2/4/8/16/all. Batch size is
# 32 throughout.
STAGE2_PRESETS = {
    ("imagenet-1k", "fft"): {"lr": (0.01, 0.01, 0.1, 0.1, 0.001), "weight_decay": (1e-4, 1e-4, 1e-4, 0.0, 0.0)},
    ("imagenet-1k", "vat"): {"lr": (0.1,) * 5, "weight_decay": (0.0,) * 5},
    ("imagenet-1k", "vpt"): {"lr": (0.1, 0.1, 0.1, 0.1, 0.01), "weight_decay": (1e-3, 1e-3, 1e-3, 1e-3, 0.0)},
    ("food-101", "fft"): {"lr": (0.1,) * 5, "weight_decay": (0.0,) * 5},
    ("food-101", "vat"): {"lr": (0.1,) * 5, "weight_decay": (0.0,) * 5},
    ("food-101", "vpt"): {"lr": (0.1,) * 5, "weight_decay": (0.01, 0.01, 0.01, 0.01, 0.001)},
    ("oxford-pets", "fft"): {"lr": (0.1,) * 5, "weight_decay": (0.0,) * 5},
    ("oxford-pets", "vat"): {"lr": (0.1,) * 5, "weight_decay": (0.0,) * 5},
    ("oxford-pets", "vpt"): {"lr": (0.1,) * 5, "weight_decay": (0.1, 0.1, 0.1, 0.1, 0.01)},
    ("cifar-100", "fft"): {"lr": (0.1,) * 5, "weight_decay": (0.0,) * 5},
    ("cifar-100", "vat"): {"lr": (0.1,) * 5, "weight_decay": (0.0,) * 5},
    ("cifar-100", "vpt"): {"lr": (0.1,) * 5, "weight_decay": (0.1, 0.01, 0.01, 0.01, 0.01)},
}


def parse_shot(value) -> int | str:
    """Accept a positive integer (or its string form) or ``"all"``."""
    if isinstance(value, str):
        if value.strip().lower() == "all":
            return "all"
        try:
            value = int(value)
        except ValueError:
            raise ConfigError(f"shot must be a positive integer or 'all', got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"shot must be a positive integer or 'all', got {value!r}")
    return value


def parse_methods(names) -> tuple[str, ...]:
    if isinstance(names, str):
        names = [n.strip() for n in names.split(",") if n.strip()]
    names = tuple(names)
    if not names:
        raise ConfigError("at least one score method is required; valid methods: " + ", ".join(ALL_METHODS))
    bad = [n for n in names if n not in ALL_METHODS]
    if bad:
        raise ConfigError(f"unknown method(s) {', '.join(bad)}; valid methods: " + ", ".join(ALL_METHODS))
    return tuple(dict.fromkeys(names))


@dataclass(frozen=True)
class TrainConfig:
    """Minibatch SGD settings for the linear head."""

    epochs: int = 20
    batch_size: int = 32
    lr: float = 0.1
    weight_decay: float = 0.0
    momentum: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.epochs, bool) or not isinstance(self.epochs, int) or self.epochs < 0:
            raise ConfigError(f"epochs must be a non-negative integer, got {self.epochs!r}")
        if isinstance(self.batch_size, bool) or not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if not (math.isfinite(self.lr) and self.lr > 0):
            raise ConfigError(f"lr must be positive, got {self.lr!r}")
        if not (math.isfinite(self.weight_decay) and self.weight_decay >= 0):
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay!r}")
        if not (0 <= self.momentum < 1):
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum!r}")

    @classmethod
    def from_preset(cls, dataset: str, paradigm: str, shot, **overrides) -> "TrainConfig":
        """Stage-2 defaults for a (dataset, paradigm, shot) triple."""
        key = (dataset.lower(), paradigm.lower())
        if key not in STAGE2_PRESETS:
            raise ConfigError(f"no stage-2 preset for {dataset}/{paradigm}")
        shot = parse_shot(shot)
        if shot not in SHOT_GRID:
            raise ConfigError(f"presets exist only for shots {SHOT_GRID}, got {shot!r}")
        slot = SHOT_GRID.index(shot)
        preset = STAGE2_PRESETS[key]
        params = {"lr": preset["lr"][slot], "weight_decay": preset["weight_decay"][slot], "batch_size": 32}
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True)
class RunConfig:
    temperature: float = 1.0
    knn_k: int = 1
    shot: int | str = "all"
    seed: int = 0
    methods: tuple[str, ...] = ALL_METHODS
    variant: str = "concat-then-normalize"
    train: TrainConfig = field(default_factory=TrainConfig)
    # "head": baseline-ft logits come from a head retrained on the few-shot
    # ft features; "supplied": use the bundle's exported ft logits.
    ft_logits: str = "head"

    def __post_init__(self):
        if not (math.isfinite(self.temperature) and self.temperature > 0):
            raise ConfigError(f"temperature must be positive, got {self.temperature!r}")
        if isinstance(self.knn_k, bool) or not isinstance(self.knn_k, int) or self.knn_k < 1:
            raise ConfigError(f"knn_k must be a positive integer, got {self.knn_k!r}")
        object.__setattr__(self, "shot", parse_shot(self.shot))
        object.__setattr__(self, "methods", parse_methods(self.methods))
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.variant not in FUSED_VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; valid variants: " + ", ".join(FUSED_VARIANTS))
        if self.ft_logits not in ("head", "supplied"):
            raise ConfigError("ft_logits must be 'head' or 'supplied'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d
