"""Seeded fixtures shared by the unit and acceptance tests."""

import mpmath
import numpy as np

from fsood.rng import SplitMix64


def two_gaussians(seed=0, per_class=100, offset=3.0):
    """Unit-variance 2-D classes at (-offset, 0) and (+offset, 0).

    With seed 0 the classes are separated along x (class-0 max x = -0.349,
    class-1 min x = 0.725).
    """
    x = SplitMix64(seed).next_normal(2 * per_class * 2).reshape(2 * per_class, 2)
    x[:per_class, 0] -= offset
    x[per_class:, 0] += offset
    y = np.repeat(np.arange(2), per_class)
    return x.astype(np.float32), y


def central_differences(f, w, eps=1e-4):
    g = np.zeros_like(w)
    for i in np.ndindex(w.shape):
        w_hi, w_lo = w.copy(), w.copy()
        w_hi[i] += eps
        w_lo[i] -= eps
        g[i] = (f(w_hi) - f(w_lo)) / (2 * eps)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12)


def gradient_instance(seed):
    rng = np.random.default_rng(seed)
    n, d, k = int(rng.integers(1, 17)), int(rng.integers(1, 9)), int(rng.integers(2, 6))
    x = rng.normal(size=(n, d))
    y = rng.integers(0, k, size=n)
    w = rng.normal(scale=0.5, size=(k, d))
    b = rng.normal(scale=0.5, size=k)
    lam = float(rng.choice([0.0, rng.uniform(0, 0.1)]))
    return x, y, w, b, lam


def auroc_pairs(id_scores, ood_scores):
    """O(n^2) reference: P(id < ood) + 0.5 P(id == ood)."""
    a = np.asarray(id_scores, dtype=np.float64)[:, None]
    b = np.asarray(ood_scores, dtype=np.float64)[None, :]
    return float(((a < b).sum() + 0.5 * (a == b).sum()) / (a.size * b.size))


def fpr_scan(id_scores, ood_scores, target=0.95):
    """Reference FPR: try every observed ID score as threshold, keep the first reaching the target."""
    a = np.asarray(id_scores, dtype=np.float64)
    b = np.asarray(ood_scores, dtype=np.float64)
    for t in sorted(set(a.tolist())):
        if np.mean(a <= t) >= target:
            return float(np.mean(b <= t))
    raise AssertionError("unreachable")


def tied_instance(seed, max_n=60):
    rng = np.random.default_rng(seed)
    n_id, n_ood = int(rng.integers(1, max_n + 1)), int(rng.integers(1, max_n + 1))
    levels = int(rng.integers(2, 12))
    a = rng.integers(0, levels, size=n_id).astype(np.float64) / levels
    b = (rng.integers(0, levels, size=n_ood) + rng.integers(0, 3)).astype(np.float64) / levels
    return a, b


def oracle(z, T):
    """Literal score formulas in 50-digit arithmetic."""
    mpmath.mp.dps = 50
    zs = [mpmath.mpf(float(v)) / mpmath.mpf(float(T)) for v in z]
    ex = [mpmath.e**v for v in zs]
    tot = mpmath.fsum(ex)
    p = [v / tot for v in ex]
    k = len(z)
    return {
        "energy": -mpmath.log(tot),
        "entropy": -mpmath.fsum(q * mpmath.log(q) for q in p if q > 0),
        "variance": -mpmath.fsum((q - mpmath.mpf(1) / k) ** 2 for q in p) / k,
        "msp": -max(p),
        "maxlogit": -max(zs),
    }


def random_rows(seed, n):
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        k = int(rng.integers(2, 11))
        rows.append((rng.uniform(-20, 20, size=k), float(rng.choice([1.0, rng.uniform(0.25, 4.0)]))))
    return rows
