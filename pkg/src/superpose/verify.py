"""Brute-force oracles, written only against point evaluation.

These deliberately avoid the grid and PL data structures of the main
modules so they can serve as independent checks of them.
"""
from __future__ import annotations

import numpy as np


def _member(s: np.ndarray, q: int, m: int, scale: int) -> np.ndarray:
    """Whether x = s / scale * delta lies in a closed interval of family q.

    Family q covers [(q + m j) delta, (q + m - 1 + m j) delta]; in units of
    delta / scale that is a residue test on integers, hence exact.
    """
    r = np.mod(s - scale * q, scale * m)
    return r <= scale * (m - 1)


def oracle_coverage(m: int, delta: float, resolution: int = 1000) -> int:
    """Minimum number of families containing x over one period [0, m delta).

    Scans x = k delta / resolution for k = 0 .. m * resolution - 1. The
    count does not depend on delta; it is accepted for interface symmetry.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    s = np.arange(m * resolution, dtype=np.int64)
    counts = sum(_member(s, q, m, resolution).astype(np.int64) for q in range(1, m + 1))
    return int(counts.min())


def coverage_at(x: float, m: int, delta: float) -> int:
    """Number of families whose closed intervals contain x (float test)."""
    t = x / delta
    total = 0
    for q in range(1, m + 1):
        j = np.floor((t - q) / m)
        lo = q + m * j
        if lo <= t <= lo + m - 1:
            total += 1
    return total


def boxed_families(x: np.ndarray, m: int, delta: float) -> np.ndarray:
    """For each row of x, the number of families that contain every coordinate."""
    t = np.asarray(x, dtype=np.float64) / delta
    total = np.zeros(t.shape[0], dtype=np.int64)
    for q in range(1, m + 1):
        j = np.floor((t - q) / m)
        lo = q + m * j
        inside = (lo <= t) & (t <= lo + m - 1)
        total += np.all(inside, axis=1)
    return total


def oracle_box_coverage(n: int, m: int, delta: float, trials: int = 10_000, seed: int = 0,
                        D: float = 1.0) -> int:
    """Minimum over random x in (-D, D)^n of the number of families boxing x."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-D, D, size=(trials, n))
    return int(boxed_families(x, m, delta).min())


def gap_center(q: int, m: int, delta: float, j: int = 0) -> float:
    """Midpoint of the gap of family q that follows its interval j."""
    return (q + m - 0.5 + m * j) * delta


def oracle_sup_norm(f, a: float, b: float, resolution: int = 10_000) -> float:
    """Dense-sample max of |f| on [a, b]; a lower bound for the true sup."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    xs = np.linspace(a, b, resolution)
    return float(np.max(np.abs(f(xs))))
