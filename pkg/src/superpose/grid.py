"""Shifted interval families and the boxes they generate.

Family q consists of the closed intervals

    I_q(j) = [(q + m j) delta, (q + m - 1 + m j) delta],   j integer,

truncated to [-D, D]. Consecutive intervals of one family are separated by an
open gap of length delta, and the gaps of the m families tile the line, so a
point misses at most one family. Products of one family's intervals are the
boxes on which the inner sums are constant.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .constants import ParameterRejected


@dataclass(frozen=True, eq=False)
class IntervalFamily:
    q: int
    m: int
    delta: float
    D: float
    lefts: np.ndarray
    rights: np.ndarray

    @property
    def count(self) -> int:
        return int(self.lefts.size)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.lefts + self.rights)

    def index_of(self, x) -> np.ndarray:
        """Index of the interval containing each x, or -1 if x is in a gap."""
        xs = np.asarray(x, dtype=np.float64)
        i = np.searchsorted(self.lefts, xs, side="right") - 1
        ok = i >= 0
        ic = np.clip(i, 0, max(self.count - 1, 0))
        if self.count:
            ok &= xs <= self.rights[ic]
        else:
            ok &= False
        return np.where(ok, i, -1)

    def contains(self, x) -> np.ndarray:
        return self.index_of(x) >= 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("i,left,right\n")
        for i, (a, b) in enumerate(zip(self.lefts, self.rights)):
            buf.write(f"{i},{a!r},{b!r}\n")
        return buf.getvalue()


class BoxIndex(NamedTuple):
    """Box B_q(i): product of family q's intervals i[0], ..., i[n-1] (0-based)."""

    q: int
    i: tuple[int, ...]


def max_delta(m: int, n: int) -> float:
    return 1.0 / (m * n)


def build_family(q: int, delta: float, D: float, m: int, n: int | None = None) -> IntervalFamily:
    """Nonempty intersections of family q's intervals with [-D, D], sorted."""
    if not (delta > 0 and math.isfinite(delta)):
        raise ParameterRejected(f"grid step must be positive, got {delta}")
    if n is not None and not delta < max_delta(m, n):
        raise ParameterRejected(f"grid step {delta} must be below 1/(mn) = {max_delta(m, n)}")
    if not 1 <= q <= m:
        raise ParameterRejected(f"family index {q} outside 1..{m}")
    if not D > 0:
        raise ParameterRejected("cube half-width must be positive")
    period = m * delta
    j_lo = math.floor((-D - (q + m - 1) * delta) / period) - 1
    j_hi = math.ceil((D - q * delta) / period) + 1
    j = np.arange(j_lo, j_hi + 1, dtype=np.int64)
    left = (q + m * j) * delta
    right = (q + m - 1 + m * j) * delta
    keep = (right >= -D) & (left <= D)
    left = np.maximum(left[keep], -D)
    right = np.minimum(right[keep], D)
    return IntervalFamily(q, m, float(delta), float(D), left, right)


def build_families(delta: float, D: float, m: int, n: int | None = None) -> list[IntervalFamily]:
    return [build_family(q, delta, D, m, n) for q in range(1, m + 1)]


def coverage_count(x, families: Sequence[IntervalFamily]) -> np.ndarray | int:
    """Number of families with an interval containing x (vectorized over x)."""
    xs = np.asarray(x, dtype=np.float64)
    total = sum(fam.contains(xs).astype(np.int64) for fam in families)
    return int(total) if np.ndim(total) == 0 else total


def locate_box(x: Sequence[float], family: IntervalFamily) -> BoxIndex | None:
    idx = family.index_of(np.asarray(x, dtype=np.float64))
    if np.any(idx < 0):
        return None
    return BoxIndex(family.q, tuple(int(v) for v in idx))


def locate_boxes(points: np.ndarray, family: IntervalFamily) -> np.ndarray:
    """Per-coordinate interval indices for an (N, n) array; -1 marks a gap."""
    return family.index_of(np.asarray(points, dtype=np.float64))


def boxed_count(points: np.ndarray, families: Sequence[IntervalFamily]) -> np.ndarray:
    """For each point, how many families box it."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return sum(np.all(locate_boxes(pts, fam) >= 0, axis=1).astype(np.int64) for fam in families)


def box_count(delta: float, D: float, m: int, n: int) -> int:
    """Total number of boxes over all families, without building them."""
    return sum(build_family(q, delta, D, m).count ** n for q in range(1, m + 1))


def estimate_box_count(delta: float, D: float, m: int, n: int) -> float:
    """Closed-form estimate of the box count (cheap for tiny delta)."""
    r = 2.0 * D / (m * delta) + 2.0
    return m * r ** n
