"""Continuous piecewise-linear functions of one variable.

Every function built by the construction (the per-stage outer pieces, their
sum, and the inner plateau functions) is stored as a :class:`PL1D`. Values are
double precision; "exact" below means exact up to floating-point rounding.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

CONSTANT = "constant"
AFFINE = "affine"
_EXT_MODES = (CONSTANT, AFFINE)

# merged breakpoints closer than this (relative) collapse to one
MERGE_RTOL = 1e-12


class InvalidInterval(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PL1D:
    """Continuous piecewise-linear function given by knots and extension modes.

    Between consecutive breakpoints the function is the affine interpolant.
    Outside the knot span it is either constant at the boundary value or the
    affine continuation of the boundary segment.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    left_ext: str = CONSTANT
    right_ext: str = CONSTANT

    def __post_init__(self):
        x = np.array(self.breakpoints, dtype=np.float64).ravel()
        y = np.array(self.values, dtype=np.float64).ravel()
        if x.size == 0 or x.size != y.size:
            raise ValueError("breakpoints and values must be non-empty and of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("breakpoints and values must be finite")
        if x.size > 1 and not np.all(np.diff(x) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if self.left_ext not in _EXT_MODES or self.right_ext not in _EXT_MODES:
            raise ValueError(f"extension mode must be one of {_EXT_MODES}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "breakpoints", x)
        object.__setattr__(self, "values", y)

    # -- evaluation -------------------------------------------------------

    @property
    def left_slope(self) -> float:
        if self.left_ext == CONSTANT or self.breakpoints.size < 2:
            return 0.0
        x, y = self.breakpoints, self.values
        return float((y[1] - y[0]) / (x[1] - x[0]))

    @property
    def right_slope(self) -> float:
        if self.right_ext == CONSTANT or self.breakpoints.size < 2:
            return 0.0
        x, y = self.breakpoints, self.values
        return float((y[-1] - y[-2]) / (x[-1] - x[-2]))

    def __call__(self, x):
        xs = np.asarray(x, dtype=np.float64)
        bp, v = self.breakpoints, self.values
        out = np.interp(xs, bp, v)
        if self.left_ext == AFFINE and bp.size > 1:
            mask = xs < bp[0]
            if np.any(mask):
                out = np.where(mask, v[0] + self.left_slope * (xs - bp[0]), out)
        if self.right_ext == AFFINE and bp.size > 1:
            mask = xs > bp[-1]
            if np.any(mask):
                out = np.where(mask, v[-1] + self.right_slope * (xs - bp[-1]), out)
        if np.ndim(out) == 0:
            return float(out)
        return out

    def slopes(self) -> np.ndarray:
        """Slopes of the interior segments (empty for a single knot)."""
        return np.diff(self.values) / np.diff(self.breakpoints)

    def max_abs_slope(self) -> float:
        s = np.abs(self.slopes())
        inner = float(s.max()) if s.size else 0.0
        return max(inner, abs(self.left_slope), abs(self.right_slope))

    # -- algebra ----------------------------------------------------------

    def __add__(self, other: "PL1D") -> "PL1D":
        return add(self, other)

    def __mul__(self, c: float) -> "PL1D":
        return scale(self, c)

    __rmul__ = __mul__

    def __neg__(self) -> "PL1D":
        return scale(self, -1.0)

    def __sub__(self, other: "PL1D") -> "PL1D":
        return add(self, scale(other, -1.0))

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "breakpoints": self.breakpoints.tolist(),
            "values": self.values.tolist(),
            "left_ext": self.left_ext,
            "right_ext": self.right_ext,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PL1D":
        return cls(
            np.array(d["breakpoints"], dtype=np.float64),
            np.array(d["values"], dtype=np.float64),
            d.get("left_ext", CONSTANT),
            d.get("right_ext", CONSTANT),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "PL1D":
        return cls.from_dict(json.loads(s))

    def equals(self, other: "PL1D") -> bool:
        """Bit-exact structural equality."""
        return (
            self.left_ext == other.left_ext
            and self.right_ext == other.right_ext
            and np.array_equal(self.breakpoints, other.breakpoints)
            and np.array_equal(self.values, other.values)
        )


def zero() -> PL1D:
    return PL1D(np.array([0.0]), np.array([0.0]))


def absolute() -> PL1D:
    """|x| as an exact PL1D."""
    return PL1D(np.array([-1.0, 0.0, 1.0]), np.array([1.0, 0.0, 1.0]), AFFINE, AFFINE)


def identity() -> PL1D:
    return PL1D(np.array([0.0, 1.0]), np.array([0.0, 1.0]), AFFINE, AFFINE)


def evaluate(f: PL1D, x):
    return f(x)


def sup_norm(f: PL1D, a: float, b: float) -> float:
    """Exact sup of |f| on [a, b].

    A piecewise-affine function attains its extreme values at the interval
    endpoints or at breakpoints inside the interval.
    """
    if a > b:
        raise InvalidInterval(f"invalid interval [{a}, {b}]")
    bp = f.breakpoints
    lo, hi = np.searchsorted(bp, a, side="left"), np.searchsorted(bp, b, side="right")
    inner = np.abs(f.values[lo:hi])
    ends = np.abs(np.asarray(f(np.array([a, b]))))
    return float(max(ends.max(), inner.max() if inner.size else 0.0))


def sup_norm_global(f: PL1D) -> float:
    """Sup of |f| over the whole line; inf if an affine tail is non-flat.

    Tails with |slope| below 1e-12 count as flat: differences of functions
    sharing a tail pick up slopes of that size from rounding alone.
    """
    if abs(f.left_slope) > 1e-12 or abs(f.right_slope) > 1e-12:
        return math.inf
    return float(np.abs(f.values).max())


def _merge_breakpoints(*arrays: np.ndarray) -> np.ndarray:
    x = np.unique(np.concatenate(arrays))
    if x.size < 2:
        return x
    scale = np.maximum(1.0, np.abs(x))
    keep = np.ones(x.size, dtype=bool)
    keep[1:] = np.diff(x) > MERGE_RTOL * scale[1:]
    return x[keep]


def add(f: PL1D, g: PL1D) -> PL1D:
    """Exact pointwise sum on the merged breakpoint set."""
    x = _merge_breakpoints(f.breakpoints, g.breakpoints)
    left = AFFINE if AFFINE in (f.left_ext, g.left_ext) else CONSTANT
    right = AFFINE if AFFINE in (f.right_ext, g.right_ext) else CONSTANT
    # a pad knot beyond mixed-mode ends makes the boundary segment carry the tail slope
    if left == AFFINE and f.left_ext != g.left_ext:
        x = np.concatenate([[x[0] - 1.0], x])
    if right == AFFINE and f.right_ext != g.right_ext:
        x = np.concatenate([x, [x[-1] + 1.0]])
    if left == AFFINE and x.size == 1:
        x = np.array([x[0], x[0] + 1.0])
    return PL1D(x, f(x) + g(x), left, right)


def scale(f: PL1D, c: float) -> PL1D:
    return PL1D(f.breakpoints, f.values * float(c), f.left_ext, f.right_ext)


def sum_all(fs: Iterable[PL1D]) -> PL1D:
    """Sum of many PL1D in one merge (values summed at the merged knots)."""
    fs = list(fs)
    if not fs:
        return zero()
    if len(fs) == 1:
        return fs[0]
    acc = fs[0]
    for f in fs[1:]:
        acc = add(acc, f)
    return acc


def difference_sup(f: PL1D, g: PL1D) -> float:
    """Exact sup over the real line of |f - g| (inf if the tails diverge)."""
    d = add(f, scale(g, -1.0))
    return sup_norm_global(d)


# -- plateau functions ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PlateauFunction:
    """Continuous function constant on disjoint closed intervals.

    ``realized`` holds the plateau values on ``[lefts[i], rights[i]]``, the
    affine ramps in the gaps, and follows ``outside`` (the function being
    replaced) beyond the plateau span, joined by ramps of width ``ramp``.
    """

    lefts: np.ndarray
    rights: np.ndarray
    values: np.ndarray
    baseline: PL1D
    realized: PL1D
    baseline_name: str = "abs"

    @classmethod
    def build(
        cls,
        lefts: Sequence[float],
        rights: Sequence[float],
        values: Sequence[float],
        baseline: PL1D,
        outside: PL1D | None = None,
        ramp: float = 1.0,
        baseline_name: str = "abs",
    ) -> "PlateauFunction":
        a = np.asarray(lefts, dtype=np.float64)
        b = np.asarray(rights, dtype=np.float64)
        v = np.asarray(values, dtype=np.float64)
        if not (a.size == b.size == v.size):
            raise ValueError("plateau arrays must have equal length")
        if np.any(b < a):
            raise ValueError("plateau intervals must satisfy left <= right")
        if a.size > 1 and np.any(a[1:] <= b[:-1]):
            raise ValueError("plateaus must be disjoint and increasing")
        outside = baseline if outside is None else outside
        if a.size == 0:
            return cls(a, b, v, baseline, outside, baseline_name)
        if ramp <= 0:
            raise ValueError("ramp width must be positive")
        lo, hi = a[0] - ramp, b[-1] + ramp
        # knots of `outside` that survive outside the replaced span, plus one
        # knot either side so the affine tails reproduce `outside` exactly
        ob = outside.breakpoints
        keep = ob[(ob < lo) | (ob > hi)]
        extra = [lo, lo - ramp, hi, hi + ramp]
        for k in keep:
            extra.extend([k - ramp, k + ramp])
        ext = np.array(extra)
        ext = ext[(ext <= lo) | (ext >= hi)]
        out_x = np.union1d(keep, ext)
        px = np.empty(2 * a.size)
        px[0::2], px[1::2] = a, b
        pv = np.repeat(v, 2)
        # degenerate (single-point) plateaus keep one knot
        if np.any(a == b):
            uniq = np.ones(px.size, dtype=bool)
            uniq[1::2] = a != b
            px, pv = px[uniq], pv[uniq]
        x = np.concatenate([out_x, px])
        y = np.concatenate([outside(out_x), pv])
        order = np.argsort(x, kind="stable")
        realized = PL1D(x[order], y[order], outside.left_ext, outside.right_ext)
        return cls(a, b, v, baseline, realized, baseline_name)

    def __call__(self, x):
        return self.realized(x)

    @property
    def count(self) -> int:
        return int(self.lefts.size)

    def baseline_deviation(self) -> float:
        """Exact sup over the line of |realized - baseline|."""
        return difference_sup(self.realized, self.baseline)

    def in_class(self) -> bool:
        """Membership in the admissible class: |phi - baseline| < 1 everywhere."""
        return self.baseline_deviation() < 1.0

    def is_constant_on_plateaus(self) -> bool:
        mids = 0.5 * (self.lefts + self.rights)
        for pts in (self.lefts, mids, self.rights):
            if not np.array_equal(self.realized(pts), self.values):
                return False
        return True

    def is_monotone(self, strict_plateaus: bool = True) -> bool:
        """Non-decreasing knot values; plateau values strictly increasing."""
        ok = bool(np.all(np.diff(self.realized.values) >= 0))
        ok = ok and self.realized.left_slope >= 0 and self.realized.right_slope >= 0
        if strict_plateaus and self.values.size > 1:
            ok = ok and bool(np.all(np.diff(self.values) > 0))
        return ok

    def to_dict(self) -> dict:
        return {
            "lefts": self.lefts.tolist(),
            "rights": self.rights.tolist(),
            "values": self.values.tolist(),
            "baseline": self.baseline_name,
            "realized": self.realized.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlateauFunction":
        base = baseline_by_name(d["baseline"])
        return cls(
            np.array(d["lefts"], dtype=np.float64),
            np.array(d["rights"], dtype=np.float64),
            np.array(d["values"], dtype=np.float64),
            base,
            PL1D.from_dict(d["realized"]),
            d["baseline"],
        )


def baseline_by_name(name: str) -> PL1D:
    if name == "abs":
        return absolute()
    if name == "identity":
        return identity()
    raise ValueError(f"unknown baseline {name!r}")


def unplateaued(baseline_name: str = "abs") -> PlateauFunction:
    """The baseline itself viewed as a plateau function with no plateaus."""
    base = baseline_by_name(baseline_name)
    return PlateauFunction.build([], [], [], base, baseline_name=baseline_name)
