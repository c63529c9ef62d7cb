"""Named analytic targets with certified bounds and Lipschitz constants.

Only a closed catalog is offered: the grid step of every stage is derived
from the target's Lipschitz constant, so arbitrary expressions (with no
certified modulus) cannot be accepted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .constants import ParameterRejected


@dataclass(frozen=True)
class TargetFunction:
    """A continuous function on R^n with sup bound and Euclidean Lipschitz constant."""

    name: str
    n: int
    func: Callable[[np.ndarray], np.ndarray]
    bound: float
    lipschitz: float

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.shape[1] != self.n:
            raise ValueError(f"{self.name} takes {self.n} coordinates, got {pts.shape[1]}")
        return np.asarray(self.func(pts), dtype=np.float64).reshape(pts.shape[0])

    def scaled(self, c: float) -> "TargetFunction":
        f = self.func
        return TargetFunction(self.name, self.n, lambda x: c * f(x),
                              abs(c) * self.bound, abs(c) * self.lipschitz)


def _const(c: float, n: int) -> TargetFunction:
    return TargetFunction(f"const:{c:g}", n, lambda x: np.full(x.shape[0], c), abs(c), 0.0)


def gauss_bump(n: int) -> TargetFunction:
    # |grad e^{-r^2}| = 2 r e^{-r^2}, largest at r = 1/sqrt 2
    return TargetFunction("gauss-bump", n, lambda x: np.exp(-np.sum(x * x, axis=1)),
                          1.0, math.sqrt(2.0) * math.exp(-0.5))


def sinprod(n: int) -> TargetFunction:
    # each partial derivative is bounded by 1
    return TargetFunction("sinprod", n, lambda x: np.prod(np.sin(x), axis=1),
                          1.0, math.sqrt(n))


def runge(n: int) -> TargetFunction:
    # |grad (1 + r^2)^{-1}| = 2 r / (1 + r^2)^2, largest at r = 1/sqrt 3
    r = 1.0 / math.sqrt(3.0)
    return TargetFunction("runge", n, lambda x: 1.0 / (1.0 + np.sum(x * x, axis=1)),
                          1.0, 2 * r / (1 + r * r) ** 2)


def wrap_unbounded(target: TargetFunction, shrink: float = 1.0) -> TargetFunction:
    """(2/pi) arctan of the target, optionally multiplied by ``shrink`` <= 1.

    The result is bounded by ``shrink`` in absolute value, with strict
    inequality wherever the target is finite.
    """
    if not 0 < shrink <= 1:
        raise ParameterRejected("shrink must lie in (0, 1]")
    f = target.func
    c = shrink * 2.0 / math.pi
    bound = c * math.atan(target.bound) if math.isfinite(target.bound) else shrink
    return TargetFunction(f"wrapped:{target.name}", target.n,
                          lambda x: c * np.arctan(f(x)), bound, c * target.lipschitz)


def unwrap_value(v, shrink: float = 1.0):
    """Inverse of the wrapper, exact where |v| < shrink."""
    return np.tan(np.asarray(v, dtype=np.float64) * (math.pi / (2.0 * shrink)))


CATALOG = {"zero": lambda n: _const(0.0, n), "gauss-bump": gauss_bump,
           "sinprod": sinprod, "runge": runge}


def target_by_name(name: str, n: int, shrink: float = 1.0) -> TargetFunction:
    if name.startswith("wrapped:"):
        return wrap_unbounded(target_by_name(name[len("wrapped:"):], n), shrink)
    if name.startswith("const:"):
        try:
            c = float(name[len("const:"):])
        except ValueError:
            raise ParameterRejected(f"bad constant in target {name!r}") from None
        if not math.isfinite(c):
            raise ParameterRejected("constant target must be finite")
        return _const(c, n)
    if name not in CATALOG:
        raise ParameterRejected(
            f"unknown target {name!r}; choose from {sorted(CATALOG)}, const:<c>, wrapped:<name>")
    return CATALOG[name](n)
