"""Numeric constants of the construction, derived from (n, m, lambda)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SQRT2_BOUND = 2.0 + math.sqrt(2.0)


class ParameterRejected(ValueError):
    """Inputs violate a hard requirement of the construction."""


def check_lemma4(n: int, m: int) -> bool:
    """Whether (2x-1)/(x-1)^2 < 1 at x = m/n, i.e. eps1 * (1 + m*eps0) < 1."""
    if n <= 0 or m <= n:
        return False
    x = m / n
    return (2 * x - 1) / (x - 1) ** 2 < 1


def default_lambda(n: int) -> tuple[float, ...]:
    """Weights proportional to 1..n, normalized to sum to one."""
    total = n * (n + 1) / 2
    return tuple(p / total for p in range(1, n + 1))


def _d_sequence(c: float, upto: int) -> list[float]:
    d = [1.0]
    for _ in range(upto):
        d.append(c * (d[-1] + 10.0))
    return d


@dataclass
class Params:
    """Constants for the standard (|x|-baseline) construction.

    ``eps`` sits at the midpoint of its feasible interval (eps0, eps_max) and
    ``alpha`` at 90% of its largest admissible value.
    """

    n: int
    m: int
    lam: tuple[float, ...]
    lam_min: float
    C: float
    eps0: float
    eps1: float
    eps_max: float
    eps: float
    alpha_max: float
    alpha: float
    _D: list[float] = field(default_factory=lambda: [1.0], repr=False)

    def D(self, t: int) -> float:
        """D_0 = 1, D_{t+1} = C (D_t + 10), extended lazily."""
        if t < 0:
            raise ValueError("cube index must be non-negative")
        if t >= len(self._D):
            self._D[:] = _d_sequence(self.C, t)
        return self._D[t]

    def cube(self, t: int) -> float:
        """Half-width of the cube Q_t."""
        return self.D(t)

    # variant hooks shared with the monotone construction
    variant = "standard"
    baseline = "abs"
    monotone = False
    cutoff_C = None

    @property
    def weights(self) -> np.ndarray:
        """(m, n) weight rows; every family uses the same lambda here."""
        return np.tile(np.asarray(self.lam, dtype=np.float64), (self.m, 1))

    def support(self, N: int) -> tuple[float, float]:
        """h must vanish outside this open interval."""
        return -2.0, self.D(N) + 2.0

    def residual_ts(self, N: int) -> range:
        return range(0, N + 1)

    @property
    def growth(self) -> float:
        """1 + m*eps, the per-stage norm growth bound."""
        return 1.0 + self.m * self.eps

    def lemma5_envelope(self, k: int, i: int) -> float:
        return (k + 1) * self.eps1 ** (self.alpha * k - (1 - self.alpha) * i)

    def to_dict(self, d_upto: int | None = None) -> dict:
        if d_upto is not None:
            self.D(d_upto)
        return {
            "variant": "standard",
            "n": self.n,
            "m": self.m,
            "lambda": list(self.lam),
            "lambda_min": self.lam_min,
            "C": self.C,
            "eps0": self.eps0,
            "eps1": self.eps1,
            "eps_max": self.eps_max,
            "eps": self.eps,
            "alpha_max": self.alpha_max,
            "alpha": self.alpha,
            "D": list(self._D),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Params":
        return derive(d["n"], d["m"], d["lambda"])


def choose_eps_alpha(eps0: float, eps1: float, m: int) -> tuple[float, float, float, float]:
    """Pick eps in (eps0, eps_max) and alpha in (0, alpha_max).

    eps_max solves eps1 (1 + m eps) = 1; alpha_max solves
    eps1^(1 - 2 alpha) (1 + m eps) = 1.
    """
    eps_max = (1.0 / eps1 - 1.0) / m
    if not eps_max > eps0:
        raise ParameterRejected(
            f"no admissible eps: eps1*(1+m*eps0) = {eps1 * (1 + m * eps0):.6g} >= 1")
    eps = eps0 + 0.5 * (eps_max - eps0)
    alpha_max = 0.5 * (1.0 - math.log1p(m * eps) / (-math.log(eps1)))
    alpha_max = min(alpha_max, 0.5)
    if not alpha_max > 0:
        raise ParameterRejected("no admissible alpha")
    return eps_max, eps, alpha_max, 0.9 * alpha_max


def validate_lambda(lam, n: int) -> tuple[float, ...]:
    lam = tuple(float(x) for x in lam)
    if len(lam) != n:
        raise ParameterRejected(f"lambda must have n={n} entries, got {len(lam)}")
    if any(not (x > 0) or not math.isfinite(x) for x in lam):
        raise ParameterRejected("lambda entries must be positive and finite")
    if len(set(lam)) != n:
        raise ParameterRejected("lambda entries must be pairwise distinct")
    if abs(math.fsum(lam) - 1.0) > 1e-12:
        raise ParameterRejected(f"lambda must sum to 1, sums to {math.fsum(lam)!r}")
    return lam


def derive(n: int, m: int, lam=None) -> Params:
    if n < 2:
        raise ParameterRejected(f"dimension n must be >= 2, got {n}")
    if not m > SQRT2_BOUND * n:
        raise ParameterRejected(
            f"m = {m} violates m > (2+sqrt 2) n = {SQRT2_BOUND * n:.4f}")
    lam = validate_lambda(default_lambda(n) if lam is None else lam, n)
    lam_min = min(lam)
    eps0 = 1.0 / (m - n)
    eps1 = n * eps0
    eps_max, eps, alpha_max, alpha = choose_eps_alpha(eps0, eps1, m)
    return Params(
        n=n, m=m, lam=lam, lam_min=lam_min, C=1.0 / lam_min,
        eps0=eps0, eps1=eps1, eps_max=eps_max, eps=eps,
        alpha_max=alpha_max, alpha=alpha,
    )
