"""Variant with increasing inner functions and one weight row per family.

Each family q gets its own weight vector lambda_q on the open simplex; the
inner functions stay within distance 1 of the identity and are increasing.
Cubes grow geometrically, Q_t = [-D^t, D^t]^n with D = C + 4, and a knot of
h is zeroed when its anchor is far from the origin relative to its image.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .constants import SQRT2_BOUND, ParameterRejected, choose_eps_alpha
from .engine import Representation, StopRule, run
from .outer import ContractError
from .targets import TargetFunction

SAFETY = 1.1
MAX_RESAMPLES = 20


def monotone_gate(n: int, m: int) -> bool:
    return n >= 2 and m > SQRT2_BOUND * (2 * n - 1)


def rows_independent(W: np.ndarray, tol: float = 1e-12) -> bool:
    """Every n-row subset of the (m, n) matrix has full rank."""
    m, n = W.shape
    for rows in itertools.combinations(range(m), n):
        sub = W[list(rows)]
        if n == 2:
            # exact-ish determinant test for pairs
            if abs(sub[0, 0] * sub[1, 1] - sub[0, 1] * sub[1, 0]) <= tol:
                return False
        elif np.linalg.matrix_rank(sub, tol=tol) < n:
            return False
    return True


def sample_weights(m: int, n: int, seed: int = 0, retries: int = MAX_RESAMPLES) -> np.ndarray:
    """Rows drawn uniformly from the open simplex, all n-subsets independent."""
    if not monotone_gate(n, m):
        raise ParameterRejected(
            f"m = {m} violates m > (2+sqrt 2)(2n-1) = {SQRT2_BOUND * (2 * n - 1):.4f}")
    rng = np.random.default_rng(seed)
    for _ in range(retries):
        W = rng.dirichlet(np.ones(n), size=m)
        W /= W.sum(axis=1, keepdims=True)
        if np.all(W > 0) and rows_independent(W):
            return W
    raise ParameterRejected(f"no independent weight sample after {retries} draws")


def sphere_sample(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.normal(size=(count, n))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def qualifying_counts(W: np.ndarray, C: float, x: np.ndarray) -> np.ndarray:
    """For each row x, how many q satisfy |x| <= C |<lambda_q, x>|."""
    proj = np.abs(x @ W.T)
    return np.sum(np.linalg.norm(x, axis=1, keepdims=True) <= C * proj, axis=1)


def compute_C(W: np.ndarray, sphere_resolution: int = 100_000, seed: int = 0,
              verify_samples: int = 10_000, max_doublings: int = 6) -> float:
    """1.1 times the sampled max over unit x of 1 / v(x), v(x) the (m-n+1)-th largest |<lambda_q, x>|.

    The result is checked on a fresh sample; if the check fails the sphere
    sample is doubled and C recomputed.
    """
    m, n = W.shape
    rng = np.random.default_rng(seed)
    need = m - n + 1
    res = sphere_resolution
    for _ in range(max_doublings + 1):
        x = sphere_sample(n, res, rng)
        if n == 2:
            # include the directions where some row vanishes
            perp = np.stack([-W[:, 1], W[:, 0]], axis=1)
            x = np.vstack([x, perp / np.linalg.norm(perp, axis=1, keepdims=True)])
        proj = np.sort(np.abs(x @ W.T), axis=1)[:, ::-1]
        v = proj[:, need - 1]
        if np.any(v <= 0):
            raise ContractError("a direction is annihilated by more than n-1 weight rows")
        C = SAFETY * float(np.max(1.0 / v))
        fresh = sphere_sample(n, verify_samples, rng)
        if np.all(qualifying_counts(W, C, fresh) >= need):
            return C
        res *= 2
    raise ContractError("constant C failed its verification sample")


@dataclass
class MonotoneParams:
    """Constants of the monotone variant; same interface as :class:`Params`."""

    n: int
    m: int
    W: np.ndarray
    C: float
    seed: int
    eps0: float
    eps1: float
    eps_max: float
    eps: float
    alpha_max: float
    alpha: float
    notes: list[str] = field(default_factory=list)

    variant = "monotone"
    baseline = "identity"
    monotone = True

    @property
    def Dbase(self) -> float:
        return self.C + 4.0

    def cube(self, t: int) -> float:
        if t < 0:
            raise ValueError("cube index must be non-negative")
        return self.Dbase ** t

    D = cube

    @property
    def cutoff_C(self) -> float:
        return self.C

    @property
    def weights(self) -> np.ndarray:
        return self.W

    def support(self, N: int) -> tuple[float, float]:
        r = self.cube(N) + 2.0
        return -r, r

    def residual_ts(self, N: int) -> range:
        return range(1, N + 1)

    @property
    def growth(self) -> float:
        return 1.0 + self.m * self.eps

    def lemma5_envelope(self, k: int, i: int) -> float:
        return (k + 1) * self.eps1 ** (self.alpha * k - (1 - self.alpha) * i)

    def to_dict(self, d_upto: int | None = None) -> dict:
        return {
            "variant": "monotone", "n": self.n, "m": self.m, "rows": self.W.tolist(),
            "C": self.C, "seed": self.seed, "eps0": self.eps0, "eps1": self.eps1,
            "eps_max": self.eps_max, "eps": self.eps, "alpha_max": self.alpha_max,
            "alpha": self.alpha, "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonotoneParams":
        return derive_monotone(d["n"], d["m"], W=np.array(d["rows"], dtype=np.float64),
                               C=d["C"], seed=d.get("seed", 0))


def derive_monotone(n: int, m: int, seed: int = 0, W: np.ndarray | None = None,
                    C: float | None = None, sphere_resolution: int = 100_000) -> MonotoneParams:
    if not monotone_gate(n, m):
        raise ParameterRejected(
            f"m = {m} violates m > (2+sqrt 2)(2n-1) = {SQRT2_BOUND * (2 * n - 1):.4f}")
    if W is None:
        W = sample_weights(m, n, seed)
    else:
        W = np.asarray(W, dtype=np.float64)
        if W.shape != (m, n) or np.any(W <= 0) or np.any(np.abs(W.sum(axis=1) - 1) > 1e-12):
            raise ParameterRejected("weight rows must be positive and sum to one")
        if not rows_independent(W):
            raise ParameterRejected("weight rows are not independent")
    if C is None:
        C = compute_C(W, sphere_resolution, seed)
    eps0 = 1.0 / (m - n + 1)
    eps1 = (n - 1) * eps0
    eps_max, eps, alpha_max, alpha = choose_eps_alpha(eps0, eps1, m)
    return MonotoneParams(n, m, W, float(C), seed, eps0, eps1, eps_max, eps, alpha_max, alpha)


def run_monotone(target: TargetFunction, params: MonotoneParams, stop: StopRule | None = None,
                 **kw) -> Representation:
    if not isinstance(params, MonotoneParams):
        raise ParameterRejected("run_monotone needs MonotoneParams")
    return run(target, params, stop, **kw)
