"""The m-tuple of inner functions and the inner sums X_q."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plfun import PlateauFunction, difference_sup, sup_norm, unplateaued, add, scale


@dataclass(frozen=True, eq=False)
class InnerFamily:
    params: object
    phis: tuple[PlateauFunction, ...]

    def __post_init__(self):
        object.__setattr__(self, "phis", tuple(self.phis))
        if len(self.phis) != self.params.m:
            raise ValueError(f"need {self.params.m} inner functions, got {len(self.phis)}")

    @classmethod
    def initial(cls, params) -> "InnerFamily":
        return cls(params, tuple(unplateaued(params.baseline) for _ in range(params.m)))

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def n(self) -> int:
        return self.params.n

    def X(self, points) -> np.ndarray:
        """Inner sums X_q(x) = sum_p w_{q,p} phi_q(x_p), shape (N, m)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.shape[1] != self.n:
            raise ValueError(f"points must have {self.n} coordinates, got {pts.shape[1]}")
        W = self.params.weights
        out = np.empty((pts.shape[0], self.m))
        for q, phi in enumerate(self.phis):
            v = phi(pts)
            # same summation order as the box images, so points inside a box
            # reproduce its tabled image bit for bit
            acc = W[q, 0] * v[:, 0]
            for p in range(1, self.n):
                acc = acc + W[q, p] * v[:, p]
            out[:, q] = acc
        return out

    def lipschitz_X(self) -> np.ndarray:
        """Euclidean Lipschitz bound of each X_q."""
        W = self.params.weights
        return np.array([phi.realized.max_abs_slope() * np.linalg.norm(W[q])
                         for q, phi in enumerate(self.phis)])

    def in_class(self) -> bool:
        return all(phi.in_class() for phi in self.phis)

    def is_monotone(self) -> bool:
        return all(phi.is_monotone() for phi in self.phis)

    def distance(self, other: "InnerFamily", D: float | None = None) -> float:
        """max_q sup |phi_q - other_q|, on [-D, D] or the whole line."""
        worst = 0.0
        for a, b in zip(self.phis, other.phis):
            if D is None:
                d = difference_sup(a.realized, b.realized)
            else:
                d = sup_norm(add(a.realized, scale(b.realized, -1.0)), -D, D)
            worst = max(worst, d)
        return worst

    def to_dict(self) -> dict:
        return {"phis": [phi.to_dict() for phi in self.phis]}

    @classmethod
    def from_dict(cls, params, d: dict) -> "InnerFamily":
        return cls(params, tuple(PlateauFunction.from_dict(p) for p in d["phis"]))
