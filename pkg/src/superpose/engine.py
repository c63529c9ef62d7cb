"""The stage iteration producing f(x) = sum_q g(sum_p lambda_p phi_q(x_p)).

Stage k fits an outer piece h_k to the current residual

    f_k = f_0 - sum_{j<k} sum_q h_j(X_q),

refining the inner family by less than half of what the earlier stages can
tolerate (their stability radii), then re-checks every earlier stage against
the refined family. g is the exact piecewise-linear sum of the h_k.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import plfun
from .constants import ParameterRejected, Params, derive
from .family import InnerFamily
from .outer import (DEFAULT_MAX_BOXES, ContractError, ResourceLimit, StageFailure,
                    build_stage, cube_grid, verify_stage)
from .plfun import PL1D, sup_norm_global
from .targets import TargetFunction, target_by_name, unwrap_value

log = logging.getLogger(__name__)

ZERO_NORM = 1e-14
MAX_RETRIES = 5


class StageAbort(RuntimeError):
    """The run stopped before its stopping rule; ``representation`` holds the partial result."""

    def __init__(self, message: str, stage: int, representation: "Representation | None" = None):
        super().__init__(message)
        self.stage = stage
        self.representation = representation


@dataclass
class StopRule:
    tol: float = 0.0
    K_max: int = 5
    T_max: int = 1

    def __post_init__(self):
        if self.T_max < 1:
            raise ParameterRejected("T_max must be at least 1")
        if self.K_max < 0:
            raise ParameterRejected("K_max must be non-negative")


@dataclass
class TraceRow:
    """Residual norms of f_k and, when stage k was built, its numbers.

    ``M[t]`` is the grid sup of |f_k| on Q_t (t = 0..T_max+1) for the
    returned representation; ``eff_norm`` is the grid sup on Q_{T_max+2}.
    """

    k: int
    M: list[float]
    eff_norm: float
    N: int | None = None
    eta: float | None = None
    delta: float | None = None
    xi: float | None = None
    h_norm: float | None = None
    gamma_min: float | None = None
    radius: float | None = None
    budget: float | None = None
    budget_spent: float | None = None
    u_count: int | None = None
    margins: dict[int, float] = field(default_factory=dict)
    attempts: int = 0

    @property
    def built(self) -> bool:
        return self.eta is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["margins"] = {str(t): v for t, v in self.margins.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TraceRow":
        d = dict(d)
        d["margins"] = {int(t): v for t, v in d.get("margins", {}).items()}
        return cls(**d)


class ResidualExpr:
    """f_k = f_0 - sum_j sum_q h_j(X_q) under a fixed inner family."""

    def __init__(self, base: Callable[[np.ndarray], np.ndarray], stages: list[PL1D],
                 family: InnerFamily):
        self.base = base
        self.stages = list(stages)
        self.family = family

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.asarray(self.base(pts), dtype=np.float64).copy()
        if self.stages:
            X = self.family.X(pts)
            for h in self.stages:
                out -= h(X).sum(axis=1)
        return out

    def lipschitz(self, base_lipschitz: float) -> float:
        """Euclidean Lipschitz bound from PL slopes and the weight norms."""
        LX = self.family.lipschitz_X()
        return base_lipschitz + sum(h.max_abs_slope() * float(LX.sum()) for h in self.stages)


def residual_norms(f: Callable, params, T_max: int, resolution: int) -> tuple[list[float], float]:
    """Grid sup of |f| on Q_0..Q_{T_max+1}, and on Q_{T_max+2} (effective norm)."""
    M = []
    for t in range(T_max + 3):
        pts = cube_grid(params.cube(t), params.n, resolution)
        M.append(float(np.abs(f(pts)).max()))
    # nested cubes: a larger cube's sup is at least the smaller one's
    for t in range(1, len(M)):
        M[t] = max(M[t], M[t - 1])
    return M[:-1], M[-1]


def estimate_lipschitz(f: Callable, n: int, D: float, samples: int = 20000, seed: int = 0) -> float:
    """Sampled Lipschitz estimate on [-D, D]^n with a factor 2 safety (not certified)."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-D, D, size=(samples, n))
    y = x + rng.normal(scale=1e-3 * max(D, 1.0), size=(samples, n))
    d = np.linalg.norm(x - y, axis=1)
    return 2.0 * float(np.max(np.abs(f(x) - f(y)) / d))


@dataclass
class Representation:
    params: Params
    family: InnerFamily
    stages: list[PL1D]
    g: PL1D
    trace: list[TraceRow]
    target: str
    scale: float = 1.0
    stop: StopRule = field(default_factory=StopRule)
    resolution: int = 201
    status: str = "complete"
    notes: list[str] = field(default_factory=list)
    stage_N: list[int] = field(default_factory=list)
    stage_eta: list[float] = field(default_factory=list)
    shrink: float = 1.0

    def __call__(self, points) -> np.ndarray:
        return eval_representation(self, points)

    @property
    def heuristic(self) -> bool:
        return any(n.startswith("heuristic") for n in self.notes)

    def residual(self, k: int, base: Callable | None = None) -> ResidualExpr:
        """f_k of this representation (normalized target minus the first k pieces)."""
        if base is None:
            f0 = target_by_name(self.target, self.params.n, self.shrink)
            base = f0.scaled(1.0 / self.scale) if self.scale != 1.0 else f0
        return ResidualExpr(base, self.stages[:k], self.family)

    def to_dict(self) -> dict:
        return {
            "format": "superpose-representation",
            "variant": self.params.variant,
            "params": self.params.to_dict(self.stop.T_max + 2),
            "target": self.target,
            "scale": self.scale,
            "stop": asdict(self.stop),
            "resolution": self.resolution,
            "status": self.status,
            "notes": list(self.notes),
            "family": self.family.to_dict(),
            "stages": [h.to_dict() for h in self.stages],
            "stage_N": list(self.stage_N),
            "stage_eta": list(self.stage_eta),
            "shrink": self.shrink,
            "g": self.g.to_dict(),
            "trace": [row.to_dict() for row in self.trace],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Representation":
        params = params_from_dict(d["params"])
        return cls(
            params=params,
            family=InnerFamily.from_dict(params, d["family"]),
            stages=[PL1D.from_dict(h) for h in d["stages"]],
            g=PL1D.from_dict(d["g"]),
            trace=[TraceRow.from_dict(r) for r in d["trace"]],
            target=d["target"],
            scale=d["scale"],
            stop=StopRule(**d["stop"]),
            resolution=d["resolution"],
            status=d["status"],
            notes=list(d["notes"]),
            stage_N=list(d["stage_N"]),
            stage_eta=list(d["stage_eta"]),
            shrink=d.get("shrink", 1.0),
        )

    @classmethod
    def from_json(cls, s: str) -> "Representation":
        return cls.from_dict(json.loads(s))

    def trace_csv(self) -> str:
        T = self.stop.T_max + 1
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "eta_k", "delta_k"] + [f"M_k{t}" for t in range(T + 1)]
                   + ["h_norm", "gamma_min", "radius", "budget_spent"])
        blank = lambda v: "" if v is None else repr(v)
        for r in self.trace:
            w.writerow([r.k, blank(r.eta), blank(r.delta)] + [repr(v) for v in r.M]
                       + [blank(r.h_norm), blank(r.gamma_min), blank(r.radius),
                          blank(r.budget_spent)])
        return buf.getvalue()


def params_from_dict(d: dict):
    if d.get("variant", "standard") == "monotone":
        from .monotone import MonotoneParams
        return MonotoneParams.from_dict(d)
    return Params.from_dict(d)


def eval_representation(rep: Representation, points) -> np.ndarray:
    """scale * sum_q g(X_q(x)) for each row of ``points``."""
    X = rep.family.X(points)
    return rep.scale * rep.g(X).sum(axis=1)


def unwrap(rep: Representation, points, shrink: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Undo the arctan wrapper on the representation's values.

    Returns the values and a flag per point set where the approximation left
    the invertible range and had to be clamped.
    """
    v = eval_representation(rep, points)
    limit = shrink * (1.0 - 1e-15)
    clamped = np.abs(v) >= limit
    return unwrap_value(np.clip(v, -limit, limit), shrink), clamped


def _normalize(target: TargetFunction) -> tuple[TargetFunction, float]:
    B = target.bound
    if not math.isfinite(B):
        raise ParameterRejected(f"target {target.name} has no finite bound; wrap it first")
    if B > 1.0:
        return target.scaled(1.0 / B), B
    return target, 1.0


def run(target: TargetFunction, params, stop: StopRule | None = None, resolution: int = 201,
        delta_rule: str = "box", delta_override: float | None = None,
        modulus: str = "certified", max_boxes: float = DEFAULT_MAX_BOXES,
        progress: Callable[[TraceRow], None] | None = None,
        shrink: float = 1.0) -> Representation:
    """Run stages until the Q_0 residual is at most ``stop.tol`` or K_max stages exist.

    ``shrink`` only records the wrapper factor of a ``wrapped:`` target so
    the stored representation can rebuild it.

    Raises :class:`StageAbort` (carrying the partial representation) when a
    stage cannot be built within ``max_boxes`` or its retries, or when an
    earlier stage fails re-verification.
    """
    stop = stop or StopRule()
    if target.n != params.n:
        raise ParameterRejected(f"target has n={target.n}, params n={params.n}")
    f0, scale = _normalize(target)
    notes = ["effective norm: |f_k| is the grid sup over Q_{T_max+2}",
             "inner family is built for this target"]
    if delta_override is not None:
        notes.append(f"heuristic: grid step fixed at {delta_override!r}")
    if modulus == "estimated":
        notes.append("heuristic modulus: sampled Lipschitz estimate")
    elif modulus != "certified":
        raise ParameterRejected(f"unknown modulus mode {modulus!r}")

    family = InnerFamily.initial(params)
    history: list[InnerFamily] = []     # family right after each stage
    stages: list[PL1D] = []
    stage_N: list[int] = []
    stage_eta: list[float] = []
    radii: list[float] = []
    trace: list[TraceRow] = []

    def partial(status: str) -> Representation:
        g = plfun.sum_all(stages) if stages else plfun.zero()
        rep = Representation(params, family, list(stages), g, trace, target.name, scale, stop,
                             resolution, status, notes, list(stage_N), list(stage_eta), shrink)
        _refresh_trace(rep, f0)
        return rep

    k = 0
    while True:
        fk = ResidualExpr(f0, stages, family)
        M, eff = residual_norms(fk, params, stop.T_max, resolution)
        row = TraceRow(k, M, eff)
        trace.append(row)
        if eff < ZERO_NORM or M[0] <= stop.tol or k >= stop.K_max:
            if progress:
                progress(row)
            break
        eta = min(params.eps1 ** k, (params.eps - params.eps0) * eff)
        N = min(k, stop.T_max)
        surviving = [r - family.distance(fam) for r, fam in zip(radii, history)]
        budget = 0.5 * min(surviving) if surviving else math.inf
        if modulus == "certified":
            L = fk.lipschitz(f0.lipschitz)
        else:
            L = estimate_lipschitz(fk, params.n, params.cube(N))
        delta, xi = delta_override, None
        out = None
        for attempt in range(MAX_RETRIES + 1):
            try:
                out = build_stage(fk, L, family, N, eta, params, budget, resolution,
                                  delta_rule=delta_rule, delta=delta, max_boxes=max_boxes, xi=xi)
                break
            except ResourceLimit as e:
                raise StageAbort(f"stage {k}: {e}", k, partial("aborted")) from e
            except (StageFailure, ContractError) as e:
                log.info("stage %d attempt %d failed: %s", k, attempt, e)
                last = e
                base_delta = delta if delta is not None else _auto_delta(fk, L, family, N, eta,
                                                                          params, budget, delta_rule)
                delta = 0.5 * base_delta
                xi = 0.5 * (xi if xi is not None else min(0.9 / (6 * params.n), budget))
        if out is None:
            raise StageAbort(f"stage {k} failed after {MAX_RETRIES} retries: {last}", k,
                             partial("aborted"))
        row.attempts = attempt + 1
        # every earlier stage must still hold under the refined family
        for j, h_j in enumerate(stages):
            fj = ResidualExpr(f0, stages[:j], out.family)
            try:
                verify_stage(fj, out.family, h_j, stage_N[j], stage_eta[j], params, resolution)
            except StageFailure as e:
                family = out.family
                raise StageAbort(f"stage {j} no longer holds after stage {k}: {e}", k,
                                 partial("aborted")) from e
        row.N, row.eta, row.delta, row.xi = N, eta, out.delta, out.xi
        row.h_norm = sup_norm_global(out.h)
        row.gamma_min = out.check.gamma_min
        row.radius = out.radius
        row.budget = budget
        row.budget_spent = out.deviation
        row.u_count = out.u_count
        row.margins = out.check.eq3_margins
        if progress:
            progress(row)
        stages.append(out.h)
        stage_N.append(N)
        stage_eta.append(eta)
        radii.append(out.radius)
        family = out.family
        history.append(family)
        k += 1
    return partial("complete")


def _auto_delta(fk, L, family, N, eta, params, budget, rule) -> float:
    from .outer import choose_delta
    xi = min(0.9 / (6 * params.n), budget)
    L_psi = max(phi.realized.max_abs_slope() for phi in family.phis)
    return choose_delta(L, L_psi, eta, params.m, params.n, xi, rule=rule)


def _refresh_trace(rep: Representation, f0) -> None:
    """Recompute every row's residual norms for the returned representation."""
    for row in rep.trace:
        fk = ResidualExpr(f0, rep.stages[:row.k], rep.family)
        row.M, row.eff_norm = residual_norms(fk, rep.params, rep.stop.T_max, rep.resolution)


def check_trace(rep: Representation) -> list[str]:
    """Trace inequalities: contraction, norm growth and the decay envelope."""
    p, bad = rep.params, []
    rows = rep.trace
    for a, b in zip(rows, rows[1:]):
        if not a.built:
            continue
        for t in p.residual_ts(min(a.k, rep.stop.T_max)):
            if t + 1 < len(a.M) and not b.M[t] < p.eps1 * a.M[t + 1] + a.eta:
                bad.append(f"contraction k={a.k} t={t}: {b.M[t]!r} >= "
                           f"{p.eps1 * a.M[t + 1] + a.eta!r}")
    for r in rows:
        if not r.eff_norm <= p.growth ** r.k:
            bad.append(f"norm growth k={r.k}: {r.eff_norm!r} > {p.growth ** r.k!r}")
        for i in range(1, len(r.M)):
            env = p.lemma5_envelope(r.k, i)
            if not r.M[i] <= env:
                bad.append(f"decay envelope k={r.k} i={i}: {r.M[i]!r} > {env!r}")
    return bad


def run_target(name: str, n: int = 2, m: int = 7, lam=None, **kw) -> Representation:
    """Convenience: run the standard construction on a catalog target."""
    params = derive(n, m, lam)
    return run(target_by_name(name, n), params, **kw)
