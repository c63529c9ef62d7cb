"""One stage of the construction: plateau inner functions and the outer piece h.

Given a target f, the current inner family psi, a depth N and a slack eta,
:func:`build_stage` perturbs psi into plateau form on the grid of step delta,
makes every box image u_{q,i} distinct, interpolates h through
(u_{q,i}, eps0 * f(a_{q,i})) and checks the support, norm and residual
inequalities on sample grids. :func:`stability_radius` gives the perturbation
size under which a finished stage keeps its residual inequality.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .constants import ParameterRejected
from .family import InnerFamily
from .grid import IntervalFamily, build_families, estimate_box_count
from .plfun import CONSTANT, MERGE_RTOL, PL1D, PlateauFunction, difference_sup, sup_norm

log = logging.getLogger(__name__)

# distinct box images must differ by more than this (relative), so that
# later breakpoint merges never collapse two knots
U_GAP_RTOL = 4 * MERGE_RTOL

OFFSET_ATTEMPTS = 8

DEFAULT_MAX_BOXES = 12_000_000


class StageFailure(RuntimeError):
    """A stage could not be completed with the current grid step; retryable."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ResourceLimit(RuntimeError):
    """The stage needs more boxes than the configured cap allows."""

    def __init__(self, message: str, needed: float, cap: float):
        super().__init__(message)
        self.needed = needed
        self.cap = cap


class ContractError(RuntimeError):
    """An internal guarantee was violated (indicates a bad grid step or a bug)."""


# -- grid step ---------------------------------------------------------------


def choose_delta(f_lipschitz: float, psi_lipschitz: float, eta: float, m: int, n: int,
                 xi: float, rule: str = "paper") -> float:
    """Grid step from Lipschitz moduli of the target and of the inner functions.

    ``rule="paper"`` enforces |f(x)-f(y)| < eta/m for |x-y| < m n delta and
    |psi(x)-psi(y)| < xi for |x-y| < m delta, each with a factor-2 margin.

    ``rule="box"`` enforces only what the residual bound uses: f varies by
    less than eta over a box (Euclidean half-diagonal sqrt(n)(m-1)delta/2),
    and psi oscillates by less than xi/2 over one interval of length
    (m-1)delta, leaving xi/2 for the distinctness offsets. Both again with a
    factor-2 margin. This step is roughly 2m^2/(m-1) times coarser.
    """
    for name, v in (("f modulus", f_lipschitz), ("psi modulus", psi_lipschitz),
                    ("eta", eta), ("xi", xi)):
        if not math.isfinite(v) or v < 0:
            raise ParameterRejected(f"{name} must be finite and non-negative, got {v}")
    if eta <= 0 or xi <= 0:
        raise ParameterRejected("eta and xi must be positive")
    cap = 1.0 / (m * n)
    if rule == "paper":
        terms = [
            eta / (m * m * n * f_lipschitz) if f_lipschitz > 0 else math.inf,
            xi / (2 * m * psi_lipschitz) if psi_lipschitz > 0 else math.inf,
            1.0 / (2 * m * n),
        ]
        return 0.5 * min(terms)
    if rule == "box":
        terms = [
            2 * eta / (f_lipschitz * math.sqrt(n) * (m - 1)) if f_lipschitz > 0 else math.inf,
            xi / (2 * psi_lipschitz * (m - 1)) if psi_lipschitz > 0 else math.inf,
            cap,
        ]
        return 0.5 * min(terms)
    raise ValueError(f"unknown delta rule {rule!r}")


# -- plateaus ------------------------------------------------------------------


def oscillation_on(f: PL1D, lefts: np.ndarray, rights: np.ndarray) -> np.ndarray:
    """Exact max - min of f on each closed interval [lefts[i], rights[i]]."""
    if lefts.size == 0:
        return np.zeros(0)
    ya, yb = f(lefts), f(rights)
    hi, lo = np.maximum(ya, yb), np.minimum(ya, yb)
    bp = f.breakpoints
    # breakpoints strictly inside an interval
    owner = np.searchsorted(lefts, bp, side="right") - 1
    inside = (owner >= 0)
    owner_c = np.clip(owner, 0, lefts.size - 1)
    inside &= bp < rights[owner_c]
    inside &= bp > lefts[owner_c]
    if np.any(inside):
        np.maximum.at(hi, owner_c[inside], f.values[inside])
        np.minimum.at(lo, owner_c[inside], f.values[inside])
    return hi - lo


def plateauize(psi: PlateauFunction, family: IntervalFamily, xi: float) -> PlateauFunction:
    """Make psi constant on every interval of the family.

    The plateau value is psi at the interval midpoint; gaps are affine and
    beyond the family span the result follows psi.
    """
    osc = oscillation_on(psi.realized, family.lefts, family.rights)
    if osc.size and osc.max() >= xi:
        i = int(osc.argmax())
        raise ContractError(
            f"oscillation {osc[i]:.3g} of psi on interval {i} of family {family.q} "
            f"is not below xi = {xi:.3g}; grid step too coarse")
    values = psi.realized(family.midpoints)
    phi = PlateauFunction.build(family.lefts, family.rights, values, psi.baseline,
                                outside=psi.realized, ramp=family.delta,
                                baseline_name=psi.baseline_name)
    dev = difference_sup(phi.realized, psi.realized)
    if not dev < xi:
        raise ContractError(f"plateau function deviates by {dev:.3g} >= xi = {xi:.3g}")
    return phi


# -- box images ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class UTable:
    """Box images: u[k] = X_q on box (q[k], idx[k]) with idx 0-based per axis."""

    u: np.ndarray
    q: np.ndarray
    idx: np.ndarray
    order: np.ndarray
    min_gap: float

    @property
    def size(self) -> int:
        return int(self.u.size)

    @property
    def sorted_u(self) -> np.ndarray:
        return self.u[self.order]

    def anchors(self, families: Sequence[IntervalFamily], D: float | None = None) -> np.ndarray:
        """Box centers, clipped into [-D, D]^n when D is given."""
        n = self.idx.shape[1]
        out = np.empty((self.size, n))
        for fam in families:
            sel = self.q == fam.q - 1
            mids = fam.midpoints
            for p in range(n):
                out[sel, p] = mids[self.idx[sel, p]]
        if D is not None:
            np.clip(out, -D, D, out=out)
        return out


def _box_sums(values: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All sums sum_p w[p] * values[i_p] over i in range(r)^n, with the indices."""
    r, n = values.size, w.size
    acc = w[0] * values
    for p in range(1, n):
        acc = (acc[:, None] + w[p] * values[None, :]).ravel()
    idx = np.stack(np.unravel_index(np.arange(r ** n), (r,) * n), axis=1) if r else np.zeros((0, n), int)
    return acc, idx


def box_images(plateau_values: Sequence[np.ndarray], weights: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    us, qs, idxs = [], [], []
    for q, vals in enumerate(plateau_values):
        u, idx = _box_sums(np.asarray(vals, dtype=np.float64), weights[q])
        us.append(u)
        qs.append(np.full(u.size, q, dtype=np.int32))
        idxs.append(idx.astype(np.int32))
    return np.concatenate(us), np.concatenate(qs), np.concatenate(idxs)


def min_relative_gap(u_sorted: np.ndarray) -> float:
    """min over neighbours of gap / max(1, |u|)."""
    if u_sorted.size < 2:
        return math.inf
    gaps = np.diff(u_sorted)
    scale = np.maximum(1.0, np.maximum(np.abs(u_sorted[1:]), np.abs(u_sorted[:-1])))
    return float((gaps / scale).min())


def _offsets(counts: Sequence[int], rho: float, seed: int, monotone: bool) -> list[np.ndarray]:
    """Seeded pseudo-random offsets in [0, rho), one per plateau value.

    Arithmetic sequences such as frac(k theta) are useless here: with
    rational weights their box sums cancel exactly like the plateau values
    themselves. With ``monotone`` the offsets also increase with the interval
    index, so non-decreasing plateau values become strictly increasing.
    """
    rng = np.random.default_rng(seed)
    out = []
    for r in counts:
        frac = rng.random(r)
        if monotone:
            out.append(rho * (np.arange(r) + 0.5 * frac) / max(r, 1))
        else:
            out.append(rho * frac)
    return out


def distinctify(phis: Sequence[PlateauFunction], weights: np.ndarray,
                families: Sequence[IntervalFamily], rho_cap: float,
                monotone: bool = False, attempts: int = OFFSET_ATTEMPTS, seed: int = 0):
    """Shift plateau values by at most rho_cap so all box images are distinct.

    Values whose images are already distinct are returned unchanged.
    Returns the adjusted inner functions and the image table. Distinctness is
    checked on the computed doubles with a relative separation of
    ``U_GAP_RTOL``.
    """
    if not rho_cap > 0:
        raise ParameterRejected("offset cap must be positive")
    base = [np.asarray(phi.values, dtype=np.float64) for phi in phis]
    counts = [v.size for v in base]
    last_gap = 0.0
    for attempt in range(-1, attempts):
        # attempt -1 keeps the values as they are
        if attempt < 0:
            if monotone and not all(np.all(np.diff(v) > 0) for v in base):
                continue
            vals = base
        else:
            offs = _offsets(counts, rho_cap, seed + attempt, monotone)
            vals = [v + o for v, o in zip(base, offs)]
        u, q, idx = box_images(vals, weights)
        order = np.argsort(u, kind="stable")
        gap = min_relative_gap(u[order])
        last_gap = gap
        if gap > U_GAP_RTOL:
            new_phis = [
                PlateauFunction.build(phi.lefts, phi.rights, v, phi.baseline,
                                      outside=_outside_of(phi), ramp=fam.delta,
                                      baseline_name=phi.baseline_name)
                for phi, v, fam in zip(phis, vals, families)
            ]
            return new_phis, UTable(u, q, idx, order, gap)
        log.debug("distinctify attempt %d: relative gap %.3g too small", attempt, gap)
    raise StageFailure(
        f"could not separate {sum(c ** weights.shape[1] for c in counts)} box images "
        f"within offset cap {rho_cap:.3g} (best relative gap {last_gap:.3g})",
        {"rho_cap": rho_cap, "gap": last_gap})


def _outside_of(phi: PlateauFunction) -> PL1D:
    # the realized function already equals the replaced function beyond the
    # plateau span, so rebuilding from it keeps that part unchanged
    return phi.realized


# -- outer piece h ---------------------------------------------------------------


def build_h(f_at_anchors: np.ndarray, table: UTable, anchors: np.ndarray, eps0: float,
            cutoff_C: float | None = None) -> PL1D:
    """Piecewise-linear h with h(u_{q,i}) = eps0 f(a_{q,i}), zero one unit beyond the images.

    With ``cutoff_C`` the knot value is zeroed when |a| > C (|u| + 2).
    """
    vals = eps0 * np.asarray(f_at_anchors, dtype=np.float64)
    if cutoff_C is not None:
        far = np.linalg.norm(anchors, axis=1) > cutoff_C * (np.abs(table.u) + 2.0)
        vals = np.where(far, 0.0, vals)
    if table.size == 0:
        return PL1D(np.array([0.0]), np.array([0.0]))
    us = table.u[table.order]
    ys = vals[table.order]
    x = np.concatenate([[us[0] - 1.0], us, [us[-1] + 1.0]])
    y = np.concatenate([[0.0], ys, [0.0]])
    return PL1D(x, y, CONSTANT, CONSTANT)


def knot_gaps(h: PL1D) -> np.ndarray:
    return np.diff(h.breakpoints)


def stability_radius(h: PL1D, gamma_min: float, m: int) -> float:
    """Sup-norm perturbation of every phi_q that keeps the residual bound.

    Moving each phi_q by less than the radius moves each X_q by less than
    the radius (weights sum to one), hence each h(X_q) by less than
    gamma_min / m.
    """
    if not gamma_min > 0:
        raise ValueError("minimum margin must be positive")
    L = h.max_abs_slope()
    if L == 0:
        return math.inf
    return gamma_min / (m * L)


# -- verification ----------------------------------------------------------------


def cube_grid(D: float, n: int, resolution: int) -> np.ndarray:
    axis = np.linspace(-D, D, resolution)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


class SampledNorms:
    """Lower bounds of sup |f| on nested cubes from every evaluated sample."""

    def __init__(self, n: int):
        self.n = n
        self._pts: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add(self, points: np.ndarray, values: np.ndarray) -> None:
        self._pts.append(np.abs(np.atleast_2d(points)).max(axis=1))
        self._vals.append(np.abs(np.asarray(values, dtype=np.float64)))

    def on_cube(self, D: float) -> float:
        best = 0.0
        for r, v in zip(self._pts, self._vals):
            sel = r <= D * (1 + 1e-12)
            if np.any(sel):
                best = max(best, float(v[sel].max()))
        return best


@dataclass
class StageCheck:
    N: int
    eta: float
    eq1_ok: bool
    eq1_detail: str
    norms: dict[int, float]
    eq2_lhs: dict[int, float]
    eq2_rhs: dict[int, float]
    eq3_lhs: dict[int, float]
    eq3_rhs: dict[int, float]
    worst: dict[int, list[float]] = field(default_factory=dict)

    @property
    def eq2_margins(self) -> dict[int, float]:
        return {t: self.eq2_rhs[t] - self.eq2_lhs[t] for t in self.eq2_lhs}

    @property
    def eq3_margins(self) -> dict[int, float]:
        return {t: self.eq3_rhs[t] - self.eq3_lhs[t] for t in self.eq3_lhs}

    @property
    def gamma_min(self) -> float:
        m = self.eq3_margins
        return min(m.values()) if m else math.inf

    @property
    def ok(self) -> bool:
        return (self.eq1_ok and all(v > 0 for v in self.eq2_margins.values())
                and all(v > 0 for v in self.eq3_margins.values()))

    def failures(self) -> list[str]:
        out = []
        if not self.eq1_ok:
            out.append(f"support: {self.eq1_detail}")
        for t, v in self.eq2_margins.items():
            if not v > 0:
                out.append(f"norm bound t={t}: |h| = {self.eq2_lhs[t]:.6g} vs {self.eq2_rhs[t]:.6g}")
        for t, v in self.eq3_margins.items():
            if not v > 0:
                out.append(f"residual bound t={t}: {self.eq3_lhs[t]:.6g} vs {self.eq3_rhs[t]:.6g} "
                           f"at x={self.worst.get(t)}")
        return out


def check_support(h: PL1D, lo: float, hi: float) -> tuple[bool, str]:
    """h = 0 for x <= lo and x >= hi, with all nonzero knots strictly inside."""
    bp, v = h.breakpoints, h.values
    if h.left_ext != CONSTANT or h.right_ext != CONSTANT:
        return False, "h must have constant tails"
    if v[0] != 0.0 or v[-1] != 0.0:
        return False, "h does not vanish at its outermost knots"
    nz = bp[v != 0.0]
    if nz.size and not (nz.min() > lo and nz.max() < hi):
        return False, f"nonzero knots span [{nz.min()!r}, {nz.max()!r}] not inside ({lo}, {hi})"
    if bp[0] < lo and np.any(v[bp < lo] != 0) or bp[-1] > hi and np.any(v[bp > hi] != 0):
        return False, "h nonzero outside its support"
    return True, "ok"


def verify_stage(f: Callable[[np.ndarray], np.ndarray], family: InnerFamily, h: PL1D, N: int,
                 eta: float, params, resolution: int = 201, extra_samples=None,
                 raise_on_fail: bool = True) -> StageCheck:
    """Check the support, norm and residual inequalities of a stage on grids.

    Norms of f are the largest |f| seen at any sample inside the cube (grid
    points of every cube checked, plus ``extra_samples`` given as
    ``(points, values)``), a lower bound for the true sup.
    """
    n = params.n
    eps0, eps1 = params.eps0, params.eps1
    ts = list(params.residual_ts(N))
    top = N + 2
    norms = SampledNorms(n)
    if extra_samples is not None:
        norms.add(*extra_samples)
    residual_max, worst = {}, {}
    for t in range(0, top + 1):
        pts = cube_grid(params.cube(t), n, resolution)
        fv = np.asarray(f(pts), dtype=np.float64)
        norms.add(pts, fv)
        if t in ts:
            r = np.abs(fv - h(family.X(pts)).sum(axis=1))
            i = int(r.argmax())
            residual_max[t] = float(r[i])
            worst[t] = pts[i].tolist()
    norm_at = {t: norms.on_cube(params.cube(t)) for t in range(0, top + 1)}
    lo, hi = params.support(N)
    ok1, detail = check_support(h, lo, hi)
    eq2_lhs = {t: sup_norm(h, -params.cube(t), params.cube(t)) for t in range(0, N + 2)}
    eq2_rhs = {t: eps0 * norm_at[t + 1] + eta for t in range(0, N + 2)}
    eq3_rhs = {t: eps1 * norm_at[t + 1] + eta for t in ts}
    check = StageCheck(N, eta, ok1, detail, norm_at, eq2_lhs, eq2_rhs, residual_max, eq3_rhs, worst)
    if raise_on_fail and not check.ok:
        raise StageFailure("; ".join(check.failures()), {"check": check})
    return check


# -- one full stage ----------------------------------------------------------------


@dataclass
class StageOutput:
    family: InnerFamily
    h: PL1D
    table: UTable
    anchors: np.ndarray
    f_anchor: np.ndarray
    delta: float
    xi: float
    rho: float
    check: StageCheck
    radius: float
    deviation: float

    @property
    def margins(self) -> dict[int, float]:
        return self.check.eq3_margins

    @property
    def u_count(self) -> int:
        return self.table.size


def build_stage(f: Callable[[np.ndarray], np.ndarray], f_lipschitz: float, psi: InnerFamily,
                N: int, eta: float, params, budget: float = math.inf, resolution: int = 201,
                delta_rule: str = "box", delta: float | None = None,
                max_boxes: float = DEFAULT_MAX_BOXES, xi: float | None = None) -> StageOutput:
    n, m = params.n, params.m
    D = params.cube(N)
    dev_psi = max(difference_sup(phi.realized, phi.baseline) for phi in psi.phis)
    xi_cap = 0.9 / (6 * n)
    xi = min(xi_cap, budget, 0.99 * (1.0 - dev_psi)) if xi is None else xi
    if not xi > 0:
        raise StageFailure(f"no room to perturb the inner family (xi = {xi})")
    L_psi = max(phi.realized.max_abs_slope() for phi in psi.phis)
    if delta is None:
        delta = choose_delta(f_lipschitz, L_psi, eta, m, n, xi, rule=delta_rule)
    needed = estimate_box_count(delta, D, m, n)
    if needed > max_boxes:
        raise ResourceLimit(
            f"grid step {delta:.3g} on [-{D:g}, {D:g}]^{n} needs about {needed:.3g} boxes "
            f"(cap {max_boxes:.3g})", needed, max_boxes)
    families = build_families(delta, D, m, n)
    plateaued = [plateauize(phi, fam, xi) for phi, fam in zip(psi.phis, families)]
    dev_plat = max(difference_sup(a.realized, b.realized) for a, b in zip(plateaued, psi.phis))
    rho = 0.5 * (xi - dev_plat)
    if params.monotone:
        rho = min(rho, 0.5 * delta)
    if not rho > 0:
        raise StageFailure("no room left for distinctness offsets", {"xi": xi, "dev": dev_plat})
    phis, table = distinctify(plateaued, params.weights, families, rho, monotone=params.monotone)
    new_family = InnerFamily(params, tuple(phis))
    deviation = new_family.distance(psi)
    if not deviation < xi:
        raise ContractError(f"inner family moved by {deviation:.3g} >= xi = {xi:.3g}")
    if not new_family.in_class():
        raise ContractError("an inner function left the admissible class")
    if params.monotone and not new_family.is_monotone():
        raise StageFailure("monotonicity lost after distinctness offsets")
    anchors = table.anchors(families, D)
    f_anchor = np.asarray(f(anchors), dtype=np.float64)
    h = build_h(f_anchor, table, anchors, params.eps0, params.cutoff_C)
    check = verify_stage(f, new_family, h, N, eta, params, resolution,
                         extra_samples=(anchors, f_anchor))
    radius = stability_radius(h, check.gamma_min, m)
    return StageOutput(new_family, h, table, anchors, f_anchor, delta, xi, rho, check,
                       radius, deviation)
