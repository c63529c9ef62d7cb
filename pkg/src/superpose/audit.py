"""Re-verification of a stored representation and its trace."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import plfun
from .engine import Representation, check_trace, residual_norms
from .outer import StageFailure, check_support, cube_grid, verify_stage
from .plfun import sup_norm

TRACE_RTOL = 1e-9


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _g_matches_stages(rep: Representation) -> CheckResult:
    total = plfun.sum_all(rep.stages) if rep.stages else plfun.zero()
    xs = np.union1d(rep.g.breakpoints, total.breakpoints)
    diff = np.abs(rep.g(xs) - total(xs))
    tol = 1e-12 * max(1.0, float(np.abs(total.values).max()))
    i = int(diff.argmax())
    ok = bool(diff[i] <= tol) and rep.g.left_ext == total.left_ext and rep.g.right_ext == total.right_ext
    return CheckResult("residual bound: g equals the sum of stage pieces", ok,
                       f"max |g - sum h_k| = {diff[i]:.3g} at u = {xs[i]!r}")


def _final_residual(rep: Representation) -> CheckResult:
    """The stored g reproduces the last trace row's Q_0 residual."""
    f0 = rep.residual(0)
    pts = cube_grid(rep.params.cube(0), rep.params.n, rep.resolution)
    err = float(np.max(np.abs(f0(pts) - rep.g(rep.family.X(pts)).sum(axis=1))))
    want = rep.trace[-1].M[0]
    ok = math.isclose(err, want, rel_tol=TRACE_RTOL, abs_tol=1e-13)
    return CheckResult("residual bound: Q_0 error of g matches the trace", ok,
                       f"recomputed {err!r}, recorded {want!r}")


def _trace_consistent(rep: Representation) -> CheckResult:
    bad = []
    for row in rep.trace:
        M, eff = residual_norms(rep.residual(row.k), rep.params, rep.stop.T_max, rep.resolution)
        for t, (a, b) in enumerate(zip(M + [eff], row.M + [row.eff_norm])):
            if not math.isclose(a, b, rel_tol=TRACE_RTOL, abs_tol=1e-13):
                bad.append(f"k={row.k} t={t}: recorded {b!r}, recomputed {a!r}")
    return CheckResult("trace norms match the representation", not bad, "; ".join(bad[:3]))


def _stage_bounds(rep: Representation) -> list[CheckResult]:
    out = []
    p = rep.params
    for j, h in enumerate(rep.stages):
        N, eta = rep.stage_N[j], rep.stage_eta[j]
        lo, hi = p.support(N)
        ok, detail = check_support(h, lo, hi)
        out.append(CheckResult(f"support of stage {j}", ok, detail))
        try:
            chk = verify_stage(rep.residual(j), rep.family, h, N, eta, p, rep.resolution,
                               raise_on_fail=False)
            out.append(CheckResult(f"norm bound of stage {j}",
                                   all(v > 0 for v in chk.eq2_margins.values()),
                                   f"margins {chk.eq2_margins}"))
            out.append(CheckResult(f"residual bound of stage {j}",
                                   all(v > 0 for v in chk.eq3_margins.values()),
                                   f"margins {chk.eq3_margins}"))
        except StageFailure as e:
            out.append(CheckResult(f"residual bound of stage {j}", False, str(e)))
    return out


def _trace_inequalities(rep: Representation) -> list[CheckResult]:
    bad = check_trace(rep)
    groups = {"contraction": [], "norm growth": [], "decay envelope": []}
    for msg in bad:
        for key in groups:
            if msg.startswith(key):
                groups[key].append(msg)
    names = {"contraction": "contraction of the trace residuals",
             "norm growth": "norm growth bound (1 + m eps)^k",
             "decay envelope": "decay envelope (k+1) eps1^(alpha k - (1-alpha) i)"}
    return [CheckResult(names[k], not v, "; ".join(v[:3])) for k, v in groups.items()]


def _params_consistent(rep: Representation) -> CheckResult:
    from .engine import params_from_dict
    stored = rep.params.to_dict()
    fresh = params_from_dict(stored).to_dict()
    keys = ("eps0", "eps1", "eps", "alpha", "C")
    bad = [k for k in keys if stored[k] != fresh[k]]
    return CheckResult("constants rederive from (n, m, weights)", not bad, ", ".join(bad))


def audit(rep: Representation) -> list[CheckResult]:
    results = [_params_consistent(rep), _g_matches_stages(rep), _final_residual(rep),
               _trace_consistent(rep)]
    results += _stage_bounds(rep)
    results += _trace_inequalities(rep)
    results.append(CheckResult("inner functions within distance 1 of the baseline",
                               rep.family.in_class()))
    if rep.params.monotone:
        results.append(CheckResult("inner functions strictly increasing", rep.family.is_monotone()))
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        mark = "PASS" if r.ok else "FAIL"
        lines.append(f"{mark}  {r.name.ljust(width)}  {r.detail if not r.ok else ''}".rstrip())
    return "\n".join(lines)


def h_norms_on_cubes(h, params, upto: int) -> list[float]:
    return [sup_norm(h, -params.cube(t), params.cube(t)) for t in range(upto + 1)]
