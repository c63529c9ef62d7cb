"""SVG figures (with the plotted data as CSV) for a representation."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import plfun  # noqa: E402
from .outer import check_support  # noqa: E402

SAMPLES = 4000


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _pl_samples(f: plfun.PL1D, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Uniform samples plus the knots in [a, b] (thinned to keep files small)."""
    knots = f.breakpoints[(f.breakpoints >= a) & (f.breakpoints <= b)]
    if knots.size > SAMPLES:
        knots = knots[:: knots.size // SAMPLES + 1]
    xs = np.union1d(np.linspace(a, b, SAMPLES), knots)
    return xs, f(xs)


def plot(rep, kind: str, outdir: Path) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    p = rep.params
    if kind == "residual-decay":
        ks = np.array([r.k for r in rep.trace])
        M0 = np.array([r.M[0] for r in rep.trace])
        env = np.array([p.lemma5_envelope(int(k), 0) for k in ks])
        ax.plot(ks, M0, "o-", label="grid sup of residual on Q_0")
        ax.plot(ks, env, "--", label="envelope (k+1) eps1^(alpha k)")
        ax.set_xlabel("stage k")
        ax.set_yscale("symlog", linthresh=1e-6)
        _write_csv(outdir / f"{kind}.csv", ["k", "M_k0", "envelope"],
                   [[int(k), repr(float(a)), repr(float(b))] for k, a, b in zip(ks, M0, env)])
    elif kind == "h-gallery":
        rows = []
        for j, h in enumerate(rep.stages):
            lo, hi = p.support(rep.stage_N[j])
            ok, detail = check_support(h, lo, hi)
            if not ok:
                raise ValueError(f"stage {j} violates its support bound: {detail}")
            xs, ys = _pl_samples(h, lo - 1.0, hi + 1.0)
            ax.plot(xs, ys, lw=0.6, label=f"h_{j}")
            for x in (lo, hi):
                ax.axvline(x, color="grey", ls=":", lw=0.8)
            rows += [[j, repr(float(x)), repr(float(y))] for x, y in zip(xs, ys)]
        _write_csv(outdir / f"{kind}.csv", ["stage", "u", "h"], rows)
        ax.set_xlabel("u")
    elif kind == "phi-gallery":
        D = p.cube(rep.stop.T_max)
        rows = []
        for q, phi in enumerate(rep.family.phis):
            xs = np.linspace(-D, D, SAMPLES)
            dev = phi(xs) - phi.baseline(xs)
            ax.plot(xs, dev, lw=0.6, label=f"phi_{q + 1} - baseline")
            rows += [[q + 1, repr(float(x)), repr(float(y))] for x, y in zip(xs, dev)]
        _write_csv(outdir / f"{kind}.csv", ["q", "x", "deviation"], rows)
        ax.set_xlabel("x")
    elif kind == "g":
        merged = plfun.sum_all(rep.stages) if rep.stages else plfun.zero()
        if merged.breakpoints.size != rep.g.breakpoints.size:
            raise ValueError(f"g has {rep.g.breakpoints.size} knots, the stage sum "
                             f"{merged.breakpoints.size}")
        lo = float(rep.g.breakpoints[0]) - 1.0
        hi = float(rep.g.breakpoints[-1]) + 1.0
        xs, ys = _pl_samples(rep.g, lo, hi)
        ax.plot(xs, ys, lw=0.6)
        ax.set_title(f"g: {rep.g.breakpoints.size} breakpoints")
        _write_csv(outdir / f"{kind}.csv", ["u", "g"],
                   [[repr(float(x)), repr(float(y))] for x, y in zip(rep.g.breakpoints, rep.g.values)])
        ax.set_xlabel("u")
    else:
        plt.close(fig)
        raise ValueError(f"unknown plot kind {kind!r}")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7)
    path = outdir / f"{kind}.svg"
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
