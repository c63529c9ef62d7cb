"""Command line: approximate, eval, check and plot.

Config files are flat ``key = value`` text, one key per line, ``#`` starts
a comment and arrays are comma separated. Recognised keys and defaults are
listed in :data:`CONFIG_KEYS`.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from .constants import ParameterRejected, derive
from .engine import Representation, StageAbort, StopRule, run
from .outer import cube_grid
from .targets import target_by_name, unwrap_value

log = logging.getLogger("superpose")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_CHECK = 0, 1, 2, 3

CONFIG_KEYS = {
    "n": "2",
    "m": "7",
    "lambda": "auto",
    "target": "gauss-bump",
    "tol": "0",
    "K_max": "5",
    "T_max": "1",
    "seed": "0",
    "variant": "standard",
    "output": "out",
    "resolution": "201",
    "delta_rule": "box",
    "max_boxes": "12000000",
    "shrink": "1",
    "sphere_resolution": "100000",
}


class ConfigError(ValueError):
    pass


def _diag(level: str, **fields) -> None:
    """One structured diagnostic line on standard error."""
    parts = " ".join(f"{k}={json.dumps(v)}" for k, v in fields.items())
    print(f"level={level} {parts}", file=sys.stderr)


def parse_config(text: str) -> dict[str, str]:
    cfg = dict(CONFIG_KEYS)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        cfg[key] = value
    return cfg


def _build_params(cfg: dict[str, str]):
    n, m = int(cfg["n"]), int(cfg["m"])
    if cfg["variant"] == "monotone":
        from .monotone import derive_monotone
        return derive_monotone(n, m, seed=int(cfg["seed"]),
                               sphere_resolution=int(cfg["sphere_resolution"]))
    if cfg["variant"] != "standard":
        raise ConfigError(f"variant must be standard or monotone, got {cfg['variant']!r}")
    lam = None if cfg["lambda"] == "auto" else [float(v) for v in cfg["lambda"].split(",")]
    return derive(n, m, lam)


def grid_error(rep: Representation, resolution: int | None = None) -> float:
    """Max |f - representation| on the Q_0 grid, in the target's own scale."""
    f = target_by_name(rep.target, rep.params.n, rep.shrink)
    pts = cube_grid(rep.params.cube(0), rep.params.n, resolution or rep.resolution)
    return float(np.max(np.abs(f(pts) - rep(pts))))


def write_outputs(rep: Representation, outdir: Path, started: float, reason: str | None) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "representation.json").write_text(rep.to_json())
    (outdir / "trace.csv").write_text(rep.trace_csv())
    report = {
        "variant": rep.params.variant,
        "target": rep.target,
        "status": rep.status,
        "abort_reason": reason,
        "params": rep.params.to_dict(rep.stop.T_max + 2),
        "stop": {"tol": rep.stop.tol, "K_max": rep.stop.K_max, "T_max": rep.stop.T_max},
        "stages": len(rep.stages),
        "scale": rep.scale,
        "q0_grid_error": grid_error(rep),
        "notes": rep.notes,
        "trace": [row.to_dict() for row in rep.trace],
        "representation": "representation.json",
        "created": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
    }
    (outdir / "report.json").write_text(json.dumps(report, indent=2))


def cmd_approximate(args) -> int:
    try:
        cfg = parse_config(Path(args.config).read_text())
        params = _build_params(cfg)
        stop = StopRule(float(cfg["tol"]), int(cfg["K_max"]), int(cfg["T_max"]))
        shrink = float(cfg["shrink"])
        target = target_by_name(cfg["target"], params.n, shrink)
        resolution = int(cfg["resolution"])
        max_boxes = float(cfg["max_boxes"])
    except (OSError, ValueError, ConfigError) as e:
        _diag("error", stage="config", message=str(e))
        return EXIT_CONFIG
    outdir = Path(args.output or cfg["output"])
    started = time.time()

    def progress(row):
        _diag("info", k=row.k, M0=row.M[0], eta=row.eta, delta=row.delta, boxes=row.u_count)

    try:
        rep = run(target, params, stop, resolution=resolution, delta_rule=cfg["delta_rule"],
                  max_boxes=max_boxes, progress=progress, shrink=shrink)
    except StageAbort as e:
        _diag("error", stage=e.stage, message=str(e))
        if e.representation is not None:
            write_outputs(e.representation, outdir, started, str(e))
        return EXIT_ABORT
    except ParameterRejected as e:
        _diag("error", stage="config", message=str(e))
        return EXIT_CONFIG
    write_outputs(rep, outdir, started, None)
    _diag("info", message="done", stages=len(rep.stages), output=str(outdir))
    return EXIT_OK


def _load_rep(path: str) -> Representation:
    p = Path(path)
    d = json.loads(p.read_text())
    if d.get("format") != "superpose-representation" and "representation" in d:
        d = json.loads((p.parent / d["representation"]).read_text())
    return Representation.from_dict(d)


def read_points(path: str, n: int) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not _is_number(row[0]):
                continue  # header
            if len(row) != n:
                raise ConfigError(f"row {lineno}: expected {n} coordinates, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise ConfigError(f"row {lineno}: not a number in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ConfigError(f"row {lineno}: non-finite coordinate")
            rows.append(vals)
    return np.array(rows, dtype=np.float64).reshape(-1, n)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def cmd_eval(args) -> int:
    try:
        rep = _load_rep(args.representation)
        pts = read_points(args.points, rep.params.n)
    except (OSError, ValueError, KeyError, ConfigError) as e:
        _diag("error", message=str(e))
        return EXIT_CONFIG
    values = rep(pts) if len(pts) else np.zeros(0)
    target = target_by_name(rep.target, rep.params.n, rep.shrink)
    wrapped = rep.target.startswith("wrapped:")
    header = [f"x{p + 1}" for p in range(rep.params.n)] + ["value", "error"]
    cols = [values, np.abs(target(pts) - values) if len(pts) else values]
    if wrapped:
        header.append("unwrapped")
        limit = rep.shrink * (1 - 1e-15)
        cols.append(unwrap_value(np.clip(values, -limit, limit), rep.shrink))
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        for i, x in enumerate(pts):
            w.writerow([repr(float(v)) for v in x] + [repr(float(c[i])) for c in cols])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_check(args) -> int:
    from .audit import audit, format_table
    try:
        rep = _load_rep(args.path)
    except (OSError, ValueError, KeyError) as e:
        _diag("error", message=str(e))
        return EXIT_CONFIG
    results = audit(rep)
    print(format_table(results))
    failed = [r.name for r in results if not r.ok]
    if failed:
        _diag("error", failed=failed)
        return EXIT_CHECK
    return EXIT_OK


PLOT_KINDS = ("residual-decay", "h-gallery", "phi-gallery", "g")


def cmd_plot(args) -> int:
    if args.kind not in PLOT_KINDS:
        _diag("error", message=f"unknown plot kind {args.kind!r}; choose from {PLOT_KINDS}")
        return EXIT_CONFIG
    try:
        rep = _load_rep(args.path)
    except (OSError, ValueError, KeyError) as e:
        _diag("error", message=str(e))
        return EXIT_CONFIG
    from .plots import plot
    try:
        svg = plot(rep, args.kind, Path(args.output or "."))
    except ValueError as e:
        _diag("error", message=str(e))
        return EXIT_CHECK
    print(svg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="superpose", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("approximate", help="run the construction from a config file")
    a.add_argument("config")
    a.add_argument("-o", "--output", help="output directory (overrides the config)")
    a.set_defaults(func=cmd_approximate)

    e = sub.add_parser("eval", help="evaluate a representation at points from a CSV file")
    e.add_argument("representation")
    e.add_argument("points")
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("check", help="re-verify a representation's invariants")
    c.add_argument("path", help="representation.json or report.json")
    c.set_defaults(func=cmd_check)

    p = sub.add_parser("plot", help="write an SVG and its CSV")
    p.add_argument("path", help="representation.json or report.json")
    p.add_argument("kind", help=", ".join(PLOT_KINDS))
    p.add_argument("-o", "--output", help="output directory")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="level=%(levelname)s logger=%(name)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
