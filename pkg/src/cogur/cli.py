"""Command-line entry point ``cogur``.

Exit codes: 0 success, 1 rejected configuration, 2 numerical failure,
64 usage error (including unknown subcommands).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from . import config as cf
from . import memory as mem
from . import nonlinear as nl
from .errors import CogurError, ConfigurationError, NumericalError, ResourceError, ShapeError, ValidationError
from .galerkin import Model, run
from .geometry import MAX_DISK_REFINE, build
from .plotting import emit_plots
from .wentzell import assemble, eigenbasis, solve_bvp

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(rows, path: Path | None, echo: bool = False) -> str:
    text = csv_text(rows)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    if echo:
        sys.stdout.write(text)
    return text


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _out_dir(doc: dict) -> Path:
    return Path(os.environ.get(cf.OUT_ENV) or doc.get("output", {}).get("dir", cf.DEFAULTS["output"]["dir"]))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, loaded: cf.LoadedConfig, files, notes, extra=None) -> Path:
    files = sorted(set(files), key=lambda p: p.name)
    manifest = {
        "config_hash": loaded.digest,
        "tool": "cogur",
        "version": __version__,
        "validation": loaded.reports,
        "warnings": loaded.warnings,
        "files": [{"name": p.name, "sha256": _sha256(p)} for p in files],
        "notes": notes,
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return path


def _warn(loaded: cf.LoadedConfig):
    for w in loaded.warnings:
        print(f"warning: {w}", file=sys.stderr)


def cmd_run(args) -> int:
    loaded = cf.parse_config(args.config, force=args.force)
    _warn(loaded)
    sim = loaded.sim
    spec = loaded.output
    out = spec.dir
    out.mkdir(parents=True, exist_ok=True)
    model = Model(sim)
    traj = run(sim, force=True, model=model)
    files = [out / "trajectory.csv"]
    write_csv(traj.rows(with_modes=args.modes or spec.modes), files[0])
    svgs, notes = emit_plots(traj, spec.channels, out)
    files += svgs
    extra = {}
    monitor = an.monitor_apriori(traj)
    extra["apriori_monitor"] = {"verdict": monitor.verdict, "margin": monitor.margin, "C": monitor.C,
                                "reason": monitor.reason}
    if spec.strong:
        rep = an.strong_diagnostics(sim, model)
        path = out / "strong.csv"
        write_csv([["t", "V1_norm", "dtU", "M2_proxy"],
                   *zip(rep.times, rep.V1_norm, rep.dtU, rep.M2_proxy)], path)
        files.append(path)
        extra["strong"] = {"bounded": rep.bounded, "decaying": rep.decaying, "cancellation": rep.cancellation}
    write_manifest(out, loaded, files, notes, extra)
    print(f"wrote {len(files)} files to {out}")
    return EXIT_OK


def cmd_eig(args) -> int:
    doc = cf.parse_sections(args.config, ["geometry", "model"])
    g = doc["geometry"]
    m = doc["model"]
    errs = cf._check_ranges({**doc, "discretization": {"scheme": "imex-euler"}})
    if errs:
        raise ConfigurationError("; ".join(errs))
    geom = build(g["backend"], float(g["size"]), int(g["refine"]))
    op = assemble(geom, m["alpha"], m["beta"], m["omega"], m["nu"])
    n = args.n_modes or int(doc.get("discretization", {}).get("n_modes", 5))
    basis = eigenbasis(op, n)
    rows = [["index", "lambda", "residual"],
            *((i + 1, lam, r) for i, (lam, r) in enumerate(zip(basis.eigenvalues, basis.residuals)))]
    write_csv(rows, _out_dir(doc) / "eig.csv", echo=True)
    return EXIT_OK


def manufactured_bvp(geom, beta: float):
    """Data for the exact solution ``u = x`` (first coordinate)."""
    x = geom.nodes[:, 0]
    xb = x[geom.boundary_nodes]
    if geom.backend == "interval":
        L = geom.params.get("length", float(np.max(x)))
        p2 = np.where(xb > 0.5 * L, 1.0 + beta * xb, -1.0 + beta * xb)
    else:
        R = geom.params.get("radius", float(np.max(np.linalg.norm(geom.nodes, axis=1))))
        p2 = xb * (1.0 / R**2 + 1.0 / R + beta)
    return np.zeros_like(x), p2, x


def cmd_bvp(args) -> int:
    doc = cf.parse_sections(args.config, ["geometry", "model"])
    g = doc["geometry"]
    beta = float(doc["model"]["beta"])
    levels = _int_levels(args.levels) or [int(g["refine"])]
    rows = [["refine", "h", "l2_error", "regularity_ratio"]]
    for lvl in levels:
        geom = build(g["backend"], float(g["size"]), lvl)
        p1, p2, exact = manufactured_bvp(geom, beta)
        sol = solve_bvp(geom, p1, p2, beta)
        e = sol.field.u - exact
        rows.append([lvl, geom.mesh_size, math.sqrt(float(e @ (geom.mass @ e))), sol.regularity_ratio])
    write_csv(rows, _out_dir(doc) / "bvp.csv", echo=True)
    return EXIT_OK


def cmd_check_kernel(args) -> int:
    raw = cf.load_document(args.config)
    sides = [s for s in ("kernel_omega", "kernel_gamma") if s in raw]
    if not sides:
        raise ConfigurationError("missing section [kernel_omega] or [kernel_gamma]")
    doc = cf.parse_sections(args.config, sides)
    report = {}
    ok = True
    for side in sides:
        rep = mem.check_admissible(cf.build_kernel(doc[side], side.split("_")[1]))
        report[side] = rep.as_dict()
        ok &= rep.admissible
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return EXIT_OK if ok else EXIT_INVALID


def cmd_check_nonlinearity(args) -> int:
    doc = cf.parse_sections(args.config, ["geometry", "model", "nonlinearity"])
    g = doc["geometry"]
    m = doc["model"]
    geom = build(g["backend"], float(g["size"]), int(g["refine"]))
    spec = cf.build_nonlinearity(doc["nonlinearity"], m["nu"], m["beta"])
    sg = nl.validate_sign_growth(spec)
    report = {"sign_growth": sg.as_dict()}
    ok = sg.passed
    if sg.passed:
        bal = nl.check_balance(spec, m["nu"], m["beta"], geom, m["omega"])
        report["balance"] = bal.as_dict()
        report["poincare_constant"] = geom.poincare_constant
        ok = bal.passed or not (sg.r1 > 2 or sg.r2 > 2)
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return EXIT_OK if ok else EXIT_INVALID


def _int_levels(text):
    return [int(v) for v in text.split(",")] if text else None


def _float_levels(text):
    return [float(v) for v in text.split(",")] if text else None


def study_levels(axis: str, doc: dict, text: str | None):
    if axis == "dt":
        base = float(doc["discretization"]["dt"])
        return _float_levels(text) or [base / 2**k for k in range(4)]
    if axis == "modes":
        base = int(doc["discretization"]["n_modes"])
        return _int_levels(text) or [base * 2**k for k in range(4)]
    base = int(doc["geometry"]["refine"])
    if doc["geometry"]["backend"] == "disk":
        return _int_levels(text) or [k for k in range(base, base + 4) if k <= MAX_DISK_REFINE]
    return _int_levels(text) or [base * 2**k for k in range(4)]


def cmd_study(args) -> int:
    loaded = cf.parse_config(args.config, force=args.force)
    _warn(loaded)
    doc = loaded.document
    levels = study_levels(args.axis, doc, args.levels)
    if args.axis == "dt":
        build_level = lambda dt: cf.build_sim(doc, dt=dt)
    elif args.axis == "modes":
        build_level = lambda n: cf.build_sim(doc, n_modes=n)
    else:
        g = doc["geometry"]
        build_level = lambda r: cf.build_sim(doc, geometry=build(g["backend"], float(g["size"]), r))
    rep = an.convergence_study(build_level, args.axis, levels)
    if rep.flagged:
        print("warning: errors are not monotone across levels", file=sys.stderr)
    write_csv(rep.rows(), loaded.output.dir / f"study_{args.axis}.csv", echo=True)
    return EXIT_OK


def cmd_limit(args) -> int:
    loaded = cf.parse_config(args.config, force=args.force)
    _warn(loaded)
    eps = _float_levels(args.eps) or loaded.document["limit"]["epsilons"]
    rep = an.delta0_limit(loaded.sim, eps)
    if not rep.strictly_decreasing:
        print("warning: distances are not strictly decreasing in epsilon", file=sys.stderr)
    write_csv(rep.rows(), loaded.output.dir / "limit.csv", echo=True)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cogur", description="Heat conduction with memory and dynamic boundary conditions.")
    p.add_argument("--version", action="version", version=f"cogur {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_, force=False):
        s = sub.add_parser(name, help=help_)
        s.add_argument("-c", "--config", required=True, type=Path, help="TOML run document")
        if force:
            s.add_argument("--force", action="store_true", help="run even if validators reject the config")
        s.set_defaults(func=fn)
        return s

    r = add("run", cmd_run, "simulate and write trajectory CSV, SVG plots and manifest", force=True)
    r.add_argument("--modes", action="store_true", help="append modal coefficients a_1..a_n to the CSV")
    e = add("eig", cmd_eig, "print the lowest Wentzell eigenvalues")
    e.add_argument("-n", "--n-modes", type=int, default=None)
    b = add("bvp", cmd_bvp, "manufactured elliptic problem with exact solution u = x")
    b.add_argument("--levels", help="comma-separated refinement levels")
    add("check-kernel", cmd_check_kernel, "admissibility report of the memory kernels (JSON)")
    add("check-nonlinearity", cmd_check_nonlinearity, "sign, growth and balance report (JSON)")
    s = add("study", cmd_study, "convergence study along one axis", force=True)
    s.add_argument("--axis", choices=("dt", "modes", "mesh"), required=True)
    s.add_argument("--levels", help="comma-separated levels (dt values, mode counts or refinements)")
    lim = add("limit", cmd_limit, "compare concentrating-kernel runs with the memoryless limit", force=True)
    lim.add_argument("--eps", help="comma-separated epsilons")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ConfigurationError, ShapeError) as exc:
        print(f"cogur {args.command}: rejected: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, ResourceError, np.linalg.LinAlgError) as exc:
        print(f"cogur {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CogurError as exc:
        print(f"cogur {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


dispatch = main

if __name__ == "__main__":
    sys.exit(main())
