"""Command line entry point: check-matrix, solve, verify, carleson, report.

Exit codes: 0 success, 1 a check or matrix contradicted expectations,
2 malformed input (bad JSON, schema violation, unknown check id).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import carleson_density, carleson_profile
from .config import ExperimentConfig, mesh_label, parse_mesh_levels
from .ellipticity import ellipticity_report
from .errors import ConfigError, NotElliptic, PEllipticError
from .experiments import report_rows, resolve_ids, run_check
from .geometry import dyadic_tents
from .io import dump_json, parse_matrix, write_grid
from .solver import solve_field, solve_on_graph

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _out_dir(args) -> Path:
    out = os.environ.get("PELL_OUT") or args.out
    if out is None:
        out = args.cfg.raw.get("output", "out") if getattr(args, "cfg", None) else "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args) -> ExperimentConfig:
    overrides = {}
    if getattr(args, "mesh_levels", None):
        overrides["meshes"] = parse_mesh_levels(args.mesh_levels)
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if args.config is None:
        raise ConfigError("--config is required")
    return ExperimentConfig.load(args.config, **overrides)


def _write_metadata(out: Path, command: str, cfg: ExperimentConfig | None, extra: dict | None = None) -> None:
    meta = {"command": command, "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "version": __version__, "python": platform.python_version(), "numpy": np.__version__}
    if cfg is not None:
        meta["config"] = cfg.raw
    meta.update(extra or {})
    dump_json(meta, out / "metadata.json")


# --- verbs ----------------------------------------------------------------------


def cmd_check_matrix(args) -> int:
    text = args.matrix
    if Path(text).is_file():
        text = Path(text).read_text()
    try:
        A = parse_matrix(text)
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: malformed matrix: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        rep = ellipticity_report(A)
    except NotElliptic as exc:
        print(f"not elliptic: {exc}", file=sys.stderr)
        return EXIT_FAIL
    d = rep.to_dict()
    print(f"lambda = {d['lambda']:.6g}  Lambda = {d['Lambda']:.6g}")
    print(f"mu = {d['mu']}  p0 = {rep.p0:.6f}  p0' = {rep.p0_prime:.6f}")
    if d["flags"]:
        print("flags: " + ", ".join(d["flags"]))
    if args.out or os.environ.get("PELL_OUT"):
        out = _out_dir(args)
        dump_json({"matrix": A, "report": d}, out / "ellipticity.json")
    if args.json:
        print(dump_json(d), end="")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = args.cfg
    out = _out_dir(args)
    records = []
    for mesh in cfg.meshes:
        graph = cfg.graph(mesh)
        fld = cfg.field(mesh)
        for k, datum in enumerate(cfg.data()):
            name = datum.name or f"datum{k}"
            tag = f"{mesh_label(mesh).replace('/', '_')}_{name}"
            rec = {"mesh": mesh, "datum": name, "spec": datum.spec}
            if graph is None:
                sol = solve_field(fld, datum)
            else:
                gsol = solve_on_graph(fld, graph, datum, cfg.graph_gamma())
                sol = gsol.strip_solution
                rec["graph"] = graph.descriptor()
                rec["pullback"] = gsol.metadata["pullback"]
                np.save(out / f"nodes_{tag}.npy", gsol.physical_nodes)
            grid = out / f"solution_{tag}.grid"
            write_grid(grid, sol.u, [sol.domain.mesh_x0, sol.domain.lateral_mesh], sol.domain.n)
            rec.update({"file": grid.name, "residual": sol.residual, "method": sol.method,
                        "iterations": sol.iterations, "domain": sol.domain.descriptor()})
            records.append(rec)
            print(f"residual mesh={mesh_label(mesh)} datum={name} {sol.residual:.3e} ({sol.method})")
    dump_json({"solutions": records}, out / "solution.json")
    _write_metadata(out, "solve", cfg)
    return EXIT_OK


def _verify_ids(args) -> list[str]:
    """Explicit ids, else the config's default_checks, else every main check."""
    if args.ids:
        return resolve_ids(args.ids)
    return resolve_ids(args.cfg.raw.get("default_checks") or ["all"])


def cmd_verify(args) -> int:
    cfg = args.cfg
    ids = _verify_ids(args)
    out = _out_dir(args)
    if args.jobs and args.jobs > 1 and len(ids) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(run_check, [cfg.raw] * len(ids), ids))
    else:
        reports = [run_check(cfg.raw, cid) for cid in ids]
    rows = []
    ok = True
    for rep in reports:
        dump_json(rep, out / f"{rep['id']}.json")
        rows.extend(report_rows(rep))
        good = rep["verdict"] in ("indeterminate", rep["expected"])
        ok &= good
        mark = "ok" if good else "UNEXPECTED"
        print(f"{rep['id']:<24} verdict={rep['verdict']:<13} expected={rep['expected']:<5} "
              f"C={rep['fitted']} [{mark}]")
    _write_summary(out / "summary.csv", rows)
    _write_metadata(out, "verify", cfg, {"ids": ids, "jobs": args.jobs})
    return EXIT_OK if ok else EXIT_FAIL


def _write_summary(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "params", "lhs", "rhs", "fitted", "trend", "verdict", "expected"])
        for r in rows:
            w.writerow([r["id"], json.dumps(r["params"], sort_keys=True), r["lhs"], r["rhs"], r["fitted"],
                        json.dumps(r["trend"]), r["verdict"], r["expected"]])


def cmd_carleson(args) -> int:
    cfg = args.cfg
    out = _out_dir(args)
    result = []
    for mesh in cfg.meshes:
        fld = cfg.field(mesh)
        tents = dyadic_tents(fld.domain, args.levels)
        entry = {"mesh": mesh}
        for which in ("mu", "mu_prime"):
            prof = carleson_profile(carleson_density(fld, which), tents, all_centers=args.all_centers)
            entry[which] = {"radii": prof.radii, "ratios": prof.ratios, "norm": prof.norm,
                            "slope": prof.slope, "not_carleson": prof.not_carleson}
            flag = "  NOT CARLESON" if prof.not_carleson else ""
            print(f"mesh={mesh_label(mesh)} {which:<8} norm={prof.norm:.4e} slope={prof.slope:.2f}{flag}")
        result.append(entry)
    dump_json({"profiles": result}, out / "carleson.json")
    _write_metadata(out, "carleson", cfg)
    return EXIT_OK


def cmd_report(args) -> int:
    root = Path(args.directory)
    files = sorted(p for p in root.glob("*.json") if p.name not in ("metadata.json", "solution.json", "carleson.json"))
    if not files:
        print(f"no reports in {root}", file=sys.stderr)
        return EXIT_USAGE
    ok = True
    print(f"{'id':<24} {'verdict':<13} {'expected':<9} {'fitted':>12}  trend")
    for p in files:
        rep = json.loads(p.read_text())
        if "verdict" not in rep:
            continue
        good = rep["verdict"] in ("indeterminate", rep.get("expected", "pass"))
        ok &= good
        trend = ", ".join(f"{t:.4g}" if isinstance(t, (int, float)) else str(t) for t in rep.get("trend", []))
        fitted = rep["fitted"]
        fitted = f"{fitted:.4g}" if isinstance(fitted, (int, float)) else str(fitted)
        print(f"{rep['id']:<24} {rep['verdict']:<13} {rep.get('expected', 'pass'):<9} {fitted:>12}  [{trend}]")
    return EXIT_OK if ok else EXIT_FAIL


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file, inline JSON or preset name")
    common.add_argument("--mesh-levels", help="comma list such as 32,64 or 1/32,1/64")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (PELL_OUT overrides)")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers")

    parser = argparse.ArgumentParser(prog="pell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("check-matrix", parents=[common], help="ellipticity report for one matrix")
    p.add_argument("matrix", help="path to a JSON matrix or inline JSON")
    p.add_argument("--json", action="store_true", help="also print the report as JSON")
    p.set_defaults(func=cmd_check_matrix, needs_config=False)

    p = sub.add_parser("solve", parents=[common], help="solve the config's Dirichlet problems")
    p.set_defaults(func=cmd_solve, needs_config=True)

    p = sub.add_parser("verify", parents=[common], help="run inequality checks")
    p.add_argument("ids", nargs="*", help="check ids or 'all' (default: the config's default_checks, else all)")
    p.set_defaults(func=cmd_verify, needs_config=True)

    p = sub.add_parser("carleson", parents=[common], help="Carleson profiles of the coefficient densities")
    p.add_argument("--levels", type=int, default=6)
    p.add_argument("--all-centers", action="store_true")
    p.set_defaults(func=cmd_carleson, needs_config=True)

    p = sub.add_parser("report", parents=[common], help="summary table of a report directory")
    p.add_argument("directory")
    p.set_defaults(func=cmd_report, needs_config=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.cfg = _load(args) if args.needs_config else None
        if args.verb == "verify":
            _verify_ids(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PEllipticError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
