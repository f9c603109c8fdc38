"""Command-line front end.

    invfem <forward|inverse|iga|verify|bench> --config PATH [--set k=v]... [--output DIR] [--seed N]

``verify shear`` runs the shear verification study and ``bench tet`` the
single-tetrahedron suite; for these two ``--set`` overrides study fields.
Exit codes: 0 success, 1 verification checks failed, 2 invalid
configuration (the offending key is printed), 3 solver divergence (the
report is still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import benchmarks
from .config import ConfigError, RunConfig, apply_overrides, load
from .driver import IGAFailure, iga_solve, solve_forward, solve_inverse
from .fem import NodalField
from .kinematics import ElementInversionError
from .mesh import MeshError, write_vtk
from .solver import ConvergenceRecord, DivergenceError

log = logging.getLogger("invfem")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

SIMPLE_SHEAR_TOL = 1e-10
GENERALIZED_SHEAR_TOL = 0.02
TET_PB_TOL = 1e-9
TET_ITERATIONS = (3.0, 8.0)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and not isinstance(obj, (str, int)):
        return obj.value
    return obj


def write_report(report: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")


def strip_wall_times(obj):
    """Copy of a report without timing keys (those containing "time"), for determinism checks."""
    if isinstance(obj, dict):
        return {k: strip_wall_times(v) for k, v in obj.items() if "time" not in k}
    if isinstance(obj, list):
        return [strip_wall_times(v) for v in obj]
    return obj


# --- probes ----------------------------------------------------------------------


def locate(mesh, point, tol=1e-10):
    """(cell, reference coordinates) of the first cell containing ``point``, or None."""
    p = np.asarray(point, dtype=float)
    v = mesh.vertices[mesh.cells]
    A = np.swapaxes(v[:, 1:] - v[:, :1], 1, 2)
    lam = np.linalg.solve(A, (p - v[:, 0])[..., None])[..., 0]
    bary = np.concatenate([1.0 - lam.sum(1, keepdims=True), lam], axis=1)
    inside = np.flatnonzero(bary.min(1) >= -tol)
    if not len(inside):
        return None
    c = int(inside[0])
    return c, lam[c]


def probe_values(field: NodalField, mesh, probes) -> dict:
    out = {}
    for name, point in probes:
        hit = locate(mesh, point)
        if hit is None:
            out[name] = {"point": list(point), "value": None, "note": "point outside the input mesh"}
            continue
        c, ref = hit
        val = field.evaluate(np.array([c]), ref[None])[0]
        out[name] = {"point": list(point), "value": val, "magnitude": float(np.linalg.norm(val))}
    return out


# --- subcommands -----------------------------------------------------------------


def _record_dict(record: ConvergenceRecord | None):
    return record.as_dict() if record is not None else None


def _write_fields(res, vtk_path: Path) -> list[str]:
    vtk_path.parent.mkdir(parents=True, exist_ok=True)
    name = "displacement" if res.direction == "forward" else "inverse_displacement"
    fields = {name: res.displacement}
    if res.pressure is not None:
        fields["pressure"] = res.pressure
    write_vtk(res.input_mesh, fields, vtk_path)
    geom_path = vtk_path.with_name(vtk_path.stem + "_geometry" + vtk_path.suffix)
    write_vtk(res.geometry, {name: res.displacement.values[: res.input_mesh.num_vertices]}, geom_path)
    return [str(vtk_path), str(geom_path)]


def run_solve(command: str, args) -> int:
    try:
        doc = load(args.config, args.set)
        doc["direction"] = command
        cfg = RunConfig.from_dict(doc, Path(args.config).resolve().parent)
    except ConfigError as exc:
        print(f"configuration error at {exc.path or '<root>'}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, MeshError) as exc:
        print(f"configuration error at mesh: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.output)
    report_path = out_dir / cfg.report_path
    report = {"command": command, "seed": args.seed, "config": cfg.document, "direction": command}
    t0 = time.perf_counter()
    status = EXIT_OK
    try:
        if command == "forward":
            res = solve_forward(cfg.problem)
        elif command == "inverse":
            res = solve_inverse(cfg.problem)
        else:
            res = iga_solve(cfg.problem, cfg.iga)
    except DivergenceError as exc:
        report.update(status="diverged", message=str(exc), record=_record_dict(exc.record), errors={}, probes={})
        status = EXIT_DIVERGED
    except IGAFailure as exc:
        report.update(status="diverged", message=str(exc), record=None, errors={"iga_history": exc.history}, probes={})
        status = EXIT_DIVERGED
    except ElementInversionError as exc:
        report.update(status="diverged", message=str(exc), record=None, errors={}, probes={})
        status = EXIT_DIVERGED
    else:
        errors = {}
        if res.record is not None and res.record.steps:
            errors["final_residual"] = res.record.steps[-1]["norms"][-1]
        if command == "iga":
            errors["iga_history"] = res.history
            if not res.converged:
                report["message"] = f"IGA stopped after {len(res.history)} iterations above epsilon"
        report.update(
            status="converged" if res.converged else "not_converged",
            record=_record_dict(res.record),
            errors=errors,
            probes=probe_values(res.displacement, res.input_mesh, cfg.probes),
            max_displacement=float(np.linalg.norm(res.displacement.at_vertices(), axis=1).max()),
            outputs=_write_fields(res, out_dir / cfg.vtk_path),
        )
        if not res.converged:
            status = EXIT_DIVERGED
    report["wall_time"] = time.perf_counter() - t0
    write_report(report, report_path)
    print(f"{command}: {report['status']}; report written to {report_path}")
    return status


def _study(cls, overrides, **fixed):
    doc = apply_overrides({}, overrides)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"unknown study parameter; expected one of {sorted(names)}", unknown[0])
    defaults = cls()
    kwargs = {}
    for k, v in doc.items():
        want = getattr(defaults, k)
        if isinstance(want, tuple):
            if not isinstance(v, list):
                raise ConfigError("expected a list", k)
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        elif isinstance(want, (int, float)) and (isinstance(v, bool) or not isinstance(v, (int, float))):
            raise ConfigError("expected a number", k)
        elif isinstance(want, int) and not isinstance(want, bool) and isinstance(v, float):
            raise ConfigError("expected an integer", k)
        kwargs[k] = v
    kwargs.update(fixed)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _shear_checks(result: dict) -> dict:
    gen = result["generalized"][-1]
    inv = result["inverse"]
    return {
        "simple_shear_error_le_1e-10": result["simple_max_error"] <= SIMPLE_SHEAR_TOL,
        "generalized_monotone": result["generalized_monotone"],
        "generalized_finest_below_2pct": max(gen["energy_error"], gen["stress_error"]) < GENERALIZED_SHEAR_TOL,
        "inverse_recovery_le_1e-9": all(r["recovery_error"] <= 1e-9 for r in inv["simple"] + inv["generalized"]),
    }


def _tet_checks(summary: dict) -> dict:
    checks = {}
    for part, col in summary.items():
        checks[f"{part}_pb_error_le_1e-9"] = col["pb"]["average"] <= TET_PB_TOL
        lo, hi = TET_ITERATIONS
        checks[f"{part}_iga_iterations_in_range"] = lo <= col["iga1"]["avg_iterations"] <= hi
        checks[f"{part}_one_shot_faster"] = col["one_shot_faster_time_fraction"] >= 0.95
    return checks


def run_study(command: str, args) -> int:
    suites = {"verify": {"shear": benchmarks.ShearStudy}, "bench": {"tet": benchmarks.TetSuite}}[command]
    if args.suite not in suites:
        print(f"configuration error at suite: unknown {command} suite {args.suite!r}; choose from {sorted(suites)}", file=sys.stderr)
        return EXIT_CONFIG
    cls = suites[args.suite]
    overrides = list(args.set)
    try:
        if args.config:
            with open(args.config) as fh:
                base = json.load(fh)
            overrides = [f"{k}={json.dumps(v)}" for k, v in base.items()] + overrides
        fixed = {"seed": args.seed} if args.seed is not None and "seed" in {f.name for f in dataclasses.fields(cls)} else {}
        study = _study(cls, overrides, **fixed)
    except ConfigError as exc:
        print(f"configuration error at {exc.path or '<root>'}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"configuration error at <root>: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    result = study.run()
    checks = _shear_checks(result) if args.suite == "shear" else _tet_checks(result["summary"])
    report = {"command": f"{command} {args.suite}", "seed": args.seed, "result": result, "checks": checks}
    report["wall_time"] = time.perf_counter() - t0
    path = Path(args.output) / f"{command}_{args.suite}.json"
    write_report(report, path)
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"report written to {path}")
    return EXIT_OK if all(checks.values()) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="invfem", description="Forward and one-shot inverse hyperelastic finite elements.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="JSON configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="dotted override, value parsed as JSON")
        p.add_argument("--output", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="random seed (bench) or label recorded in the report")

    for name in ("forward", "inverse", "iga"):
        common(sub.add_parser(name, help=f"{name} solve from a configuration"), True)
    for name, suite in (("verify", "shear"), ("bench", "tet")):
        p = sub.add_parser(name, help=f"run the {suite} {name} suite")
        p.add_argument("suite", nargs="?", default=suite)
        common(p, False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command in ("verify", "bench"):
        return run_study(args.command, args)
    return run_solve(args.command, args)


if __name__ == "__main__":
    sys.exit(main())
