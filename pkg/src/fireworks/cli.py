"""Command-line runner: ``check``, ``solve``, ``mc``, ``compare``, ``asymptotics``.

Exit codes: 0 success, 1 runtime failure inside a numerical component,
2 config error, 3 condition failure, 4 non-convergence, 5 inequality or
agreement violation.  Every failure prints a human message and a one-line
JSON error object on stderr, and writes ``error.json`` to the output
directory when one is configured.

Output files are a pure function of the config and seed.  Wall-clock
times go to ``timing.csv``, which is excluded from ``manifest.json``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (asymptotic_table, free_motion_limit, mass_trace, shipped_test_functions,
                       weak_residual)
from .config import load_config
from .errors import ConfigError, FireworksError, NonConvergenceError
from .io import write_snapshot_binary, write_snapshot_csv
from .kernels import check_admissibility, estimate_delta, sample_kernels
from .montecarlo import field_observables, run_ensemble
from .solver import picard_solve

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_CONDITION, EXIT_NONCONVERGENCE, EXIT_VIOLATION = 0, 1, 2, 3, 4, 5
Z_LIMIT = 3.0
LOW_POWER_REL_SE = 0.01


class CommandFailure(Exception):
    def __init__(self, code, kind, message, **details):
        super().__init__(message)
        self.code, self.kind, self.details = code, kind, details


# ---- small writers -----------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class RunWriter:
    """Collects output files and writes the run record and manifest."""

    def __init__(self, cfg, command):
        self.cfg = cfg
        self.command = command
        self.out = Path(cfg.output["dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.timing = []

    def path(self, name):
        self.files.append(name)
        (self.out / name).parent.mkdir(parents=True, exist_ok=True)
        return self.out / name

    def time(self, label, seconds):
        self.timing.append((label, seconds))

    def finish(self, diagnostics=None, analysis=None, status="ok"):
        hashes = {name: sha256(self.out / name) for name in sorted(set(self.files))}
        config = self.cfg.snapshot()
        config["output"]["dir"] = None  # the location is not part of the result
        record = {"command": self.command, "artifact_version": __version__, "status": status,
                  "config": config, "diagnostics": diagnostics, "analysis": analysis,
                  "files": hashes}
        write_json(self.out / "run.json", record)
        hashes["run.json"] = sha256(self.out / "run.json")
        write_json(self.out / "manifest.json", {"files": hashes})
        write_csv(self.out / "timing.csv", ["stage", "seconds"], self.timing)
        return record


# ---- pieces shared by commands ---------------------------------------------------


def admissibility(cfg):
    rep = check_admissibility(cfg.kernels, cfg.grid)
    delta = estimate_delta(cfg.kernels, cfg.grid, cfg.grid.times)
    conditions = [c.to_dict() for c in rep.conditions]
    conditions.append({"name": "con04_delta_lt_1", "passed": delta.satisfied,
                       "value": delta.delta, "location": delta.location,
                       "detail": "max over x, t of the eta-weighted integral of P"})
    passed = rep.passed and delta.satisfied
    return {"passed": passed, "delta": delta.delta, "conditions": conditions,
            "failed": [c["name"] for c in conditions if not c["passed"]]}


def _require_admissible(cfg):
    report = admissibility(cfg)
    if not report["passed"]:
        raise CommandFailure(EXIT_CONDITION, "condition_failure",
                             "conditions failed: " + ", ".join(report["failed"]), report=report)
    return report


def solve(cfg, writer=None):
    s = cfg.solver
    t0 = time.perf_counter()
    try:
        field, diag = picard_solve(cfg.kernels, cfg.grid, s["mapping"], s["a"], s["tol"],
                                   int(s["max_iter"]))
    except NonConvergenceError as exc:
        if writer is not None:
            _write_diagnostics(writer, exc.diagnostics)
            writer.finish(diagnostics=exc.diagnostics.summary(), status="non_convergence")
        raise CommandFailure(EXIT_NONCONVERGENCE, "non_convergence", str(exc),
                             diagnostics=exc.diagnostics.summary()) from None
    if writer is not None:
        writer.time("solve", time.perf_counter() - t0)
        _write_diagnostics(writer, diag)
    return field, diag


def _write_diagnostics(writer, diag):
    ratios = [float("nan")] + list(diag.contraction_ratios)
    rows = [(i + 1, r, ratios[i] if i < len(ratios) else float("nan"))
            for i, r in enumerate(diag.residual_history)]
    write_csv(writer.path("diagnostics.csv"), ["iteration", "residual", "ratio"], rows)
    for i, wt in enumerate(diag.wall_times):
        writer.time(f"iteration_{i + 1}", wt)


def write_snapshots(writer, cfg, values):
    fmt = cfg.output["snapshot_format"]
    for k in cfg.snapshot_indices():
        t = cfg.grid.times[k]
        if fmt in ("csv", "both"):
            write_snapshot_csv(writer.path(f"snapshots/f_{k:05d}.csv"), values[k], cfg.grid, t)
        if fmt in ("binary", "both"):
            p = writer.path(f"snapshots/f_{k:05d}.bin")
            sidecar = write_snapshot_binary(p, values[k], cfg.grid, t)
            writer.files.append(str(Path("snapshots") / sidecar.name))


def monte_carlo(cfg, workers, histogram=False):
    return run_ensemble(cfg.kernels, cfg.grid, int(cfg.mc["n_particles"]), int(cfg.mc["seed"]),
                        cfg.mc_checkpoints(), workers=workers, dt=cfg.mc["dt"],
                        histogram=histogram)


def z_score(det, mc, se, tol=0.0):
    """``(det - mc) / se``; zero when the two agree to rounding.

    A standard error at rounding level means the Monte Carlo value carries no sampling
    noise, so the only yardstick left is the deterministic discretization
    error: the difference counts as zero if within ``tol`` and infinite
    otherwise.
    """
    diff = det - mc
    if abs(diff) <= 1e-9 * max(abs(det), abs(mc), 1e-300):
        return 0.0
    if se <= 1e-12 * max(abs(mc), 1e-300):
        return 0.0 if abs(diff) <= tol else float("inf")
    return diff / se


def analysis_summary(cfg, field):
    grid, ks = cfg.grid, sample_kernels(cfg.kernels, cfg.grid)
    delta = estimate_delta(cfg.kernels, grid, grid.times).delta
    trace = mass_trace(field, ks, grid, delta)
    limit = free_motion_limit(field, ks, grid, delta)
    table = asymptotic_table(field, limit, ks, grid, delta)
    bound_ok = bool(np.all(table["lhs"] <= table["rhs"] + table["tolerance"]))
    eps = grid.eps_quad()
    weak = []
    for i, tf in enumerate(shipped_test_functions(grid)):
        try:
            r = weak_residual(field, ks, grid, tf)
            weak.append({"index": i, "residual": r.value, "relative": r.relative,
                         "passed": r.relative < 10 * eps})
        except ValueError as exc:
            weak.append({"index": i, "skipped": str(exc), "passed": True})
    summary = {
        "delta": delta, "eps_quad": eps, "tail_allowance": limit.tail,
        "tolerance_mass": trace.tol_mass, "tolerance_rate": trace.tol_rate,
        "ineq01": trace.ineq01_holds, "ineq02": trace.ineq02_holds,
        "asymptotic_bound": bound_ok, "distance_non_increasing": table["non_increasing"],
        "weak_residual": weak, "weak_residual_ok": all(w["passed"] for w in weak),
        "final_l1_dist_to_f_inf": float(table["lhs"][-1]),
    }
    summary["passed"] = all(summary[k] for k in ("ineq01", "ineq02", "asymptotic_bound",
                                                  "distance_non_increasing", "weak_residual_ok"))
    rows = zip(grid.times, trace.mass, trace.gamma_weighted_mass, table["lhs"], table["rhs"],
               trace.ineq01_slack, trace.ineq02_slack)
    return summary, list(rows)


# ---- commands ----------------------------------------------------------------------


def cmd_check(cfg, args):
    report = admissibility(cfg)
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    out = Path(cfg.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "check.json", report)
    if not report["passed"]:
        raise CommandFailure(EXIT_CONDITION, "condition_failure",
                             "conditions failed: " + ", ".join(report["failed"]), report=report)
    return EXIT_OK


def cmd_solve(cfg, args):
    _require_admissible(cfg)
    w = RunWriter(cfg, "solve")
    field, diag = solve(cfg, w)
    write_snapshots(w, cfg, field.values)
    w.finish(diagnostics=diag.summary())
    print(f"converged in {diag.iterations} iterations, residual {diag.residual_history[-1]:.3e}")
    return EXIT_OK


MC_HEADER = ["t", "mass", "mass_se", "mean", "mean_se", "second", "second_se", "n_alive"]


def _mc_rows(tallies, d):
    for tl in tallies:
        for a in range(d):
            yield (tl.t, a + 1, tl.mass, tl.mass_se, tl.mean[a], tl.mean_se[a],
                   tl.second[a], tl.second_se[a], tl.n_alive, tl.infinite_error)


def cmd_mc(cfg, args):
    _require_admissible(cfg)
    w = RunWriter(cfg, "mc")
    t0 = time.perf_counter()
    tallies = monte_carlo(cfg, args.workers, histogram=bool(cfg.mc["histogram"]))
    w.time("mc", time.perf_counter() - t0)
    write_csv(w.path("mc.csv"), ["t", "axis"] + MC_HEADER[1:] + ["infinite_error"],
              _mc_rows(tallies, cfg.grid.d))
    if cfg.mc["histogram"]:
        final = tallies[-1]
        write_snapshot_csv(w.path("mc_histogram.csv"), final.histogram, cfg.grid, final.t)
    w.finish()
    return EXIT_OK


def compare_rows(cfg, field, tallies):
    grid = cfg.grid
    eps = grid.eps_quad()
    rows = []
    for tl in tallies:
        k = grid.time_index(tl.t)
        m, mean, second = field_observables(field.values[k], grid)
        rows.append((tl.t, "mass", 0, m, tl.mass, tl.mass_se,
                     z_score(m, tl.mass, tl.mass_se, eps * abs(m))))
        for a in range(grid.d):
            rows.append((tl.t, "mean", a + 1, mean[a], tl.mean[a], tl.mean_se[a],
                         z_score(mean[a], tl.mean[a], tl.mean_se[a], eps * abs(second[a]) ** 0.5)))
            rows.append((tl.t, "second", a + 1, second[a], tl.second[a], tl.second_se[a],
                         z_score(second[a], tl.second[a], tl.second_se[a], eps * abs(second[a]))))
    return rows


def cmd_compare(cfg, args):
    _require_admissible(cfg)
    w = RunWriter(cfg, "compare")
    field, diag = solve(cfg, w)
    t0 = time.perf_counter()
    tallies = monte_carlo(cfg, args.workers)
    w.time("mc", time.perf_counter() - t0)
    rows = compare_rows(cfg, field, tallies)
    write_csv(w.path("compare.csv"),
              ["t", "observable", "axis", "deterministic", "monte_carlo", "se", "z"], rows)
    zmax = max(abs(r[-1]) for r in rows)
    low_power = any(tl.mass > 0 and tl.mass_se / tl.mass > LOW_POWER_REL_SE for tl in tallies)
    summary = {"max_abs_z": zmax, "z_limit": Z_LIMIT, "passed": zmax <= Z_LIMIT,
               "low_power": low_power, "n_particles": int(cfg.mc["n_particles"])}
    w.finish(diagnostics=diag.summary(), analysis=summary,
             status="ok" if summary["passed"] else "violation")
    print(f"max |z| = {zmax:.3f}" + ("  (low power)" if low_power else ""))
    if not summary["passed"]:
        raise CommandFailure(EXIT_VIOLATION, "agreement_violation",
                             f"max |z| = {zmax:.3f} exceeds {Z_LIMIT}", summary=summary)
    return EXIT_OK


ANALYSIS_HEADER = ["t", "mass", "gamma_weighted_mass", "l1_dist_to_f_inf", "bound_rhs",
                   "ineq01_slack", "ineq02_slack"]


def cmd_asymptotics(cfg, args):
    _require_admissible(cfg)
    w = RunWriter(cfg, "asymptotics")
    field, diag = solve(cfg, w)
    t0 = time.perf_counter()
    summary, rows = analysis_summary(cfg, field)
    w.time("analysis", time.perf_counter() - t0)
    write_csv(w.path("analysis.csv"), ANALYSIS_HEADER, rows)
    write_json(w.path("analysis.json"), summary)
    w.finish(diagnostics=diag.summary(), analysis=summary,
             status="ok" if summary["passed"] else "violation")
    print(json.dumps(_jsonable({k: v for k, v in summary.items() if k != "weak_residual"}),
                     sort_keys=True))
    if not summary["passed"]:
        failed = [k for k in ("ineq01", "ineq02", "asymptotic_bound", "distance_non_increasing",
                              "weak_residual_ok") if not summary[k]]
        raise CommandFailure(EXIT_VIOLATION, "inequality_violation",
                             "failed: " + ", ".join(failed), summary=summary)
    return EXIT_OK


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "mc": cmd_mc, "compare": cmd_compare,
            "asymptotics": cmd_asymptotics}


def build_parser():
    p = argparse.ArgumentParser(prog="fireworks",
                                description="Exploding-cloud kinetic model: solver and checks.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="scenario YAML file")
    p.add_argument("--workers", type=int, default=1, help="worker threads for Monte Carlo")
    p.add_argument("--seed", type=int, default=None, help="override mc.seed (unsigned 64-bit)")
    p.add_argument("--out", default=None, help="override output.dir")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set a dotted config field, value parsed as YAML (repeatable)")
    return p


def _report_error(exc_kind, message, code, out_dir=None, **details):
    obj = {"error": exc_kind, "message": message, "exit_code": code}
    obj.update(_jsonable(details))
    print(f"error: {message}", file=sys.stderr)
    print(json.dumps(obj, sort_keys=True), file=sys.stderr)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            write_json(Path(out_dir) / "error.json", obj)
        except OSError:
            pass
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        return _report_error("config_error", "--workers must be >= 1", EXIT_CONFIG,
                             field="workers")
    try:
        cfg = load_config(args.config, overrides=args.override, seed=args.seed, out=args.out)
    except ConfigError as exc:
        return _report_error("config_error", str(exc), EXIT_CONFIG, args.out,
                             field=exc.field, line=exc.line)
    out_dir = cfg.output["dir"]
    try:
        return COMMANDS[args.command](cfg, args)
    except CommandFailure as exc:
        return _report_error(exc.kind, str(exc), exc.code, out_dir, **exc.details)
    except FireworksError as exc:
        return _report_error(type(exc).__name__, str(exc), EXIT_RUNTIME, out_dir)


if __name__ == "__main__":
    sys.exit(main())
