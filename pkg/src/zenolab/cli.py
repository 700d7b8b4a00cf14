"""Command-line batch runner.

    zenolab [--config PATH] [--out DIR] [--seed N] [--samples N] SUBCOMMAND

Subcommands: moments, flow, fixed-point, schur-sigma, equilibrium,
anisotropy, verify.  Exit codes: 0 ok, 1 verification failure, 2 config
error, 3 numerical failure; errors are also written to stderr as JSON.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from . import experiments as ex
from .config import ConfigError, ExperimentConfig
from .increments import MomentSet
from .robustness import SWEEP_COLUMNS, write_sweep_csv
from .verify import run_verify
from .zenoflow import FlowError, write_trajectory_csv

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

MOMENT_COLUMNS = ("kappa", "method", "M_nn", "M_tt", "M_nt", "se_nn", "se_tt", "se_nt", "degenerate")
EQUILIBRIUM_COLUMNS = ("p", "f", "f_gibbs", "residual")
SUMMARY_FIELDS = ("command", "version", "config_hash", "seed", "samples", "tolerances", "results")

TOLERANCES = {
    "identity_rel": 1e-12,
    "mc_sigma": 4.0,
    "calibration_drift": 1e-10,
    "stationarity": 1e-12,
    "fixed_point_residual": 1e-10,
    "isometry": 1e-10,
}

SUBCOMMANDS = ("moments", "flow", "fixed-point", "schur-sigma", "equilibrium", "anisotropy", "verify")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _dump_json(data, path):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(rows, columns, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _error(code, message, field=None):
    payload = {"error": message, "exit_code": code}
    if field is not None:
        payload["field"] = field
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zenolab", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS)
    p.add_argument("--config", metavar="PATH", help="JSON config; defaults are used for missing fields")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, metavar="N", help="override mc.seed")
    p.add_argument("--samples", type=int, metavar="N", help="override mc.samples")
    p.add_argument("--workers", type=int, metavar="N", help="override mc.workers")
    p.add_argument("--print-default-config", action="store_true", help="print the default config and exit")
    return p


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("<file>", str(exc)) from exc
        data = json.loads(ExperimentConfig.loads(text).dumps())
    data.setdefault("mc", {})
    data.setdefault("output", {})
    if args.seed is not None:
        data["mc"]["seed"] = args.seed
    if args.samples is not None:
        data["mc"]["samples"] = args.samples
    if args.workers is not None:
        data["mc"]["workers"] = args.workers
    if args.out is not None:
        data["output"]["dir"] = args.out
    return ExperimentConfig.from_dict(data)


def run(subcommand: str, cfg: ExperimentConfig) -> tuple[int, dict]:
    out = cfg.output.dir
    os.makedirs(out, exist_ok=True)
    code = EXIT_OK
    if subcommand == "moments":
        rows = ex.run_moments(cfg)
        _write_rows(rows, MOMENT_COLUMNS, os.path.join(out, "moments.csv"))
        sets = [MomentSet(**{k: row[k] for k in MOMENT_COLUMNS if k not in ("kappa",)}) for row in rows]
        results = {"rows": len(rows), "all_cauchy_schwarz": all(m.cauchy_schwarz_ok() for m in sets)}
    elif subcommand == "flow":
        traj, results = ex.run_flow(cfg)
        write_trajectory_csv(traj, os.path.join(out, "trajectory.csv"))
        if traj.termination == "gamma_collapse":
            code = EXIT_NUMERIC
    elif subcommand == "fixed-point":
        results = ex.run_fixed_point(cfg)
        _dump_json(results, os.path.join(out, "fixed_point.json"))
    elif subcommand == "schur-sigma":
        results = ex.run_sigma(cfg)
        _dump_json(results, os.path.join(out, "sigma.json"))
    elif subcommand == "equilibrium":
        table, results, log = ex.run_equilibrium(cfg)
        rows = [dict(zip(EQUILIBRIUM_COLUMNS, vals)) for vals in zip(*(table[c] for c in EQUILIBRIUM_COLUMNS))]
        _write_rows(rows, EQUILIBRIUM_COLUMNS, os.path.join(out, "equilibrium.csv"))
        _write_rows([dict(zip(("t", "l1", "free_energy"), v)) for v in zip(log["t"], log["l1"], log["free_energy"])],
                    ("t", "l1", "free_energy"), os.path.join(out, "relaxation.csv"))
        _dump_json({k: results[k] for k in ("residual_max", "l1_distance_final", "nonrel_max_dev")},
                   os.path.join(out, "equilibrium.json"))
    elif subcommand == "anisotropy":
        rows = ex.run_anisotropy(cfg)
        write_sweep_csv(rows, os.path.join(out, "anisotropy_sweep.csv"))
        results = {"rows": rows}
    elif subcommand == "verify":
        checks = run_verify(cfg)
        results = {"checks": checks, "n_failed": sum(not c["passed"] for c in checks)}
        _dump_json(checks, os.path.join(out, "verify.json"))
        if results["n_failed"]:
            code = EXIT_VERIFY
    else:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    summary = {
        "command": subcommand,
        "version": __version__,
        "config_hash": cfg.digest(),
        "seed": cfg.mc.seed,
        "samples": cfg.mc.samples,
        "tolerances": TOLERANCES,
        "results": results,
    }
    _dump_json(summary, os.path.join(out, "summary.json"))
    return code, summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.print_default_config:
        sys.stdout.write(ExperimentConfig().dumps())
        return EXIT_OK
    if args.subcommand is None:
        return _error(EXIT_CONFIG, "no subcommand given", "subcommand")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        return _error(EXIT_CONFIG, exc.message, exc.field)
    try:
        code, summary = run(args.subcommand, cfg)
    except (FlowError, np.linalg.LinAlgError) as exc:
        return _error(EXIT_NUMERIC, str(exc))
    except ValueError as exc:
        return _error(EXIT_NUMERIC, str(exc))
    if code == EXIT_VERIFY:
        failed = [c["name"] for c in summary["results"]["checks"] if not c["passed"]]
        _error(EXIT_VERIFY, "verification failed: " + ", ".join(failed))
    elif code == EXIT_NUMERIC:
        _error(EXIT_NUMERIC, summary["results"].get("message", "numerical failure"))
    return code


if __name__ == "__main__":
    sys.exit(main())
