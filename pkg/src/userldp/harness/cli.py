"""Command-line entry point for experiments, audits, and rate fits.

Every subcommand takes ``--config FILE`` (JSON, validated against
CONFIG_SCHEMA) plus flag overrides. Exit codes: 0 success, 2 config
validation failure, 3 audit failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import jsonschema
import numpy as np

from .audit import audit_privacy
from .sweep import TASKS, ExperimentSpec, fit_rate, run_sweep, write_records

__all__ = ["main", "CONFIG_SCHEMA"]

EXIT_OK, EXIT_CONFIG, EXIT_AUDIT = 0, 2, 3

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"type": "integer"},
        "task": {"enum": list(TASKS) + ["audit"]},
        "distribution": {
            "type": "object",
            "properties": {
                "name": {"type": "string"},
                "params": {"type": "object"},
            },
            "required": ["name"],
        },
        "grid": {
            "type": "object",
            "properties": {
                "n": {"type": "array", "items": {"type": "integer", "minimum": 2}},
                "m": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "epsilon": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                },
                "d": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
        },
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "options": {"type": "object"},
        "output": {"type": "string"},
        "audit": {
            "type": "object",
            "properties": {
                "mechanism": {"type": "string"},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "D": {"type": "number", "exclusiveMinimum": 0},
                "m": {"type": "integer", "minimum": 1},
                "n_audit": {"type": "integer", "minimum": 100},
                "bins": {"type": "integer", "minimum": 4},
                "noise_scale_factor": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["mechanism", "epsilon"],
        },
    },
    "required": ["task"],
}


def _load_config(path: str | None, overrides: argparse.Namespace, task: str) -> dict:
    cfg: dict = {"task": task}
    if path:
        with open(path) as fh:
            cfg.update(json.load(fh))
    cfg["task"] = task if task != "sweep" else cfg.get("task", task)
    grid = cfg.setdefault("grid", {})
    for axis in ("n", "m", "d"):
        val = getattr(overrides, axis, None)
        if val is not None:
            grid[axis] = [int(v) for v in val]
    if getattr(overrides, "eps", None) is not None:
        grid["epsilon"] = [float(v) for v in overrides.eps]
    for key in ("trials", "seed"):
        val = getattr(overrides, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(overrides, "out", None) is not None:
        cfg["output"] = overrides.out
    return cfg


def _validate(cfg: dict) -> None:
    jsonschema.validate(cfg, CONFIG_SCHEMA)


def _cmd_sweep_task(args: argparse.Namespace, task: str) -> int:
    try:
        cfg = _load_config(args.config, args, task)
        _validate(cfg)
        spec = ExperimentSpec.from_config(cfg)
    except (jsonschema.ValidationError, ValueError, KeyError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    records = run_sweep(spec)
    out = spec.output or f"runs/{spec.task}.jsonl"
    summary = write_records(records, out)
    summary["config"] = cfg  # every run is self-describing
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_audit(args: argparse.Namespace) -> int:
    try:
        cfg: dict = {"task": "audit", "audit": {}}
        if args.config:
            with open(args.config) as fh:
                cfg.update(json.load(fh))
        audit_cfg = cfg.setdefault("audit", {})
        if args.eps is not None:
            audit_cfg["epsilon"] = float(args.eps[0])
        if args.m is not None:
            audit_cfg["m"] = int(args.m[0])
        if args.seed is not None:
            cfg["seed"] = args.seed
        audit_cfg.setdefault("mechanism", "mean1d_stage2")
        _validate(cfg)
    except (jsonschema.ValidationError, ValueError, KeyError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    a = cfg["audit"]
    m = int(a.get("m", 100))
    radius = float(a.get("D", 1.0))
    pair = (np.full(m, radius), np.full(m, -radius))
    from ..streams import derive_stream

    report = audit_privacy(
        a["mechanism"],
        {
            "epsilon": a["epsilon"],
            "D": radius,
            "n": int(a.get("n", 1000)),
            "noise_scale_factor": a.get("noise_scale_factor", 1.0),
        },
        pair,
        n_audit=int(a.get("n_audit", 1_000_000)),
        bins=int(a.get("bins", 50)),
        stream=derive_stream(cfg.get("seed", 0), [0]),
    )
    print(
        json.dumps(
            {
                "mechanism": report.mechanism,
                "epsilon": report.epsilon,
                "max_abs_log_ratio": report.max_abs_log_ratio,
                "slack": report.slack,
                "passed": report.passed,
                "smoothed_cells": report.smoothed_cells,
            },
            indent=2,
        )
    )
    return EXIT_OK if report.passed else EXIT_AUDIT


def _cmd_fit(args: argparse.Namespace) -> int:
    try:
        rows = []
        with open(args.records) as fh:
            for line in fh:
                if line.strip():
                    rows.append(json.loads(line))
        slope, intercept, r2 = fit_rate(rows, args.x_field)
    except (ValueError, OSError, KeyError) as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"x_field": args.x_field, "slope": slope,
                      "intercept": intercept, "r_squared": r2}, indent=2))
    return EXIT_OK


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--n", nargs="+", type=int, help="override grid.n")
    sub.add_argument("--m", nargs="+", type=int, help="override grid.m")
    sub.add_argument("--eps", nargs="+", type=float, help="override grid.epsilon")
    sub.add_argument("--d", nargs="+", type=int, help="override grid.d")
    sub.add_argument("--trials", type=int, help="trials per grid point")
    sub.add_argument("--seed", type=int, help="root seed")
    sub.add_argument("--out", help="output JSONL path")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="userldp",
        description="User-level LDP estimation experiments",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for task in TASKS:
        sub = subs.add_parser(task, help=f"run the {task} task")
        _add_common(sub)
    sweep = subs.add_parser("sweep", help="run a sweep described by a config file")
    _add_common(sweep)
    audit = subs.add_parser("audit", help="empirical privacy audit")
    _add_common(audit)
    fit = subs.add_parser("fit", help="log-log rate fit over a records file")
    fit.add_argument("records", help="JSONL records file")
    fit.add_argument("--x-field", default="n", help="field to regress against")

    args = parser.parse_args(argv)
    if args.command == "fit":
        return _cmd_fit(args)
    if args.command == "audit":
        return _cmd_audit(args)
    if args.command == "sweep":
        if not args.config:
            print("sweep requires --config", file=sys.stderr)
            return EXIT_CONFIG
        with open(args.config) as fh:
            task = json.load(fh).get("task", "")
        return _cmd_sweep_task(args, task)
    return _cmd_sweep_task(args, args.command)


if __name__ == "__main__":
    sys.exit(main())
