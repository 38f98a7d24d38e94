"""Experiment sweeps: grid execution, trial records, and rate fitting.

A sweep is fully determined by its spec: every (grid point, trial) pair
derives its randomness from (seed, grid index, trial index), so reruns are
byte-identical (wall time excluded from the determinism hash). Failures at
one grid point become error rows and never abort the sweep.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from ..baselines import BaselineKind, baseline_mean
from ..mean1d import (
    Mean1dParams,
    PreconditionWarning,
    mean1d_estimate,
    mean1d_estimate_clipped,
)
from ..mean_multi import mean_heavy_multi, mean_l1_discrete, mean_l2, mean_linf
from ..nonparam import predict_reg, train_classifier, train_regressor
from ..optimize import OptimizerConfig, optimize, quadratic_oracle
from ..streams import RngStream, derive_stream
from ..transforms import build_kashin_frame
from .generate import generate

__all__ = [
    "ExperimentSpec",
    "TrialRecord",
    "run_sweep",
    "fit_rate",
    "write_records",
    "determinism_hash",
    "TASKS",
]

SCHEMA_VERSION = 1

TASKS = ("mean1d", "mean", "heavy", "optimize", "classify", "regress", "baseline")

# stream namespace labels: data generation vs mechanism randomness
_DATA_NS, _MECH_NS, _FRAME_NS = 0, 1, 2


@dataclass(frozen=True)
class ExperimentSpec:
    """A sweep: task, data family, grid, and all mechanism options.

    Every grid point runs ``trials`` independent trials whose streams are
    derived as (seed, grid index, trial index); the spec determines all
    randomness.
    """

    task: str
    distribution: str
    dist_params: dict = field(default_factory=dict)
    n: tuple[int, ...] = (1000,)
    m: tuple[int, ...] = (100,)
    epsilon: tuple[float, ...] = (1.0,)
    d: tuple[int, ...] = (1,)
    trials: int = 10
    seed: int = 0
    options: dict = field(default_factory=dict)
    output: str | None = None

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; known: {TASKS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for name in ("n", "m", "epsilon", "d"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValueError(f"grid axis {name} must be non-empty")
            object.__setattr__(self, name, vals)

    def grid_points(self) -> Iterator[tuple[int, dict]]:
        idx = 0
        for n in self.n:
            for m in self.m:
                for eps in self.epsilon:
                    for d in self.d:
                        yield idx, {"n": int(n), "m": int(m),
                                    "epsilon": float(eps), "d": int(d)}
                        idx += 1

    @classmethod
    def from_config(cls, cfg: dict) -> "ExperimentSpec":
        grid = cfg.get("grid", {})
        return cls(
            task=cfg["task"],
            distribution=cfg.get("distribution", {}).get("name", "uniform"),
            dist_params=cfg.get("distribution", {}).get("params", {}),
            n=tuple(grid.get("n", [1000])),
            m=tuple(grid.get("m", [100])),
            epsilon=tuple(grid.get("epsilon", [1.0])),
            d=tuple(grid.get("d", [1])),
            trials=cfg.get("trials", 10),
            seed=cfg.get("seed", 0),
            options=cfg.get("options", {}),
            output=cfg.get("output"),
        )


@dataclass(frozen=True)
class TrialRecord:
    """One row per (grid point, trial)."""

    schema_version: int
    task: str
    grid_index: int
    n: int
    m: int
    d: int
    epsilon: float
    trial: int
    seed: int
    metric: str
    value: float | None
    wall_ms: float
    warnings: tuple[str, ...] = ()
    diagnostics: dict = field(default_factory=dict)
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


_METRIC_OF = {
    "mean1d": "squared_error",
    "heavy": "squared_error",
    "baseline": "squared_error",
    "mean": "l2_error_sq",
    "optimize": "l2_error",
    "classify": "excess_risk",
    "regress": "integrated_squared_error",
}


def _risk_grid(d: int) -> np.ndarray:
    per_axis = 4001 if d == 1 else max(2, int(round(2e5 ** (1.0 / d))))
    axis = np.linspace(0, 1, per_axis + 1)[:-1] + 0.5 / per_axis
    if d == 1:
        return axis[:, None]
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def _run_trial(
    spec: ExperimentSpec, grid_index: int, point: dict, trial: int, frame
) -> TrialRecord:
    t_start = time.perf_counter()
    stream = derive_stream(spec.seed, [grid_index, trial])
    n, m, eps, d = point["n"], point["m"], point["epsilon"], point["d"]
    opts = spec.options
    caught: list[str] = []
    diagnostics: dict[str, Any] = {}
    metric = _METRIC_OF[spec.task]
    value: float | None = None
    error: str | None = None
    try:
        with warnings.catch_warnings(record=True) as wlist:
            warnings.simplefilter("always", PreconditionWarning)
            gen = generate(
                spec.distribution, spec.dist_params, n, m, d, stream.child(_DATA_NS)
            )
            value, diagnostics = _dispatch(
                spec.task, gen, point, opts, stream.child(_MECH_NS), frame
            )
        caught = [str(w.message) for w in wlist
                  if issubclass(w.category, PreconditionWarning)]
    except Exception as exc:  # failed-row isolation: record, never abort
        error = f"{type(exc).__name__}: {exc}"
    wall_ms = (time.perf_counter() - t_start) * 1e3
    return TrialRecord(
        schema_version=SCHEMA_VERSION,
        task=spec.task,
        grid_index=grid_index,
        n=n,
        m=m,
        d=d,
        epsilon=eps,
        trial=trial,
        seed=spec.seed,
        metric=metric,
        value=value,
        wall_ms=wall_ms,
        warnings=tuple(caught),
        diagnostics=diagnostics,
        error=error,
    )


def _dispatch(task, gen, point, opts, stream, frame):
    n, m, eps, d = point["n"], point["m"], point["epsilon"], point["d"]
    data, truth = gen.dataset, gen.truth
    diagnostics: dict[str, Any] = {}

    if task == "mean1d":
        D = float(opts.get("D", 1.0))
        params = Mean1dParams.make(D, eps, n, m,
                                   h=opts.get("h"), delta=opts.get("delta"))
        mu, diag = mean1d_estimate(data, params, stream)
        diagnostics = {"k_hat": diag.interval.k_hat, "L": diag.interval.L,
                       "R": diag.interval.R, "B": params.B}
        return (mu - truth["mean"]) ** 2, diagnostics

    if task == "heavy":
        mu, _ = mean1d_estimate_clipped(
            data, opts.get("D"), eps, float(opts.get("p", 2.5)),
            float(opts.get("Mp", 10.0)), stream, c=float(opts.get("c", 2.0)),
        )
        return (mu - truth["mean"]) ** 2, diagnostics

    if task == "baseline":
        kind = BaselineKind(opts.get("kind", "sample_one"))
        mu = baseline_mean(data, float(opts.get("D", 1.0)), eps, kind, stream)
        return (mu - truth["mean"]) ** 2, {"kind": kind.value}

    if task == "mean":
        support = opts.get("support", "linf")
        if support == "linf":
            mu = mean_linf(data, eps, stream)
        elif support == "l2":
            mu = mean_l2(data, eps, frame, stream)
            diagnostics["k_cert"] = frame.k_cert
        elif support == "l1":
            est = mean_l1_discrete(data, eps, stream)
            mu = est.raw  # error measured before simplex projection
            diagnostics["projected"] = est.probs.tolist()
        elif support == "heavy_coordinate" or support == "heavy_l2":
            mode = "coordinate" if support == "heavy_coordinate" else "l2norm"
            mu = mean_heavy_multi(
                data, eps, float(opts.get("p", 2.5)), float(opts.get("Mp", 10.0)),
                mode, stream, frame=frame,
            )
        else:
            raise ValueError(f"unknown support {support!r}")
        return float(np.sum((mu - truth["mean"]) ** 2)), diagnostics

    if task == "optimize":
        oracle = quadratic_oracle(
            data_radius=float(data.radius or 1.0),
            domain_radius=float(opts.get("domain_radius", 1.0)),
        )
        cfg = OptimizerConfig(
            eta=float(opts.get("eta", 1.0 / oracle.G)),
            theta0=np.zeros(d),
            epsilon=eps,
            t0=opts.get("t0"),
        )
        theta, traj = optimize(data, oracle, cfg, stream, frame=frame)
        diagnostics = {"t0": len(traj), "final_grad_norm": traj[-1].grad_norm}
        return float(np.linalg.norm(theta - truth["mean"])), diagnostics

    if task == "classify":
        model = train_classifier(
            data, eps, stream, l=opts.get("l"), beta=float(opts.get("beta", 1.0))
        )
        grid = _risk_grid(d)
        eta_vals = truth["eta"](grid)
        pred = model.q_hat[model.partition.cell_index(grid)]
        mis = np.where(pred >= 0, 1.0, -1.0) != np.sign(eta_vals + 1e-300)
        diagnostics = {"B": model.B, "K": model.K, "regime": model.regime}
        return float(np.mean(np.abs(eta_vals) * mis)), diagnostics

    if task == "regress":
        T = float(opts.get("T", truth.get("label_bound", 1.0)))
        model = train_regressor(
            data, eps, T, stream, l=opts.get("l"),
            beta=float(opts.get("beta", 1.0)), f_lower=opts.get("f_lower"),
        )
        grid = _risk_grid(d)
        est = predict_reg(model, grid, T)
        diagnostics = {"B": model.B, "K": model.K, "regime": model.regime}
        return float(np.mean((est - truth["eta"](grid)) ** 2)), diagnostics

    raise ValueError(f"unknown task {task!r}")


def _needs_frame(spec: ExperimentSpec) -> bool:
    if spec.task == "optimize":
        return True
    return spec.task == "mean" and spec.options.get("support") in ("l2", "heavy_l2")


def _run_point(args) -> list[TrialRecord]:
    spec, grid_index, point = args
    frame = None
    if _needs_frame(spec):
        frame = build_kashin_frame(
            point["d"],
            derive_stream(spec.seed, [grid_index, _FRAME_NS]),
            tol=float(spec.options.get("frame_tol", 1e-9)),
        )
    return [
        _run_trial(spec, grid_index, point, t, frame) for t in range(spec.trials)
    ]


def run_sweep(spec: ExperimentSpec) -> list[TrialRecord]:
    """Execute all grid points x trials; deterministic given the spec.

    Frames for Euclidean-path tasks are built once per grid point and
    shared across its trials. ``USERLDP_WORKERS`` fans grid points out
    across processes; records are always sorted by (grid index, trial).
    """
    jobs = [(spec, gi, point) for gi, point in spec.grid_points()]
    workers = int(os.environ.get("USERLDP_WORKERS", "1"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_point, jobs))
    else:
        chunks = [_run_point(job) for job in jobs]
    records = [rec for chunk in chunks for rec in chunk]
    records.sort(key=lambda r: (r.grid_index, r.trial))
    return records


def determinism_hash(records: list[TrialRecord]) -> str:
    """Content hash over all records, wall time excluded."""
    h = hashlib.sha256()
    for rec in sorted(records, key=lambda r: (r.grid_index, r.trial)):
        row = asdict(rec)
        row.pop("wall_ms")
        h.update(json.dumps(row, sort_keys=True).encode())
    return h.hexdigest()


def write_records(records: list[TrialRecord], path: str | Path) -> dict:
    """Write records as JSON lines plus a grid-point summary CSV.

    Returns a run summary (record counts, determinism hash, file paths).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")

    summary_path = path.with_suffix(path.suffix + ".summary.csv")
    by_point: dict[int, list[TrialRecord]] = {}
    for rec in records:
        by_point.setdefault(rec.grid_index, []).append(rec)
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["schema_version", "grid_index", "task", "n", "m", "d", "epsilon",
             "metric", "trials", "failed", "mean", "stderr"]
        )
        for gi in sorted(by_point):
            rows = by_point[gi]
            good = [r.value for r in rows if r.error is None and r.value is not None]
            mean = float(np.mean(good)) if good else float("nan")
            stderr = (
                float(np.std(good, ddof=1) / math.sqrt(len(good)))
                if len(good) > 1
                else float("nan")
            )
            r0 = rows[0]
            writer.writerow(
                [SCHEMA_VERSION, gi, r0.task, r0.n, r0.m, r0.d, r0.epsilon,
                 r0.metric, len(rows), len(rows) - len(good), repr(mean),
                 repr(stderr)]
            )
    return {
        "records": len(records),
        "failed": sum(1 for r in records if r.error is not None),
        "determinism_hash": determinism_hash(records),
        "output": str(path),
        "summary": str(summary_path),
    }


def fit_rate(
    records: list[TrialRecord] | list[dict],
    x_field: str,
    y_field: str = "value",
) -> tuple[float, float, float]:
    """Least-squares fit of log(mean y) against log(x).

    Records are grouped by the x field; each group contributes its mean y.
    Returns (slope, intercept, r_squared).
    """
    rows = [asdict(r) if isinstance(r, TrialRecord) else r for r in records]
    groups: dict[float, list[float]] = {}
    for row in rows:
        if row.get("error") is not None or row.get(y_field) is None:
            continue
        groups.setdefault(float(row[x_field]), []).append(float(row[y_field]))
    if len(groups) < 3:
        raise ValueError(f"need >= 3 distinct values of {x_field!r}, got {len(groups)}")
    xs = np.log(sorted(groups))
    ys = np.log([np.mean(groups[k]) for k in sorted(groups)])
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2
