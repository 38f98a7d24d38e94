"""User-level private stochastic optimization by gradient mean estimation.

Users are partitioned into t0 disjoint groups; step t estimates the mean
gradient from group t through the Euclidean-ball (Kashin) mean estimator at
the full budget, then takes a gradient step. Each user is touched exactly
once, so the whole run satisfies user-level epsilon-LDP.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mean1d import PreconditionWarning
from .mean_multi import UserDatasetVector, mean_l2
from .streams import RngStream
from .transforms import KashinFrame, build_kashin_frame

__all__ = [
    "LossOracle",
    "OptimizerConfig",
    "StepRecord",
    "OracleCheckReport",
    "optimize",
    "check_oracle",
    "quadratic_oracle",
    "default_steps",
]

# t0 should sit in [T0_LOW*ln n, T0_HIGH*ln n]; the default is 4*ln n.
T0_LOW, T0_HIGH, T0_DEFAULT = 2.0, 6.0, 4.0


@dataclass(frozen=True)
class LossOracle:
    """Loss with per-sample gradients and declared regularity constants.

    ``gradient(samples, theta)`` must be vectorized: samples (..., d) in,
    gradients (..., d) out. G bounds the gradient's Lipschitz constant in
    theta, gamma the strong convexity of the population loss, D the
    gradient norm (||grad|| <= D with probability one). ``radius``, when
    set, declares a Euclidean-ball domain that iterates project onto.
    """

    gradient: Callable[[np.ndarray, np.ndarray], np.ndarray]
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    G: float
    gamma: float
    D: float
    radius: float | None = None
    name: str = ""


@dataclass(frozen=True)
class OptimizerConfig:
    eta: float
    theta0: np.ndarray
    epsilon: float
    t0: int | None = None  # None: ceil(4*ln n) at run time

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta0", np.asarray(self.theta0, dtype=np.float64))
        if self.eta <= 0:
            raise ValueError(f"step size must be positive, got {self.eta}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class StepRecord:
    t: int
    theta: np.ndarray  # iterate after this step
    grad_norm: float  # norm of the privatized gradient estimate


def default_steps(n: int) -> int:
    return max(1, math.ceil(T0_DEFAULT * math.log(max(n, 2))))


def optimize(
    data: UserDatasetVector,
    oracle: LossOracle,
    config: OptimizerConfig,
    stream: RngStream,
    frame: KashinFrame | None = None,
) -> tuple[np.ndarray, list[StepRecord]]:
    """Minimize E[loss(X, theta)] under user-level epsilon-LDP.

    Args:
        data: n users x m samples x sample-dimension tensor.
        oracle: loss oracle; the parameter dimension is len(config.theta0).
        config: step size (must be <= 1/G), initial point, budget, and
            optionally the step count t0 (default ceil(4*ln n)).
        stream: randomness for grouping, the frame, and privatization.
        frame: optional pre-built Kashin frame for the parameter dimension
            (built once here if absent, reused across steps).

    Returns:
        (theta_hat, trajectory): the final iterate and per-step records.
    """
    if config.eta > 1.0 / oracle.G + 1e-12:
        raise ValueError(
            f"step size {config.eta} exceeds 1/G = {1.0 / oracle.G:.4g}"
        )
    n, m = data.n, data.m
    t0 = config.t0 if config.t0 is not None else default_steps(n)
    if t0 < 1:
        raise ValueError(f"need at least one step, got t0={t0}")
    if n < 4 * t0:
        raise ValueError(
            f"one-touch grouping needs n >= 4*t0 = {4 * t0} users, got {n}"
        )
    log_n = math.log(max(n, 2))
    if not (T0_LOW * log_n <= t0 <= T0_HIGH * log_n):
        warnings.warn(
            f"t0={t0} outside the recommended band "
            f"[{T0_LOW * log_n:.1f}, {T0_HIGH * log_n:.1f}]",
            PreconditionWarning,
            stacklevel=2,
        )

    d = config.theta0.shape[0]
    if frame is None:
        frame = build_kashin_frame(d, stream.child(0))
    elif frame.d != d:
        raise ValueError(f"frame dimension {frame.d} != parameter dimension {d}")

    perm = stream.child(1).generator().permutation(n)
    group_of = [np.sort(perm[t::t0]) for t in range(t0)]

    theta = config.theta0.copy()
    trajectory: list[StepRecord] = []
    for t in range(t0):
        users = group_of[t]
        grads = oracle.gradient(data.values[users], theta)
        grad_data = UserDatasetVector(grads, support="l2", radius=oracle.D)
        g_t = mean_l2(grad_data, config.epsilon, frame, stream.child(2, t))
        theta = theta - config.eta * g_t
        if oracle.radius is not None:
            norm = np.linalg.norm(theta)
            if norm > oracle.radius:
                theta *= oracle.radius / norm
        trajectory.append(
            StepRecord(t=t, theta=theta.copy(), grad_norm=float(np.linalg.norm(g_t)))
        )
    return theta, trajectory


@dataclass(frozen=True)
class OracleCheckReport:
    ok: bool
    violations: tuple[str, ...]
    max_gradient_rel_error: float
    max_gradient_norm: float
    lipschitz_estimate: float


def check_oracle(
    oracle: LossOracle,
    probes: list[tuple[np.ndarray, np.ndarray]],
    rel_tol: float = 1e-5,
) -> OracleCheckReport:
    """Validate an oracle's declared regularity on probe points.

    Central finite differences check the gradient (relative error <= rel_tol
    where the gradient is not tiny), every probe checks the norm bound D,
    and probe pairs give an empirical Lipschitz estimate checked against
    G*(1+1e-3). Failures are reported, not raised.
    """
    if not probes:
        raise ValueError("check_oracle needs at least one probe")
    violations: list[str] = []
    max_rel = 0.0
    max_norm = 0.0
    eps_fd = 1e-6
    for x, theta in probes:
        x = np.asarray(x, dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        g = np.asarray(oracle.gradient(x, theta), dtype=np.float64)
        fd = np.empty_like(theta)
        for j in range(theta.shape[0]):
            step = np.zeros_like(theta)
            step[j] = eps_fd
            fd[j] = (oracle.value(x, theta + step) - oracle.value(x, theta - step)) / (
                2 * eps_fd
            )
        denom = max(np.linalg.norm(fd), 1e-8)
        rel = float(np.linalg.norm(g - fd) / denom)
        max_rel = max(max_rel, rel)
        max_norm = max(max_norm, float(np.linalg.norm(g)))
    if max_rel > rel_tol:
        violations.append(
            f"gradient mismatch: finite-difference relative error {max_rel:.2e} "
            f"> {rel_tol:.0e} (smoothness assumption (a))"
        )
    if max_norm > oracle.D * (1 + 1e-9):
        violations.append(
            f"gradient norm {max_norm:.4g} exceeds declared bound D={oracle.D} "
            "(bounded-gradient assumption (b))"
        )
    lip = 0.0
    for (x1, th1), (x2, th2) in zip(probes[:-1], probes[1:]):
        if not np.array_equal(x1, x2):
            continue
        dth = np.linalg.norm(np.asarray(th1) - np.asarray(th2))
        if dth < 1e-12:
            continue
        dg = np.linalg.norm(
            np.asarray(oracle.gradient(x1, np.asarray(th1)))
            - np.asarray(oracle.gradient(x1, np.asarray(th2)))
        )
        lip = max(lip, float(dg / dth))
    if lip > oracle.G * (1 + 1e-3):
        violations.append(
            f"empirical Lipschitz estimate {lip:.4g} exceeds G={oracle.G} "
            "(smoothness assumption (a))"
        )
    return OracleCheckReport(
        ok=not violations,
        violations=tuple(violations),
        max_gradient_rel_error=max_rel,
        max_gradient_norm=max_norm,
        lipschitz_estimate=lip,
    )


def quadratic_oracle(
    data_radius: float, domain_radius: float = 1.0
) -> LossOracle:
    """loss(x, theta) = 0.5*||theta - x||^2: G = gamma = 1, minimizer E[X]."""

    def gradient(x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return theta - x

    def value(x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return 0.5 * np.sum((theta - x) ** 2, axis=-1)

    return LossOracle(
        gradient=gradient,
        value=value,
        G=1.0,
        gamma=1.0,
        D=domain_radius + data_radius,
        radius=domain_radius,
        name="quadratic",
    )
