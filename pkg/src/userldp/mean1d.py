"""Two-stage one-dimensional mean estimation under user-level LDP.

Half of the users vote, through noisy one-hot histograms, for the bin that
contains the mean; the other half report their clipped means with Laplace
noise calibrated to the short interval found in stage one. A clipped
variant handles unbounded data with bounded p-th moments.

The aggregation functions consume only ``PrivatizedUserMessage`` values:
nothing downstream of privatization sees raw data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .streams import LaplaceScale, RngStream, _laplace

__all__ = [
    "UserDatasetScalar",
    "Mean1dParams",
    "PrivatizedUserMessage",
    "IntervalEstimate",
    "Mean1dDiagnostics",
    "PreconditionWarning",
    "mean1d_estimate",
    "mean1d_estimate_clipped",
    "heavy_tail_margin",
    "stage1_select",
    "privatize_stage1",
    "privatize_stage2",
    "aggregate_stage2",
    "two_stage_from_means",
]

# Theorem-precondition constant: warn when n*(eps^2 ∧ 1) < C1_DEFAULT * ln m.
C1_DEFAULT = 16.0

_STAGE1, _STAGE2 = 1, 2


class PreconditionWarning(UserWarning):
    """A theorem precondition does not hold; results may be unreliable."""


@dataclass(frozen=True)
class UserDatasetScalar:
    """n users with m scalar samples each, as an (n, m) matrix."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"values must be 2-D (n, m), got shape {v.shape}")
        if v.shape[0] < 2 or v.shape[1] < 1:
            raise ValueError(f"need n >= 2 users and m >= 1 samples, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def user_means(self) -> np.ndarray:
        return self.values.mean(axis=1)


@dataclass(frozen=True)
class Mean1dParams:
    """Geometry and noise calibration for the two-stage estimator.

    Defaults follow h = 4*D/sqrt(m) and delta = D*sqrt(ln n / m); both are
    overridable so the harness can sweep constants. The noise scales are
    defined relationally: stage 1 always uses 2/eps (one-hot l1 sensitivity
    is 2) and stage 2 always uses (3h + 2*delta)/eps (the truncation range).
    """

    D: float
    epsilon: float
    h: float
    delta: float
    B: int
    stage1_scale: LaplaceScale
    stage2_scale: LaplaceScale

    @classmethod
    def make(
        cls,
        D: float,
        epsilon: float,
        n: int,
        m: int,
        h: float | None = None,
        delta: float | None = None,
    ) -> "Mean1dParams":
        if D <= 0:
            raise ValueError(f"support radius D must be positive, got {D}")
        if epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        if h is None:
            h = 4.0 * D / math.sqrt(m)
        if delta is None:
            delta = D * math.sqrt(max(math.log(n), 0.0) / m)
        if h <= 0 or delta < 0:
            raise ValueError(f"need h > 0 and delta >= 0, got h={h}, delta={delta}")
        B = max(1, math.ceil(2.0 * D / h))
        return cls(
            D=float(D),
            epsilon=float(epsilon),
            h=float(h),
            delta=float(delta),
            B=B,
            stage1_scale=LaplaceScale(2.0 / epsilon),
            stage2_scale=LaplaceScale((3.0 * h + 2.0 * delta) / epsilon),
        )

    @property
    def truncation_width(self) -> float:
        return 3.0 * self.h + 2.0 * self.delta


@dataclass(frozen=True, slots=True)
class PrivatizedUserMessage:
    """One user's privatized report: a noisy one-hot vector (stage 1) or a
    noisy clipped mean (stage 2)."""

    stage: int
    payload: np.ndarray | float


@dataclass(frozen=True)
class IntervalEstimate:
    """Stage-1 output: selected bin (0-based) and the interval [L, R] = 3h."""

    k_hat: int
    L: float
    R: float


@dataclass(frozen=True)
class Mean1dDiagnostics:
    interval: IntervalEstimate
    params: Mean1dParams
    warnings: tuple[str, ...] = ()


def _check_precondition(n: int, m: int, epsilon: float, c1: float) -> tuple[str, ...]:
    lhs = n * min(epsilon**2, 1.0)
    rhs = c1 * math.log(max(m, 2))
    if lhs < rhs:
        msg = (
            f"n*(eps^2 ∧ 1) = {lhs:.3g} < {c1:g}*ln(m) = {rhs:.3g}; "
            "stage-1 localization may fail"
        )
        warnings.warn(msg, PreconditionWarning, stacklevel=3)
        return (msg,)
    return ()


def _bin_index(y: np.ndarray, params: Mean1dParams) -> np.ndarray:
    k = np.floor((y + params.D) / params.h).astype(np.int64)
    return np.clip(k, 0, params.B - 1)


def privatize_stage1(
    user_means: np.ndarray, params: Mean1dParams, stream: RngStream
) -> list[PrivatizedUserMessage]:
    """Encode each user mean as a noisy one-hot histogram vote."""
    z = _stage1_array(np.asarray(user_means, dtype=np.float64), params, stream)
    return [PrivatizedUserMessage(stage=_STAGE1, payload=row) for row in z]


def _stage1_array(
    user_means: np.ndarray, params: Mean1dParams, stream: RngStream
) -> np.ndarray:
    n1 = user_means.shape[0]
    z = np.zeros((n1, params.B))
    z[np.arange(n1), _bin_index(user_means, params)] = 1.0
    z += _laplace(stream.generator(), params.stage1_scale.scale, (n1, params.B))
    return z


def stage1_select(
    messages: Sequence[PrivatizedUserMessage], params: Mean1dParams
) -> IntervalEstimate:
    """Pick the bin with the largest vote total; ties break to the smallest index.

    The interval is [L, R] with L = -D + (k-1)*h and R = -D + (k+2)*h for the
    0-based winner k, so R - L = 3h. At the boundary bins the interval may
    extend beyond [-D, D]; it is not clamped, the truncation range only has
    to cover the data.
    """
    if not messages:
        raise ValueError("stage1_select needs at least one message")
    votes = np.stack([np.asarray(msg.payload, dtype=np.float64) for msg in messages])
    if votes.ndim != 2 or votes.shape[1] != params.B:
        raise ValueError(f"stage-1 payloads must have length B={params.B}")
    k_hat = int(np.argmax(votes.sum(axis=0)))
    left = -params.D + (k_hat - 1) * params.h
    return IntervalEstimate(k_hat=k_hat, L=left, R=left + 3.0 * params.h)


def privatize_stage2(
    user_means: np.ndarray,
    interval: IntervalEstimate,
    params: Mean1dParams,
    stream: RngStream,
) -> list[PrivatizedUserMessage]:
    """Clip each user mean into [L-delta, R+delta] and add Laplace noise."""
    z = _stage2_array(np.asarray(user_means, dtype=np.float64), interval, params, stream)
    return [PrivatizedUserMessage(stage=_STAGE2, payload=float(v)) for v in z]


def _stage2_array(
    user_means: np.ndarray,
    interval: IntervalEstimate,
    params: Mean1dParams,
    stream: RngStream,
) -> np.ndarray:
    lo, hi = interval.L - params.delta, interval.R + params.delta
    z = np.clip(user_means, lo, hi)
    return z + _laplace(stream.generator(), params.stage2_scale.scale, z.shape[0])


def aggregate_stage2(messages: Sequence[PrivatizedUserMessage]) -> float:
    """Average the stage-2 reports."""
    if not messages:
        raise ValueError("aggregate_stage2 needs at least one message")
    return float(np.mean([msg.payload for msg in messages]))


def two_stage_from_means(
    user_means: np.ndarray,
    params: Mean1dParams,
    stream: RngStream,
    warn: tuple[str, ...] = (),
) -> tuple[float, Mean1dDiagnostics]:
    """Run the full two-stage pipeline on precomputed user means.

    This is the shared core: multi-dimensional estimation and the grid
    learners feed it per-component user means. The first ceil(n/2) users
    vote, the rest report. Vectorized internally; the message layer in
    ``privatize_stage1``/``privatize_stage2`` produces identical values
    from the same stream.
    """
    user_means = np.asarray(user_means, dtype=np.float64)
    n = user_means.shape[0]
    if n < 4:
        raise ValueError(f"two-stage estimation needs n >= 4 users, got {n}")
    n1 = (n + 1) // 2
    z1 = _stage1_array(user_means[:n1], params, stream.child(_STAGE1))
    interval = stage1_select(
        [PrivatizedUserMessage(_STAGE1, row) for row in z1], params
    )
    z2 = _stage2_array(user_means[n1:], interval, params, stream.child(_STAGE2))
    mu_hat = float(z2.mean())
    return mu_hat, Mean1dDiagnostics(interval=interval, params=params, warnings=warn)


def mean1d_estimate(
    data: UserDatasetScalar | np.ndarray,
    params: Mean1dParams,
    stream: RngStream,
    c1: float = C1_DEFAULT,
) -> tuple[float, Mean1dDiagnostics]:
    """Estimate the mean of bounded scalar data under user-level epsilon-LDP.

    Args:
        data: n x m user dataset with all samples in [-D, D].
        params: geometry/noise parameters (see ``Mean1dParams.make``).
        stream: randomness source for this run.
        c1: precondition constant; n*(eps^2 ∧ 1) < c1*ln(m) raises a
            ``PreconditionWarning`` (recorded in diagnostics, not an error).

    Returns:
        (mu_hat, diagnostics) where diagnostics carries the stage-1 interval.
    """
    if isinstance(data, np.ndarray):
        data = UserDatasetScalar(data)
    if np.max(np.abs(data.values)) > params.D + 1e-12:
        raise ValueError(
            f"data exceeds the declared support radius D={params.D}; "
            "use mean1d_estimate_clipped for unbounded data"
        )
    if data.n < 4:
        raise ValueError(f"mean1d_estimate needs n >= 4 users, got {data.n}")
    warn = _check_precondition(data.n, data.m, params.epsilon, c1)
    return two_stage_from_means(data.user_means(), params, stream, warn)


def heavy_tail_margin(
    m: int, n: int, epsilon: float, p: float, Mp: float, c: float = 2.0
) -> float:
    """Truncation margin for the clipped estimator:
    c*Mp^(1/p)*sqrt(ln m / m) ∨ (Mp^2*n*eps^2)^(1/(2p)) * m^-(1-1/p)."""
    gauss = c * Mp ** (1.0 / p) * math.sqrt(math.log(max(m, 2)) / m)
    poly = (Mp**2 * n * epsilon**2) ** (1.0 / (2.0 * p)) * m ** (-(1.0 - 1.0 / p))
    return max(gauss, poly)


def mean1d_estimate_clipped(
    data: UserDatasetScalar | np.ndarray,
    D: float | None,
    epsilon: float,
    p: float,
    Mp: float,
    stream: RngStream,
    c: float = 2.0,
    c1: float = C1_DEFAULT,
) -> tuple[float, Mean1dDiagnostics]:
    """Heavy-tailed variant: clip user means to [-D, D], then run two stages.

    Requires a p-th moment bound E|X|^p <= Mp with p >= 2. The margin delta
    is the larger of c*Mp^(1/p)*sqrt(ln m/m) and
    (Mp^2*n*eps^2)^(1/(2p)) * m^-(1-1/p); when D is None it defaults to
    delta*sqrt(m), which keeps the bin width h = 4D/sqrt(m) of the same
    order as delta while clipping far outside the mean.
    """
    if p < 2:
        raise ValueError(f"moment order p must be >= 2, got {p}")
    if Mp <= 0:
        raise ValueError(f"moment bound Mp must be positive, got {Mp}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if isinstance(data, np.ndarray):
        data = UserDatasetScalar(data)
    if data.n < 4:
        raise ValueError(f"mean1d_estimate_clipped needs n >= 4 users, got {data.n}")
    delta = heavy_tail_margin(data.m, data.n, epsilon, p, Mp, c)
    if D is None:
        D = delta * math.sqrt(data.m)
    if D <= 0:
        raise ValueError(f"clip radius D must be positive, got {D}")
    params = Mean1dParams.make(
        D=D, epsilon=epsilon, n=data.n, m=data.m, delta=delta
    )
    warn = _check_precondition(data.n, data.m, epsilon, c1)
    clipped = np.clip(data.user_means(), -D, D)
    return two_stage_from_means(clipped, params, stream, warn)
