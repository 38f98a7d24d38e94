"""Multi-dimensional mean estimation under user-level LDP.

The estimator adapts to the privacy level: under high privacy (eps < 1)
users split into d groups, one coordinate each; under medium privacy
(1 <= eps < d*ln n) each group handles floor(eps) coordinates at budget 1;
under low privacy every user reports every coordinate at budget eps/d.
Euclidean-ball data routes through a Kashin frame so each coefficient has
small range; one-hot (discrete) data routes through a normalized Hadamard
matrix. Heavy-tailed variants swap in the clipped one-dimensional core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mean1d import (
    Mean1dParams,
    _check_precondition,
    heavy_tail_margin,
    two_stage_from_means,
)
from .streams import RngStream
from .transforms import KashinFrame, hadamard, kashin_reconstruct, kashin_represent

__all__ = [
    "UserDatasetVector",
    "RegimeGroup",
    "RegimePlan",
    "InfeasiblePlanError",
    "DiscreteEstimate",
    "plan_regime",
    "mean_linf",
    "mean_l2",
    "mean_l1_discrete",
    "mean_heavy_multi",
    "project_simplex",
]

_MIN_GROUP = 4  # two-stage estimation needs at least 4 users per group


class InfeasiblePlanError(ValueError):
    """Too few users for the regime's grouping."""

    def __init__(self, regime: str, n: int, required_n: int):
        self.regime = regime
        self.required_n = required_n
        super().__init__(
            f"regime '{regime}' needs n >= {required_n} users "
            f"({_MIN_GROUP} per group), got n={n}"
        )


@dataclass(frozen=True)
class UserDatasetVector:
    """n users with m d-dimensional samples each, as an (n, m, d) tensor.

    ``radius`` bounds the declared support (max-coordinate, Euclidean, or
    1-norm depending on ``support``); pass ``radius=None`` for unbounded
    (heavy-tailed) data, which skips the bound check.
    """

    values: np.ndarray
    support: str = "linf"
    radius: float | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"values must be 3-D (n, m, d), got shape {v.shape}")
        if self.support not in ("linf", "l2", "l1"):
            raise ValueError(f"unknown support kind {self.support!r}")
        object.__setattr__(self, "values", v)
        if self.radius is not None:
            r = float(self.radius)
            if self.support == "linf":
                worst = np.max(np.abs(v))
            elif self.support == "l2":
                worst = np.max(np.linalg.norm(v, axis=2))
            else:
                worst = np.max(np.abs(v).sum(axis=2))
            if worst > r * (1 + 1e-9) + 1e-12:
                raise ValueError(
                    f"{self.support} norm {worst:.4g} exceeds declared radius {r}"
                )

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    def user_means(self) -> np.ndarray:
        return self.values.mean(axis=1)


@dataclass(frozen=True)
class RegimeGroup:
    users: np.ndarray  # indices into 0..n-1
    components: tuple[int, ...]
    budget: float  # per-component budget for this group's users


@dataclass(frozen=True)
class RegimePlan:
    regime: str  # high | medium | low
    groups: tuple[RegimeGroup, ...]
    n: int
    d: int
    epsilon: float

    def per_user_budget(self) -> np.ndarray:
        """Total budget spent by each user across all mechanisms it feeds."""
        spent = np.zeros(self.n)
        for g in self.groups:
            spent[g.users] += g.budget * len(g.components)
        return spent

    def validate(self) -> None:
        """Partition and budget-accounting checks (used by tests)."""
        seen_users = np.concatenate([g.users for g in self.groups])
        if len(np.unique(seen_users)) != self.n or len(seen_users) != self.n:
            raise AssertionError("groups must partition the users")
        comps = sorted(c for g in self.groups for c in g.components)
        if comps != list(range(self.d)):
            raise AssertionError("components must partition 0..d-1")
        if np.max(self.per_user_budget()) > self.epsilon * (1 + 1e-12):
            raise AssertionError("per-user budget exceeds epsilon")


def plan_regime(
    n: int, m: int, d: int, epsilon: float, stream: RngStream
) -> RegimePlan:
    """Choose the privacy regime and assign users to component groups.

    Thresholds: eps < 1 is high privacy (d groups, one component each,
    budget eps); 1 <= eps < d*ln n is medium (ceil(d/floor(eps)) groups,
    floor(eps) components each at budget 1); eps >= d*ln n is low (a
    single group of all users, every component at budget eps/d).
    Assignment is a seeded uniform shuffle with remainders spread
    round-robin, so group sizes differ by at most one.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if epsilon < 1.0:
        regime, budget = "high", epsilon
        comp_chunks = [(k,) for k in range(d)]
    elif epsilon < d * math.log(max(n, 2)):
        regime, budget = "medium", 1.0
        e = int(epsilon)
        comp_chunks = [
            tuple(range(k * e, min((k + 1) * e, d))) for k in range(math.ceil(d / e))
        ]
    else:
        regime, budget = "low", epsilon / d
        comp_chunks = [tuple(range(d))]

    n_groups = len(comp_chunks)
    if n < _MIN_GROUP * n_groups:
        raise InfeasiblePlanError(regime, n, _MIN_GROUP * n_groups)
    perm = stream.child(0).generator().permutation(n)
    user_sets = [perm[k::n_groups] for k in range(n_groups)]
    groups = tuple(
        RegimeGroup(users=np.sort(users), components=chunk, budget=budget)
        for users, chunk in zip(user_sets, comp_chunks)
    )
    return RegimePlan(regime=regime, groups=groups, n=n, d=d, epsilon=epsilon)


def _estimate_by_plan(
    user_means: np.ndarray,
    m: int,
    radius: float,
    plan: RegimePlan,
    stream: RngStream,
) -> np.ndarray:
    """Per-coordinate two-stage estimation following a regime plan.

    ``user_means`` is (n, dim); each group's coordinate pipelines use the
    group-local user count for the default bin geometry.
    """
    out = np.full(plan.d, np.nan)
    for gi, g in enumerate(plan.groups):
        means_g = user_means[g.users]
        params = Mean1dParams.make(
            D=radius, epsilon=g.budget, n=len(g.users), m=m
        )
        for c in g.components:
            mu, _ = two_stage_from_means(
                means_g[:, c], params, stream.child(gi, c)
            )
            out[c] = mu
    return out


def mean_linf(
    data: UserDatasetVector, epsilon: float, stream: RngStream
) -> np.ndarray:
    """Mean estimation for max-norm-bounded data under user-level eps-LDP."""
    if data.support != "linf" or data.radius is None:
        raise ValueError("mean_linf expects support='linf' with a declared radius")
    plan = plan_regime(data.n, data.m, data.d, epsilon, stream.child(0))
    _check_precondition(data.n, data.m, epsilon, c1=16.0 * data.d)
    return _estimate_by_plan(
        data.user_means(), data.m, data.radius, plan, stream.child(1)
    )


def _coefficient_user_means(
    values: np.ndarray, frame: KashinFrame, clip: float | None
) -> np.ndarray:
    """Per-user means of (optionally clipped) per-sample Kashin coefficients."""
    n, m, d = values.shape
    nc = frame.n_coeffs
    out = np.empty((n, nc))
    block = max(1, (1 << 22) // max(m * nc, 1))
    for start in range(0, n, block):
        stop = min(start + block, n)
        coeffs = kashin_represent(frame, values[start:stop].reshape(-1, d))
        if clip is not None:
            np.clip(coeffs, -clip, clip, out=coeffs)
        out[start:stop] = coeffs.reshape(stop - start, m, nc).mean(axis=1)
    return out


def mean_l2(
    data: UserDatasetVector,
    epsilon: float,
    frame: KashinFrame,
    stream: RngStream,
) -> np.ndarray:
    """Mean estimation for Euclidean-ball data via the Kashin frame.

    Each sample's coefficients are clipped at the certified level
    k_cert*D/sqrt(d) (privacy is independent of certification), user means
    of coefficients run through the max-norm pipeline in the coefficient
    dimension, and the estimate maps back through the frame synthesis.
    """
    if data.support != "l2" or data.radius is None:
        raise ValueError("mean_l2 expects support='l2' with a declared radius")
    if frame.d != data.d:
        raise ValueError(f"frame dimension {frame.d} != data dimension {data.d}")
    bound = frame.coeff_bound(data.radius)
    coeff_means = _coefficient_user_means(data.values, frame, clip=bound)
    plan = plan_regime(data.n, data.m, frame.n_coeffs, epsilon, stream.child(0))
    theta_hat = _estimate_by_plan(coeff_means, data.m, bound, plan, stream.child(1))
    return kashin_reconstruct(frame, theta_hat)


@dataclass(frozen=True)
class DiscreteEstimate:
    """Discrete-distribution estimate: simplex-projected probabilities plus
    the raw (pre-projection) estimates, including padding coordinates."""

    probs: np.ndarray  # length A, on the simplex
    raw: np.ndarray  # length A, unprojected
    raw_padded: np.ndarray  # length K = 2^ceil(log2 A)


def mean_l1_discrete(
    data: UserDatasetVector, epsilon: float, stream: RngStream
) -> DiscreteEstimate:
    """Distribution estimation for one-hot samples over an alphabet of size A.

    Samples transform through U = H_K/sqrt(K) (alphabet padded to the next
    power of two), giving coordinates with range 1/sqrt(K); the max-norm
    pipeline estimates the transformed mean, which inverts exactly through
    the same matrix. The final estimate is projected onto the simplex.
    """
    if data.support != "l1":
        raise ValueError("mean_l1_discrete expects support='l1' one-hot data")
    values = data.values
    is01 = np.all((values == 0.0) | (values == 1.0))
    if not is01 or not np.allclose(values.sum(axis=2), 1.0):
        raise ValueError("samples must be one-hot rows")
    a_size = data.d
    big_k = 1 << (a_size - 1).bit_length()
    h = hadamard(big_k).entries.astype(np.float64)
    u = h / math.sqrt(big_k)

    # per-user category frequencies, zero-padded to K
    freqs = np.zeros((data.n, big_k))
    freqs[:, :a_size] = values.mean(axis=1)
    transformed_means = freqs @ u  # == user means of per-sample columns of u

    plan = plan_regime(data.n, data.m, big_k, epsilon, stream.child(0))
    theta_hat = _estimate_by_plan(
        transformed_means, data.m, 1.0 / math.sqrt(big_k), plan, stream.child(1)
    )
    raw_padded = u @ theta_hat  # u is symmetric orthogonal, its own inverse
    raw = raw_padded[:a_size]
    return DiscreteEstimate(
        probs=project_simplex(raw), raw=raw, raw_padded=raw_padded
    )


def _clipped_two_stage_from_means(
    user_means: np.ndarray,
    m: int,
    budget: float,
    p: float,
    Mp: float,
    stream: RngStream,
    c: float = 2.0,
) -> float:
    """Heavy-tailed core on precomputed user means (see mean1d_estimate_clipped)."""
    n = user_means.shape[0]
    delta = heavy_tail_margin(m, n, budget, p, Mp, c)
    radius = delta * math.sqrt(m)
    params = Mean1dParams.make(D=radius, epsilon=budget, n=n, m=m, delta=delta)
    mu, _ = two_stage_from_means(np.clip(user_means, -radius, radius), params, stream)
    return mu


def mean_heavy_multi(
    data: UserDatasetVector,
    epsilon: float,
    p: float,
    Mp: float,
    mode: str,
    stream: RngStream,
    frame: KashinFrame | None = None,
) -> np.ndarray:
    """Mean estimation for unbounded multi-dimensional data.

    ``mode='coordinate'`` assumes E|X_k|^p <= Mp per coordinate and runs the
    clipped one-dimensional estimator per regime group. ``mode='l2norm'``
    assumes E||X||_2^p <= Mp, represents samples in a Kashin frame (each
    coefficient then has p-th moment at most k_cert^p * Mp * d^(-p/2)), and
    runs the coordinate path in coefficient space before mapping back.
    """
    if p < 2:
        raise ValueError(f"moment order p must be >= 2, got {p}")
    if mode not in ("coordinate", "l2norm"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "l2norm":
        if frame is None:
            raise ValueError("l2norm mode needs a Kashin frame")
        if frame.d != data.d:
            raise ValueError(f"frame dimension {frame.d} != data dimension {data.d}")
        user_means = _coefficient_user_means(data.values, frame, clip=None)
        mp_coord = frame.k_cert**p * Mp * data.d ** (-p / 2.0)
        dim = frame.n_coeffs
    else:
        user_means = data.user_means()
        mp_coord = Mp
        dim = data.d

    plan = plan_regime(data.n, data.m, dim, epsilon, stream.child(0))
    theta = np.full(dim, np.nan)
    for gi, g in enumerate(plan.groups):
        means_g = user_means[g.users]
        for comp in g.components:
            theta[comp] = _clipped_two_stage_from_means(
                means_g[:, comp], data.m, g.budget, p, mp_coord,
                stream.child(1).child(gi, comp),
            )
    if mode == "l2norm":
        assert frame is not None
        return kashin_reconstruct(frame, theta)
    return theta


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=np.float64)
    srt = np.sort(v)[::-1]
    cumsum = np.cumsum(srt) - 1.0
    rho = np.nonzero(srt - cumsum / np.arange(1, len(v) + 1) > 0)[0][-1]
    theta = cumsum[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)
