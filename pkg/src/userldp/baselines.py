"""Item-level baselines and their user-level conversions.

Two standard conversions serve as comparison arms in every experiment:
running an item-level mechanism at budget eps/m on all n*m samples (group
privacy), or running it at budget eps on one uniformly chosen sample per
user. Both are far from optimal; they exist to reproduce the gaps.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .mean1d import UserDatasetScalar
from .streams import RngStream, _laplace

__all__ = ["BaselineKind", "item_level_mean", "baseline_mean", "group_privacy_scale"]


class BaselineKind(str, Enum):
    GROUP_PRIVACY = "group_privacy"
    SAMPLE_ONE = "sample_one"


def group_privacy_scale(D: float, m: int, epsilon: float) -> float:
    """Noise scale of the group-privacy conversion: 2*D*m/eps per item."""
    return 2.0 * D * m / epsilon


def item_level_mean(
    values: np.ndarray, D: float, epsilon: float, stream: RngStream
) -> float:
    """Standard clip-then-Laplace item mechanism, averaged.

    Each value is clipped to [-D, D] and perturbed with Lap(2D/eps)
    (range sensitivity 2D), giving item-level epsilon-LDP.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if D <= 0:
        raise ValueError(f"clip radius D must be positive, got {D}")
    v = np.clip(np.asarray(values, dtype=np.float64).ravel(), -D, D)
    noisy = v + _laplace(stream.generator(), 2.0 * D / epsilon, v.shape[0])
    return float(noisy.mean())


def _sample_one_indices(n: int, m: int, stream: RngStream) -> np.ndarray:
    """Per-user sample choice for the sample-one conversion (seeded)."""
    return stream.child(0).generator().integers(0, m, size=n)


def baseline_mean(
    data: UserDatasetScalar | np.ndarray,
    D: float,
    epsilon: float,
    kind: BaselineKind | str,
    stream: RngStream,
) -> float:
    """User-level epsilon-LDP mean via an item-level conversion.

    group_privacy: item mechanism at eps/m on every sample (noise scale
    2*D*m/eps). sample_one: item mechanism at eps on exactly one sample
    per user; the untouched samples are never read.
    """
    if isinstance(data, np.ndarray):
        data = UserDatasetScalar(data)
    kind = BaselineKind(kind)
    if kind is BaselineKind.GROUP_PRIVACY:
        return item_level_mean(data.values, D, epsilon / data.m, stream.child(1))
    idx = _sample_one_indices(data.n, data.m, stream)
    chosen = data.values[np.arange(data.n), idx]
    return item_level_mean(chosen, D, epsilon, stream.child(1))
