"""Synthetic data generators with analytically known targets.

Every generator returns the dataset together with the ground truth needed
to score it (true mean, minimizer, regression function, Bayes risk), so
trial records can carry exact error metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from ..mean1d import UserDatasetScalar
from ..mean_multi import UserDatasetVector
from ..nonparam import LabeledUserDataset
from ..streams import RngStream

__all__ = ["GeneratedData", "generate", "DISTRIBUTIONS"]


@dataclass(frozen=True)
class GeneratedData:
    dataset: UserDatasetScalar | UserDatasetVector | LabeledUserDataset
    truth: dict[str, Any] = field(default_factory=dict)

    @property
    def mean(self) -> Any:
        return self.truth.get("mean")


def _gen_constant(rng, n, m, d, params):
    value = params.get("value", 0.3)
    if d == 1:
        data = UserDatasetScalar(np.full((n, m), float(value)))
        return GeneratedData(data, {"mean": float(value)})
    vec = np.broadcast_to(np.asarray(value, dtype=np.float64), (d,))
    vals = np.broadcast_to(vec, (n, m, d)).copy()
    radius = float(np.max(np.abs(vec)))
    return GeneratedData(
        UserDatasetVector(vals, "linf", radius), {"mean": vec.copy()}
    )


def _gen_uniform(rng, n, m, d, params):
    low, high = params.get("low", -1.0), params.get("high", 1.0)
    mean = 0.5 * (low + high)
    if d == 1:
        data = UserDatasetScalar(rng.uniform(low, high, (n, m)))
        return GeneratedData(data, {"mean": mean, "variance": (high - low) ** 2 / 12})
    vals = rng.uniform(low, high, (n, m, d))
    radius = max(abs(low), abs(high))
    return GeneratedData(
        UserDatasetVector(vals, "linf", radius),
        {"mean": np.full(d, mean), "variance": (high - low) ** 2 / 12},
    )


def _gen_gaussian(rng, n, m, d, params):
    loc, scale = params.get("loc", 0.0), params.get("scale", 1.0)
    if d == 1:
        data = UserDatasetScalar(rng.normal(loc, scale, (n, m)))
        return GeneratedData(data, {"mean": loc, "heavy_tail": False})
    vals = rng.normal(loc, scale, (n, m, d))
    return GeneratedData(
        UserDatasetVector(vals, "linf", None),
        {"mean": np.full(d, loc), "heavy_tail": False},
    )


def _gen_laplace(rng, n, m, d, params):
    loc, scale = params.get("loc", 0.0), params.get("scale", 1.0)
    vals = rng.laplace(loc, scale, (n, m) if d == 1 else (n, m, d))
    truth = {"mean": loc if d == 1 else np.full(d, loc), "heavy_tail": False}
    if d == 1:
        return GeneratedData(UserDatasetScalar(vals), truth)
    return GeneratedData(UserDatasetVector(vals, "linf", None), truth)


def _gen_student_t(rng, n, m, d, params):
    df = params.get("df", 3.0)
    shift = params.get("shift", 0.0)
    vals = shift + rng.standard_t(df, (n, m) if d == 1 else (n, m, d))
    truth = {
        "mean": shift if d == 1 else np.full(d, shift),
        "heavy_tail": True,
        "tail_exponent": df,  # E|X|^p finite only for p < df
        "kurtosis_finite": df > 4,
    }
    if d == 1:
        return GeneratedData(UserDatasetScalar(vals), truth)
    return GeneratedData(UserDatasetVector(vals, "linf", None), truth)


def _gen_sphere(rng, n, m, d, params):
    """Points uniform on a sphere of the given radius around a center;
    Euclidean norm is bounded by ||center|| + radius."""
    if d < 1:
        raise ValueError("sphere data needs d >= 1")
    center = np.asarray(params.get("center", np.zeros(d)), dtype=np.float64)
    center = np.broadcast_to(center, (d,))
    radius = params.get("radius", 0.5)
    g = rng.standard_normal((n, m, d))
    g /= np.linalg.norm(g, axis=2, keepdims=True)
    vals = center + radius * g
    bound = float(np.linalg.norm(center) + radius)
    return GeneratedData(
        UserDatasetVector(vals, "l2", bound), {"mean": center.copy()}
    )


def _gen_categorical(rng, n, m, d, params):
    probs = np.asarray(params.get("probs", np.full(d, 1.0 / d)), dtype=np.float64)
    if probs.shape != (d,) or abs(probs.sum() - 1.0) > 1e-9 or np.min(probs) < 0:
        raise ValueError("probs must be a length-d probability vector")
    cats = rng.choice(d, size=(n, m), p=probs)
    vals = np.zeros((n, m, d))
    np.put_along_axis(vals, cats[..., None], 1.0, axis=2)
    return GeneratedData(
        UserDatasetVector(vals, "l1", 1.0), {"mean": probs.copy()}
    )


def _ramp_eta(slope: float) -> Callable[[np.ndarray], np.ndarray]:
    def eta(x: np.ndarray) -> np.ndarray:
        u = x[..., 0] if x.ndim > 1 else x
        return np.sign(u - 0.5) * np.minimum(1.0, slope * np.abs(u - 0.5))

    return eta


def _gen_classify_ramp(rng, n, m, d, params):
    """Binary labels from a ramp regression function on uniform features.

    eta(x) = sign(x1 - 1/2) * min(1, slope*|x1 - 1/2|): Hoelder-1 with
    constant ``slope`` and margin exponent gamma = 1. The Bayes risk
    E[(1 - |eta|)/2] has the closed form 1/2 - slope/8 for slope <= 2,
    otherwise (1 - 1/(2*slope) - ... ) evaluated below by quadrature-free
    piecewise integration.
    """
    slope = params.get("slope", 4.0)
    eta = _ramp_eta(slope)
    x = rng.random((n, m, d))
    e = eta(x)
    y = np.where(rng.random((n, m)) < (1.0 + e) / 2.0, 1.0, -1.0)
    half = 1.0 / slope  # |eta| reaches 1 at distance half from the boundary
    if half <= 0.5:
        mean_abs_eta = slope * half**2 + 1.0 - 2.0 * half  # = 1 - 1/slope
    else:
        mean_abs_eta = slope / 4.0
    return GeneratedData(
        LabeledUserDataset(x, y),
        {
            "eta": eta,
            "bayes_risk": 0.5 * (1.0 - mean_abs_eta),
            "beta": 1.0,
            "gamma": 1.0,
            "slope": slope,
        },
    )


def _gen_regress_sin(rng, n, m, d, params):
    """Y = amp*sin(2*pi*x1) + Uniform(-noise, noise); labels bounded by
    T = amp + noise."""
    amp = params.get("amp", 0.5)
    noise = params.get("noise", 0.4)

    def eta(x: np.ndarray) -> np.ndarray:
        u = x[..., 0] if x.ndim > 1 else x
        return amp * np.sin(2.0 * math.pi * u)

    x = rng.random((n, m, d))
    y = eta(x) + rng.uniform(-noise, noise, (n, m))
    return GeneratedData(
        LabeledUserDataset(x, y),
        {"eta": eta, "label_bound": amp + noise, "beta": 1.0},
    )


DISTRIBUTIONS: dict[str, Callable] = {
    "constant": _gen_constant,
    "uniform": _gen_uniform,
    "gaussian": _gen_gaussian,
    "laplace": _gen_laplace,
    "student_t": _gen_student_t,
    "sphere": _gen_sphere,
    "categorical": _gen_categorical,
    "classify_ramp": _gen_classify_ramp,
    "regress_sin": _gen_regress_sin,
}


def generate(
    name: str,
    params: dict | None,
    n: int,
    m: int,
    d: int,
    stream: RngStream,
) -> GeneratedData:
    """Draw a dataset from a named family.

    Args:
        name: one of ``DISTRIBUTIONS``.
        params: family parameters (see each generator).
        n, m, d: users, samples per user, dimension (1 for scalar tasks).
        stream: randomness; the dataset is a deterministic function of it.
    """
    try:
        gen = DISTRIBUTIONS[name]
    except KeyError:
        raise ValueError(
            f"unknown distribution {name!r}; known: {sorted(DISTRIBUTIONS)}"
        ) from None
    return gen(stream.generator(), n, m, d, params or {})
