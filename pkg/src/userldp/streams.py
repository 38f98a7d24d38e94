"""Deterministic randomness and calibrated Laplace noise.

Every mechanism in this package draws its randomness from an ``RngStream``,
a counter-based stream descriptor: a 64-bit root seed plus a path of integer
labels. The same (seed, path) pair always reproduces the same draws, and
distinct paths give statistically independent streams, so per-user
privatization can be fanned out across workers without changing results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RngStream", "LaplaceScale", "derive_stream", "sample_laplace"]

_MAX_LABEL = 2**32


@dataclass(frozen=True, slots=True)
class RngStream:
    """Immutable descriptor of a deterministic random stream.

    Drawing never mutates the descriptor; ``generator()`` builds a fresh
    counter-based generator positioned at the start of the stream, so a
    mechanism run twice with the same stream is bit-identical.
    """

    root_seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for label in self.path:
            if not 0 <= int(label) < _MAX_LABEL:
                raise ValueError(f"path labels must be uint32, got {label}")

    def child(self, *labels: int) -> "RngStream":
        """Derive an independent child stream by extending the path."""
        return RngStream(self.root_seed, self.path + tuple(int(x) for x in labels))

    def generator(self) -> np.random.Generator:
        """Fresh Philox generator for this (seed, path) pair."""
        ss = np.random.SeedSequence(entropy=self.root_seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, slots=True)
class LaplaceScale:
    """Scale parameter of a Laplace distribution, pdf e^{-|u|/scale}/(2*scale)."""

    scale: float

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError(f"Laplace scale must be positive, got {self.scale}")

    @property
    def variance(self) -> float:
        return 2.0 * self.scale**2


def derive_stream(root_seed: int, path: list[int] | tuple[int, ...] = ()) -> RngStream:
    """Build a stream from a root seed and a path of integer labels."""
    return RngStream(int(root_seed), tuple(int(x) for x in path))


def sample_laplace(
    stream: RngStream, scale: float | LaplaceScale, count: int
) -> np.ndarray:
    """Draw i.i.d. Laplace(scale) noise.

    Uses inverse-CDF sampling (random sign times scale * ln of a uniform)
    rather than a library sampler so that draws are exact and portable.

    Args:
        stream: source of randomness; consumed from its start.
        scale: Laplace scale parameter, must be positive.
        count: number of draws, >= 0.

    Returns:
        Array of ``count`` draws with mean 0 and variance 2*scale^2.
    """
    lam = scale.scale if isinstance(scale, LaplaceScale) else float(scale)
    if not lam > 0:
        raise ValueError(f"Laplace scale must be positive, got {lam}")
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    rng = stream.generator()
    return _laplace(rng, lam, count)


def _laplace(rng: np.random.Generator, lam: float, size) -> np.ndarray:
    # sign * lam * ln(u) with u in (0, 1]; magnitude is Exp(lam).
    u = rng.random(size)
    signs = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return signs * lam * np.log1p(-u)
