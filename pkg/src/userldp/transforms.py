"""Hadamard matrices and Kashin tight-frame representations.

The Kashin machinery converts vectors with bounded Euclidean norm into
redundant 2d-coefficient expansions whose coefficients are uniformly small
(sup-norm about K/sqrt(d) per unit of Euclidean norm). Downstream privacy
mechanisms clip coefficients at the certified level, so privacy never
depends on the certification; the certificate only controls bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .streams import RngStream

__all__ = [
    "HadamardMatrix",
    "KashinFrame",
    "KashinCertificationError",
    "hadamard",
    "build_kashin_frame",
    "kashin_represent",
    "kashin_reconstruct",
]

# Frame coefficients of the residual are clipped at
# CLIP_MULT * ||residual|| / sqrt(n_coeffs) each round. The residual norm
# contracts geometrically, so the levels do too; their sum controls the
# certified sup-norm bound.
_CLIP_MULT = 1.2

_RANDOM_PROBES = 10_000


class KashinCertificationError(RuntimeError):
    """Raised when a frame fails to certify its coefficient bound."""


@dataclass(frozen=True)
class HadamardMatrix:
    """Sylvester-construction Hadamard matrix of a power-of-two order."""

    order: int
    entries: np.ndarray  # (order, order) int64 in {-1, +1}

    def row(self, k: int) -> np.ndarray:
        return self.entries[k]


def hadamard(order: int) -> HadamardMatrix:
    """Build the Sylvester Hadamard matrix of the given power-of-two order.

    H @ H.T == order * I exactly in integer arithmetic; row 0 and column 0
    are all +1.
    """
    if order < 1 or order & (order - 1) != 0:
        raise ValueError(f"Hadamard order must be a power of two, got {order}")
    h = np.ones((1, 1), dtype=np.int64)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return HadamardMatrix(order=order, entries=h)


@dataclass(frozen=True)
class KashinFrame:
    """Tight frame with a certified sup-norm bound on representations.

    ``u`` has orthonormal columns (u.T @ u == I_d); its rows are the frame
    vectors. ``n_coeffs`` is 2*d for power-of-two d, otherwise twice the
    next power of two: the frame is built in the padded dimension and only
    the first d columns are exposed, which makes the zero-padding
    transparent to represent/reconstruct.
    """

    d: int
    u: np.ndarray  # (n_coeffs, d), orthonormal columns
    k_cert: float
    iters: int
    tol: float
    clip_mult: float = _CLIP_MULT

    @property
    def n_coeffs(self) -> int:
        return self.u.shape[0]

    def coeff_bound(self, radius: float) -> float:
        """Certified sup-norm of representations of vectors with l2 norm <= radius."""
        return self.k_cert * radius / np.sqrt(self.d)


def build_kashin_frame(
    d: int,
    stream: RngStream,
    iters: int = 60,
    tol: float = 1e-9,
    k_max: float = 6.0,
) -> KashinFrame:
    """Construct and certify a redundancy-two Kashin frame for dimension d.

    The frame stacks two independently rotated orthonormal bases (one mixed
    through a sign-randomized normalized Hadamard), scaled by 1/sqrt(2); it
    equals the first d columns of a randomized orthogonal 2d x 2d matrix.
    Non-power-of-two d is embedded in the next power of two.

    Certification runs the representation over a fixed probe set: every
    frame-row direction, every canonical direction, and 10^4 seeded random
    unit vectors. ``k_cert`` is sqrt(d) times the largest sup-norm seen on
    a unit-norm probe.

    Raises:
        KashinCertificationError: if the certified constant exceeds k_max
            or any probe fails to reconstruct within tol.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    d_pad = 1 << (d - 1).bit_length()
    rng = stream.child(0).generator()

    r1 = _haar_orthogonal(rng, d_pad)
    r2 = _haar_orthogonal(rng, d_pad)
    h = hadamard(d_pad).entries.astype(np.float64) / np.sqrt(d_pad)
    signs = np.where(rng.random(d_pad) < 0.5, -1.0, 1.0)
    u = np.vstack([r1, (h * signs) @ r2])[:, :d] / np.sqrt(2.0)

    frame = KashinFrame(d=d, u=u, k_cert=np.inf, iters=iters, tol=tol)
    k_cert = _certify(frame, stream.child(1))
    if k_cert > k_max:
        raise KashinCertificationError(
            f"certified coefficient bound {k_cert:.3f} exceeds k_max={k_max} "
            f"at d={d} (iters={iters}, tol={tol})"
        )
    return KashinFrame(d=d, u=u, k_cert=k_cert, iters=iters, tol=tol)


def kashin_represent(frame: KashinFrame, x: np.ndarray) -> np.ndarray:
    """Compute Kashin coefficients of ``x`` (a d-vector or a batch (..., d)).

    Iterative truncation: take frame coefficients of the residual, clip them
    at a level proportional to the residual norm (geometrically decreasing
    across rounds), accumulate, repeat. Levels are scale-relative, so the
    map is positively homogeneous: represent(c*x) == c*represent(x), c > 0.

    Returns coefficients ``a`` with sup-norm <= k_cert*||x||/sqrt(d) and
    reconstruction error ||u.T @ a - x|| <= tol*||x||.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != frame.d:
        raise ValueError(f"expected vectors of dimension {frame.d}, got {x.shape}")
    squeeze = x.ndim == 1
    a = _represent_batch(frame, np.atleast_2d(x).reshape(-1, frame.d))
    return a[0] if squeeze else a.reshape(x.shape[:-1] + (frame.n_coeffs,))


def kashin_reconstruct(frame: KashinFrame, a: np.ndarray) -> np.ndarray:
    """Synthesize a vector from coefficients: u.T @ a (linear, exact)."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != frame.n_coeffs:
        raise ValueError(
            f"expected coefficient vectors of length {frame.n_coeffs}, got {a.shape}"
        )
    return a @ frame.u


def _haar_orthogonal(rng: np.random.Generator, k: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    return q * np.sign(np.diag(r))


def _represent_batch(frame: KashinFrame, rows: np.ndarray) -> np.ndarray:
    norms_sq = np.einsum("ij,ij->i", rows, rows)
    scale_sq = np.maximum(norms_sq, np.finfo(np.float64).tiny)
    a = np.zeros((rows.shape[0], frame.n_coeffs))
    residual = rows.copy()
    b = np.empty_like(a)
    back = np.empty_like(rows)
    inv_sqrt = frame.clip_mult / np.sqrt(frame.n_coeffs)
    stop_sq = (frame.tol * 0.5) ** 2
    for _ in range(frame.iters):
        res_sq = np.einsum("ij,ij->i", residual, residual)
        if np.max(res_sq / scale_sq) <= stop_sq:
            break
        level = (inv_sqrt * np.sqrt(res_sq))[:, None]
        np.matmul(residual, frame.u.T, out=b)
        np.minimum(b, level, out=b)  # two ufuncs beat np.clip with array bounds
        np.maximum(b, -level, out=b)
        a += b
        residual -= np.matmul(b, frame.u, out=back)
    return a


def _certify(frame: KashinFrame, stream: RngStream) -> float:
    d = frame.d
    row_norms = np.linalg.norm(frame.u, axis=1, keepdims=True)
    live = row_norms[:, 0] > 1e-9  # padded frames can have rows with no exposed mass
    probes = [np.eye(d), frame.u[live] / row_norms[live]]
    rng = stream.generator()
    rand = rng.standard_normal((_RANDOM_PROBES, d))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    probes.append(rand)
    worst = 0.0
    for block in probes:
        a = _represent_batch(frame, block)
        err = np.linalg.norm(a @ frame.u - block, axis=1)
        if np.max(err) > frame.tol:
            raise KashinCertificationError(
                f"reconstruction error {np.max(err):.2e} exceeds tol={frame.tol} at d={d}"
            )
        worst = max(worst, float(np.max(np.abs(a))))
    return float(np.sqrt(d) * worst)
