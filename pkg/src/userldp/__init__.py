"""User-level locally differentially private estimation library."""

from .streams import LaplaceScale, RngStream, derive_stream, sample_laplace
from .transforms import (
    HadamardMatrix,
    KashinCertificationError,
    KashinFrame,
    build_kashin_frame,
    hadamard,
    kashin_reconstruct,
    kashin_represent,
)

__version__ = "0.1.0"
