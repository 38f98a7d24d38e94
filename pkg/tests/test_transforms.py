import numpy as np
import pytest

from userldp.streams import derive_stream
from userldp.transforms import (
    KashinCertificationError,
    build_kashin_frame,
    hadamard,
    kashin_reconstruct,
    kashin_represent,
)


def test_hadamard_base_cases():
    assert hadamard(1).entries.tolist() == [[1]]
    assert hadamard(2).entries.tolist() == [[1, 1], [1, -1]]


def test_hadamard_orthogonality_order_8():
    h = hadamard(8).entries
    gram = h @ h.T
    assert np.array_equal(gram, 8 * np.eye(8, dtype=np.int64))


@pytest.mark.parametrize("order", [16, 64, 256, 1024])
def test_hadamard_orthogonality_large(order):
    h = hadamard(order).entries
    assert np.array_equal(h @ h.T, order * np.eye(order, dtype=np.int64))
    assert np.all(h[0] == 1) and np.all(h[:, 0] == 1)


def test_hadamard_rejects_non_power_of_two():
    for bad in (0, 3, 6, -4):
        with pytest.raises(ValueError):
            hadamard(bad)


@pytest.fixture(scope="module")
def frame8():
    return build_kashin_frame(8, derive_stream(101, [8]))


def test_frame_columns_orthonormal(frame8):
    gram = frame8.u.T @ frame8.u
    assert np.max(np.abs(gram - np.eye(8))) <= 1e-10


@pytest.mark.parametrize("d", [2, 4, 8, 16, 32, 64])
def test_frame_certificate_within_bound(d):
    frame = build_kashin_frame(d, derive_stream(101, [d]))
    assert frame.k_cert <= 6.0
    gram = frame.u.T @ frame.u
    assert np.max(np.abs(gram - np.eye(d))) <= 1e-10


def test_represent_round_trip(frame8):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((1000, 8))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    a = kashin_represent(frame8, x)
    err = np.linalg.norm(kashin_reconstruct(frame8, a) - x, axis=1)
    assert np.max(err) <= 1e-9
    # certified sup-norm bound holds on fresh vectors
    assert np.max(np.abs(a)) <= frame8.k_cert / np.sqrt(8) + 1e-12


def test_represent_zero_and_homogeneity(frame8):
    assert np.all(kashin_represent(frame8, np.zeros(8)) == 0.0)
    x = np.array([0.3, -0.1, 0.7, 0.2, -0.5, 0.0, 0.1, -0.2])
    a = kashin_represent(frame8, x)
    assert np.max(np.abs(kashin_represent(frame8, 2.0 * x) - 2.0 * a)) <= 1e-9


def test_reconstruct_is_linear(frame8):
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2, 16))
    lhs = kashin_reconstruct(frame8, a + b)
    rhs = kashin_reconstruct(frame8, a) + kashin_reconstruct(frame8, b)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12
    assert np.all(kashin_reconstruct(frame8, np.zeros(16)) == 0.0)


def test_d1_frame():
    frame = build_kashin_frame(1, derive_stream(101, [1]))
    assert frame.u.shape == (2, 1)
    assert abs(np.linalg.norm(frame.u[:, 0]) - 1.0) <= 1e-12
    a = kashin_represent(frame, np.array([1.0]))
    assert np.max(np.abs(a)) <= frame.k_cert + 1e-12


def test_non_power_of_two_dimension_padded():
    frame = build_kashin_frame(3, derive_stream(101, [3]))
    assert frame.n_coeffs == 8  # padded to the next power of two
    x = np.array([0.3, -0.5, 0.1])
    a = kashin_represent(frame, x)
    assert np.linalg.norm(kashin_reconstruct(frame, a) - x) <= 1e-9


def test_dimension_mismatch_errors(frame8):
    with pytest.raises(ValueError):
        kashin_represent(frame8, np.zeros(5))
    with pytest.raises(ValueError):
        kashin_reconstruct(frame8, np.zeros(10))
    with pytest.raises(ValueError):
        build_kashin_frame(0, derive_stream(1, [0]))


def test_unachievable_certificate_raises():
    with pytest.raises(KashinCertificationError):
        build_kashin_frame(8, derive_stream(101, [8]), k_max=0.5)
