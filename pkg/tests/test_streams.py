import numpy as np
import pytest

from userldp.streams import LaplaceScale, RngStream, derive_stream, sample_laplace


def test_same_seed_and_path_reproduces_draws():
    a = derive_stream(42, [0, 0])
    b = derive_stream(42, [0, 0])
    assert np.array_equal(a.generator().random(10), b.generator().random(10))


def test_distinct_paths_are_uncorrelated():
    a = derive_stream(42, [0, 0]).generator().random(10**5)
    b = derive_stream(42, [0, 1]).generator().random(10**5)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.02


def test_empty_path_is_valid():
    s = derive_stream(42, [])
    assert s.generator().random() >= 0.0


def test_child_extends_path():
    s = derive_stream(7, [1]).child(2, 3)
    assert s.path == (1, 2, 3)
    assert s.root_seed == 7


def test_generator_is_stateless_descriptor():
    s = derive_stream(11, [4])
    first = s.generator().random(5)
    again = s.generator().random(5)
    assert np.array_equal(first, again)


def test_bad_path_label_rejected():
    with pytest.raises(ValueError):
        derive_stream(1, [-3])


def test_laplace_moments():
    draws = sample_laplace(derive_stream(1, [0]), LaplaceScale(1.0), 10**6)
    assert abs(draws.mean()) < 0.01
    assert 1.98 <= draws.var() <= 2.02


def test_laplace_tail_matches_cdf():
    lam = 2.0
    draws = sample_laplace(derive_stream(2, [0]), lam, 10**6)
    for t in (1.0, 2.0, 4.0):
        observed = np.mean(np.abs(draws) > t)
        assert abs(observed - np.exp(-t / lam)) < 0.01


def test_laplace_empty_and_errors():
    assert sample_laplace(derive_stream(3, [0]), 0.5, 0).shape == (0,)
    with pytest.raises(ValueError):
        sample_laplace(derive_stream(3, [0]), -1.0, 10)
    with pytest.raises(ValueError):
        sample_laplace(derive_stream(3, [0]), 1.0, -1)
    with pytest.raises(ValueError):
        LaplaceScale(0.0)


def test_independence_across_many_user_paths():
    # covariance test on disjoint-path streams: |r| < 3/sqrt(N)
    n = 20_000
    base = derive_stream(5, [9])
    a = np.concatenate([base.child(i).generator().random(2) for i in range(n // 2)])
    b = np.concatenate(
        [base.child(i + n).generator().random(2) for i in range(n // 2)]
    )
    assert abs(np.corrcoef(a, b)[0, 1]) < 3.0 / np.sqrt(n)
