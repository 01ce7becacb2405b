import warnings

import numpy as np
import pytest

from lls.exceptions import PreconditionError
from lls.moment_matrix import build_moment_matrix
from lls.patterns import Schema
from lls.simulator import DiscreteMixing, ExactMoments, random_basis
from lls.subspace import (
    IdentifiabilityWarning, Subspace, check_identifiability, fit_subspace, masked_als,
    normalize_basis, principal_angles,
)

# (levels, K, K_max, identifiable); K_max = (|L| - J)/2 - max L + 5/2 worked by hand
ID_TABLE = [
    ((2,) * 300, 2, 150.5, True),
    ((2,) * 3, 3, 2.0, False),
    ((2,) * 3, 2, 2.0, True),
    ((2,) * 5, 3, 3.0, True),
    ((2,) * 1000, 2, 500.5, True),
    ((3, 3, 3), 3, 2.5, False),
    ((2, 3, 4), 1, 1.5, True),
    ((5, 5), 2, 1.5, False),
    ((2,) * 10, 6, 5.5, False),
    ((4,) * 6, 7, 7.5, True),
]


@pytest.mark.parametrize("levels,K,kmax,ok", ID_TABLE)
def test_identifiability_table(levels, K, kmax, ok):
    v = check_identifiability(Schema(levels), K)
    assert v.K_max == kmax
    assert v.identifiable is ok
    assert str(K) in v.describe()


def test_principal_angles_rotation():
    n = 6
    A = np.eye(n)[:, :2]
    for theta in (0.0, 0.1, 0.7, np.pi / 2):
        B = np.column_stack([np.eye(n)[:, 0], np.cos(theta) * np.eye(n)[:, 1] + np.sin(theta) * np.eye(n)[:, 2]])
        ang = principal_angles(A, B)
        assert np.allclose(ang, [0.0, theta], atol=1e-12)


def test_subspace_validation():
    s = Schema((2, 2))
    with pytest.raises(PreconditionError):
        Subspace(s, np.array([[0.5, 0.5], [0.5, 0.5], [0.2, 0.2], [0.8, 0.8]]))
    with pytest.raises(PreconditionError):
        Subspace(s, np.array([[0.5], [0.6], [0.2], [0.8]]))


def test_beta_coordinates_roundtrip():
    s = Schema.binary(6)
    B = random_basis(s, 3, 2, min_separation=0.2)
    g = np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
    assert np.allclose(B.coordinates(B.beta(g)), g, atol=1e-12)


def test_masked_als_monotone(rng):
    U = rng.normal(size=(30, 2))
    V = rng.normal(size=(2, 25))
    X = U @ V + 1e-3 * rng.normal(size=(30, 25))
    mask = rng.random((30, 25)) > 0.3
    L, W, hist = masked_als(np.where(mask, X, np.nan), mask, 2, rng.normal(size=(30, 2)))
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))


def test_exact_fit_recovers_span_and_invariants(small_model):
    schema, basis, mixing, ex = small_model
    sub = fit_subspace(build_moment_matrix(ex, schema, 1), 2)
    assert principal_angles(sub, basis).max() < 1e-8
    assert np.max(np.abs(schema.block_sums(sub.basis) - 1)) < 1e-12
    assert sub.nonnegative and sub.basis.min() >= 0


def test_normalize_basis_invariant_to_spanning_set(small_model):
    schema, basis, mixing, ex = small_model
    M = build_moment_matrix(ex, schema, 1)
    R = np.array([[2.0, -1.0], [0.5, 3.0]])
    a = normalize_basis(basis.basis, M)
    b = normalize_basis(basis.basis @ R, M)
    assert np.allclose(a.basis, b.basis, atol=1e-9)


def test_large_J_vertices_match_truth():
    s = Schema.binary(200)
    truth = random_basis(s, 2, 4)
    ex = ExactMoments(truth, DiscreteMixing.from_g1([0.1, 0.4]))
    sub = fit_subspace(build_moment_matrix(ex, s, 1), 2)
    g = truth.coordinates(sub.basis.T)
    # vertices of the polytope segment lie beyond the support, near the true basis vectors
    assert np.allclose(np.sort(g[:, 0]), [0.0, 1.0], atol=0.05)


def test_fit_warns_when_not_identifiable():
    s = Schema.binary(3)
    ex = ExactMoments(random_basis(s, 3, 1, min_separation=0.1),
                      DiscreteMixing(np.eye(3)))
    with pytest.warns(IdentifiabilityWarning), warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        warnings.simplefilter("always", IdentifiabilityWarning)
        try:
            fit_subspace(build_moment_matrix(ex, s, 1), 3)
        except Exception:
            pass


def test_json_roundtrip(small_model):
    schema, basis, mixing, ex = small_model
    b2 = Subspace.from_json(basis.to_json())
    assert np.array_equal(b2.basis, basis.basis)
