import numpy as np
import pytest
from scipy.stats import wasserstein_distance

from lls.exceptions import CoverageError, PreconditionError
from lls.ingest import Dataset, FrequencyTable
from lls.mixing import (
    MixingEstimate, empirical_mixing, histogram, mixing_moments, wasserstein1_1d,
)
from lls.patterns import Schema


def test_histogram_single_point():
    est = MixingEstimate([(1,)], [[0.5, 0.5]], [1.0])
    h = histogram(est, 0, bins=2, lo=0.0, hi=1.0)
    assert h.masses.tolist() == [0.0, 1.0]


def test_histogram_edge_conventions():
    vals = np.array([0.0, 0.25, 0.5, 1.0, -0.1, 1.2])
    h = histogram((vals, np.ones(6) / 6), 0, bins=4)
    assert h.masses.tolist() == pytest.approx([1 / 6, 1 / 6, 1 / 6, 1 / 6])
    assert h.below == pytest.approx(1 / 6) and h.above == pytest.approx(1 / 6)
    assert h.masses.sum() + h.out_of_range == pytest.approx(1.0)


def test_histogram_preconditions():
    with pytest.raises(PreconditionError):
        histogram(([0.1], [1.0]), bins=0)
    with pytest.raises(PreconditionError):
        histogram(([0.1], [1.0]), lo=1.0, hi=1.0)


def test_histogram_two_plateaus():
    from lls.simulator import UniformIntervals
    v, w = UniformIntervals([[0.0, 0.2], [0.5, 0.8]]).g1_distribution(5000)
    h = histogram((v, w), 0, bins=10)
    assert np.allclose(h.masses, [0.2, 0.2, 0, 0, 0, 0.2, 0.2, 0.2, 0, 0], atol=1e-3)


def test_mixing_moments():
    est = MixingEstimate([(1,), (2,)], [[0.1, 0.9], [0.4, 0.6]], [0.5, 0.5])
    assert mixing_moments(est, (0, 0)) == pytest.approx(1.0)
    assert mixing_moments(est, (1, 0)) == pytest.approx(0.25)
    one = MixingEstimate([(1,)], [[0.3, 0.7]], [1.0])
    assert mixing_moments(one, (2, 1)) == pytest.approx(0.3 ** 2 * 0.7)


def test_wasserstein_examples():
    assert wasserstein1_1d(([0.2, 0.3], [1, 1]), ([0.2, 0.3], [1, 1])) == 0.0
    assert wasserstein1_1d(([0.0], [1.0]), ([1.0], [1.0])) == pytest.approx(1.0)
    grid = (np.arange(100000) + 0.5) / 100000
    assert wasserstein1_1d((grid, np.ones_like(grid)), ([0.5], [1.0])) == pytest.approx(0.25, abs=1e-9)


def test_wasserstein_against_scipy(rng):
    for _ in range(20):
        a, b = rng.random(rng.integers(1, 30)), rng.normal(size=rng.integers(1, 30))
        wa, wb = rng.random(len(a)), rng.random(len(b))
        assert wasserstein1_1d((a, wa), (b, wb)) == pytest.approx(
            wasserstein_distance(a, b, wa, wb), abs=1e-12)


def test_empirical_mixing_weights_and_coverage():
    s = Schema((2, 2))
    ds = Dataset(s, [[1, 1], [1, 1], [2, 1], [2, 2]])
    table = FrequencyTable.from_dataset(ds)
    solved = {(1, 1): [0.2, 0.8], (2, 1): [0.5, 0.5], (2, 2): [0.9, 0.1]}
    est = empirical_mixing(solved, table, n_observed=4)
    assert est.weights.tolist() == [0.5, 0.25, 0.25]
    assert np.allclose(est.points.sum(axis=1), 1.0)
    with pytest.raises(CoverageError) as info:
        empirical_mixing({k: v for k, v in solved.items() if k != (2, 2)}, table, n_observed=4)
    assert info.value.uncovered == 1


def test_one_point_mixing_estimate():
    from lls.simulator import DiscreteMixing, ExactMoments, random_basis
    from lls.solver import average_full_pattern
    s = Schema.binary(4)
    B = random_basis(s, 2, 3)
    ex = ExactMoments(B, DiscreteMixing.from_g1([0.35]))
    pats, probs = ex.full_patterns()
    pts = {p: average_full_pattern(B, ex, p) for p in pats}
    est = empirical_mixing(pts, ex)
    assert est.weights.sum() == pytest.approx(1.0)
    assert np.allclose(est.points[:, 0], 0.35, atol=1e-10)


def test_csv_output_flags_out_of_simplex():
    est = MixingEstimate([(1, 2), (2, 1)], [[0.3, 0.7], [-0.2, 1.2]], [0.5, 0.5], np.array([1, 1]))
    lines = est.to_csv().splitlines()
    assert lines[0] == "point,count,weight,g1,g2,pattern,in_simplex"
    assert lines[1].endswith(",12,1") and lines[2].endswith(",21,0")
