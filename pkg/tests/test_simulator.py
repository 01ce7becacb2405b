import numpy as np
import pytest

from lls.exceptions import PreconditionError, UnobservedConditionError
from lls.ingest import FrequencyTable
from lls.patterns import Schema, enumerate_patterns
from lls.simulator import (
    DiscreteMixing, ExactMoments, GeneratorConfig, UniformIntervals, exact_conditional_moments,
    random_basis, sample,
)
from lls.subspace import Subspace


def test_random_basis_deterministic_and_valid():
    s = Schema.binary(300)
    a = random_basis(s, 2, 11)
    b = random_basis(s, 2, 11)
    assert np.array_equal(a.basis, b.basis)
    assert np.allclose(s.block_sums(a.basis), 1, atol=1e-12)
    assert a.basis.min() >= 0 and a.basis.max() <= 1
    assert np.mean(np.abs(a.basis[:, 0] - a.basis[:, 1])) >= 0.3
    one = random_basis(Schema((3, 4)), 1, 0)
    assert one.K == 1


def test_random_basis_unattainable_separation():
    with pytest.raises(PreconditionError):
        random_basis(Schema.binary(3), 2, 0, min_separation=0.99, max_tries=20)


def test_exact_moments_two_masses_by_hand():
    s = Schema((2, 2))
    B = Subspace(s, np.array([[0.9, 0.2], [0.1, 0.8], [0.7, 0.4], [0.3, 0.6]]))
    ex = ExactMoments(B, DiscreteMixing.from_g1([1.0, 0.0]))
    # p(1,2) = 0.5*0.9*0.3 + 0.5*0.2*0.6 = 0.135 + 0.06
    assert ex[(1, 2)] == pytest.approx(0.195, abs=1e-15)
    assert ex[(0, 1)] == pytest.approx(0.55, abs=1e-15)
    assert ex[(0, 0)] == pytest.approx(1.0, abs=1e-15)
    assert exact_conditional_moments(B, DiscreteMixing.from_g1([1.0, 0.0]), (1, 2), (1, 0)) == \
        pytest.approx(0.135 / 0.195, abs=1e-14)


def test_exact_full_patterns_sum_to_one_and_marginalize(small_model):
    schema, basis, mixing, ex = small_model
    pats, probs = ex.full_patterns()
    assert probs.sum() == pytest.approx(1.0, abs=1e-14)
    for p in enumerate_patterns(schema, 3):
        for j in range(5):
            if p[j] == 0:
                parts = sum(ex[p[:j] + (l,) + p[j + 1:]] for l in (1, 2))
                assert abs(parts - ex[p]) < 1e-14


def test_conditional_moment_cases(small_model):
    schema, basis, mixing, ex = small_model
    assert ex.conditional_moment((1, 2, 0, 0, 1), (0, 0)) == 1.0
    assert ex.conditional_moment((0,) * 5, (1, 0)) == pytest.approx(0.4 * 0.2 + 0.6 * 0.7)
    one = ExactMoments(basis, DiscreteMixing.from_g1([0.3]))
    assert one.conditional_moment((1, 1, 2, 0, 0), (2, 1)) == pytest.approx(0.3 ** 2 * 0.7)


def test_unobserved_condition():
    s = Schema((2, 2))
    B = Subspace(s, np.array([[1.0, 0.5], [0.0, 0.5], [0.5, 0.5], [0.5, 0.5]]))
    with pytest.raises(UnobservedConditionError):
        exact_conditional_moments(B, DiscreteMixing.from_g1([1.0]), (2, 0), (1, 0))


def test_continuous_mixing_needs_discretization(small_model):
    schema, basis, mixing, ex = small_model
    with pytest.raises(PreconditionError):
        ExactMoments(basis, UniformIntervals([[0.2, 0.7]]))
    ExactMoments(basis, UniformIntervals([[0.2, 0.7]]).discretize(100))


def test_sample_deterministic_and_config_errors(small_model):
    schema, basis, mixing, ex = small_model
    cfg = GeneratorConfig(schema, basis, mixing, 500, 3)
    d1, g1 = sample(cfg)
    d2, g2 = sample(cfg)
    assert np.array_equal(d1.responses, d2.responses) and np.array_equal(g1, g2)
    with pytest.raises(ValueError):
        GeneratorConfig(schema, basis, mixing, 0, 3)
    with pytest.raises(ValueError):
        GeneratorConfig(schema, basis, DiscreteMixing.from_g1([1.5]), 10, 3)


def test_single_component_frequencies():
    s = Schema((2, 3, 4))
    B = random_basis(s, 2, 1, min_separation=0.1)
    ds, _ = sample(GeneratorConfig(s, B, DiscreteMixing.from_g1([1.0]), 20000, 8))
    freq = ds.cell_counts / 20000
    assert np.max(np.abs(freq - B.basis[:, 0])) < 0.02


def test_frequencies_converge_to_exact_moments(small_model):
    schema, basis, mixing, ex = small_model
    ds, _ = sample(GeneratorConfig(schema, basis, mixing, 100000, 21))
    t = FrequencyTable.from_dataset(ds)
    dev = max(abs(t[p] - ex[p]) for p in enumerate_patterns(schema, 2))
    assert dev < 0.01


def test_uniform_intervals_quantile():
    u = UniformIntervals([[0.5, 0.8], [0.0, 0.2]])
    assert u.quantile(np.array([0.0, 0.2, 0.4, 1.0])).tolist() == pytest.approx([0.0, 0.1, 0.5, 0.8])
