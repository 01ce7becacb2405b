import itertools

import pytest

from lls.exceptions import PreconditionError, SchemaMismatchError
from lls.patterns import (
    Schema, count_patterns, enumerate_patterns, pattern_add, substitute, support,
    unit_pattern, zero_capacity, zero_count, zero_positions,
)


def test_schema_sizes():
    s = Schema((2, 3, 4))
    assert s.n_questions == 3
    assert s.total_levels == 9
    assert s.full_pattern_count == 24
    assert s.max_level == 4
    assert list(s.offsets) == [0, 2, 5]


def test_schema_rejects_bad_levels():
    with pytest.raises(ValueError):
        Schema((2, 1))
    with pytest.raises(ValueError):
        Schema(())


def test_full_pattern_count_is_exact_big_int():
    assert Schema.binary(1000).full_pattern_count == 2 ** 1000


def test_cell_index_roundtrip():
    s = Schema((2, 3, 4))
    for j, L in enumerate(s.levels):
        for lev in range(1, L + 1):
            assert s.cell(s.cell_index(j, lev)) == (j, lev)


def test_pattern_add_defined_and_undefined():
    assert pattern_add((1, 0, 0), (0, 2, 0)) == (1, 2, 0)
    assert pattern_add((1, 0, 0), (2, 0, 0)) is None
    with pytest.raises(SchemaMismatchError):
        pattern_add((1, 0), (0, 0, 1))


def test_substitute():
    assert substitute((0, 1, 0), 0, 2) == (2, 1, 0)
    with pytest.raises(PreconditionError):
        substitute((0, 1, 0), 1, 2)
    with pytest.raises(PreconditionError):
        substitute((0, 1, 0), 2, 3, Schema((2, 2, 2)))


def test_zero_helpers():
    s = Schema((2, 3, 4))
    p = (0, 2, 0)
    assert support(p) == (1,)
    assert zero_positions(p) == (0, 2)
    assert zero_count(p) == 2
    assert zero_capacity(p, s) == 6
    assert unit_pattern(s, 2, 3) == (0, 0, 3)


def test_enumeration_order_and_count():
    s = Schema((2, 3))
    pats = enumerate_patterns(s, 2)
    assert pats[0] == (0, 0)
    assert pats[1:6] == [(1, 0), (2, 0), (0, 1), (0, 2), (0, 3)]
    assert len(pats) == 12 == count_patterns(s, 2)


@pytest.mark.parametrize("levels", [(2, 2, 2), (3, 2, 4), (2,) * 6])
def test_count_matches_enumeration(levels):
    s = Schema(levels)
    for c in range(len(levels) + 1):
        assert count_patterns(s, c) == len(enumerate_patterns(s, c))
    full = [p for p in enumerate_patterns(s, len(levels)) if 0 not in p]
    assert len(full) == s.full_pattern_count
    assert set(full) == set(itertools.product(*[range(1, L + 1) for L in levels]))
