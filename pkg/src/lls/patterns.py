"""Measurement schema and response-pattern algebra.

A response pattern is a tuple of ``J`` integers. Entry ``j`` holds a level in
``1..L_j`` or ``0`` for "don't care". Questions are indexed from 0 in code;
levels keep their natural 1-based numbering since 0 is reserved.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from .exceptions import PreconditionError, SchemaMismatchError

Pattern = tuple

__all__ = [
    "Schema",
    "Pattern",
    "as_pattern",
    "pattern_add",
    "substitute",
    "support",
    "zero_positions",
    "zero_capacity",
    "zero_count",
    "unit_pattern",
    "enumerate_patterns",
    "count_patterns",
]


@dataclass(frozen=True)
class Schema:
    """Numbers of levels ``(L_1, ..., L_J)`` of the ``J`` categorical questions."""

    levels: tuple = field()

    def __post_init__(self):
        levels = tuple(int(x) for x in self.levels)
        if len(levels) < 1:
            raise ValueError("schema needs at least one question")
        if any(x < 2 for x in levels):
            raise ValueError(f"every question needs at least 2 levels, got {levels}")
        object.__setattr__(self, "levels", levels)

    @property
    def n_questions(self) -> int:
        return len(self.levels)

    @property
    def total_levels(self) -> int:
        """``|L|``, the number of (question, level) cells."""
        return sum(self.levels)

    @property
    def full_pattern_count(self) -> int:
        """``|L*|`` as an exact Python integer (never materialised)."""
        return math.prod(self.levels)

    @property
    def max_level(self) -> int:
        return max(self.levels)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Flat index of cell ``(j, 1)`` for each question ``j``."""
        return np.concatenate([[0], np.cumsum(self.levels)[:-1]]).astype(np.intp)

    @cached_property
    def cell_question(self) -> np.ndarray:
        """Question index of every flat cell."""
        return np.repeat(np.arange(self.n_questions), self.levels)

    @cached_property
    def cell_level(self) -> np.ndarray:
        """Level (1-based) of every flat cell."""
        return np.concatenate([np.arange(1, L + 1) for L in self.levels])

    def cell_index(self, question: int, level: int) -> int:
        """Flat row-major index of cell ``(question, level)``."""
        if not 0 <= question < self.n_questions:
            raise IndexError(f"question {question} out of range")
        if not 1 <= level <= self.levels[question]:
            raise IndexError(f"level {level} out of range for question {question}")
        return int(self.offsets[question]) + level - 1

    def cell(self, flat: int) -> tuple:
        """Inverse of :meth:`cell_index`."""
        return int(self.cell_question[flat]), int(self.cell_level[flat])

    def question_slice(self, question: int) -> slice:
        start = int(self.offsets[question])
        return slice(start, start + self.levels[question])

    def block_sums(self, vectors: np.ndarray) -> np.ndarray:
        """Per-question sums of ``|L|``-vectors (rows of the first axis)."""
        vectors = np.asarray(vectors, dtype=float)
        return np.add.reduceat(vectors, self.offsets, axis=0)

    def check_pattern(self, pattern: Iterable[int]) -> Pattern:
        p = tuple(int(x) for x in pattern)
        if len(p) != self.n_questions:
            raise SchemaMismatchError(
                f"pattern of length {len(p)} does not match schema with J={self.n_questions}"
            )
        for j, (x, L) in enumerate(zip(p, self.levels)):
            if not 0 <= x <= L:
                raise SchemaMismatchError(f"entry {x} at position {j} outside 0..{L}")
        return p

    def to_json(self) -> dict:
        return {"levels": list(self.levels)}

    @classmethod
    def from_json(cls, obj: dict) -> "Schema":
        return cls(tuple(obj["levels"]))

    @classmethod
    def binary(cls, n_questions: int) -> "Schema":
        return cls((2,) * n_questions)


def as_pattern(entries: Iterable[int]) -> Pattern:
    return tuple(int(x) for x in entries)


def support(pattern: Sequence[int]) -> tuple:
    return tuple(j for j, x in enumerate(pattern) if x != 0)


def zero_positions(pattern: Sequence[int]) -> tuple:
    return tuple(j for j, x in enumerate(pattern) if x == 0)


def zero_count(pattern: Sequence[int]) -> int:
    return sum(1 for x in pattern if x == 0)


def zero_capacity(pattern: Sequence[int], schema: Schema) -> int:
    """``l(pattern)``: total number of levels over the don't-care positions."""
    return sum(L for x, L in zip(pattern, schema.levels) if x == 0)


def pattern_add(a: Sequence[int], b: Sequence[int], schema: Schema | None = None):
    """Partial sum of two patterns.

    Returns ``None`` when both patterns are specified at a common position,
    i.e. when the sum is undefined. Length mismatch (or entries out of range
    for ``schema``) raises :class:`SchemaMismatchError` instead.
    """
    if schema is not None:
        a = schema.check_pattern(a)
        b = schema.check_pattern(b)
    elif len(a) != len(b):
        raise SchemaMismatchError(f"patterns of lengths {len(a)} and {len(b)}")
    out = []
    for x, y in zip(a, b):
        if x != 0 and y != 0:
            return None
        out.append(int(x) + int(y))
    return tuple(out)


def substitute(pattern: Sequence[int], question: int, level: int,
               schema: Schema | None = None) -> Pattern:
    """Replace the don't-care entry at ``question`` by ``level``."""
    p = list(pattern)
    if p[question] != 0:
        raise PreconditionError(
            f"position {question} of {tuple(pattern)} is {p[question]}, expected 0"
        )
    upper = schema.levels[question] if schema is not None else None
    if level < 1 or (upper is not None and level > upper):
        raise PreconditionError(f"level {level} out of range at position {question}")
    p[question] = int(level)
    return tuple(p)


def unit_pattern(schema: Schema, question: int, level: int) -> Pattern:
    p = [0] * schema.n_questions
    p[question] = int(level)
    return tuple(p)


def iter_patterns(schema: Schema, max_support: int) -> Iterator[Pattern]:
    J = schema.n_questions
    if not 0 <= max_support <= J:
        raise PreconditionError(f"max_support must lie in 0..{J}")
    for size in range(max_support + 1):
        for positions in itertools.combinations(range(J), size):
            ranges = [range(1, schema.levels[j] + 1) for j in positions]
            for levels in itertools.product(*ranges):
                p = [0] * J
                for j, l in zip(positions, levels):
                    p[j] = l
                yield tuple(p)


def enumerate_patterns(schema: Schema, max_support: int) -> list:
    """All patterns with at most ``max_support`` specified entries.

    Ordered by support size, then positions, then levels; the all-zero
    pattern comes first.
    """
    return list(iter_patterns(schema, max_support))


def count_patterns(schema: Schema, max_support: int) -> int:
    """Closed-form size of :func:`enumerate_patterns` via elementary symmetric sums."""
    e = [1] + [0] * schema.n_questions
    for L in schema.levels:
        for s in range(len(e) - 1, 0, -1):
            e[s] += e[s - 1] * L
    return sum(e[: max_support + 1])
