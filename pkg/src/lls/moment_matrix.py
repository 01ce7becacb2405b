"""Incomplete moment matrix, its computational rank and rank-constrained completion.

Rows are indexed by single-cell patterns (one specified question), columns by
patterns of bounded support. The entry at ``(row, col)`` is the moment of the
pattern sum ``row + col``; it is structurally undefined when the two patterns
specify a common question.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import (
    BoundViolationError,
    DegenerateMinorError,
    MissingPatternError,
    PreconditionError,
)
from .patterns import Schema, enumerate_patterns, pattern_add, unit_pattern

__all__ = [
    "MomentMatrix",
    "CompletionReport",
    "structural_mask",
    "build_moment_matrix",
    "computational_rank",
    "rank_profile",
    "complete_matrix",
    "COND_MAX",
]

COND_MAX = 1e8


def _pattern_label(p) -> str:
    if max(p, default=0) <= 9:
        return "".join(map(str, p))
    return "-".join(map(str, p))


def structural_mask(schema: Schema, col_patterns) -> np.ndarray:
    """``mask[r, c]`` is True iff row cell ``r`` and column pattern ``c`` are disjoint."""
    P = np.asarray(col_patterns, dtype=np.int64).reshape(len(col_patterns), schema.n_questions)
    return (P[:, schema.cell_question] == 0).T


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    schema: Schema
    col_patterns: tuple
    values: np.ndarray
    mask: np.ndarray
    col_support: int = 1

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        shape = (self.schema.total_levels, len(self.col_patterns))
        if values.shape != shape or mask.shape != shape:
            raise ValueError(f"values/mask must have shape {shape}")
        values[~mask] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "col_patterns", tuple(tuple(p) for p in self.col_patterns))

    @cached_property
    def row_patterns(self) -> tuple:
        s = self.schema
        return tuple(unit_pattern(s, *s.cell(r)) for r in range(s.total_levels))

    @property
    def shape(self):
        return self.values.shape

    @property
    def is_complete(self) -> bool:
        return bool(self.mask.all())

    @property
    def first_moments(self) -> np.ndarray:
        """The all-zero column: first-order moments of every cell."""
        return self.values[:, 0]

    @cached_property
    def structural(self) -> np.ndarray:
        return structural_mask(self.schema, self.col_patterns)

    def filled(self, fill_value=0.0) -> np.ndarray:
        return np.where(self.mask, self.values, fill_value)

    def replace(self, values, mask=None) -> "MomentMatrix":
        return MomentMatrix(self.schema, self.col_patterns, values,
                            self.mask if mask is None else mask, self.col_support)

    def to_json(self) -> dict:
        vals = [[None if not m else float(v) for v, m in zip(vr, mr)]
                for vr, mr in zip(self.values, self.mask)]
        return {
            "levels": list(self.schema.levels),
            "col_support": self.col_support,
            "rows": [list(p) for p in self.row_patterns],
            "cols": [list(p) for p in self.col_patterns],
            "values": vals,
            "mask": self.mask.tolist(),
        }

    @classmethod
    def from_json(cls, obj) -> "MomentMatrix":
        schema = Schema(tuple(obj["levels"]))
        vals = np.array([[np.nan if v is None else v for v in row] for row in obj["values"]])
        return cls(schema, tuple(map(tuple, obj["cols"])), vals,
                   np.asarray(obj["mask"], dtype=bool), obj.get("col_support", 1))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row"] + [_pattern_label(p) for p in self.col_patterns])
            for p, vr, mr in zip(self.row_patterns, self.values, self.mask):
                w.writerow([_pattern_label(p)] +
                           [format(v, ".17g") if m else "?" for v, m in zip(vr, mr)])


def build_moment_matrix(source, schema: Schema, col_support: int = 1) -> MomentMatrix:
    """Arrange the moments of ``source`` into the (incomplete) moment matrix.

    ``source`` is any moment table supporting ``source[pattern]``; tables that
    expose ``moment_arrays()`` are read in bulk when ``col_support <= 1``.
    """
    if not 0 <= col_support <= schema.n_questions:
        raise PreconditionError(f"col_support must lie in 0..{schema.n_questions}")
    cols = enumerate_patterns(schema, col_support)
    mask = structural_mask(schema, cols)
    n_rows = schema.total_levels
    if col_support <= 1 and hasattr(source, "moment_arrays"):
        try:
            first, second = source.moment_arrays()
        except MissingPatternError:
            pass
        else:
            values = first[:, None] if col_support == 0 else np.hstack([first[:, None], second])
            return MomentMatrix(schema, tuple(cols), values, mask, col_support)
    values = np.full((n_rows, len(cols)), np.nan)
    rows = [unit_pattern(schema, *schema.cell(r)) for r in range(n_rows)]
    missing = []
    for r, rp in enumerate(rows):
        for c, cp in enumerate(cols):
            if not mask[r, c]:
                continue
            key = pattern_add(rp, cp)
            try:
                values[r, c] = source[key]
            except (MissingPatternError, KeyError):
                missing.append(key)
    if missing:
        raise MissingPatternError(sorted(set(missing)))
    return MomentMatrix(schema, tuple(cols), values, mask, col_support)


# -- computational rank -------------------------------------------------------

def _question_splits(J: int):
    half = (J + 1) // 2
    first = list(range(half))
    second = list(range(half, J))
    even = list(range(0, J, 2))
    odd = list(range(1, J, 2))
    splits = [(first, second), (second, first), (even, odd), (odd, even)]
    return [(a, b) for a, b in splits if a]


def _defined_blocks(M: MomentMatrix):
    """Deterministic family of fully-defined submatrices (row idx, col idx)."""
    schema = M.schema
    J = schema.n_questions
    q = schema.cell_question
    P = np.asarray(M.col_patterns).reshape(len(M.col_patterns), J)
    blocks = []
    for row_q, _ in _question_splits(J):
        rows = np.flatnonzero(np.isin(q, row_q))
        cols = np.flatnonzero(np.all(P[:, row_q] == 0, axis=1) & M.mask[rows].all(axis=0))
        if len(rows) and len(cols):
            blocks.append((rows, cols))
    if J <= 30:
        pairs = itertools.permutations(range(J), 2)
    else:
        pairs = ((a, (a + 1) % J) for a in range(J))
    col_support_size = (P != 0).sum(axis=1)
    for a, b in pairs:
        rows = np.flatnonzero(q == a)
        keep = (col_support_size == 0) | ((col_support_size == 1) & (P[:, b] != 0))
        cols = np.flatnonzero(keep & M.mask[rows].all(axis=0))
        blocks.append((rows, cols))
    if not blocks:
        rows = np.arange(schema.total_levels)
        blocks.append((rows, np.array([0])))
    return blocks


def _rank_of(block: np.ndarray, eps: float) -> int:
    s = np.linalg.svd(block, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > eps * s[0]))


def computational_rank(M: MomentMatrix, eps: float = 1e-8) -> int:
    """Largest numerical rank over a fixed family of fully-defined submatrices.

    A submatrix's rank counts singular values strictly above ``eps`` times its
    largest one, so any ``eps >= 1`` yields 0.
    """
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    blocks = _defined_blocks(M)
    return max(_rank_of(M.values[np.ix_(r, c)], eps) for r, c in blocks)


def rank_profile(M: MomentMatrix) -> np.ndarray:
    """Singular values of the largest fully-defined block, scaled by the first."""
    blocks = _defined_blocks(M)
    rows, cols = max(blocks, key=lambda rc: min(len(rc[0]), len(rc[1])))
    s = np.linalg.svd(M.values[np.ix_(rows, cols)], compute_uv=False)
    return s / s[0] if s[0] > 0 else s


# -- completion ----------------------------------------------------------------

@dataclass
class CompletionReport:
    filled_entries: list = field(default_factory=list)  # (row, col, value, residual)
    used_minors: int = 0

    @property
    def max_residual(self) -> float:
        return max((e[3] for e in self.filled_entries), default=0.0)

    def to_json(self) -> dict:
        return {
            "filled": len(self.filled_entries),
            "used_minors": self.used_minors,
            "max_residual": self.max_residual,
        }


def _smallest_sv(stack: np.ndarray) -> np.ndarray:
    return np.linalg.svd(stack, compute_uv=False)[..., -1]


def _greedy_rows(C: np.ndarray, K: int) -> np.ndarray:
    """Pick ``K`` rows of ``C`` (n x K) greedily maximising the smallest singular value."""
    chosen = []
    available = np.ones(C.shape[0], dtype=bool)
    for _ in range(K):
        cand = np.flatnonzero(available)
        stack = np.concatenate(
            [np.broadcast_to(C[chosen], (len(cand), len(chosen), K)), C[cand][:, None, :]],
            axis=1,
        )
        best = cand[int(np.argmax(_smallest_sv(stack)))]
        chosen.append(best)
        available[best] = False
    return np.asarray(chosen)


def _cond(A: np.ndarray) -> float:
    s = np.linalg.svd(A, compute_uv=False)
    return np.inf if s[-1] == 0 else s[0] / s[-1]


def complete_matrix(M: MomentMatrix, K: int, mode: str = "exact",
                    cond_max: float = COND_MAX):
    """Fill every undefined entry of ``M`` assuming the full matrix has rank ``K``.

    For a missing entry at ``(r, c)``, take ``K`` columns that are defined at
    row ``r`` (largest column norms first, skipping columns that would make the
    minor degenerate) and a set of rows where all of them and column ``c`` are
    defined. Express column ``c`` on those rows as a combination ``gamma`` of
    the chosen columns and fill ``M[r, c] = sum_i gamma_i M[r, c_i]``.

    ``mode="exact"`` uses a ``K x K`` minor whose rows are picked greedily to
    maximise its smallest singular value; ``mode="lstsq"`` uses every
    admissible row, which damps sampling noise. Only originally defined entries
    are ever read, so the result does not depend on the filling order.
    """
    schema = M.schema
    n = schema.total_levels
    p = schema.max_level
    if K < 1:
        raise PreconditionError("K must be at least 1")
    if 2 * K + 2 * p - 1 > n:
        raise BoundViolationError(
            f"completion needs 2K+2p-1 <= n; got 2*{K}+2*{p}-1 = {2 * K + 2 * p - 1} > n = {n}"
        )
    if mode not in ("exact", "lstsq"):
        raise ValueError(f"unknown mode {mode!r}")
    report = CompletionReport()
    if M.is_complete:
        return M, report
    V = M.values
    D = M.mask
    norms = np.sqrt((np.where(D, V, 0.0) ** 2).sum(axis=0))
    col_order = np.argsort(-norms, kind="stable")
    out = V.copy()
    for r, c in zip(*np.nonzero(~D)):
        base_rows = D[:, c].copy()
        base_rows[r] = False
        chosen = []
        rows = base_rows
        for k in col_order:
            if k == c or not D[r, k]:
                continue
            trial_rows = rows & D[:, k]
            if trial_rows.sum() < len(chosen) + 1:
                continue
            sub = V[np.ix_(trial_rows, chosen + [k])]
            if _cond(sub) > cond_max:
                continue
            chosen.append(int(k))
            rows = trial_rows
            if len(chosen) == K:
                break
        if len(chosen) < K:
            raise DegenerateMinorError(
                f"entry (row {r}, col {c}): no {K} columns give a minor with condition <= {cond_max:g}"
            )
        row_idx = np.flatnonzero(rows)
        C = V[np.ix_(row_idx, chosen)]
        b = V[row_idx, c]
        if mode == "exact":
            pick = _greedy_rows(C, K)
            minor = C[pick]
            if _cond(minor) > cond_max:
                raise DegenerateMinorError(
                    f"entry (row {r}, col {c}): best {K}x{K} minor has condition "
                    f"{_cond(minor):.3g} > {cond_max:g}"
                )
            gamma = np.linalg.solve(minor, b[pick])
        else:
            gamma = np.linalg.lstsq(C, b, rcond=None)[0]
        residual = float(np.max(np.abs(C @ gamma - b))) if len(b) else 0.0
        value = float(V[r, chosen] @ gamma)
        out[r, c] = value
        report.filled_entries.append((int(r), int(c), value, residual))
        report.used_minors += 1
    completed = M.replace(out, np.ones_like(D))
    return completed, report
