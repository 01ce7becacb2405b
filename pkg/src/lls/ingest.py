"""Categorical response data and empirical moment tables.

The frequency ``f_l = N_l / N`` of a (partial) response pattern is the
plug-in estimate of the moment ``M_l`` used throughout the estimator. Counts
are kept as exact integers and divided only when a frequency is requested.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

from .exceptions import MissingPatternError, SchemaMismatchError
from .patterns import Schema, support

__all__ = [
    "Dataset",
    "FrequencyTable",
    "ParseError",
    "read_csv",
    "write_csv",
    "marginal_frequency",
    "marginal_count",
    "frequency_table",
    "leave_one_out_counts",
]


class ParseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """``N x J`` matrix of responses, entry ``(i, j)`` in ``1..L_j``."""

    schema: Schema
    responses: np.ndarray

    def __post_init__(self):
        X = np.array(self.responses, dtype=np.int64, copy=True)
        if X.ndim != 2:
            raise ValueError("responses must be a 2-d array")
        if X.shape[0] < 1:
            raise ValueError("no rows")
        if X.shape[1] != self.schema.n_questions:
            raise SchemaMismatchError(
                f"responses have {X.shape[1]} columns, schema has J={self.schema.n_questions}"
            )
        levels = np.asarray(self.schema.levels)
        bad = (X < 1) | (X > levels)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise ValueError(
                f"row {i + 1}, column {j + 1}: level {X[i, j]} outside 1..{levels[j]}"
            )
        X.setflags(write=False)
        object.__setattr__(self, "responses", X)

    @property
    def n_individuals(self) -> int:
        return self.responses.shape[0]

    @cached_property
    def cells(self) -> np.ndarray:
        """Flat cell index of every response, shape ``(N, J)``."""
        return self.schema.offsets[None, :] + self.responses - 1

    @cached_property
    def indicators(self) -> np.ndarray:
        """Indicator matrix ``Y`` of shape ``(N, |L|)``, ``Y[i, (j,l)] = [x_ij == l]``."""
        N = self.n_individuals
        Y = np.zeros((N, self.schema.total_levels), dtype=np.float32)
        Y[np.arange(N)[:, None], self.cells] = 1.0
        Y.setflags(write=False)
        return Y

    @cached_property
    def cooccurrence(self) -> np.ndarray:
        """Exact pairwise cell counts ``Y^T Y`` as int64."""
        Y = self.indicators
        # float32 sums of 0/1 entries stay exact below 2**24 rows
        if self.n_individuals < 2 ** 24:
            C = np.rint(Y.T @ Y).astype(np.int64)
        else:
            Yi = Y.astype(np.int64)
            C = Yi.T @ Yi
        C.setflags(write=False)
        return C

    @cached_property
    def cell_counts(self) -> np.ndarray:
        counts = np.bincount(self.cells.ravel(), minlength=self.schema.total_levels)
        return counts.astype(np.int64)


def _parse_row(row, lineno):
    try:
        return [int(x) for x in row]
    except ValueError:
        raise ParseError(f"line {lineno}: non-integer entry in {row!r}") from None


def read_csv(path, schema: Schema) -> Dataset:
    """Read one individual per line, ``J`` comma-separated levels; header optional."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            row = [x.strip() for x in row]
            if not row or all(x == "" for x in row):
                continue
            if lineno == 1 and not all(x.lstrip("-").isdigit() for x in row):
                continue  # header
            if len(row) != schema.n_questions:
                raise ParseError(
                    f"line {lineno}: expected {schema.n_questions} fields, got {len(row)}"
                )
            rows.append(_parse_row(row, lineno))
    if not rows:
        raise ParseError(f"{path}: no rows")
    return Dataset(schema, np.asarray(rows, dtype=np.int64))


def write_csv(ds: Dataset, path, header: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(",".join(f"q{j + 1}" for j in range(ds.schema.n_questions)) + "\n")
        for row in ds.responses:
            fh.write(",".join(map(str, row.tolist())) + "\n")


def _match_mask(ds: Dataset, pattern) -> np.ndarray:
    supp = support(pattern)
    if not supp:
        return np.ones(ds.n_individuals, dtype=bool)
    vals = np.asarray([pattern[j] for j in supp])
    return np.all(ds.responses[:, supp] == vals, axis=1)


def marginal_count(ds: Dataset, pattern) -> int:
    """``N_l``: individuals agreeing with ``pattern`` on its support."""
    pattern = ds.schema.check_pattern(pattern)
    supp = support(pattern)
    if len(supp) == 0:
        return ds.n_individuals
    if len(supp) == 1:
        j = supp[0]
        return int(ds.cell_counts[ds.schema.cell_index(j, pattern[j])])
    return int(_match_mask(ds, pattern).sum())


def marginal_frequency(ds: Dataset, pattern) -> float:
    return marginal_count(ds, pattern) / ds.n_individuals


class FrequencyTable:
    """Map from patterns to exact counts, read as frequencies ``N_l / N``.

    A table built with ``dataset=`` answers any pattern lazily (support-2
    patterns straight from the co-occurrence matrix); one built from a plain
    ``counts`` mapping raises :class:`MissingPatternError` for unknown keys.
    """

    def __init__(self, schema: Schema, counts=None, n_total=None, dataset: Dataset | None = None):
        self.schema = schema
        self._counts = {tuple(k): int(v) for k, v in (counts or {}).items()}
        if dataset is not None:
            if dataset.schema != schema:
                raise SchemaMismatchError("dataset schema differs from table schema")
            n_total = dataset.n_individuals
        if n_total is None or n_total < 1:
            raise ValueError("n_total must be a positive count")
        self.n_total = int(n_total)
        self.dataset = dataset

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "FrequencyTable":
        return cls(ds.schema, dataset=ds)

    def __contains__(self, pattern) -> bool:
        return self.dataset is not None or tuple(pattern) in self._counts

    def __len__(self) -> int:
        return len(self._counts)

    def patterns(self) -> list:
        return list(self._counts)

    def count(self, pattern) -> int:
        key = tuple(int(x) for x in pattern)
        try:
            return self._counts[key]
        except KeyError:
            if self.dataset is None:
                raise MissingPatternError([key]) from None
        ds = self.dataset
        supp = support(key)
        if len(supp) == 2:
            a = self.schema.cell_index(supp[0], key[supp[0]])
            b = self.schema.cell_index(supp[1], key[supp[1]])
            value = int(ds.cooccurrence[a, b])
        else:
            value = marginal_count(ds, key)
        self._counts[key] = value
        return value

    def frequency(self, pattern) -> float:
        return self.count(pattern) / self.n_total

    __getitem__ = frequency

    def extension(self, pattern):
        """Counts of ``pattern`` extended by every cell of its don't-care questions.

        Returns ``(moments, counts)``, two ``|L|`` arrays; cells of questions in
        the pattern's support hold NaN / -1.
        """
        schema = self.schema
        key = tuple(int(x) for x in pattern)
        supp = support(key)
        if self.dataset is not None and len(supp) <= 1:
            if not supp:
                counts = self.dataset.cell_counts.copy()
            else:
                a = schema.cell_index(supp[0], key[supp[0]])
                counts = self.dataset.cooccurrence[a].copy()
        elif self.dataset is not None:
            mask = _match_mask(self.dataset, key)
            counts = np.bincount(self.dataset.cells[mask].ravel(),
                                 minlength=schema.total_levels).astype(np.int64)
        else:
            counts = np.full(schema.total_levels, -1, dtype=np.int64)
            for r in range(schema.total_levels):
                j, l = schema.cell(r)
                if key[j] == 0:
                    ext = list(key)
                    ext[j] = l
                    counts[r] = self.count(tuple(ext))
        counts = counts.astype(np.int64)
        in_support = np.isin(schema.cell_question, supp)
        counts[in_support] = -1
        moments = np.where(in_support, np.nan, counts / self.n_total)
        return moments, counts

    def moment_arrays(self):
        """First moments ``(|L|,)`` and pairwise moments ``(|L|, |L|)``.

        Entries of the pairwise matrix inside a question's diagonal block are
        not moments and are returned as NaN.
        """
        if self.dataset is None:
            raise MissingPatternError(["<pairwise moments need a dataset-backed table>"])
        ds = self.dataset
        first = ds.cell_counts / self.n_total
        second = ds.cooccurrence / self.n_total
        q = self.schema.cell_question
        second = np.where(q[:, None] == q[None, :], np.nan, second)
        return first, second

    def pair_counts(self):
        if self.dataset is None:
            return None
        return self.dataset.cooccurrence

    def to_json(self) -> dict:
        items = sorted(self._counts.items(), key=lambda kv: (sum(1 for x in kv[0] if x), kv[0]))
        return {
            "levels": list(self.schema.levels),
            "n_total": self.n_total,
            "counts": {",".join(map(str, k)): v for k, v in items},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FrequencyTable":
        schema = Schema(tuple(obj["levels"]))
        counts = {tuple(int(x) for x in k.split(",")): int(v) for k, v in obj["counts"].items()}
        return cls(schema, counts, obj["n_total"])

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))


def frequency_table(ds: Dataset, patterns: Iterable) -> FrequencyTable:
    """Count every pattern in ``patterns`` in a single pass over the rows."""
    schema = ds.schema
    patterns = [schema.check_pattern(p) for p in patterns]
    by_support = {}
    for p in patterns:
        by_support.setdefault(support(p), []).append(p)
    counts = {}
    X = ds.responses
    for supp, group in by_support.items():
        if not supp:
            for p in group:
                counts[p] = ds.n_individuals
            continue
        # mixed-radix code of the sub-row restricted to ``supp``
        radices = np.asarray([schema.levels[j] for j in supp], dtype=np.int64)
        weights = np.concatenate([[1], np.cumprod(radices[:-1])])
        codes = (X[:, supp] - 1) @ weights
        hist = np.bincount(codes, minlength=int(np.prod(radices)))
        for p in group:
            code = int(sum((p[j] - 1) * w for j, w in zip(supp, weights)))
            counts[p] = int(hist[code])
    return FrequencyTable(schema, counts, ds.n_individuals)


_ZOBRIST_SEED = 0x5EED_1A7E


def _exact_groups(rows: np.ndarray) -> np.ndarray:
    _, inverse = np.unique(rows, axis=0, return_inverse=True)
    return inverse.ravel()


def leave_one_out_counts(ds: Dataset):
    """Counts behind every single-zero reduction of every individual's pattern.

    For individual ``i`` with full pattern ``x_i`` and question ``j``, let
    ``r = x_i`` with position ``j`` set to 0. Returns ``(base, ext)`` where
    ``base[i, j] = N_r`` (shape ``(N, J)``) and ``ext[i, (j, l)]`` is the count
    of ``r`` with ``l`` substituted at ``j`` (shape ``(N, |L|)``).

    Rows are grouped by a 64-bit additive hash of the remaining entries; every
    group is then verified entry-wise, so hash collisions never corrupt counts.
    """
    schema = ds.schema
    X = ds.responses
    N, J = X.shape
    rng = np.random.Generator(np.random.Philox(_ZOBRIST_SEED))
    z = rng.integers(0, 2 ** 63, size=schema.total_levels, dtype=np.uint64)
    cells = ds.cells
    with np.errstate(over="ignore"):
        full = z[cells].sum(axis=1, dtype=np.uint64)
    base = np.empty((N, J), dtype=np.int64)
    ext = np.zeros((N, schema.total_levels), dtype=np.int64)
    for j in range(J):
        with np.errstate(over="ignore"):
            key = full - z[cells[:, j]]
        _, inverse, sizes = np.unique(key, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if (sizes > 1).any():
            order = np.argsort(inverse, kind="stable")
            same = inverse[order[1:]] == inverse[order[:-1]]
            a, b = order[:-1][same], order[1:][same]
            diff = X[a] != X[b]
            diff[:, j] = False
            if diff.any():
                inverse = _exact_groups(np.delete(X, j, axis=1))
                sizes = np.bincount(inverse)
        base[:, j] = sizes[inverse]
        Lj = schema.levels[j]
        pair = inverse * Lj + (X[:, j] - 1)
        pair_counts = np.bincount(pair, minlength=(inverse.max() + 1) * Lj).reshape(-1, Lj)
        off = int(schema.offsets[j])
        ext[:, off:off + Lj] = pair_counts[inverse]
    return base, ext
