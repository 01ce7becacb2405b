"""Conditional moments of the latent coordinates given a basis and a moment table.

For a pattern ``l`` with a don't-care entry at question ``j`` and any level
``t`` of that question, the conditional moments satisfy

    M_l * sum_k lambda^k_{jt} * g^{v+e_k}_l  =  M_{l'} * g^v_{l'},

where ``l'`` is ``l`` with ``t`` substituted at ``j``. Together with
``sum_k g^{v+e_k}_l = g^v_l`` (homogeneous coordinates sum to one) these are
linear in the unknowns of each order, so moments are obtained order by order
from weighted least squares with the normalisation imposed exactly.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ._linalg import constrained_lstsq
from .exceptions import (
    DependencyError,
    LLSError,
    PreconditionError,
    SchemaMismatchError,
    UnderdeterminedError,
    UnobservedConditionError,
)
from .ingest import Dataset, leave_one_out_counts
from .patterns import zero_capacity, zero_count, zero_positions
from .subspace import Subspace

__all__ = [
    "ConditionalMoments",
    "MomentSolver",
    "FullPatternEstimate",
    "moment_orders",
    "solve_expectations",
    "solve_higher_moments",
    "average_full_pattern",
    "full_pattern_expectations",
    "beta_of",
    "main_system_residuals",
]

RANGE_FLAG = (-0.1, 1.1)


def moment_orders(K: int, degree: int) -> list:
    """All ``v`` with ``K`` nonnegative entries summing to ``degree``, lexicographically descending."""
    out = []
    for bars in itertools.combinations(range(degree + K - 1), K - 1):
        prev = -1
        v = []
        for b in bars + (degree + K - 1,):
            v.append(b - prev - 1)
            prev = b
        out.append(tuple(v))
    return sorted(out, reverse=True)


def _bump(v, k):
    w = list(v)
    w[k] += 1
    return tuple(w)


def _order_key(v) -> str:
    return ",".join(map(str, v))


@dataclass
class ConditionalMoments:
    """Conditional moments ``E[prod_k G_k^v_k | X = pattern]`` keyed by order ``v``."""

    pattern: tuple
    values: dict
    residuals: dict = field(default_factory=dict)  # degree -> max |equation residual|
    flags: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(next(iter(self.values)))

    @property
    def expectations(self) -> np.ndarray:
        K = self.K
        return np.array([self.values[_bump((0,) * K, k)] for k in range(K)])

    def __getitem__(self, order) -> float:
        return self.values[tuple(order)]

    def to_json(self) -> dict:
        return {
            "moments": {_order_key(v): x for v, x in self.values.items()},
            "residuals": {str(d): r for d, r in self.residuals.items()},
            "flags": list(self.flags),
        }


def _check(subspace: Subspace, source, pattern):
    schema = subspace.schema
    if getattr(source, "schema", schema) != schema:
        raise SchemaMismatchError("moment table and basis use different schemas")
    return schema.check_pattern(pattern)


class MomentSolver:
    """Order-by-order solver with a cache shared across patterns.

    Solving any pattern only reads the moment table and the basis, so results
    do not depend on which patterns were solved before.
    """

    def __init__(self, subspace: Subspace, source, weighted: bool = True):
        self.subspace = subspace
        self.source = source
        self.weighted = weighted
        self._cache = {}

    def _weights(self, counts):
        if not self.weighted or counts is None:
            return None
        return np.sqrt(np.maximum(counts, 0).astype(float))

    def _degree(self, pattern, d):
        key = (pattern, d)
        if key in self._cache:
            return self._cache[key]
        K = self.subspace.K
        if d == 0:
            result = ({(0,) * K: 1.0}, 0.0)
            self._cache[key] = result
            return result
        schema = self.subspace.schema
        Lam = self.subspace.basis
        m_l = self.source[pattern]
        if m_l <= 0:
            raise UnobservedConditionError(f"pattern {pattern} is unobserved (M = 0)")
        zeros = zero_positions(pattern)
        if not zeros:
            raise UnderdeterminedError(f"pattern {pattern} has no don't-care position")
        prev = moment_orders(K, d - 1)
        unknowns = moment_orders(K, d)
        index = {w: i for i, w in enumerate(unknowns)}
        prev_self, _ = self._degree(pattern, d - 1)

        ext, counts = self.source.extension(pattern)
        cells = np.flatnonzero(np.isin(schema.cell_question, zeros))
        w_all = self._weights(counts)
        rows, rhs, wts = [], [], []
        if d == 1:
            A = m_l * Lam[cells]
            b = ext[cells]
            w = None if w_all is None else w_all[cells]
        else:
            for r in cells:
                jq, lev = schema.cell(r)
                ext_pattern = list(pattern)
                ext_pattern[jq] = lev
                ext_pattern = tuple(ext_pattern)
                m_ext = ext[r]
                dep = None
                if m_ext > 0:
                    try:
                        dep, _ = self._degree(ext_pattern, d - 1)
                    except LLSError as exc:
                        raise DependencyError(ext_pattern, prev[0], str(exc)) from exc
                for v in prev:
                    row = np.zeros(len(unknowns))
                    for k in range(K):
                        row[index[_bump(v, k)]] = m_l * Lam[r, k]
                    rows.append(row)
                    rhs.append(0.0 if dep is None else m_ext * dep[v])
                    wts.append(1.0 if w_all is None else w_all[r])
            A = np.array(rows).reshape(-1, len(unknowns))
            b = np.array(rhs)
            w = None if w_all is None else np.array(wts)
        C = np.zeros((len(prev), len(unknowns)))
        dvec = np.empty(len(prev))
        for i, v in enumerate(prev):
            for k in range(K):
                C[i, index[_bump(v, k)]] = 1.0
            dvec[i] = prev_self[v]
        x, rank = constrained_lstsq(A, b, C, dvec, weights=w)
        if rank < len(unknowns):
            raise UnderdeterminedError(
                f"pattern {pattern}, degree {d}: stacked system has rank {rank} < "
                f"{len(unknowns)} unknowns (l(l)-p = "
                f"{zero_capacity(pattern, schema) - zero_count(pattern)})"
            )
        residual = float(np.max(np.abs(A @ x - b))) if len(b) else 0.0
        result = ({w_: float(v) for w_, v in zip(unknowns, x)}, residual)
        self._cache[key] = result
        return result

    def solve(self, pattern, up_to: int = 0) -> ConditionalMoments:
        """Moments of degree ``0..up_to + 1`` at ``pattern``."""
        pattern = _check(self.subspace, self.source, pattern)
        if up_to < 0:
            raise PreconditionError("up_to must be nonnegative")
        values, residuals = {}, {}
        for d in range(up_to + 2):
            vals, res = self._degree(pattern, d)
            values.update(vals)
            if d:
                residuals[d] = res
        out = ConditionalMoments(pattern, values, residuals)
        g = out.expectations
        if np.any(g < RANGE_FLAG[0]) or np.any(g > RANGE_FLAG[1]):
            out.flags.append("expectation-out-of-range")
        beta = self.subspace.beta(g)
        if self.subspace.nonnegative and (beta.min() < -1e-9 or beta.max() > 1 + 1e-9):
            out.flags.append("beta-outside-polytope")
        return out


def solve_expectations(subspace: Subspace, source, pattern, weighted: bool = True) -> ConditionalMoments:
    """Conditional expectations ``E[G_k | X = pattern]`` from the first-order equations."""
    return MomentSolver(subspace, source, weighted).solve(pattern, 0)


def solve_higher_moments(subspace: Subspace, source, pattern, up_to: int,
                         weighted: bool = True) -> ConditionalMoments:
    """Conditional moments up to degree ``up_to + 1`` (equations with ``|v| <= up_to``)."""
    return MomentSolver(subspace, source, weighted).solve(pattern, up_to)


def beta_of(subspace: Subspace, g) -> np.ndarray:
    return subspace.beta(g)


def _reductions(pattern):
    for j in range(len(pattern)):
        red = list(pattern)
        red[j] = 0
        yield j, tuple(red)


def average_full_pattern(subspace: Subspace, source, pattern, solved=None,
                         method: str = "mean", weighted: bool = True) -> np.ndarray:
    """Expectation at a full pattern from its ``J`` single-zero reductions.

    ``method="mean"`` averages the reductions' solved expectations.
    ``method="pooled"`` solves the reductions' first-order equations jointly for
    one common vector, i.e. a least-squares average in which every reduction
    counts with the precision of its own equations.
    """
    pattern = _check(subspace, source, pattern)
    if 0 in pattern:
        raise PreconditionError(f"{pattern} is not a full pattern")
    K = subspace.K
    solver = None
    failures = []
    if method == "mean":
        vecs = []
        for j, red in _reductions(pattern):
            g = None
            if solved is not None and red in solved:
                g = solved[red]
                g = g.expectations if isinstance(g, ConditionalMoments) else np.asarray(g, float)
            else:
                solver = solver or MomentSolver(subspace, source, weighted)
                try:
                    g = solver.solve(red).expectations
                except LLSError as exc:
                    failures.append((red, str(exc)))
            if g is not None:
                vecs.append(g)
        if failures:
            raise UnderdeterminedError(
                "unsolvable reductions: " + "; ".join(f"{r}: {m}" for r, m in failures)
            )
        g = np.mean(vecs, axis=0)
        return g + (1.0 - g.sum()) / K
    if method != "pooled":
        raise ValueError(f"unknown method {method!r}")
    schema = subspace.schema
    Lam = subspace.basis
    A, b, w = [], [], []
    for j, red in _reductions(pattern):
        m_red = source[red]
        if m_red <= 0:
            failures.append((red, "unobserved"))
            continue
        ext, counts = source.extension(red)
        cells = np.arange(schema.offsets[j], schema.offsets[j] + schema.levels[j])
        A.append(m_red * Lam[cells])
        b.append(ext[cells])
        w.append(np.ones(len(cells)) if (counts is None or not weighted)
                 else np.sqrt(counts[cells].astype(float)))
    if not A:
        raise UnderdeterminedError(f"no observed reduction of {pattern}")
    g, rank = constrained_lstsq(np.vstack(A), np.concatenate(b), np.ones((1, K)),
                                np.ones(1), np.concatenate(w))
    if rank < K:
        raise UnderdeterminedError(f"pooled reductions of {pattern} have rank {rank} < K={K}")
    return g


@dataclass
class FullPatternEstimate:
    """Expectations at every distinct observed full pattern of a dataset."""

    patterns: np.ndarray       # (n_unique, J)
    counts: np.ndarray         # (n_unique,)
    points: np.ndarray         # (n_unique, K)
    inverse: np.ndarray        # (N,) individual -> unique pattern
    first_index: np.ndarray    # (n_unique,) first individual with the pattern
    degenerate: np.ndarray     # (n_unique,) bool, system solved by pseudo-inverse

    def individual_points(self) -> np.ndarray:
        return self.points[self.inverse]


def _kkt_solve(H: np.ndarray, h: np.ndarray):
    """Batched ``min g^T H g - 2 h^T g`` s.t. ``sum(g) = 1``."""
    n, K, _ = H.shape
    kkt = np.zeros((n, K + 1, K + 1))
    kkt[:, :K, :K] = H
    kkt[:, :K, K] = 1.0
    kkt[:, K, :K] = 1.0
    rhs = np.concatenate([h, np.ones((n, 1))], axis=1)
    scale = np.abs(H).reshape(n, -1).max(axis=1)
    scale[scale == 0] = 1.0
    # conditioning of the bordered system relative to the Gram scale
    kkt[:, :K, :K] /= scale[:, None, None]
    rhs[:, :K] /= scale[:, None]
    sol = np.empty((n, K))
    bad = np.zeros(n, dtype=bool)
    try:
        sol = np.linalg.solve(kkt, rhs[..., None])[..., 0][:, :K]
        cond = np.linalg.cond(kkt)
        bad = ~np.isfinite(cond) | (cond > 1e12)
    except np.linalg.LinAlgError:
        bad[:] = True
    for i in np.flatnonzero(bad):
        sol[i] = (np.linalg.pinv(kkt[i]) @ rhs[i])[:K]
    return sol, bad


def full_pattern_expectations(subspace: Subspace, ds: Dataset, method: str = "pooled",
                              weighted: bool = True, chunk: int = 4096) -> FullPatternEstimate:
    """Vectorised :func:`average_full_pattern` over every observed full pattern.

    Reduction counts come from :func:`lls.ingest.leave_one_out_counts`.
    """
    if ds.schema != subspace.schema:
        raise SchemaMismatchError("dataset and basis use different schemas")
    schema = subspace.schema
    Lam = subspace.basis
    K = subspace.K
    uniq, first, inverse, counts = np.unique(ds.responses, axis=0, return_index=True,
                                             return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    base, ext = leave_one_out_counts(ds)
    base = base[first].astype(float)
    ext = ext[first].astype(float)
    cq = schema.cell_question
    c_cell = base[:, cq]  # count of the reduction owning each cell
    if weighted:
        w2 = ext
    else:
        w2 = np.ones_like(ext)
    n_u = uniq.shape[0]
    points = np.empty((n_u, K))
    degenerate = np.zeros(n_u, dtype=bool)
    if method == "pooled":
        for s in range(0, n_u, chunk):
            sl = slice(s, s + chunk)
            omega = w2[sl] * c_cell[sl] ** 2
            H = np.einsum("ir,rk,rm->ikm", omega, Lam, Lam, optimize=True)
            h = (w2[sl] * c_cell[sl] * ext[sl]) @ Lam
            points[sl], degenerate[sl] = _kkt_solve(H, h)
    elif method == "mean":
        J = schema.n_questions
        for s in range(0, n_u, max(1, chunk // max(J, 1))):
            sl = slice(s, min(s + max(1, chunk // max(J, 1)), n_u))
            m = sl.stop - sl.start
            omega = w2[sl] * c_cell[sl] ** 2
            rhsw = w2[sl] * c_cell[sl] * ext[sl]
            H = np.zeros((m, J, K, K))
            h = np.zeros((m, J, K))
            for r in range(schema.total_levels):
                j = cq[r]
                H[:, j] += omega[:, r, None, None] * np.outer(Lam[r], Lam[r])
                h[:, j] += rhsw[:, r, None] * Lam[r]
            g, bad = _kkt_solve(H.reshape(m * J, K, K), h.reshape(m * J, K))
            if bad.any():
                i = np.flatnonzero(bad)[0]
                raise UnderdeterminedError(
                    f"reduction (pattern {tuple(uniq[s + i // J])}, question {i % J}) "
                    f"is underdetermined"
                )
            g = g.reshape(m, J, K).mean(axis=1)
            points[sl] = g + (1.0 - g.sum(axis=1, keepdims=True)) / K
    else:
        raise ValueError(f"unknown method {method!r}")
    return FullPatternEstimate(uniq, counts, points, inverse, first, degenerate)


def main_system_residuals(subspace: Subspace, source, pattern, moment, max_degree: int):
    """Residuals of every first-order-in-``g`` equation at ``pattern`` with ``|v| <= max_degree``.

    ``moment(pattern, v)`` supplies conditional moments (an oracle or a solver).
    Returns a list of ``(question, level, v, residual)``.
    """
    schema = subspace.schema
    Lam = subspace.basis
    K = subspace.K
    m_l = source[pattern]
    if m_l <= 0:
        return []
    out = []
    for j in zero_positions(pattern):
        for lev in range(1, schema.levels[j] + 1):
            ext = list(pattern)
            ext[j] = lev
            ext = tuple(ext)
            m_ext = source[ext]
            r = schema.cell_index(j, lev)
            for d in range(max_degree + 1):
                for v in moment_orders(K, d):
                    lhs = m_l * sum(Lam[r, k] * moment(pattern, _bump(v, k)) for k in range(K))
                    rhs = m_ext * moment(ext, v) if m_ext > 0 else 0.0
                    out.append((j, lev, v, lhs - rhs))
    return out
