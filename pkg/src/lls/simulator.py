"""Synthetic data from a known linear latent structure model, plus exact moments.

Everything random runs on a Philox counter-based generator seeded by the
caller, so a seed reproduces the same basis and dataset on every platform.
The exact-moment table evaluates model moments by direct summation over the
(finite) support of the mixing distribution and serves as the test oracle.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import PreconditionError, SchemaMismatchError, UnobservedConditionError
from .ingest import Dataset
from .patterns import Schema, support
from .subspace import Subspace

__all__ = [
    "DiscreteMixing",
    "UniformIntervals",
    "GeneratorConfig",
    "ExactMoments",
    "make_rng",
    "mixing_from_json",
    "random_basis",
    "sample",
    "exact_moments",
    "exact_conditional_moments",
]

BETA_TOL = 1e-12


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) % 2 ** 64))


class DiscreteMixing:
    """Finitely supported mixing distribution: points ``g`` (rows) with weights."""

    kind = "discrete"

    def __init__(self, points, weights=None):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if weights is None:
            weights = np.full(points.shape[0], 1.0 / points.shape[0])
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (points.shape[0],):
            raise ValueError("need one weight per support point")
        if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0, atol=1e-12):
            raise ValueError("weights must be nonnegative and sum to 1")
        if np.any(np.abs(points.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("support points need homogeneous coordinates summing to 1")
        self.points = points
        self.weights = weights / weights.sum()

    @classmethod
    def from_g1(cls, values, weights=None) -> "DiscreteMixing":
        """Two-dimensional model given by ``g_1`` values (``g_2 = 1 - g_1``)."""
        v = np.asarray(values, dtype=float)
        return cls(np.column_stack([v, 1.0 - v]), weights)

    @classmethod
    def from_density(cls, points, density) -> "DiscreteMixing":
        density = np.asarray(density, dtype=float)
        return cls(points, density / density.sum())

    @property
    def K(self) -> int:
        return self.points.shape[1]

    def support_points(self) -> np.ndarray:
        return self.points

    def sample(self, rng, n) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.points[idx]

    def discretize(self, n=None) -> "DiscreteMixing":
        return self

    def g1_distribution(self):
        return self.points[:, 0], self.weights

    def to_json(self) -> dict:
        return {"type": "discrete", "points": self.points.tolist(),
                "weights": self.weights.tolist()}


class UniformIntervals:
    """Two-dimensional model with ``g_1`` uniform on a union of disjoint intervals."""

    kind = "uniform_intervals"
    K = 2

    def __init__(self, intervals):
        iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
        if np.any(iv[:, 1] <= iv[:, 0]):
            raise ValueError("intervals need lo < hi")
        order = np.argsort(iv[:, 0])
        iv = iv[order]
        if np.any(iv[1:, 0] < iv[:-1, 1]):
            raise ValueError("intervals must not overlap")
        self.intervals = iv
        self.lengths = iv[:, 1] - iv[:, 0]

    def support_points(self) -> np.ndarray:
        ends = self.intervals.ravel()
        return np.column_stack([ends, 1.0 - ends])

    def quantile(self, u) -> np.ndarray:
        """Inverse CDF of ``g_1``."""
        u = np.asarray(u, dtype=float)
        pos = u * self.lengths.sum()
        cum = np.concatenate([[0.0], np.cumsum(self.lengths)])
        k = np.clip(np.searchsorted(cum, pos, side="right") - 1, 0, len(self.lengths) - 1)
        return self.intervals[k, 0] + (pos - cum[k])

    def sample(self, rng, n) -> np.ndarray:
        g1 = self.quantile(rng.random(n))
        return np.column_stack([g1, 1.0 - g1])

    def discretize(self, n=2000) -> DiscreteMixing:
        """Midpoint-rule grid with ``n`` equal-mass atoms."""
        g1 = self.quantile((np.arange(n) + 0.5) / n)
        return DiscreteMixing.from_g1(g1)

    def g1_distribution(self, n=20000):
        grid = self.discretize(n)
        return grid.points[:, 0], grid.weights

    def to_json(self) -> dict:
        return {"type": "uniform_intervals", "intervals": self.intervals.tolist()}


def mixing_from_json(obj):
    kind = obj.get("type")
    if kind in ("discrete", "point_masses", "grid"):
        if "points" in obj:
            return DiscreteMixing(obj["points"], obj.get("weights"))
        return DiscreteMixing.from_g1(obj["g1"], obj.get("weights"))
    if kind == "uniform_intervals":
        return UniformIntervals(obj["intervals"])
    raise ValueError(f"unknown mixing type {kind!r}")


def random_basis(schema: Schema, K: int, seed: int, min_separation: float = 0.3,
                 max_tries: int = 1000) -> Subspace:
    """``K`` basis vectors drawn question-wise from the flat Dirichlet distribution.

    Redrawn until every pair differs by at least ``min_separation`` in mean
    absolute per-cell difference.
    """
    if K < 1:
        raise PreconditionError("K must be at least 1")
    rng = make_rng(seed)
    for _ in range(max_tries):
        cols = []
        for _k in range(K):
            parts = [rng.dirichlet(np.ones(L)) for L in schema.levels]
            cols.append(np.concatenate(parts))
        B = np.column_stack(cols)
        seps = [np.mean(np.abs(B[:, a] - B[:, b])) for a, b in itertools.combinations(range(K), 2)]
        if all(s >= min_separation for s in seps):
            B = B / np.repeat(schema.block_sums(B), schema.levels, axis=0)
            return Subspace(schema, B, nonnegative=True)
    raise PreconditionError(
        f"no basis with pairwise separation >= {min_separation} in {max_tries} draws"
    )


@dataclass
class GeneratorConfig:
    schema: Schema
    basis: Subspace
    mixing: object
    n: int
    seed: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("N must be at least 1")
        if self.basis.schema != self.schema:
            raise SchemaMismatchError("basis schema differs from config schema")
        if self.mixing.K != self.basis.K:
            raise SchemaMismatchError(
                f"mixing has K={self.mixing.K}, basis has K={self.basis.K}"
            )
        if not self.basis.nonnegative:
            raise ValueError("generating basis must be nonnegative")
        beta = self.basis.beta(self.mixing.support_points())
        if beta.min() < -BETA_TOL or beta.max() > 1 + BETA_TOL:
            raise ValueError("a mixing support point maps outside the probability polytope")

    @classmethod
    def from_json(cls, obj, seed=None, n=None) -> "GeneratorConfig":
        schema = Schema.from_json(obj["schema"]) if "schema" in obj else Schema(tuple(obj["levels"]))
        mixing = mixing_from_json(obj["mixing"])
        if "basis" in obj:
            basis = Subspace(schema, np.asarray(obj["basis"], dtype=float))
        else:
            basis = random_basis(schema, int(obj.get("K", mixing.K)), int(obj.get("basis_seed", 0)),
                                 float(obj.get("min_separation", 0.3)))
        return cls(schema, basis, mixing,
                   int(obj["N"] if n is None else n),
                   int(obj.get("seed", 0) if seed is None else seed))


_CHUNK = 2048


def sample(config: GeneratorConfig):
    """Draw ``N`` individuals; returns ``(Dataset, latent g of shape (N, K))``."""
    schema = config.schema
    rng = make_rng(config.seed)
    g = config.mixing.sample(rng, config.n)
    Lam = config.basis.basis
    J = schema.n_questions
    offsets = schema.offsets
    X = np.empty((config.n, J), dtype=np.int64)
    for start in range(0, config.n, _CHUNK):
        stop = min(start + _CHUNK, config.n)
        beta = np.clip(g[start:stop] @ Lam.T, 0.0, 1.0)
        cum = np.cumsum(beta, axis=1)
        block_start = np.concatenate([np.zeros((stop - start, 1)), cum[:, offsets[1:] - 1]], axis=1)
        cum = cum - np.repeat(block_start, schema.levels, axis=1)
        u = rng.random((stop - start, J))
        below = cum < np.repeat(u, schema.levels, axis=1)
        level = 1 + np.add.reduceat(below, offsets, axis=1)
        X[start:stop] = np.minimum(level, np.asarray(schema.levels))
    return Dataset(schema, X), g


class ExactMoments:
    """Exact moments ``M_l`` of a model with finitely supported mixing.

    Reads like a frequency table (``table[pattern]``) but carries no counts,
    so solvers treat every equation with unit weight.
    """

    def __init__(self, basis: Subspace, mixing):
        if not isinstance(mixing, DiscreteMixing):
            raise PreconditionError(
                "exact moments need finite support; call mixing.discretize(n) first"
            )
        if mixing.K != basis.K:
            raise SchemaMismatchError("mixing and basis disagree on K")
        self.schema = basis.schema
        self.basis = basis
        self.mixing = mixing
        self.betas = basis.beta(mixing.points)  # (n_points, |L|)
        self.weights = mixing.weights
        self.n_total = None
        self._cache = {}

    def _cells(self, pattern):
        p = self.schema.check_pattern(pattern)
        return p, [self.schema.cell_index(j, p[j]) for j in support(p)]

    def _products(self, cells) -> np.ndarray:
        if not cells:
            return np.ones(len(self.weights))
        return np.prod(self.betas[:, cells], axis=1)

    def __getitem__(self, pattern) -> float:
        p, cells = self._cells(pattern)
        if p not in self._cache:
            self._cache[p] = float(self.weights @ self._products(cells))
        return self._cache[p]

    frequency = __getitem__

    def __contains__(self, pattern) -> bool:
        return True

    def count(self, pattern):
        return None

    def extension(self, pattern):
        p, cells = self._cells(pattern)
        wp = self.weights * self._products(cells)
        moments = wp @ self.betas
        in_support = np.isin(self.schema.cell_question, support(p))
        moments[in_support] = np.nan
        return moments, None

    def moment_arrays(self):
        B, w = self.betas, self.weights
        first = w @ B
        second = (B * w[:, None]).T @ B
        q = self.schema.cell_question
        second = np.where(q[:, None] == q[None, :], np.nan, second)
        return first, second

    def pair_counts(self):
        return None

    def conditional_moment(self, pattern, order) -> float:
        """``E[prod_k G_k^v_k | X = pattern]`` by direct summation."""
        p, cells = self._cells(pattern)
        order = np.asarray(order, dtype=float)
        if order.shape != (self.basis.K,):
            raise ValueError(f"order must have K={self.basis.K} entries")
        wp = self.weights * self._products(cells)
        denom = wp.sum()
        if denom == 0:
            raise UnobservedConditionError(f"pattern {p} has zero probability")
        gv = np.prod(self.mixing.points ** order, axis=1)
        return float(wp @ gv / denom)

    def table(self, patterns) -> dict:
        return {tuple(p): self[p] for p in patterns}

    def full_patterns(self):
        """All full response patterns with their exact probabilities (small J only)."""
        pats = list(itertools.product(*[range(1, L + 1) for L in self.schema.levels]))
        return pats, np.array([self[p] for p in pats])


def exact_moments(basis: Subspace, mixing, patterns=None) -> ExactMoments:
    table = ExactMoments(basis, mixing)
    for p in patterns or ():
        table[p]
    return table


def exact_conditional_moments(basis: Subspace, mixing, pattern, order) -> float:
    return ExactMoments(basis, mixing).conditional_moment(pattern, order)
