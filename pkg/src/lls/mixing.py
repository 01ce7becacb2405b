"""Empirical mixing distribution over solved expectations, histograms and distances.

Histogram bins are left-closed and right-open, so a value exactly on an
interior edge falls in the bin to its right; the last bin also includes its
upper edge.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .exceptions import CoverageError, PreconditionError
from .solver import FullPatternEstimate

__all__ = [
    "MixingEstimate",
    "Histogram1D",
    "empirical_mixing",
    "mixing_from_full_patterns",
    "histogram",
    "mixing_moments",
    "wasserstein1_1d",
]

IN_SIMPLEX_TOL = 1e-9


@dataclass
class MixingEstimate:
    """Discrete distribution placing weight ``f_l`` at the solved point ``g_l``."""

    patterns: list
    points: np.ndarray   # (n, K)
    weights: np.ndarray  # (n,)
    counts: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("need one weight per support point")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @property
    def K(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def in_simplex(self) -> np.ndarray:
        p = self.points
        return np.all((p >= -IN_SIMPLEX_TOL) & (p <= 1 + IN_SIMPLEX_TOL), axis=1)

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        K = self.K
        buf.write("point,count,weight," + ",".join(f"g{k + 1}" for k in range(K))
                  + ",pattern,in_simplex\n")
        flags = self.in_simplex
        for i in range(len(self)):
            cnt = "" if self.counts is None else str(int(self.counts[i]))
            pat = "".join(str(int(x)) for x in self.patterns[i]) if self.patterns is not None else ""
            coords = ",".join(format(float(x), ".17g") for x in self.points[i])
            buf.write(f"{i},{cnt},{format(float(self.weights[i]), '.17g')},{coords},{pat},"
                      f"{int(flags[i])}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def empirical_mixing(solved, freq, family=None, n_observed=None) -> MixingEstimate:
    """Mixing estimate from per-pattern expectations.

    ``solved`` maps patterns to expectation vectors; ``freq`` gives ``f_l``.
    ``family`` selects the patterns (default: every key of ``solved``). When
    ``n_observed`` is given the family counts must add up to it, otherwise the
    family does not cover the data and :class:`CoverageError` is raised.
    """
    pats = list(solved) if family is None else [tuple(p) for p in family]
    missing = [p for p in pats if p not in solved]
    if missing:
        raise CoverageError(len(missing))
    counts = None
    if n_observed is not None:
        counts = np.array([freq.count(p) for p in pats], dtype=np.int64)
        uncovered = int(n_observed - counts.sum())
        if uncovered:
            raise CoverageError(uncovered)
        weights = counts / float(n_observed)
    else:
        weights = np.array([freq[p] for p in pats], dtype=float)
        total = weights.sum()
        if total <= 0:
            raise PreconditionError("pattern family has zero total weight")
        weights = weights / total
    pts = np.array([np.asarray(getattr(solved[p], "expectations", solved[p]), float) for p in pats])
    return MixingEstimate(pats, pts, weights, counts)


def mixing_from_full_patterns(est: FullPatternEstimate, n_total=None) -> MixingEstimate:
    """Default family: every observed full pattern with weight ``N_l / N``."""
    n = int(est.counts.sum())
    if n_total is not None and n_total != n:
        raise CoverageError(int(n_total) - n)
    pats = [tuple(int(x) for x in row) for row in est.patterns]
    return MixingEstimate(pats, est.points, est.counts / n, est.counts.copy())


@dataclass
class Histogram1D:
    axis: int
    edges: np.ndarray
    masses: np.ndarray
    below: float = 0.0
    above: float = 0.0

    @property
    def bins(self) -> int:
        return len(self.masses)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def out_of_range(self) -> float:
        return self.below + self.above

    def to_csv(self) -> str:
        lines = ["axis,bin_lo,bin_hi,mass"]
        for lo, hi, m in zip(self.edges[:-1], self.edges[1:], self.masses):
            lines.append(f"{self.axis + 1},{lo:.17g},{hi:.17g},{m:.17g}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "axis": self.axis + 1,
            "edges": [float(x) for x in self.edges],
            "masses": [float(x) for x in self.masses],
            "mass_below": float(self.below),
            "mass_above": float(self.above),
        }

    def to_gnuplot(self) -> str:
        """Plot data: bin centre, mass, bin width (``plot f using 1:2:3 with boxes``)."""
        lines = [f"# restored mixing, coordinate g{self.axis + 1}",
                 "# center mass width"]
        for c, m, w in zip(self.centers, self.masses, np.diff(self.edges)):
            lines.append(f"{c:.17g} {m:.17g} {w:.17g}")
        return "\n".join(lines) + "\n"


def histogram(est, axis: int = 0, bins: int = 50, lo: float = 0.0, hi: float = 1.0) -> Histogram1D:
    """Weight histogram of coordinate ``axis`` on ``bins`` uniform bins over ``[lo, hi]``.

    ``est`` is a :class:`MixingEstimate` or a ``(values, weights)`` pair.
    """
    if bins < 1:
        raise PreconditionError("bins must be at least 1")
    if not lo < hi:
        raise PreconditionError("need lo < hi")
    if isinstance(est, MixingEstimate):
        values, weights = est.points[:, axis], est.weights
    else:
        values, weights = (np.asarray(a, dtype=float) for a in est)
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.searchsorted(edges, values, side="right") - 1
    idx[values == hi] = bins - 1
    below = values < lo
    above = values > hi
    inside = ~below & ~above
    masses = np.bincount(idx[inside], weights=weights[inside], minlength=bins)
    return Histogram1D(axis, edges, masses, float(weights[below].sum()),
                       float(weights[above].sum()))


def mixing_moments(est: MixingEstimate, order) -> float:
    """``sum_i w_i prod_k g_ik^v_k``."""
    v = np.asarray(order, dtype=float)
    if v.shape != (est.K,):
        raise ValueError(f"order must have K={est.K} entries")
    return float(est.weights @ np.prod(est.points ** v, axis=1))


def _as_distribution(x):
    if isinstance(x, Histogram1D):
        return x.centers, x.masses
    if isinstance(x, MixingEstimate):
        return x.points[:, 0], x.weights
    values, weights = x
    return np.asarray(values, dtype=float).ravel(), np.asarray(weights, dtype=float).ravel()


def wasserstein1_1d(a, b) -> float:
    """1-Wasserstein distance between two weighted samples on the line.

    Each argument is a ``(values, weights)`` pair, a :class:`Histogram1D`
    (mass placed at bin centres) or a :class:`MixingEstimate` (first
    coordinate). Weights are normalised to total mass one.
    """
    xa, wa = _as_distribution(a)
    xb, wb = _as_distribution(b)
    if wa.sum() <= 0 or wb.sum() <= 0:
        raise PreconditionError("both distributions need positive total mass")
    wa = wa / wa.sum()
    wb = wb / wb.sum()
    grid = np.unique(np.concatenate([xa, xb]))
    ca = np.cumsum(np.bincount(np.searchsorted(grid, xa), weights=wa, minlength=len(grid)))
    cb = np.cumsum(np.bincount(np.searchsorted(grid, xb), weights=wb, minlength=len(grid)))
    return float(np.sum(np.abs(ca - cb)[:-1] * np.diff(grid)))
