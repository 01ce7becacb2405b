"""Supporting-subspace estimation, basis normalisation and identifiability bounds."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import null_space, subspace_angles
from scipy.optimize import linprog

from ._linalg import simplex_directions
from .exceptions import (
    AffineSliceError,
    BoundViolationError,
    ConvergenceError,
    DegenerateMinorError,
    PreconditionError,
    SchemaMismatchError,
)
from .moment_matrix import MomentMatrix, complete_matrix
from .patterns import Schema

__all__ = [
    "Subspace",
    "IdentifiabilityVerdict",
    "IdentifiabilityWarning",
    "check_identifiability",
    "principal_angles",
    "masked_als",
    "normalize_basis",
    "fit_subspace",
]

ROW_SUM_TOL = 1e-9


class IdentifiabilityWarning(UserWarning):
    pass


class NonnegativityWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Subspace:
    """Basis ``Lambda`` (``|L| x K``) of a subspace whose columns have unit per-question sums."""

    schema: Schema
    basis: np.ndarray
    nonnegative: bool | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        B = np.array(self.basis, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if B.shape[0] != self.schema.total_levels:
            raise SchemaMismatchError(
                f"basis has {B.shape[0]} rows, schema has |L|={self.schema.total_levels}"
            )
        s = np.linalg.svd(B, compute_uv=False)
        if s[-1] <= 1e-12 * s[0]:
            raise PreconditionError("basis columns are linearly dependent")
        sums = self.schema.block_sums(B)
        if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
            raise PreconditionError(
                f"basis columns must sum to 1 within every question "
                f"(max deviation {np.max(np.abs(sums - 1.0)):.2e})"
            )
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)
        if self.nonnegative is None:
            object.__setattr__(self, "nonnegative", bool(np.all(B >= 0)))

    @property
    def K(self) -> int:
        return self.basis.shape[1]

    def beta(self, g) -> np.ndarray:
        """Independent-distribution parameters ``Lambda g`` (rows of ``g`` if 2-d)."""
        g = np.asarray(g, dtype=float)
        return g @ self.basis.T if g.ndim == 2 else self.basis @ g

    def coordinates(self, beta) -> np.ndarray:
        """Homogeneous coordinates of the point(s) of the span closest to ``beta``."""
        beta = np.asarray(beta, dtype=float)
        single = beta.ndim == 1
        beta = np.atleast_2d(beta)
        B = self.basis
        K = self.K
        kkt = np.zeros((K + 1, K + 1))
        kkt[:K, :K] = B.T @ B
        kkt[:K, K] = 1.0
        kkt[K, :K] = 1.0
        rhs = np.hstack([beta @ B, np.ones((beta.shape[0], 1))])
        g = np.linalg.solve(kkt, rhs.T).T[:, :K]
        return g[0] if single else g

    def to_json(self) -> dict:
        return {
            "levels": list(self.schema.levels),
            "K": self.K,
            "basis": self.basis.tolist(),
            "nonnegative": bool(self.nonnegative),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, obj) -> "Subspace":
        return cls(Schema(tuple(obj["levels"])), np.asarray(obj["basis"], dtype=float),
                   obj.get("nonnegative"), obj.get("diagnostics", {}))


def _as_matrix(x) -> np.ndarray:
    return x.basis if isinstance(x, Subspace) else np.asarray(x, dtype=float)


def principal_angles(a, b) -> np.ndarray:
    """Principal angles (radians, ascending) between the column spans of ``a`` and ``b``."""
    A, B = _as_matrix(a), _as_matrix(b)
    if A.shape[0] != B.shape[0]:
        raise SchemaMismatchError("subspaces live in spaces of different dimension")
    return np.sort(subspace_angles(A, B))


# -- identifiability ------------------------------------------------------------

@dataclass(frozen=True)
class IdentifiabilityVerdict:
    K: int
    K_max: float
    identifiable: bool
    total_levels: int
    n_questions: int
    max_level: int
    completion_lhs: int
    completion_ok: bool

    @property
    def bound_formula_inputs(self):
        return (self.total_levels, self.n_questions, self.max_level)

    def to_json(self) -> dict:
        return {
            "K": self.K,
            "K_max": self.K_max,
            "identifiable": self.identifiable,
            "total_levels": self.total_levels,
            "n_questions": self.n_questions,
            "max_level": self.max_level,
            "completion_bound": f"2K+2p-1 = {self.completion_lhs} <= |L| = {self.total_levels}",
            "completion_ok": self.completion_ok,
        }

    def describe(self) -> str:
        verdict = "identifiable" if self.identifiable else "NOT identifiable"
        return (
            f"K={self.K}: bound (|L|-J)/2 - max L_j + 5/2 = "
            f"({self.total_levels}-{self.n_questions})/2 - {self.max_level} + 5/2 = "
            f"{self.K_max:g} -> {verdict}; completion bound 2K+2p-1 = "
            f"{self.completion_lhs} <= {self.total_levels}: {'ok' if self.completion_ok else 'violated'}"
        )


def check_identifiability(schema: Schema, K: int) -> IdentifiabilityVerdict:
    """Evaluate the dimension bound ``K <= (|L|-J)/2 - max L_j + 5/2`` exactly."""
    n, J, p = schema.total_levels, schema.n_questions, schema.max_level
    k_max = Fraction(n - J, 2) - p + Fraction(5, 2)
    lhs = 2 * K + 2 * p - 1
    return IdentifiabilityVerdict(
        K=int(K),
        K_max=float(k_max),
        identifiable=Fraction(K) <= k_max,
        total_levels=n,
        n_questions=J,
        max_level=p,
        completion_lhs=lhs,
        completion_ok=lhs <= n,
    )


# -- masked alternating least squares --------------------------------------------

def _grouped_solve(F: np.ndarray, R: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Solve ``(F_m^T F_m) x_c = R[:, c]`` per column ``c``; ``F_m`` drops rows where mask is False.

    Columns sharing a mask share one Gram matrix.
    """
    G_full = F.T @ F
    patterns, inverse = np.unique(mask.T, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    out = np.empty((F.shape[1], mask.shape[1]))
    for g, pat in enumerate(patterns):
        cols = np.flatnonzero(inverse == g)
        miss = ~pat
        G = G_full - F[miss].T @ F[miss] if miss.any() else G_full
        try:
            out[:, cols] = np.linalg.solve(G, R[:, cols])
        except np.linalg.LinAlgError:
            out[:, cols] = np.linalg.lstsq(G, R[:, cols], rcond=None)[0]
    return out


def masked_als(values: np.ndarray, mask: np.ndarray, K: int, init: np.ndarray,
               max_iter: int = 500, tol: float = 1e-10):
    """Rank-``K`` factorisation ``values ~ L @ W`` on the defined entries only.

    Returns ``(L, W, history)`` with ``history`` the objective after every
    sweep. Raises :class:`ConvergenceError` if the relative decrease stays at
    or above ``tol`` for ``max_iter`` sweeps.
    """
    V0 = np.where(mask, values, 0.0)
    scale = max(float(np.sum(V0 ** 2)), np.finfo(float).tiny)
    L, _ = np.linalg.qr(np.asarray(init, dtype=float)[:, :K])

    def objective(L, W):
        return float(np.sum((mask * (V0 - L @ W)) ** 2))

    W = _grouped_solve(L, L.T @ V0, mask)
    history = [objective(L, W)]
    for _ in range(max_iter):
        L = _grouped_solve(W.T, W @ V0.T, mask.T).T
        Q, R = np.linalg.qr(L)
        L, W = Q, R @ W
        W = _grouped_solve(L, L.T @ V0, mask)
        obj = objective(L, W)
        prev = history[-1]
        history.append(obj)
        if obj <= 1e-28 * scale or prev - obj < tol * prev:
            return L, W, history
    raise ConvergenceError(
        f"masked ALS did not converge in {max_iter} iterations (objective {history[-1]:.6g})",
        objective=history[-1],
    )


# -- basis normalisation ------------------------------------------------------------

def _expand(schema: Schema, per_question: np.ndarray) -> np.ndarray:
    return np.repeat(per_question, schema.levels, axis=0)


def _row_sum_projection(schema: Schema, X: np.ndarray, target: float) -> np.ndarray:
    """Shift each question block of ``X`` so it sums to ``target`` (least-norm change)."""
    sums = schema.block_sums(X)
    L = np.asarray(schema.levels, dtype=float).reshape((-1,) + (1,) * (X.ndim - 1))
    return X + _expand(schema, (target - sums) / L)


def _renormalize(schema: Schema, B: np.ndarray, multiplicative: bool) -> np.ndarray:
    if multiplicative:
        B = np.where(B < 0, 0.0, B)
        return B / _expand(schema, schema.block_sums(B))
    return _row_sum_projection(schema, B, 1.0)


def normalize_basis(raw, M: MomentMatrix | None = None, schema: Schema | None = None,
                    covariance: np.ndarray | None = None) -> Subspace:
    """Turn a spanning set into a basis whose columns sum to 1 within each question.

    The first vector is the mean column (first moments) rescaled into the
    affine slice of unit per-question sums; further directions follow the
    principal axes of the second-moment covariance inside the slice. When the
    slice meets the nonnegative polytope, each basis vector is instead the
    polytope point furthest along one vertex direction of a regular simplex
    (one linear program per vector); otherwise the covariance-scaled vectors
    are returned with ``nonnegative=False`` and a warning.
    """
    if schema is None:
        if M is None:
            raise ValueError("need a schema or a moment matrix")
        schema = M.schema
    raw = np.asarray(raw, dtype=float)
    if raw.ndim == 1:
        raw = raw[:, None]
    K = raw.shape[1]
    Uf, s, _ = np.linalg.svd(raw, full_matrices=False)
    if s[-1] <= 1e-12 * s[0]:
        raise PreconditionError("spanning set is rank deficient")
    U = Uf[:, :K]
    c = schema.block_sums(U).mean(axis=0)  # average per-question sum, as a functional on coords
    if np.linalg.norm(c) < 1e-12:
        raise AffineSliceError("span has no vector with unit per-question sums")

    if M is not None:
        m = M.first_moments
        a_m = U.T @ m
        s_m = float(c @ a_m)
    else:
        s_m = 0.0
    if abs(s_m) > 1e-8 * np.linalg.norm(c):
        a1 = a_m / s_m
    else:
        a1 = c / (c @ c)
    v0 = _row_sum_projection(schema, U @ a1, 1.0)
    diagnostics = {}
    if K == 1:
        basis = _renormalize(schema, v0[:, None], multiplicative=bool(np.all(v0 >= 0)))
        return Subspace(schema, basis, diagnostics=diagnostics)

    Z = null_space(c[None, :])  # K x (K-1)
    if covariance is None and M is not None and M.values.shape[1] >= 1 + schema.total_levels:
        n = schema.total_levels
        S2 = M.filled(0.0)[:, 1:1 + n]
        S2 = 0.5 * (S2 + S2.T)
        covariance = S2 - np.outer(M.first_moments, M.first_moments)
    if covariance is not None:
        B = Z.T @ (U.T @ covariance @ U) @ Z
        evals, evecs = np.linalg.eigh(0.5 * (B + B.T))
        order = np.argsort(-evals, kind="stable")
        evals, E = evals[order], evecs[:, order]
    else:
        evals, E = np.ones(K - 1), np.eye(K - 1)
    Vdir = _row_sum_projection(schema, U @ Z @ E, 0.0)
    # fix signs so the output does not depend on the SVD/null-space conventions
    idx = np.argmax(np.abs(Vdir), axis=0)
    Vdir = Vdir * np.sign(Vdir[idx, np.arange(Vdir.shape[1])])
    dirs = simplex_directions(K)

    basis = None
    lp_points = []
    for d in dirs:
        res = linprog(-d, A_ub=-Vdir, b_ub=v0, bounds=[(None, None)] * (K - 1), method="highs")
        if res.status != 0:
            break
        lp_points.append(res.x)
    if len(lp_points) == K:
        cand = v0[:, None] + Vdir @ np.array(lp_points).T
        sv = np.linalg.svd(cand, compute_uv=False)
        if sv[-1] > 1e-8 * sv[0]:
            basis = _renormalize(schema, cand, multiplicative=True)
            diagnostics["basis_rule"] = "polytope-vertices"
    if basis is None:
        scales = 2.0 * np.sqrt(np.clip(evals, 0.0, None))
        scales[scales == 0] = 1.0
        cand = v0[:, None] + Vdir @ (dirs * scales).T
        basis = _renormalize(schema, cand, multiplicative=False)
        diagnostics["basis_rule"] = "principal-axes"
        if not np.all(basis >= 0):
            warnings.warn("no nonnegative basis found inside the span; basis obeys "
                          "the per-question sum constraint only", NonnegativityWarning,
                          stacklevel=2)
    return Subspace(schema, basis, diagnostics=diagnostics)


# -- fitting ---------------------------------------------------------------------------

def fit_subspace(M: MomentMatrix, K: int, completion: str = "lstsq",
                 max_iter: int = 500, tol: float = 1e-10) -> Subspace:
    """Estimate a ``K``-dimensional supporting subspace from an incomplete moment matrix.

    Fills the undefined entries by rank-``K`` completion, seeds a masked
    alternating-least-squares fit with the top-``K`` singular vectors of the
    completed matrix, and normalises the resulting span.
    """
    if K < 1:
        raise PreconditionError("K must be at least 1")
    schema = M.schema
    if K > int(M.mask.any(axis=1).sum()):
        raise PreconditionError(f"K={K} exceeds the number of defined rows")
    verdict = check_identifiability(schema, K)
    if not verdict.identifiable:
        warnings.warn(verdict.describe(), IdentifiabilityWarning, stacklevel=2)
    diagnostics = {}
    try:
        completed, report = complete_matrix(M, K, mode=completion)
        diagnostics["completion"] = report.to_json()
    except (BoundViolationError, DegenerateMinorError) as exc:
        warnings.warn(f"completion skipped ({exc}); seeding from zero-filled matrix",
                      stacklevel=2)
        completed = None
    seed_matrix = completed.values if completed is not None else M.filled(0.0)
    U0 = np.linalg.svd(seed_matrix, full_matrices=False)[0][:, :K]
    L, W, history = masked_als(M.values, M.mask, K, U0, max_iter=max_iter, tol=tol)
    diagnostics.update({
        "objective": history[-1],
        "n_iter": len(history) - 1,
        "rms_residual": float(np.sqrt(history[-1] / max(M.mask.sum(), 1))),
    })
    if completed is None:
        recon = L @ W
        completed = M.replace(np.where(M.mask, M.values, recon), np.ones_like(M.mask))
    sub = normalize_basis(L, completed)
    diag = dict(sub.diagnostics)
    diag.update(diagnostics)
    diag["history"] = history
    return Subspace(schema, sub.basis, sub.nonnegative, diag)
