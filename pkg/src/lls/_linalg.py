"""Small dense linear-algebra helpers shared by the fitting modules."""
from __future__ import annotations

import numpy as np
from scipy.linalg import null_space


def numerical_rank(A: np.ndarray, rtol: float = 1e-10) -> int:
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def constrained_lstsq(A, b, C, d, weights=None, rtol=1e-10):
    """Minimise ``||w * (A x - b)||`` subject to ``C x = d``.

    Uses the null-space method: the constraint is met to machine precision
    and the least-squares part only moves ``x`` inside ``null(C)``.
    Returns ``(x, rank)`` where ``rank`` is the numerical rank of the stacked
    system ``[w A; C]``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    d = np.asarray(d, dtype=float)
    n = C.shape[1]
    if A.shape[0]:
        w = np.ones(A.shape[0]) if weights is None else np.asarray(weights, dtype=float)
        Aw = A * w[:, None]
        bw = b * w
    else:
        Aw = np.zeros((0, n))
        bw = np.zeros(0)
    x_part = np.linalg.lstsq(C, d, rcond=None)[0]
    basis = null_space(C, rcond=rtol)
    if basis.shape[1] and Aw.shape[0]:
        z = np.linalg.lstsq(Aw @ basis, bw - Aw @ x_part, rcond=None)[0]
        x = x_part + basis @ z
    else:
        x = x_part
    rank = numerical_rank(np.vstack([Aw, C]) if Aw.shape[0] else C, rtol)
    return x, rank


def simplex_directions(K: int) -> np.ndarray:
    """``K`` unit vectors in ``R^(K-1)`` pointing to the vertices of a regular simplex."""
    if K < 2:
        return np.zeros((K, 0))
    E = np.eye(K) - 1.0 / K
    basis = null_space(np.ones((1, K)))  # K x (K-1), orthonormal
    dirs = E @ basis
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    # fix the sign convention so the layout does not depend on LAPACK
    signs = np.sign(dirs[0])
    signs[signs == 0] = 1.0
    return dirs * signs
