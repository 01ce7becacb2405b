"""Input checks shared by the estimator and the command line."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import SchemaMismatchError
from .ingest import Dataset
from .patterns import Schema


def infer_levels(X) -> tuple:
    """Number of levels per question as the largest observed code (at least 2)."""
    X = check_responses(X)
    return tuple(int(max(2, m)) for m in X.max(axis=0))


def check_responses(X, schema: Schema | None = None) -> np.ndarray:
    """Integer response matrix with codes ``1..L_j``; raises ``ValueError`` otherwise."""
    if isinstance(X, Dataset):
        X = X.responses
    X = check_array(X, dtype=None, ensure_min_samples=1, ensure_min_features=1)
    if not np.issubdtype(X.dtype, np.integer):
        if not np.all(np.equal(np.mod(X, 1), 0)):
            raise ValueError("responses must be integer level codes")
        X = X.astype(np.int64)
    if X.min() < 1:
        raise ValueError("level codes start at 1")
    if schema is not None:
        if X.shape[1] != schema.n_questions:
            raise SchemaMismatchError(
                f"responses have {X.shape[1]} columns, schema has J={schema.n_questions}"
            )
        over = X > np.asarray(schema.levels)
        if over.any():
            i, j = np.argwhere(over)[0]
            raise ValueError(f"row {i + 1}, column {j + 1}: level {X[i, j]} above {schema.levels[j]}")
    return X.astype(np.int64, copy=False)


def check_dataset(X, schema: Schema | None = None) -> Dataset:
    if isinstance(X, Dataset) and (schema is None or X.schema == schema):
        return X
    X = check_responses(X, schema)
    if schema is None:
        schema = Schema(tuple(int(max(2, m)) for m in X.max(axis=0)))
    return Dataset(schema, X)


def check_n_components(K, schema: Schema) -> int:
    if not isinstance(K, (int, np.integer)) or isinstance(K, bool) or K < 1:
        raise ValueError(f"n_components must be a positive integer, got {K!r}")
    if K > schema.total_levels:
        raise ValueError(f"n_components={K} exceeds |L|={schema.total_levels}")
    return int(K)
