"""Scikit-learn style estimator wrapping the full pipeline.

``fit`` estimates the supporting subspace from the data's moment matrix and
the latent expectations of every observed response pattern; ``transform``
returns per-row expectations ``E[G | X = x]`` computed from the fitted basis
and the frequencies within the rows passed in.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .ingest import FrequencyTable
from .mixing import mixing_from_full_patterns
from .moment_matrix import build_moment_matrix
from .patterns import Schema
from .solver import MomentSolver, full_pattern_expectations
from .subspace import check_identifiability, fit_subspace
from .validation import check_dataset, check_n_components


class LinearLatentStructure(TransformerMixin, BaseEstimator):
    """Linear latent structure model for categorical responses.

    Parameters
    ----------
    n_components : int
        Dimension ``K`` of the supporting subspace.
    levels : tuple of int, optional
        Number of levels of each question. Inferred from the data when omitted.
    col_support : int
        Largest support of the moment-matrix column patterns.
    completion : {"lstsq", "exact"}
        How undefined moment-matrix entries are filled before the masked fit.
    full_pattern_method : {"pooled", "mean"}
        How the single-zero reductions of a full pattern are combined.
    """

    def __init__(self, n_components=2, levels=None, col_support=1, completion="lstsq",
                 max_iter=500, tol=1e-10, full_pattern_method="pooled"):
        self.n_components = n_components
        self.levels = levels
        self.col_support = col_support
        self.completion = completion
        self.max_iter = max_iter
        self.tol = tol
        self.full_pattern_method = full_pattern_method

    def _schema(self, X):
        if self.levels is not None:
            return Schema(tuple(int(x) for x in self.levels))
        return None

    def _fit_basis(self, source, schema):
        K = check_n_components(self.n_components, schema)
        self.schema_ = schema
        self.identifiability_ = check_identifiability(schema, K)
        self.moment_matrix_ = build_moment_matrix(source, schema, self.col_support)
        self.subspace_ = fit_subspace(self.moment_matrix_, K, completion=self.completion,
                                      max_iter=self.max_iter, tol=self.tol)
        self.components_ = self.subspace_.basis.T
        self.n_features_in_ = schema.n_questions

    def fit(self, X, y=None):
        ds = check_dataset(X, self._schema(X))
        self._fit_basis(FrequencyTable.from_dataset(ds), ds.schema)
        self.full_patterns_ = full_pattern_expectations(self.subspace_, ds,
                                                        method=self.full_pattern_method)
        self.mixing_ = mixing_from_full_patterns(self.full_patterns_, ds.n_individuals)
        return self

    def fit_moments(self, source, schema: Schema | None = None):
        """Fit the basis from a moment table (e.g. exact model moments) instead of data."""
        schema = schema or source.schema
        self._fit_basis(source, schema)
        self.solver_ = MomentSolver(self.subspace_, source)
        return self

    def transform(self, X):
        check_is_fitted(self, "subspace_")
        ds = check_dataset(X, self.schema_)
        est = full_pattern_expectations(self.subspace_, ds, method=self.full_pattern_method)
        return est.individual_points()

    def fit_transform(self, X, y=None, **fit_params):
        self.fit(X)
        return self.full_patterns_.individual_points()

    def inverse_transform(self, G):
        """Independent-distribution parameters ``beta = Lambda g`` for rows of ``G``."""
        check_is_fitted(self, "subspace_")
        return self.subspace_.beta(np.atleast_2d(np.asarray(G, dtype=float)))

    def conditional_moments(self, pattern, up_to=0):
        """Conditional moments at a (partial) pattern from the fitted tables."""
        check_is_fitted(self, "subspace_")
        return self.solver_.solve(pattern, up_to)
