"""scikit-learn transformers over batches of sampled one-dimensional functions.

Each row of ``X`` holds the cell values of a function on the grid
``Grid(1, L, X.shape[1])``.  Only row-wise operations fit this shape; the
atom and commutator experiments stay in their own modules.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .grid import Grid, GridFunction
from .kernels import builtin_kernel, builtin_localizer, certify_delta_kernel
from .operators import apply_localized
from .spaces import BallFamily, oscillation_report

__all__ = ["LocalizedTransform", "OscillationFeatures"]


def _grid_for(X: np.ndarray, half_width: float) -> Grid:
    try:
        return Grid(1, half_width, X.shape[1])
    except ValueError as exc:
        raise ValueError(f"rows must have a power-of-two length >= 8: {exc}") from exc


class LocalizedTransform(TransformerMixin, BaseEstimator):
    """Apply ``T_eta f = p.v. (K eta) * f`` to every row.

    Parameters
    ----------
    kernel : str
        Built-in kernel name.
    eta : str
        Built-in localizer name.
    half_width : float
        Half width ``L`` of the box the rows are sampled on.
    """

    def __init__(self, kernel="hilbert", eta="bump", half_width=8.0):
        self.kernel = kernel
        self.eta = eta
        self.half_width = half_width

    def fit(self, X, y=None):
        X = check_array(X)
        self.grid_ = _grid_for(X, self.half_width)
        self.certificate_ = certify_delta_kernel(builtin_kernel(self.kernel, 1))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        K = builtin_kernel(self.kernel, 1)
        eta = builtin_localizer(self.eta, 1)
        return np.stack([apply_localized(K, eta, GridFunction(self.grid_, row)).values for row in X])


class OscillationFeatures(TransformerMixin, BaseEstimator):
    """Row-wise oscillation summary: ``[bmo, bmo_loc, lmo_loc, large_mean]``.

    ``bmo`` uses the power ``p`` (1, 2 or 6).
    """

    feature_names = ("bmo", "bmo_loc", "lmo_loc", "large_mean")

    def __init__(self, half_width=8.0, stride=4, p=1):
        self.half_width = half_width
        self.stride = stride
        self.p = p

    def fit(self, X, y=None):
        X = check_array(X)
        self.family_ = BallFamily(_grid_for(X, self.half_width), stride=self.stride)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "family_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        g = self.family_.grid
        out = np.empty((X.shape[0], 4))
        for i, row in enumerate(X):
            rep = oscillation_report(GridFunction(g, row), self.family_, self.p)
            out[i] = (rep.value, rep.bmo_loc, rep.lmo_loc, rep.large_mean)
        return out

    def get_feature_names_out(self, input_features=None):
        return np.asarray(self.feature_names, dtype=object)
