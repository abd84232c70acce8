"""scikit-learn style wrappers: clusterers over gene rows and age transformers.

Rows of ``X`` are genes. For the clusterers the columns are time points
(pass ``times`` when they are not 0, 1, 2, ...); for the age transformers the
columns are subjects and ``ages`` is given to ``fit``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .agetransform import bin_by_age, smooth_by_age
from .bench import PipelineOptions, distance_pipeline
from .core import CrossSectionalMatrix, TimeCourseMatrix, TimeGrid, ValidationError
from .mixture import (FcmSpec, GmmSpec, MfdaSpec, fit_fcm, fit_gmm, fit_mfda, posterior_assign,
                      predict_proba)


def _time_course(X, times):
    X = check_array(X, dtype=np.float64, ensure_min_samples=2, ensure_min_features=2)
    t = np.arange(X.shape[1], dtype=float) if times is None else np.asarray(times, dtype=float)
    if t.shape != (X.shape[1],):
        raise ValidationError("times must have one entry per column of X")
    return TimeCourseMatrix(TimeGrid(t), X)


class _DistanceClustering(ClusterMixin, BaseEstimator):
    _method = None

    def __init__(self, n_clusters=5, times=None, beta=6.0, linkage="average",
                 min_module_fraction=0.04, membership_floor=0.5, membership_alpha=0.05):
        self.n_clusters = n_clusters
        self.times = times
        self.beta = beta
        self.linkage = linkage
        self.min_module_fraction = min_module_fraction
        self.membership_floor = membership_floor
        self.membership_alpha = membership_alpha

    def fit(self, X, y=None):
        tc = _time_course(X, self.times)
        opts = PipelineOptions(beta=self.beta, linkage=self.linkage,
                               min_module_fraction=self.min_module_fraction,
                               membership_floor=self.membership_floor,
                               membership_alpha=self.membership_alpha)
        part, dend, residual = distance_pipeline(tc, self._method, self.n_clusters, opts)
        self.partition_ = part
        self.labels_ = np.asarray(part.labels)
        self.dendrogram_ = dend
        self.residual_cluster_ = residual
        self.n_features_in_ = tc.m
        return self


class WGCNAClustering(_DistanceClustering):
    """Topological-overlap tree with a fixed number of clusters (last one residual)."""

    _method = "wgcna"


class DTWClustering(_DistanceClustering):
    """Average-linkage tree over DTW timing distances of mean-centred curves."""

    _method = "dtw"


class ACFClustering(_DistanceClustering):
    """The topological-overlap pipeline applied to autocorrelation features."""

    _method = "acf"


class _MixtureClustering(ClusterMixin, BaseEstimator):
    def fit(self, X, y=None):
        tc = _time_course(X, self.times)
        self.fit_ = self._fit(tc)
        part = posterior_assign(self.fit_)
        self.labels_ = np.asarray(part.labels)
        self.n_features_in_ = tc.m
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X, dtype=np.float64)
        return predict_proba(self.fit_, X)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def score(self, X, y=None):
        """Mean log-likelihood per row."""
        from scipy.special import logsumexp
        from .mixture import component_log_density
        check_is_fitted(self, "fit_")
        X = check_array(X, dtype=np.float64)
        L = component_log_density(self.fit_, X) + np.log(self.fit_.weights)
        return float(np.mean(logsumexp(L, axis=1)))

    def bic(self):
        check_is_fitted(self, "fit_")
        return self.fit_.bic


class GaussianMixtureClustering(_MixtureClustering):
    def __init__(self, n_clusters=5, covariance_model="diagonal-varying", times=None,
                 max_iter=500, tol=1e-6, n_restarts=10, random_state=0):
        self.n_clusters = n_clusters
        self.covariance_model = covariance_model
        self.times = times
        self.max_iter = max_iter
        self.tol = tol
        self.n_restarts = n_restarts
        self.random_state = random_state

    def _fit(self, tc):
        spec = GmmSpec(self.n_clusters, self.covariance_model, self.max_iter, self.tol,
                       self.n_restarts)
        return fit_gmm(tc, spec, self.random_state)


class MFDAClustering(_MixtureClustering):
    def __init__(self, n_clusters=5, n_basis=None, penalty=1.0, times=None, max_iter=500,
                 tol=1e-6, n_restarts=10, random_state=0):
        self.n_clusters = n_clusters
        self.n_basis = n_basis
        self.penalty = penalty
        self.times = times
        self.max_iter = max_iter
        self.tol = tol
        self.n_restarts = n_restarts
        self.random_state = random_state

    def _fit(self, tc):
        spec = MfdaSpec(self.n_clusters, self.n_basis, self.penalty, self.max_iter, self.tol,
                        self.n_restarts)
        return fit_mfda(tc, spec, self.random_state)


class FCMClustering(_MixtureClustering):
    def __init__(self, n_clusters=5, q=None, h=None, times=None, max_iter=500, tol=1e-6,
                 n_restarts=10, random_state=0):
        self.n_clusters = n_clusters
        self.q = q
        self.h = h
        self.times = times
        self.max_iter = max_iter
        self.tol = tol
        self.n_restarts = n_restarts
        self.random_state = random_state

    def _fit(self, tc):
        spec = FcmSpec(self.n_clusters, self.q, self.h, "diagonal", self.max_iter, self.tol,
                       self.n_restarts)
        return fit_fcm(tc, spec, self.random_state)


class _AgeTransformer(TransformerMixin, BaseEstimator):
    def fit(self, X, ages=None):
        if ages is None:
            raise ValidationError("ages are required")
        X = check_array(X, dtype=np.float64, ensure_min_features=2)
        ages = np.asarray(ages, dtype=float)
        if ages.shape != (X.shape[1],):
            raise ValidationError("need one age per column of X")
        self.ages_ = ages
        self.n_features_in_ = X.shape[1]
        self.grid_ = self._apply(X).grid.points
        return self

    def transform(self, X):
        check_is_fitted(self, "ages_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"expected {self.n_features_in_} subject columns")
        return np.asarray(self._apply(X).values)

    def fit_transform(self, X, ages=None, **fit_params):
        return self.fit(X, ages).transform(X)

    def _cs(self, X):
        return CrossSectionalMatrix(X, self.ages_)


class AgeBinner(_AgeTransformer):
    """Mean per age bin of width ``bin_length``; ``grid_`` holds the bin midpoints."""

    def __init__(self, bin_length=5.0):
        self.bin_length = bin_length

    def _apply(self, X):
        return bin_by_age(self._cs(X), self.bin_length)


class AgeSmoother(_AgeTransformer):
    """Per-gene smoothing spline over age evaluated at the distinct ages."""

    def __init__(self, lam=None):
        self.lam = lam

    def _apply(self, X):
        return smooth_by_age(self._cs(X), self.lam)
