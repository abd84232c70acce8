"""Finite Gaussian location-scale mixtures with five covariance structures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from ..core import ValidationError
from ._em import (LOG_2PI, Collapse, MixtureFit, as_array, bic_value, check_common,
                  fit_restarts)

COVARIANCE_MODELS = ("spherical-equal", "spherical-varying", "diagonal-equal",
                     "diagonal-varying", "full-varying")

# variance floor relative to the mean per-coordinate data variance
_FLOOR = 1e-8
_REG = 1e-4


@dataclass(frozen=True)
class GmmSpec:
    K: int
    covariance_model: str = "diagonal-varying"
    max_iter: int = 500
    tol: float = 1e-6
    n_restarts: int = 10

    def __post_init__(self):
        if self.covariance_model not in COVARIANCE_MODELS:
            raise ValidationError(f"covariance_model must be one of {COVARIANCE_MODELS}")
        if self.K < 1 or not self.tol > 0:
            raise ValidationError("K must be >= 1 and tol > 0")


def covariance_param_count(model: str, K: int, m: int) -> int:
    return {
        "spherical-equal": 1,
        "spherical-varying": K,
        "diagonal-equal": m,
        "diagonal-varying": K * m,
        "full-varying": K * m * (m + 1) // 2,
    }[model]


class _Gmm:
    name = "gmm"

    def __init__(self, cov_model, scale):
        self.cov_model = cov_model
        self.floor = _FLOOR * scale
        self.reg_value = _REG * scale
        self.regularize = False

    def min_block(self, X):
        return X.shape[1] + 1 if self.cov_model == "full-varying" else 2

    def penalty(self, params):
        return 0.0

    def m_step(self, X, R, params):
        p, m = X.shape
        nk = R.sum(0)
        means = (R.T @ X) / nk[:, None]
        K = nk.size
        reg = self.reg_value if self.regularize else 0.0
        cm = self.cov_model
        if cm == "full-varying":
            chols = np.empty((K, m, m))
            for k in range(K):
                D = X - means[k]
                S = (R[:, k, None] * D).T @ D / nk[k]
                S = 0.5 * (S + S.T) + reg * np.eye(m)
                try:
                    L = np.linalg.cholesky(S)
                except np.linalg.LinAlgError:
                    raise Collapse(f"component {k} covariance is singular")
                if np.min(np.diag(L)) ** 2 < self.floor:
                    raise Collapse(f"component {k} covariance collapsed")
                chols[k] = L
            return {"means": means, "chol": chols}
        sq = np.empty((K, m))
        for k in range(K):
            sq[k] = R[:, k] @ (X - means[k]) ** 2
        if cm == "diagonal-varying":
            var = sq / nk[:, None]
        elif cm == "diagonal-equal":
            var = np.broadcast_to(sq.sum(0) / p, (K, m)).copy()
        elif cm == "spherical-varying":
            var = np.repeat((sq.sum(1) / (m * nk))[:, None], m, axis=1)
        else:
            var = np.full((K, m), sq.sum() / (m * p))
        var = var + reg
        if np.min(var) < self.floor:
            raise Collapse("a component variance collapsed")
        return {"means": means, "var": var}

    def log_density(self, X, params):
        means = params["means"]
        p, m = X.shape
        K = means.shape[0]
        out = np.empty((p, K))
        if "chol" in params:
            for k in range(K):
                L = params["chol"][k]
                Z = solve_triangular(L, (X - means[k]).T, lower=True)
                out[:, k] = -0.5 * (m * LOG_2PI + (Z * Z).sum(0)) - np.log(np.diag(L)).sum()
            return out
        var = params["var"]
        for k in range(K):
            out[:, k] = -0.5 * (m * LOG_2PI + np.log(var[k]).sum()
                                + (((X - means[k]) ** 2) / var[k]).sum(1))
        return out

    def covariances(self, params):
        if "chol" in params:
            return np.einsum("kij,klj->kil", params["chol"], params["chol"])
        return np.stack([np.diag(v) for v in params["var"]])


def fit_gmm(data, spec: GmmSpec, seed=0, init_resp=None) -> MixtureFit:
    """EM fit of a K-component Gaussian mixture over gene rows.

    The best of ``spec.n_restarts`` starts (first a farthest-point k-means
    start, then k-means++ starts) is kept by final log-likelihood. A start
    whose covariance collapses is retried once with a small ridge added.
    """
    X, _ = as_array(data)
    check_common(X, spec.K, spec.max_iter, spec.tol, spec.n_restarts)
    scale = float(np.mean(X.var(0))) or 1.0
    model = _Gmm(spec.covariance_model, scale)
    params, w, R, ll, trace, rescues, it, conv, r = fit_restarts(
        model, X, spec.K, seed, spec.n_restarts, spec.max_iter, spec.tol, init_resp)
    p, m = X.shape
    npar = spec.K * m + (spec.K - 1) + covariance_param_count(spec.covariance_model, spec.K, m)
    cov = {"model": spec.covariance_model, "matrices": model.covariances(params)}
    return MixtureFit("gmm", spec.K, w, params["means"], cov, ll, bic_value(ll, npar, p), float(npar),
                      R, it, conv, tuple(trace), tuple(rescues), r)
