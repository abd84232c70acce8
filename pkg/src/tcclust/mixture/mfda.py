"""Random-intercept mixture with penalized spline cluster means.

Gene i in cluster k is modelled as ``y_i = mu_k(t) + b_i 1 + e_i`` with
``b_i ~ N(0, s_k)`` and ``e_i ~ N(0, sigma2 I)``, so the marginal covariance
is the compound-symmetry matrix ``s_k 11' + sigma2 I``. Its inverse and
determinant are available in closed form, so each log-density costs O(m).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ValidationError
from ..splines import difference_penalty, grid_basis
from ._em import LOG_2PI, Collapse, MixtureFit, as_array, bic_value, check_common, fit_restarts

_SIGMA2_FLOOR = 1e-10


@dataclass(frozen=True)
class MfdaSpec:
    K: int
    n_basis: int = None
    penalty: float = 1.0
    max_iter: int = 500
    tol: float = 1e-6
    n_restarts: int = 10

    def __post_init__(self):
        if self.K < 1 or not self.tol > 0:
            raise ValidationError("K must be >= 1 and tol > 0")
        if self.penalty < 0:
            raise ValidationError("penalty must be nonnegative")
        if self.n_basis is not None and self.n_basis < 4:
            raise ValidationError("n_basis must be >= 4 for a cubic basis")


def default_n_basis(m: int) -> int:
    return min(m, 4 + m // 3)


def compound_symmetry_logpdf(Y, mean, s, sigma2):
    """Log N(y; mean, s 11' + sigma2 I) for each row of Y, in O(m) per row."""
    m = Y.shape[1]
    r = Y - mean
    rr = np.einsum("ij,ij->i", r, r)
    sr = r.sum(1)
    c = sigma2 + m * s
    quad = (rr - s * sr**2 / c) / sigma2
    logdet = (m - 1) * np.log(sigma2) + np.log(c)
    return -0.5 * (m * LOG_2PI + logdet + quad)


def compound_symmetry_logpdf_dense(Y, mean, s, sigma2):
    """Same density through an explicit m x m covariance; used as a check."""
    m = Y.shape[1]
    S = s * np.ones((m, m)) + sigma2 * np.eye(m)
    L = np.linalg.cholesky(S)
    Z = np.linalg.solve(L, (Y - mean).T)
    return -0.5 * (m * LOG_2PI + (Z * Z).sum(0)) - np.log(np.diag(L)).sum()


class _Mfda:
    name = "mfda"

    def __init__(self, B, P, lam, scale):
        self.B, self.P, self.lam = B, P, lam
        self.BtB = B.T @ B
        self.floor = max(_SIGMA2_FLOOR, 1e-10 * scale)
        self.regularize = False

    def min_block(self, X):
        return 2

    def penalty(self, params):
        beta = params["beta"]
        return 0.5 * self.lam * float(np.einsum("kq,qr,kr->", beta, self.P, beta))

    def _posterior_intercepts(self, X, params):
        # E[b_i | y_i, k] and Var[b_i | y_i, k] under the current parameters
        m = X.shape[1]
        s, sigma2 = params["s"], params["sigma2"]
        c = sigma2 + m * s
        means = params["means"]
        sr = X.sum(1)[:, None] - means.sum(1)[None, :]
        bhat = sr * (s / c)[None, :]
        v = s * sigma2 / c
        return bhat, v

    def m_step(self, X, R, params):
        p, m = X.shape
        K = R.shape[1]
        nk = R.sum(0)
        if params is None:
            bhat = np.zeros((p, K))
            v = np.zeros(K)
            sigma2 = float(np.mean(X.var(1))) or 1.0
        else:
            bhat, v = self._posterior_intercepts(X, params)
            sigma2 = params["sigma2"]
        q = self.B.shape[1]
        beta = np.empty((K, q))
        edf = np.empty(K)
        for k in range(K):
            target = R[:, k] @ (X - bhat[:, k, None])
            A = nk[k] * self.BtB + self.lam * sigma2 * self.P
            beta[k] = np.linalg.solve(A, self.B.T @ target)
            edf[k] = float(np.trace(np.linalg.solve(A, nk[k] * self.BtB)))
        means = beta @ self.B.T
        if params is None:
            # start: split residual variance into a gene-level part and white noise
            res = X[:, None, :] - means[None]
            lev = res.mean(2)
            s = np.array([R[:, k] @ lev[:, k] ** 2 / nk[k] for k in range(K)])
            within = res - lev[:, :, None]
            sigma2 = float(np.einsum("ik,ikj->", R, within**2) / (p * (m - 1) if m > 1 else p))
            s = np.maximum(s - sigma2 / m, 0.0)
        else:
            s = np.array([R[:, k] @ (bhat[:, k] ** 2 + v[k]) / nk[k] for k in range(K)])
            res = X[:, None, :] - means[None] - bhat[:, :, None]
            sq = np.einsum("ik,ikj->", R, res**2) + m * float(nk @ v)
            sigma2 = float(sq / (p * m))
        if sigma2 < self.floor:
            if not self.regularize:
                raise Collapse("residual variance collapsed")
            sigma2 = self.floor
        return {"beta": beta, "means": means, "s": s, "sigma2": sigma2, "edf": edf}

    def log_density(self, X, params):
        K = params["means"].shape[0]
        return np.column_stack([
            compound_symmetry_logpdf(X, params["means"][k], params["s"][k], params["sigma2"])
            for k in range(K)])


def fit_mfda(data, spec: MfdaSpec, seed=0, init_resp=None) -> MixtureFit:
    """Penalized EM (ECM) fit of the random-intercept spline mixture.

    The recorded trace is the penalized log-likelihood. The BIC uses the
    unpenalized log-likelihood with the smoother trace as the mean's degrees
    of freedom.
    """
    X, t = as_array(data)
    check_common(X, spec.K, spec.max_iter, spec.tol, spec.n_restarts)
    p, m = X.shape
    if m < 4:
        raise ValidationError("need at least 4 time points for a cubic basis")
    q = default_n_basis(m) if spec.n_basis is None else spec.n_basis
    if q > m:
        raise ValidationError("basis exceeds observations")
    B, knots = grid_basis(t, q)
    scale = float(np.mean(X.var(0))) or 1.0
    model = _Mfda(B, difference_penalty(q, 2), spec.penalty, scale)
    params, w, R, ll, trace, rescues, it, conv, r = fit_restarts(
        model, X, spec.K, seed, spec.n_restarts, spec.max_iter, spec.tol, init_resp)
    npar = float(params["edf"].sum()) + spec.K + 1 + (spec.K - 1)
    cov = {"intercept_variance": params["s"], "sigma2": params["sigma2"]}
    extra = {"coefficients": params["beta"], "knots": knots, "effective_df": params["edf"],
             "penalized_log_likelihood": ll - model.penalty(params)}
    return MixtureFit("mfda", spec.K, w, params["means"], cov, ll, bic_value(ll, npar, p), npar,
                      R, it, conv, tuple(trace), tuple(rescues), r, extra)
