"""Reduced-rank spline mixture for short or sparse curves.

Cluster k has mean curve ``S (lambda0 + Lambda alpha_k)`` over a spline basis
``S`` (m x q). Every gene also carries a q-dimensional spline random effect
``gamma_i ~ N(0, D)`` with D diagonal, so all clusters share the marginal
covariance ``sigma2 I + S D S'``. The cluster coefficients are constrained to
``sum_k alpha_k = 0`` and ``Lambda' Lambda = I``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from ..core import ValidationError
from ..splines import grid_basis
from ._em import LOG_2PI, Collapse, MixtureFit, as_array, bic_value, check_common, fit_restarts

_SIGMA2_FLOOR = 1e-10


@dataclass(frozen=True)
class FcmSpec:
    K: int
    q: int = None
    h: int = None
    random_effect: str = "diagonal"
    max_iter: int = 500
    tol: float = 1e-6
    n_restarts: int = 10

    def __post_init__(self):
        if self.K < 1 or not self.tol > 0:
            raise ValidationError("K must be >= 1 and tol > 0")
        if self.random_effect != "diagonal":
            raise ValidationError("only a diagonal random-effect covariance is supported")
        if self.q is not None and self.q < 4:
            raise ValidationError("q must be >= 4 for a cubic basis")
        if self.h is not None and self.h < 1:
            raise ValidationError("h must be >= 1")


def default_q(m: int) -> int:
    return max(4, min(m - 2, 4 + m // 4))


def marginal_covariance(S, D, sigma2):
    """sigma2 I + S diag(D) S'."""
    return sigma2 * np.eye(S.shape[0]) + (S * D) @ S.T


def reparametrize(etas, h_basis=None):
    """Split cluster coefficient vectors into (lambda0, Lambda, alpha).

    Parameters
    ----------
    etas : (K, q) array
        Cluster coefficient vectors lying in an affine subspace of dimension h.
    h_basis : (q, h) array, optional
        Spanning directions of that subspace. Derived from ``etas`` if omitted.

    Returns
    -------
    lambda0 : (q,) array
    Lambda : (q, h) array with orthonormal columns
    alpha : (K, h) array whose rows sum to zero
    """
    lam0 = etas.mean(0)
    C = etas - lam0
    if h_basis is None:
        U, s, _ = np.linalg.svd(C.T, full_matrices=False)
        h_basis = U[:, : max(1, int(np.sum(s > 1e-12 * max(1.0, s.max(initial=0)))))]
    Q, _ = np.linalg.qr(h_basis)
    alpha = C @ Q
    return lam0, Q, alpha


class _Fcm:
    name = "fcm"

    def __init__(self, S, h, scale):
        self.S = S
        self.StS = S.T @ S
        self.R_chol = np.linalg.cholesky(self.StS).T  # StS = R' R
        self.h = h
        self.floor = max(_SIGMA2_FLOOR, 1e-10 * scale)
        self.regularize = False

    def min_block(self, X):
        return 2

    def penalty(self, params):
        return 0.0

    def _gamma_posterior(self, X, params):
        S, D, sigma2 = self.S, params["D"], params["sigma2"]
        Sigma = marginal_covariance(S, D, sigma2)
        cf = cho_factor(Sigma, lower=True)
        SD = S * D
        K = params["eta"].shape[0]
        gam = np.empty((X.shape[0], K, S.shape[1]))
        for k in range(K):
            W = cho_solve(cf, (X - S @ params["eta"][k]).T)  # m x p
            gam[:, k, :] = (SD.T @ W).T
        V = np.diag(D) - SD.T @ cho_solve(cf, SD)
        return gam, 0.5 * (V + V.T)

    def m_step(self, X, R, params):
        p, m = X.shape
        K = R.shape[1]
        S, q = self.S, self.S.shape[1]
        nk = R.sum(0)
        if params is None:
            gam = np.zeros((p, K, q))
            V = np.zeros((q, q))
        else:
            gam, V = self._gamma_posterior(X, params)
        # weighted least squares target per cluster, then a rank-h fit in the S'S metric
        Z = np.empty((K, m))
        for k in range(K):
            Z[k] = R[:, k] @ (X - gam[:, k, :] @ S.T) / nk[k]
        eta_ls = np.linalg.solve(self.StS, S.T @ Z.T).T
        U = eta_ls @ self.R_chol.T
        c = nk @ U / nk.sum()
        Cw = (U - c).T @ ((U - c) * nk[:, None])
        evals, evecs = np.linalg.eigh(Cw)
        E = evecs[:, ::-1][:, : self.h]
        U_fit = c + (U - c) @ E @ E.T
        eta = solve_triangular(self.R_chol, U_fit.T, lower=False).T
        basis = solve_triangular(self.R_chol, E, lower=False)
        lam0, Lam, alpha = reparametrize(eta, basis)
        eta = lam0 + alpha @ Lam.T
        means = eta @ S.T
        if params is None:
            # start: random-effect spread from within-cluster coefficient scatter
            coef = np.linalg.solve(self.StS, S.T @ X.T).T
            D = np.zeros(q)
            for k in range(K):
                D += R[:, k] @ (coef - eta[k]) ** 2
            D /= p
            fitted = coef @ S.T
            sigma2 = float(np.sum((X - fitted) ** 2) / (p * max(m - q, 1)))
            if m == q:
                sigma2 = 0.1 * float(np.mean(D)) or 1.0
        else:
            D = np.zeros(q)
            sq = 0.0
            SVSt_tr = float(np.trace(S @ V @ S.T))
            for k in range(K):
                D += R[:, k] @ gam[:, k, :] ** 2
                res = X - means[k] - gam[:, k, :] @ S.T
                sq += R[:, k] @ np.einsum("ij,ij->i", res, res)
            D = D / p + np.diag(V)
            sigma2 = float((sq + p * SVSt_tr) / (p * m))
        D = np.maximum(D, 0.0)
        if sigma2 < self.floor:
            if not self.regularize:
                raise Collapse("residual variance collapsed")
            sigma2 = self.floor
        return {"eta": eta, "lambda0": lam0, "Lambda": Lam, "alpha": alpha,
                "means": means, "D": D, "sigma2": sigma2}

    def log_density(self, X, params):
        Sigma = marginal_covariance(self.S, params["D"], params["sigma2"])
        L = np.linalg.cholesky(Sigma)
        half_logdet = np.log(np.diag(L)).sum()
        m = X.shape[1]
        out = np.empty((X.shape[0], params["means"].shape[0]))
        for k, mu in enumerate(params["means"]):
            Zs = solve_triangular(L, (X - mu).T, lower=True)
            out[:, k] = -0.5 * (m * LOG_2PI + (Zs * Zs).sum(0)) - half_logdet
        return out


def fcm_param_count(K, q, h):
    return q + (q * h - h * (h + 1) // 2) + (K - 1) * h + q + 1 + (K - 1)


def fit_fcm(data, spec: FcmSpec, seed=0, init_resp=None) -> MixtureFit:
    """EM fit of the reduced-rank spline mixture with spline random effects.

    Starts are k-means runs on the genes' least-squares basis coefficients.
    """
    X, t = as_array(data)
    check_common(X, spec.K, spec.max_iter, spec.tol, spec.n_restarts)
    p, m = X.shape
    q = default_q(m) if spec.q is None else spec.q
    if m < q:
        raise ValidationError("basis exceeds observations")
    if m < 4:
        raise ValidationError("need at least 4 time points for a cubic basis")
    h = min(q, max(spec.K - 1, 1)) if spec.h is None else spec.h
    if h > min(q, max(spec.K - 1, 1)):
        raise ValidationError("h must not exceed min(q, K - 1)")
    S, knots = grid_basis(t, q)
    scale = float(np.mean(X.var(0))) or 1.0
    model = _Fcm(S, h, scale)
    coef = np.linalg.solve(model.StS, S.T @ X.T).T @ model.R_chol.T
    params, w, R, ll, trace, rescues, it, conv, r = fit_restarts(
        model, X, spec.K, seed, spec.n_restarts, spec.max_iter, spec.tol, init_resp,
        init_space=coef)
    npar = float(fcm_param_count(spec.K, q, h))
    cov = {"sigma2": params["sigma2"], "D": params["D"]}
    extra = {"lambda0": params["lambda0"], "Lambda": params["Lambda"], "alpha": params["alpha"],
             "knots": knots, "q": q, "h": h,
             "marginal_covariance": marginal_covariance(S, params["D"], params["sigma2"])}
    return MixtureFit("fcm", spec.K, w, params["means"], cov, ll, bic_value(ll, npar, p), npar,
                      R, it, conv, tuple(trace), tuple(rescues), r, extra)
