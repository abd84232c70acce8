"""Model-based clustering: Gaussian, random-intercept spline and reduced-rank spline mixtures."""
from __future__ import annotations

import numpy as np
from scipy.stats import multivariate_normal

from ..core import ValidationError, derive_seed
from ._em import Collapse, FitError, MixtureFit, bic_value, e_step, posterior_assign
from .fcm import FcmSpec, fit_fcm
from .gmm import COVARIANCE_MODELS, GmmSpec, fit_gmm
from .mfda import MfdaSpec, compound_symmetry_logpdf, compound_symmetry_logpdf_dense, fit_mfda

FAMILIES = ("gmm", "mfda", "fcm")

__all__ = [
    "COVARIANCE_MODELS", "FAMILIES", "Collapse", "FcmSpec", "FitError", "GmmSpec", "MfdaSpec",
    "MixtureFit", "bic_value", "component_log_density", "compound_symmetry_logpdf",
    "compound_symmetry_logpdf_dense", "fit_best_gmm", "fit_fcm", "fit_gmm", "fit_mfda",
    "posterior_assign", "predict_proba", "select_k_bic",
]


def _candidates(family, K, options):
    if family == "gmm":
        models = options.get("covariance_models", COVARIANCE_MODELS)
        base = {k: v for k, v in options.items() if k != "covariance_models"}
        return [(m, fit_gmm, GmmSpec(K, covariance_model=m, **base)) for m in models]
    if family == "mfda":
        return [("mfda", fit_mfda, MfdaSpec(K, **options))]
    if family == "fcm":
        return [("fcm", fit_fcm, FcmSpec(K, **options))]
    raise ValidationError(f"family must be one of {FAMILIES}")


def select_k_bic(data, family: str, K_range, seed=0, **options):
    """Fit every K in ``K_range`` (and every covariance model for ``gmm``).

    Returns the fit with the smallest BIC and a table with one row per
    attempted fit. Failed fits appear in the table with their error message
    and no BIC.
    """
    K_range = list(K_range)
    if not K_range:
        raise ValidationError("K_range must be nonempty")
    best, table = None, []
    for K in K_range:
        for name, fn, spec in _candidates(family, K, options):
            row = {"K": int(K), "model": name}
            try:
                fit = fn(data, spec, seed=derive_seed(seed, K))
            except (FitError, ValidationError, np.linalg.LinAlgError) as exc:
                row.update(bic=None, log_likelihood=None, n_params=None, error=str(exc))
                table.append(row)
                continue
            row.update(bic=fit.bic, log_likelihood=fit.log_likelihood, n_params=fit.n_params,
                       error=None)
            table.append(row)
            if best is None or fit.bic < best.bic:
                best = fit
    if best is None:
        raise FitError("every candidate fit failed")
    return best, table


def fit_best_gmm(data, K, seed=0, covariance_models=COVARIANCE_MODELS, **options):
    """GMM at fixed K with the covariance structure chosen by BIC."""
    fit, _ = select_k_bic(data, "gmm", [K], seed=seed, covariance_models=covariance_models,
                          **options)
    return fit


def component_log_density(fit: MixtureFit, X) -> np.ndarray:
    """p x K log-densities of new rows under each fitted component."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != fit.means.shape[1]:
        raise ValidationError(f"expected rows of length {fit.means.shape[1]}")
    if fit.model == "gmm":
        covs = fit.covariance["matrices"]
        return np.column_stack([multivariate_normal(mu, C).logpdf(X).reshape(-1)
                                for mu, C in zip(fit.means, covs)])
    if fit.model == "mfda":
        s, sigma2 = fit.covariance["intercept_variance"], fit.covariance["sigma2"]
        return np.column_stack([compound_symmetry_logpdf(X, mu, sk, sigma2)
                                for mu, sk in zip(fit.means, s)])
    if fit.model == "fcm":
        C = fit.extra["marginal_covariance"]
        return np.column_stack([multivariate_normal(mu, C).logpdf(X).reshape(-1) for mu in fit.means])
    raise ValidationError(f"unknown model {fit.model!r}")


def predict_proba(fit: MixtureFit, X) -> np.ndarray:
    """Posterior membership probabilities of new rows."""
    return e_step(component_log_density(fit, X), np.asarray(fit.weights))[0]
