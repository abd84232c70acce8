"""EM driver, initialisation and result container shared by the three mixtures."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ..core import Partition, TimeCourseMatrix, ValidationError, make_rng

LOG_2PI = math.log(2 * math.pi)


class FitError(RuntimeError):
    """Every restart of a mixture fit failed."""


class Collapse(FloatingPointError):
    """A component's covariance fell below the variance floor."""


@dataclass(frozen=True)
class MixtureFit:
    """A fitted mixture.

    ``trace`` holds the objective after every E-step. For plain likelihood
    models it is the observed-data log-likelihood; for penalized models it
    is the penalized log-likelihood, which is what EM increases. ``rescues``
    lists trace positions at which a degenerate component was reseeded; the
    trace is only monotone between those positions.
    """

    model: str
    K: int
    weights: np.ndarray
    means: np.ndarray
    covariance: dict
    log_likelihood: float
    bic: float
    n_params: float
    posteriors: np.ndarray
    n_iter: int
    converged: bool
    trace: tuple = ()
    rescues: tuple = ()
    restart: int = 0
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, dict):
                return {k: conv(x) for k, x in v.items()}
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v

        return {
            "model": self.model, "K": self.K, "weights": conv(self.weights),
            "means": conv(self.means), "covariance": conv(self.covariance),
            "log_likelihood": self.log_likelihood, "bic": self.bic, "n_params": self.n_params,
            "n_iter": self.n_iter, "converged": self.converged, "trace": list(self.trace),
            "rescues": list(self.rescues), "restart": self.restart, "extra": conv(self.extra),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_dict(), **kw)


def bic_value(loglik: float, n_params: float, p: int) -> float:
    return -2.0 * loglik + n_params * math.log(p)


def as_array(data):
    if isinstance(data, TimeCourseMatrix):
        return np.asarray(data.values, dtype=float), data.grid.points
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValidationError("data must be a p x m matrix")
    if not np.all(np.isfinite(X)):
        raise ValidationError("data contain non-finite values")
    return X, np.arange(X.shape[1], dtype=float)


def check_common(X, K, max_iter, tol, n_restarts):
    if K < 1:
        raise ValidationError("K must be >= 1")
    if X.shape[0] <= K:
        raise ValidationError(f"need more genes ({X.shape[0]}) than clusters ({K})")
    if not tol > 0:
        raise ValidationError("tol must be positive")
    if max_iter < 1 or n_restarts < 1:
        raise ValidationError("max_iter and n_restarts must be >= 1")


# ---------------------------------------------------------------- initialisation


def _lloyd(Z, centers, n_iter=50):
    for _ in range(n_iter):
        d = ((Z[:, None, :] - centers[None]) ** 2).sum(-1)
        lab = d.argmin(1)
        new = centers.copy()
        for k in range(centers.shape[0]):
            sel = lab == k
            if sel.any():
                new[k] = Z[sel].mean(0)
        if np.allclose(new, centers):
            break
        centers = new
    d = ((Z[:, None, :] - centers[None]) ** 2).sum(-1)
    return d.argmin(1)


def seed_labels(Z, K, rng, farthest: bool) -> np.ndarray:
    """k-means labels from a farthest-point or a k-means++ start."""
    p = Z.shape[0]
    centers = [Z[rng.integers(p)]]
    d2 = ((Z - centers[0]) ** 2).sum(1)
    for _ in range(1, K):
        if farthest:
            idx = int(np.argmax(d2))
        else:
            tot = d2.sum()
            idx = int(rng.choice(p, p=d2 / tot)) if tot > 0 else int(rng.integers(p))
        centers.append(Z[idx])
        d2 = np.minimum(d2, ((Z - Z[idx]) ** 2).sum(1))
    lab = _lloyd(Z, np.array(centers))
    # make every component nonempty so the first M-step is defined
    counts = np.bincount(lab, minlength=K)
    for k in np.flatnonzero(counts == 0):
        big = int(np.argmax(np.bincount(lab, minlength=K)))
        donors = np.flatnonzero(lab == big)
        lab[donors[: max(1, donors.size // 2)]] = k
    return lab


def hard_resp(labels, K):
    R = np.zeros((labels.size, K))
    R[np.arange(labels.size), labels] = 1.0
    return R


# ---------------------------------------------------------------- EM loop


def e_step(logdens, weights):
    with np.errstate(divide="ignore"):
        lw = np.log(weights)
    L = logdens + lw
    lse = logsumexp(L, axis=1)
    R = np.exp(L - lse[:, None])
    R /= R.sum(1, keepdims=True)
    return R, float(lse.sum()), lse


def run_em(model, X, resp0, max_iter, tol):
    """Generic (E)CM loop. ``model`` supplies m_step, log_density, penalty, n_params."""
    p, K = resp0.shape
    min_block = max(model.min_block(X), 2)
    params = model.m_step(X, resp0, None)
    weights = resp0.sum(0) / p
    trace, rescues = [], []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        R, ll, lse = e_step(model.log_density(X, params), weights)
        trace.append(ll - model.penalty(params))
        if len(trace) > 1 and (len(rescues) == 0 or rescues[-1] != len(trace) - 2):
            if abs(trace[-1] - trace[-2]) <= tol * abs(trace[-1]):
                converged = True
                break
        nk = R.sum(0)
        bad = np.flatnonzero(nk < 1.0)
        if bad.size:
            # reseed each starving component from the worst-fit genes
            order = np.argsort(lse)
            pos = 0
            for k in bad:
                block = order[pos: pos + min_block]
                pos += min_block
                R[block] = 0.0
                R[block, k] = 1.0
            rescues.append(len(trace) - 1)
            nk = R.sum(0)
        weights = nk / p
        params = model.m_step(X, R, params)
    R, ll, _ = e_step(model.log_density(X, params), weights)
    return params, weights, R, ll, trace, rescues, it, converged


def fit_restarts(model, X, K, seed, n_restarts, max_iter, tol, init_resp=None, init_space=None):
    """Best-of-restarts fit; returns (params, weights, R, ll, trace, rescues, it, conv, restart)."""
    rng = make_rng(seed)
    Z = X if init_space is None else init_space
    starts = []
    if init_resp is not None:
        R0 = np.asarray(init_resp, dtype=float)
        if R0.shape != (X.shape[0], K):
            raise ValidationError("init_resp must be p x K")
        starts.append(R0 / R0.sum(1, keepdims=True))
    else:
        for r in range(n_restarts):
            starts.append(hard_resp(seed_labels(Z, K, rng, farthest=(r == 0)), K))
    best, errors = None, []
    for r, R0 in enumerate(starts):
        for reg in (False, True):
            model.regularize = reg
            try:
                res = run_em(model, X, R0, max_iter, tol)
            except (Collapse, np.linalg.LinAlgError) as exc:
                errors.append(f"restart {r}{' (regularized)' if reg else ''}: {exc}")
                continue
            if best is None or res[3] > best[3]:
                best = res + (r,)
            break
    model.regularize = False
    if best is None:
        raise FitError("all restarts collapsed: " + "; ".join(errors[:4]))
    if not best[7]:
        warnings.warn(f"{model.name} EM did not converge in {max_iter} iterations", RuntimeWarning)
    return best


def posterior_assign(fit: MixtureFit) -> Partition:
    """Maximum-posterior labels (ties to the lowest index), posteriors attached.

    Components that own no gene are dropped and the remaining ones relabelled
    in order; their posterior columns are renormalised. ``Partition.K`` then
    reports the number of nonempty clusters.
    """
    P = np.asarray(fit.posteriors, dtype=float)
    lab = np.argmax(P, axis=1)
    used = np.unique(lab)
    if used.size == P.shape[1]:
        return Partition(lab, fit.K, P)
    remap = np.full(P.shape[1], -1)
    remap[used] = np.arange(used.size)
    sub = P[:, used]
    sub = sub / sub.sum(1, keepdims=True)
    return Partition(remap[lab], used.size, sub)
