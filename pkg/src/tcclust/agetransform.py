"""Pseudo-longitudinal curves from cross-sectional data with subject ages."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import CrossSectionalMatrix, TimeCourseMatrix, TimeGrid, ValidationError
from .splines import bspline_basis, clamped_knots, divided_difference_penalty, greville

MAX_INTERIOR_KNOTS = 40
LAMBDA_GRID = np.logspace(-4, 6, 41)


def bin_by_age(data: CrossSectionalMatrix, bin_length: float) -> TimeCourseMatrix:
    """Average subjects within consecutive age bins of width ``bin_length``.

    Bins start at the youngest age and are half-open, except that the oldest
    age always falls in the last bin. Empty bins are dropped and each kept bin
    is placed at its midpoint.
    """
    if not bin_length > 0:
        raise ValidationError("bin_length must be positive")
    ages = data.ages
    a0 = float(ages.min())
    n_bins = max(1, math.ceil((float(ages.max()) - a0) / bin_length))
    idx = np.minimum(np.floor((ages - a0) / bin_length).astype(int), n_bins - 1)
    used = np.unique(idx)
    if used.size < 2:
        raise ValidationError("degenerate grid: all subjects fall in one age bin")
    cols = [data.values[:, idx == j].mean(axis=1) for j in used]
    mids = a0 + (used + 0.5) * bin_length
    return TimeCourseMatrix(TimeGrid(mids), np.column_stack(cols), data.gene_ids)


@dataclass(frozen=True)
class SplineFit:
    """Penalized cubic B-spline fit, evaluable on [knots[0], knots[-1]]."""

    knots: np.ndarray
    coefficients: np.ndarray
    penalty_lambda: float
    gcv_score: float
    degree: int = 3

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.knots[0], self.knots[-1]
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            raise ValidationError(f"evaluation points must lie in [{lo}, {hi}]")
        return bspline_basis(np.atleast_1d(x), self.knots, self.degree) @ self.coefficients


def _design(x):
    xs = np.unique(x)
    if xs.size < 4:
        raise ValidationError("need at least 4 distinct x values")
    inner = xs[1:-1]
    if inner.size > MAX_INTERIOR_KNOTS:
        inner = np.quantile(inner, np.linspace(0, 1, MAX_INTERIOR_KNOTS))
    knots = clamped_knots(xs[0], xs[-1], inner)
    return knots, bspline_basis(x, knots), divided_difference_penalty(knots)


def _penalty_basis(knots, P):
    """Columns [N | Z]: N spans lines in coefficient space, Z the penalized rest."""
    xi = greville(knots)
    N, _ = np.linalg.qr(np.column_stack([np.ones_like(xi), xi]))
    w, V = np.linalg.eigh(P)
    Vz = V[:, 2:]
    Vz = Vz - N @ (N.T @ Vz)
    return N, Vz, np.maximum(w[2:], 0.0)


class _Smoother:
    """Penalized least squares solved as an augmented problem through an SVD.

    Writing beta = N a + Z c with N spanning the penalty's null space (lines)
    keeps the solve well conditioned for any lambda, including 0 (minimum-norm
    interpolation) and very large values (least-squares line).
    """

    def __init__(self, B, knots, P):
        self.B = B
        N, Z, w = _penalty_basis(knots, P)
        self.T = np.column_stack([N, Z])
        self.BT = B @ self.T
        self.w = w

    def coefficient_map(self, lam):
        n, q = self.BT.shape
        pen = np.zeros((q - 2, q))
        pen[:, 2:] = np.diag(np.sqrt(lam * self.w))
        M = np.vstack([self.BT, pen])
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
        keep = s > s[0] * 1e-12
        U, s, Vt = U[:n, keep], s[keep], Vt[keep]
        coef_map = self.T @ (Vt.T / s) @ U.T
        return coef_map, float(np.sum(U * U))


def _gcv(rss, n, tr):
    d = n - tr
    if d <= 1e-8 * n:
        return np.inf
    return n * rss / d**2


def _fit_many(x, Y, lam=None):
    """Fit every row of Y against x; returns knots, coefficients, lambdas, gcv scores."""
    knots, B, P = _design(x)
    sm = _Smoother(B, knots, P)
    n = x.size
    lams = LAMBDA_GRID if lam is None else [float(lam)]
    best_score = np.full(Y.shape[0], np.inf)
    best_coef = np.zeros((Y.shape[0], B.shape[1]))
    best_lam = np.full(Y.shape[0], lams[0])
    for l in lams:
        M, tr = sm.coefficient_map(l)
        coef = Y @ M.T
        rss = np.sum((Y - coef @ B.T) ** 2, axis=1)
        score = np.array([_gcv(r, n, tr) for r in rss])
        take = np.ones(Y.shape[0], dtype=bool) if lam is not None else score < best_score
        best_score[take] = score[take]
        best_coef[take] = coef[take]
        best_lam[take] = l
    return knots, best_coef, best_lam, best_score


def fit_smoothing_spline(x, y, lam=None) -> SplineFit:
    """Cubic P-spline minimizing RSS + lam * roughness.

    Knots sit at the distinct x values (at most 40 interior knots). The
    roughness is the squared second divided difference of the coefficients,
    so straight lines are never penalized. With ``lam`` omitted it is chosen
    by generalized cross-validation over 41 log-spaced values in [1e-4, 1e6].
    ``lam = 0`` gives the minimum-norm interpolating fit.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValidationError("x and y must be 1-d of equal length")
    if lam is not None and lam < 0:
        raise ValidationError("lambda must be nonnegative")
    knots, coef, lams, scores = _fit_many(x, y[None, :], lam)
    return SplineFit(knots, coef[0], float(lams[0]), float(scores[0]))


def smooth_by_age(data: CrossSectionalMatrix, lam=None) -> TimeCourseMatrix:
    """Per-gene smoothing spline over age, predicted at every distinct age."""
    ages = data.ages
    try:
        knots, coef, _, _ = _fit_many(ages, data.values, lam)
    except ValidationError as exc:
        raise ValidationError(f"gene {data.gene_ids[0]!r} (all genes share the ages): {exc}")
    grid = np.unique(ages)
    pred = coef @ bspline_basis(grid, knots).T
    bad = np.flatnonzero(~np.all(np.isfinite(pred), axis=1))
    if bad.size:
        raise ValidationError(f"gene {data.gene_ids[bad[0]]!r}: spline fit is not finite")
    return TimeCourseMatrix(TimeGrid(grid), pred, data.gene_ids)


def parse_transform(text: str):
    """'bin:5' -> ('bin', 5.0); 'smooth' -> ('smooth', None)."""
    text = text.strip().lower()
    if text == "smooth":
        return "smooth", None
    if text.startswith("bin:"):
        try:
            length = float(text[4:])
        except ValueError:
            raise ValidationError(f"bad bin length in {text!r}")
        if not length > 0:
            raise ValidationError("bin length must be positive")
        return "bin", length
    raise ValidationError(f"transform must be 'bin:<years>' or 'smooth', got {text!r}")


def apply_transform(data: CrossSectionalMatrix, method: str, bin_length=None) -> TimeCourseMatrix:
    if method == "bin":
        if bin_length is None:
            raise ValidationError("binning needs a bin length")
        return bin_by_age(data, bin_length)
    if method == "smooth":
        return smooth_by_age(data)
    raise ValidationError(f"unknown transform {method!r}")


def age_trend_pvalues(data: CrossSectionalMatrix, method: str, bin_length=None) -> np.ndarray:
    """Per-gene p-value for any association of the values with age.

    For binning it is the one-way ANOVA F-test across the age bins; for
    smoothing the F-test of the GCV spline fit against a constant, with the
    smoother trace as its degrees of freedom.
    """
    Y = data.values
    n = data.n
    if method == "bin":
        if not bin_length or bin_length <= 0:
            raise ValidationError("binning needs a positive bin length")
        ages = data.ages
        a0 = float(ages.min())
        n_bins = max(1, math.ceil((float(ages.max()) - a0) / bin_length))
        idx = np.minimum(np.floor((ages - a0) / bin_length).astype(int), n_bins - 1)
        groups = [Y[:, idx == j] for j in np.unique(idx)]
        if len(groups) < 2:
            raise ValidationError("degenerate grid: all subjects fall in one age bin")
        return stats.f_oneway(*groups, axis=1).pvalue
    if method == "smooth":
        knots, B, P = _design(data.ages)
        sm = _Smoother(B, knots, P)
        _, coef, lams, _ = _fit_many(data.ages, Y)
        fitted = coef @ B.T
        rss = np.sum((Y - fitted) ** 2, axis=1)
        tss = np.sum((Y - Y.mean(axis=1, keepdims=True)) ** 2, axis=1)
        edf = np.array([sm.coefficient_map(l)[1] for l in lams])
        df1 = np.maximum(edf - 1.0, 1e-8)
        df2 = np.maximum(n - edf, 1e-8)
        with np.errstate(divide="ignore", invalid="ignore"):
            F = ((tss - rss) / df1) / (rss / df2)
        return stats.f.sf(np.maximum(F, 0.0), df1, df2)
    raise ValidationError(f"unknown transform {method!r}")
