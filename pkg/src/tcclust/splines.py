"""Cubic B-spline bases and difference penalties shared by smoothing and mixtures."""
from __future__ import annotations

import numpy as np
from scipy.interpolate import BSpline


def clamped_knots(lo: float, hi: float, interior, degree: int = 3) -> np.ndarray:
    interior = np.asarray(interior, dtype=float)
    return np.concatenate([np.repeat(lo, degree + 1), interior, np.repeat(hi, degree + 1)])


def interior_knots(x, n_basis: int, degree: int = 3) -> np.ndarray:
    """Interior knots at quantiles of the distinct x values."""
    n_int = n_basis - degree - 1
    if n_int <= 0:
        return np.empty(0)
    xs = np.unique(x)
    q = np.linspace(0, 1, n_int + 2)[1:-1]
    return np.quantile(xs, q)


def bspline_basis(x, knots, degree: int = 3) -> np.ndarray:
    """Dense design matrix (len(x) x n_basis); x must lie in [knots[0], knots[-1]]."""
    x = np.asarray(x, dtype=float)
    lo, hi = knots[degree], knots[-degree - 1]
    x = np.clip(x, lo, hi)
    return BSpline.design_matrix(x, knots, degree, extrapolate=False).toarray()


def difference_penalty(n_basis: int, order: int = 2) -> np.ndarray:
    if n_basis <= order:
        return np.zeros((n_basis, n_basis))
    Dm = np.diff(np.eye(n_basis), n=order, axis=0)
    return Dm.T @ Dm


def grid_basis(t, n_basis: int, degree: int = 3):
    """Basis on grid t with n_basis functions (n_basis >= degree + 1)."""
    t = np.asarray(t, dtype=float)
    knots = clamped_knots(t[0], t[-1], interior_knots(t, n_basis, degree), degree)
    return bspline_basis(t, knots, degree), knots


def greville(knots, degree: int = 3) -> np.ndarray:
    n_basis = len(knots) - degree - 1
    return np.array([np.mean(knots[j + 1: j + degree + 1]) for j in range(n_basis)])


def divided_difference_penalty(knots, degree: int = 3) -> np.ndarray:
    """Second divided differences of the coefficients over the Greville abscissae.

    The coefficients of a straight line are linear in the Greville abscissae,
    so lines lie exactly in the penalty's null space even for uneven knots.
    """
    xi = greville(knots, degree)
    n = xi.size
    if n < 3:
        return np.zeros((n, n))
    D1 = np.diff(np.eye(n), axis=0) / np.diff(xi)[:, None]
    D2 = np.diff(D1, axis=0) / ((xi[2:] - xi[:-2]) / 2.0)[:, None]
    return D2.T @ D2
