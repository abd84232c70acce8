"""Gene-gene similarity and feature representations.

* soft-threshold adjacency, topological overlap and its dissimilarity
* dynamic time warping timing distance
* autocorrelation feature vectors
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SymmetricMatrix, TimeCourseMatrix, TimeGrid, ValidationError

_DENOM_FLOOR = 1e-12


@dataclass(frozen=True)
class AdjacencyConfig:
    beta: float = 6.0

    def __post_init__(self):
        if not self.beta >= 1:
            raise ValidationError("beta must be >= 1")


@dataclass(frozen=True)
class WarpingPath:
    """0-based aligned index pairs, from (0, 0) to (m-1, m-1)."""

    steps: tuple

    def __len__(self):
        return len(self.steps)


def _values(data):
    if isinstance(data, TimeCourseMatrix):
        return data.values, data.gene_ids
    X = np.asarray(data, dtype=float)
    return X, tuple(range(X.shape[0]))


def _check_variance(X, ids):
    sd = X.std(axis=1)
    bad = np.flatnonzero(~(sd > 0))
    if bad.size:
        raise ValidationError(f"gene {ids[bad[0]]!r} has zero variance; correlation undefined")


def correlation(X) -> np.ndarray:
    """Pearson correlation between rows, exactly symmetric with unit diagonal."""
    Xc = X - X.mean(axis=1, keepdims=True)
    Xc /= np.linalg.norm(Xc, axis=1, keepdims=True)
    C = Xc @ Xc.T
    C = 0.5 * (C + C.T)
    np.clip(C, -1.0, 1.0, out=C)
    np.fill_diagonal(C, 1.0)
    return C


def adjacency(data, cfg: AdjacencyConfig = AdjacencyConfig()) -> SymmetricMatrix:
    """Unsigned soft-threshold adjacency ((1 + cor) / 2) ** beta."""
    X, ids = _values(data)
    _check_variance(X, ids)
    A = ((1.0 + correlation(X)) / 2.0) ** cfg.beta
    np.fill_diagonal(A, 1.0)
    return SymmetricMatrix(A, kind="adjacency")


def topological_overlap(adj) -> SymmetricMatrix:
    """Topological overlap of a weighted network with entries in [0, 1].

    ``l_ih`` excludes u in {i, h}, which is what ``A0 @ A0`` gives once the
    diagonal of ``A0`` is zero.
    """
    A = np.array(adj.entries if isinstance(adj, SymmetricMatrix) else adj, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.array_equal(A, A.T):
        raise ValidationError("adjacency must be a symmetric square matrix")
    if A.size and (A.min() < 0 or A.max() > 1):
        raise ValidationError("adjacency entries must lie in [0, 1]")
    np.fill_diagonal(A, 0.0)
    L = A @ A
    L = 0.5 * (L + L.T)
    k = A.sum(axis=1)
    denom = np.minimum.outer(k, k) + 1.0 - A
    with np.errstate(divide="ignore", invalid="ignore"):
        W = np.where(denom < _DENOM_FLOOR, 0.0, (L + A) / denom)
    np.clip(W, 0.0, 1.0, out=W)
    np.fill_diagonal(W, 1.0)
    return SymmetricMatrix(W, kind="overlap")


def tom_dissimilarity(tom) -> SymmetricMatrix:
    W = tom.entries if isinstance(tom, SymmetricMatrix) else np.asarray(tom, dtype=float)
    D = 1.0 - W
    np.fill_diagonal(D, 0.0)
    return SymmetricMatrix(D, kind="distance")


def tom_distance_matrix(data, beta: float = 6.0) -> SymmetricMatrix:
    """adjacency -> overlap -> dissimilarity in one call."""
    return tom_dissimilarity(topological_overlap(adjacency(data, AdjacencyConfig(beta))))


# ---------------------------------------------------------------- DTW

# Predecessor preference on equal accumulated cost: diagonal, then (j-1, j'), then (j, j'-1).
_DIAG, _UP, _LEFT = 0, 1, 2


def _grid_points(grid, m):
    if grid is None:
        return np.arange(m, dtype=float)
    return grid.points if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)


def dtw_distance(a, b, grid=None):
    """DTW alignment of two curves and the timing distance of the optimal path.

    The path minimises the summed absolute difference of aligned values. The
    returned distance is the mean of |t_j - t_j'| over the path's cells,
    divided by the span t_m - t_1.

    Returns
    -------
    distance : float
    path : WarpingPath
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValidationError("curves must be 1-d and of equal length")
    m = a.size
    if m < 2:
        raise ValidationError("curves need at least 2 points")
    t = _grid_points(grid, m)
    if t.size != m:
        raise ValidationError("grid length does not match curve length")
    cost = np.abs(a[:, None] - b[None, :])
    D = np.full((m, m), np.inf)
    move = np.zeros((m, m), dtype=np.int8)
    D[0, 0] = cost[0, 0]
    for j in range(m):
        for h in range(m):
            if j == 0 and h == 0:
                continue
            best, arg = np.inf, -1
            for choice, (pj, ph) in ((_DIAG, (j - 1, h - 1)), (_UP, (j - 1, h)), (_LEFT, (j, h - 1))):
                if pj >= 0 and ph >= 0 and D[pj, ph] < best:
                    best, arg = D[pj, ph], choice
            D[j, h] = cost[j, h] + best
            move[j, h] = arg
    steps = [(m - 1, m - 1)]
    j = h = m - 1
    while (j, h) != (0, 0):
        mv = move[j, h]
        if mv == _DIAG:
            j, h = j - 1, h - 1
        elif mv == _UP:
            j -= 1
        else:
            h -= 1
        steps.append((j, h))
    steps.reverse()
    disp = sum(abs(t[x] - t[y]) for x, y in steps)
    span = t[-1] - t[0]
    return disp / (len(steps) * span), WarpingPath(tuple(steps))


def dtw_alignment_cost(a, b) -> float:
    """Accumulated |a_j - b_j'| along the optimal path."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _, path = dtw_distance(a, b)
    return float(sum(abs(a[x] - b[y]) for x, y in path.steps))


def _dtw_pairs(A, B, t):
    """Vectorised DTW over many curve pairs (rows of A against rows of B).

    Carries the accumulated time displacement and path length along with the
    cost so no traceback is needed; predecessor choice matches ``dtw_distance``.
    Displacement and length travel together as ``disp + 1j * length`` so one
    select moves both.
    """
    P, m = A.shape
    inf = np.full(P, np.inf)
    prev_cost = [inf] * m
    prev_state = [np.zeros(P, dtype=complex)] * m
    step = np.abs(t[:, None] - t[None, :]) + 1j
    for j in range(m):
        cur_cost, cur_state = [], []
        aj = A[:, j]
        for h in range(m):
            c = np.abs(aj - B[:, h])
            if j == 0 and h == 0:
                cur_cost.append(c)
                cur_state.append(np.full(P, step[0, 0]))
                continue
            if j > 0 and h > 0:
                # diagonal, then up, then left; a later move wins only when strictly cheaper
                better = prev_cost[h] < prev_cost[h - 1]
                best_c = np.where(better, prev_cost[h], prev_cost[h - 1])
                best_s = np.where(better, prev_state[h], prev_state[h - 1])
                better = cur_cost[h - 1] < best_c
                best_c = np.where(better, cur_cost[h - 1], best_c)
                best_s = np.where(better, cur_state[h - 1], best_s)
            elif j > 0:
                best_c, best_s = prev_cost[h], prev_state[h]
            else:
                best_c, best_s = cur_cost[h - 1], cur_state[h - 1]
            cur_cost.append(c + best_c)
            cur_state.append(best_s + step[j, h])
        prev_cost, prev_state = cur_cost, cur_state
    final = prev_state[-1]
    return final.real / (final.imag * (t[-1] - t[0]))


def dtw_matrix(data, grid=None, chunk: int = 5000, center: bool = False) -> SymmetricMatrix:
    """Pairwise DTW timing distances between all genes (zero diagonal).

    With ``center=True`` every curve has its own mean subtracted first, so
    the alignment compares shapes rather than levels.
    """
    if isinstance(data, TimeCourseMatrix):
        X, t = data.values, data.grid.points
    else:
        X = np.asarray(data, dtype=float)
        t = _grid_points(grid, X.shape[1])
    p, m = X.shape
    if m < 2:
        raise ValidationError("curves need at least 2 points")
    if center:
        X = X - X.mean(axis=1, keepdims=True)
    iu, ju = np.triu_indices(p, k=1)
    vals = np.empty(iu.size)
    for s in range(0, iu.size, chunk):
        e = s + chunk
        vals[s:e] = _dtw_pairs(X[iu[s:e]], X[ju[s:e]], t)
    D = np.zeros((p, p))
    D[iu, ju] = vals
    D[ju, iu] = vals
    return SymmetricMatrix(D, kind="distance")


# ---------------------------------------------------------------- ACF


def acf_features(data, max_lag=None) -> np.ndarray:
    """Autocorrelations at lags 1..max_lag for every gene (p x max_lag)."""
    X, ids = _values(data)
    m = X.shape[1]
    if max_lag is None:
        max_lag = m - 1
    if not 1 <= max_lag <= m - 1:
        raise ValidationError(f"max_lag must be in 1..{m - 1}")
    _check_variance(X, ids)
    Xc = X - X.mean(axis=1, keepdims=True)
    denom = np.einsum("ij,ij->i", Xc, Xc)
    out = np.empty((X.shape[0], max_lag))
    for r in range(1, max_lag + 1):
        out[:, r - 1] = np.einsum("ij,ij->i", Xc[:, r:], Xc[:, :-r]) / denom
    return out
