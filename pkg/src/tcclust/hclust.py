"""Agglomerative clustering over a precomputed distance, tree cuts and eigengenes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import Partition, SymmetricMatrix, TimeCourseMatrix, ValidationError

LINKAGES = ("average", "complete", "single")


@dataclass(frozen=True)
class Dendrogram:
    """Merge history in scipy linkage layout.

    ``merges[s] = (left, right, height, size)``; ids below ``n_leaves`` are
    leaves, id ``n_leaves + s`` is the cluster created by merge ``s``.
    """

    merges: np.ndarray
    n_leaves: int

    @property
    def heights(self) -> np.ndarray:
        return self.merges[:, 2]

    def leaf_order(self) -> list:
        p = self.n_leaves
        if p == 1:
            return [0]
        order = []
        stack = [p + len(self.merges) - 1]
        while stack:
            node = stack.pop()
            if node < p:
                order.append(node)
            else:
                left, right = self.merges[node - p, :2].astype(int)
                stack.append(right)
                stack.append(left)
        return order

    def to_newick(self, labels=None) -> str:
        p = self.n_leaves
        names = [str(i) for i in range(p)] if labels is None else [str(x) for x in labels]
        height = np.zeros(p + len(self.merges))
        height[p:] = self.heights

        def render(node, parent_h):
            bl = parent_h - height[node]
            if node < p:
                return f"{names[node]}:{bl:.6g}"
            left, right = self.merges[node - p, :2].astype(int)
            return f"({render(left, height[node])},{render(right, height[node])}):{bl:.6g}"

        root = p + len(self.merges) - 1
        return render(root, height[root]) + ";"


def _lance_williams(linkage, d_i, d_j, n_i, n_j):
    if linkage == "average":
        return (n_i * d_i + n_j * d_j) / (n_i + n_j)
    if linkage == "complete":
        return np.maximum(d_i, d_j)
    return np.minimum(d_i, d_j)


def agglomerate(dist, linkage: str = "average") -> Dendrogram:
    """Lance-Williams agglomeration of a distance matrix.

    Ties are resolved in favour of the pair (i, j), i < j, that is smallest in
    lexicographic order of current row/column positions. A per-row cache of
    the nearest higher-indexed neighbour keeps each merge close to O(p).
    """
    if linkage not in LINKAGES:
        raise ValidationError(f"linkage must be one of {LINKAGES}")
    D = np.array(dist.entries if isinstance(dist, SymmetricMatrix) else dist, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValidationError("distance must be a square matrix")
    p = D.shape[0]
    if p < 2:
        raise ValidationError("need at least 2 items to agglomerate")
    if not np.array_equal(D, D.T):
        raise ValidationError("distance matrix must be symmetric")
    if np.any(np.diag(D) != 0):
        raise ValidationError("distance matrix must have a zero diagonal")

    Dfull = D
    np.fill_diagonal(Dfull, np.inf)
    active = np.ones(p, dtype=bool)
    sizes = np.ones(p)
    node = np.arange(p)
    row_min = np.full(p, np.inf)
    row_arg = np.full(p, -1)

    def refresh(r):
        cols = Dfull[r, r + 1:]
        if cols.size:
            c = int(np.argmin(cols))
            row_min[r], row_arg[r] = cols[c], r + 1 + c
        else:
            row_min[r], row_arg[r] = np.inf, -1

    for r in range(p):
        refresh(r)

    merges = np.empty((p - 1, 4))
    for s in range(p - 1):
        i = int(np.argmin(row_min))
        j = int(row_arg[i])
        h = row_min[i]
        merges[s] = (min(node[i], node[j]), max(node[i], node[j]), h, sizes[i] + sizes[j])

        new = _lance_williams(linkage, Dfull[i], Dfull[j], sizes[i], sizes[j])
        new[~active] = np.inf
        new[i] = new[j] = np.inf
        Dfull[i, :] = new
        Dfull[:, i] = new
        Dfull[j, :] = np.inf
        Dfull[:, j] = np.inf
        active[j] = False
        sizes[i] += sizes[j]
        node[i] = p + s
        row_min[j], row_arg[j] = np.inf, -1
        refresh(i)

        lower = np.flatnonzero(active[:i])
        if lower.size:
            stale = (row_arg[lower] == i) | (row_arg[lower] == j)
            for r in lower[stale]:
                refresh(r)
            rest = lower[~stale]
            vals = Dfull[rest, i]
            take = (vals < row_min[rest]) | ((vals == row_min[rest]) & (i < row_arg[rest]))
            row_min[rest[take]] = vals[take]
            row_arg[rest[take]] = i
        middle = np.flatnonzero(active[i + 1:j]) + i + 1
        for r in middle[row_arg[middle] == j]:
            refresh(r)
    return Dendrogram(merges, p)


def cut_k(dend: Dendrogram, K: int) -> Partition:
    """Partition into K clusters by undoing the last K-1 merges.

    Labels follow the order in which clusters first appear along the leaf order.
    """
    p = dend.n_leaves
    if not 1 <= K <= p:
        raise ValidationError(f"K must be in 1..{p}")
    parent = list(range(2 * p - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s in range(p - K):
        left, right = dend.merges[s, :2].astype(int)
        parent[find(left)] = p + s
        parent[find(right)] = p + s
    roots = np.array([find(i) for i in range(p)])
    labels = np.empty(p, dtype=np.int64)
    seen = {}
    for leaf in dend.leaf_order():
        r = roots[leaf]
        if r not in seen:
            seen[r] = len(seen)
        labels[leaf] = seen[r]
    return Partition(labels, K)


def cluster_distance(dist, K: int, linkage: str = "average") -> Partition:
    return cut_k(agglomerate(dist, linkage), K)


@dataclass(frozen=True)
class Eigengene:
    curve: np.ndarray
    explained_variance_ratio: float
    loadings: np.ndarray


def _standardize_rows(X):
    Xc = X - X.mean(axis=1, keepdims=True)
    sd = X.std(axis=1, ddof=1, keepdims=True) if X.shape[1] > 1 else np.ones((X.shape[0], 1))
    sd[sd == 0] = 1.0
    return Xc / sd


def eigengene(data, part: Partition, k: int) -> Eigengene:
    """First principal component of a cluster's standardized rows, as a time curve.

    The curve is the component score over time points (s1 * u1). Its sign makes
    it non-negatively correlated with the cluster's mean standardized profile;
    when that correlation is zero or undefined the first member's loading is
    made positive instead.
    """
    X = data.values if isinstance(data, TimeCourseMatrix) else np.asarray(data, dtype=float)
    idx = part.members(k)
    if idx.size == 0:
        raise ValidationError(f"cluster {k} is empty")
    Z = _standardize_rows(X[idx])
    U, s, Vt = np.linalg.svd(Z.T, full_matrices=False)
    curve = U[:, 0] * s[0]
    load = Vt[0].copy()
    total = float(np.sum(s**2))
    ratio = float(s[0] ** 2 / total) if total > 0 else 1.0
    mean_curve = Z.mean(axis=0)
    sign = 0.0
    if np.std(mean_curve) > 1e-12 and np.std(curve) > 1e-12:
        c = np.corrcoef(curve, mean_curve)[0, 1]
        if abs(c) > 1e-12:
            sign = np.sign(c)
    if sign == 0.0:
        sign = 1.0 if load[0] >= 0 else -1.0
    return Eigengene(sign * curve, min(max(ratio, 0.0), 1.0), sign * load)


# ---------------------------------------------------------------- module cut


def _leaves(dend: Dendrogram, node: int) -> list:
    p = dend.n_leaves
    out, stack = [], [node]
    while stack:
        x = stack.pop()
        if x < p:
            out.append(x)
        else:
            stack.extend(dend.merges[x - p, :2].astype(int))
    return out


def cut_modules(dend: Dendrogram, K: int, min_size: int):
    """K-1 modules of at least ``min_size`` genes plus one residual cluster.

    Merges are undone from the top. The first time the branches hold
    exactly K-1 branches of size >= ``min_size`` plus some smaller ones, the
    large branches become modules and all small branches are pooled into the
    residual cluster. If the count of large branches reaches K with no small
    branch, those K branches are returned and there is no residual. Falls
    back to ``cut_k`` when neither state occurs.

    Returns
    -------
    part : Partition
        Modules are labelled by first appearance in leaf order; the residual
        cluster, if any, has label K-1.
    residual : int or None
    """
    p = dend.n_leaves
    if not 1 <= K <= p:
        raise ValidationError(f"K must be in 1..{p}")
    if min_size < 1:
        raise ValidationError("min_size must be >= 1")

    def size(node):
        return 1 if node < p else int(dend.merges[node - p, 3])

    current = {2 * p - 2} if p > 1 else {0}
    big = sum(size(n) >= min_size for n in current)
    small = len(current) - big
    found = None
    for s in range(p - 2, -2, -1):
        if big + (small > 0) == K:
            found = set(current)
            break
        if s < 0:
            break
        node = p + s
        current.remove(node)
        if size(node) >= min_size:
            big -= 1
        else:
            small -= 1
        for child in dend.merges[s, :2].astype(int):
            current.add(int(child))
            if size(child) >= min_size:
                big += 1
            else:
                small += 1
    if found is None:
        return cut_k(dend, K), None
    labels = np.full(p, -1, dtype=np.int64)
    modules = [n for n in found if size(n) >= min_size]
    owner = {}
    for n in modules:
        for leaf in _leaves(dend, n):
            owner[leaf] = n
    seen = {}
    for leaf in dend.leaf_order():
        n = owner.get(leaf)
        if n is not None:
            if n not in seen:
                seen[n] = len(seen)
            labels[leaf] = seen[n]
    residual = None
    if np.any(labels < 0):
        residual = len(modules)
        labels[labels < 0] = residual
    return Partition(labels, K), residual


def membership_threshold(m: int, floor: float = 0.5, alpha: float = 0.05) -> float:
    """max(floor, one-sided critical Pearson r at level alpha for m points)."""
    if m < 3:
        return floor
    tq = stats.t.ppf(1 - alpha, m - 2)
    return max(floor, float(tq / np.sqrt(m - 2 + tq**2)))


def module_membership(data, part: Partition, k: int) -> np.ndarray:
    """Correlation of every member of cluster k with the cluster's eigengene."""
    X = data.values if isinstance(data, TimeCourseMatrix) else np.asarray(data, dtype=float)
    idx = part.members(k)
    e = eigengene(X, part, k).curve
    Xc = X[idx] - X[idx].mean(axis=1, keepdims=True)
    ec = e - e.mean()
    den = np.linalg.norm(Xc, axis=1) * np.linalg.norm(ec)
    with np.errstate(invalid="ignore", divide="ignore"):
        kme = np.where(den > 0, Xc @ ec / den, 0.0)
    return kme


def least_coherent_cluster(data, part: Partition) -> int:
    """Cluster with the lowest mean pairwise correlation among its members.

    Singleton clusters count as perfectly coherent; ties go to the lowest label.
    """
    X = data.values if isinstance(data, TimeCourseMatrix) else np.asarray(data, dtype=float)
    Z = _standardize_rows(X)
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    Z = np.divide(Z, norms, out=np.zeros_like(Z), where=norms > 0)
    best, best_k = np.inf, 0
    for k in range(part.K):
        idx = part.members(k)
        n = idx.size
        if n < 2:
            continue
        s = Z[idx].sum(axis=0)
        # sum over ordered pairs i != j of z_i . z_j, divided by the pair count
        coh = (float(s @ s) - float(np.sum(Z[idx] ** 2))) / (n * (n - 1))
        if coh < best:
            best, best_k = coh, k
    return best_k


def prune_by_membership(data, part: Partition, residual, threshold: float) -> Partition:
    """Move module genes whose eigengene correlation is below ``threshold`` to the residual.

    Eigengenes are computed once from the unpruned modules. Each module keeps
    at least its best-correlated gene so the number of clusters is unchanged.
    Without a residual cluster the partition is returned as is.
    """
    if residual is None:
        return part
    labels = part.labels.copy()
    for k in range(part.K):
        if k == residual:
            continue
        idx = part.members(k)
        kme = module_membership(data, part, k)
        drop = kme < threshold
        if drop.all():
            drop[int(np.argmax(kme))] = False
        labels[idx[drop]] = residual
    return Partition(labels, part.K)


def cut_height(dend: Dendrogram, height: float, min_size: int):
    """Static cut: maximal branches below ``height`` with at least ``min_size`` leaves.

    Every leaf outside such a branch goes to one residual cluster, labelled
    after the modules. Modules are labelled by first appearance in leaf order.

    Returns
    -------
    part : Partition
    residual : int or None
    """
    p = dend.n_leaves
    parent = list(range(2 * p - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s in range(p - 1):
        if dend.merges[s, 2] > height:
            break
        left, right = dend.merges[s, :2].astype(int)
        parent[find(left)] = p + s
        parent[find(right)] = p + s
    roots = np.array([find(i) for i in range(p)])
    counts = {r: c for r, c in zip(*np.unique(roots, return_counts=True))}
    labels = np.full(p, -1, dtype=np.int64)
    seen = {}
    for leaf in dend.leaf_order():
        r = roots[leaf]
        if counts[r] >= min_size:
            if r not in seen:
                seen[r] = len(seen)
            labels[leaf] = seen[r]
    residual = None
    if np.any(labels < 0):
        residual = len(seen)
        labels[labels < 0] = residual
    return Partition(labels), residual
