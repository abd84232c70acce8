"""Comparison statistics: ARI, gene-set confusion metrics, aging-cluster choice, preservation Z."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import GeneSet, Partition, TimeCourseMatrix, TimeGrid, ValidationError, make_rng
from .distance import correlation


def _labels(x):
    return x.labels if isinstance(x, Partition) else np.asarray(x)


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2.0


def contingency(a, b) -> np.ndarray:
    a, b = _labels(a), _labels(b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai.ravel(), bi.ravel()), 1)
    return table


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index. Can be negative; 1 means identical."""
    la, lb = _labels(a), _labels(b)
    if la.shape != lb.shape:
        raise ValidationError("partitions must have equal length")
    n = la.size
    table = contingency(la, lb)
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = _comb2(n)
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (all-in-one or all singletons)
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


@dataclass(frozen=True)
class ConfusionMetrics:
    sensitivity: float
    specificity: float
    accuracy: float
    precision: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    undefined: tuple = ()

    def as_dict(self):
        return {k: getattr(self, k) for k in
                ("sensitivity", "specificity", "accuracy", "precision", "tp", "fp", "fn", "tn")} | {
            "undefined": list(self.undefined)}


def _ratio(num, den, name, undefined):
    if den == 0:
        undefined.append(name)
        return float("nan")
    return num / den


def confusion_vs_geneset(part, cluster: int, target, universe) -> ConfusionMetrics:
    """Cross-tabulate membership of ``cluster`` against a reference gene set.

    ``universe`` lists the gene ids in the same order as the partition labels.
    """
    universe = list(universe)
    labels = _labels(part)
    if len(universe) != labels.size:
        raise ValidationError("universe must list one gene id per partition label")
    tset = target.ids if isinstance(target, GeneSet) else frozenset(target)
    if not tset <= set(universe):
        raise ValidationError("target gene set is not a subset of the universe")
    in_cluster = labels == cluster
    in_target = np.array([g in tset for g in universe])
    tp = int(np.sum(in_cluster & in_target))
    fp = int(np.sum(in_cluster & ~in_target))
    fn = int(np.sum(~in_cluster & in_target))
    tn = int(np.sum(~in_cluster & ~in_target))
    undefined = []
    sens = _ratio(tp, tp + fn, "sensitivity", undefined)
    spec = _ratio(tn, tn + fp, "specificity", undefined)
    prec = _ratio(tp, tp + fp, "precision", undefined)
    acc = (tp + tn) / len(universe)
    return ConfusionMetrics(sens, spec, acc, prec, tp, fp, fn, tn, tuple(undefined))


def pick_aging_cluster(representatives, grid) -> int:
    """Index of the representative curve with the largest |correlation| with time.

    Constant representatives are skipped; ties go to the lowest index.
    """
    R = np.atleast_2d(np.asarray(representatives, dtype=float))
    t = grid.points if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    if R.shape[1] != t.size:
        raise ValidationError("representatives must be sampled on the grid")
    tc = t - t.mean()
    best, best_k = -1.0, None
    for k, r in enumerate(R):
        rc = r - r.mean()
        nr = np.linalg.norm(rc)
        if not nr > 1e-12 * max(1.0, np.abs(r).max()):
            continue
        c = abs(float(rc @ tc) / (nr * np.linalg.norm(tc)))
        if c > best:
            best, best_k = c, k
    if best_k is None:
        raise ValidationError("every representative has zero variance")
    return best_k


# ---------------------------------------------------------------- preservation

Z_CAP = 1000.0


def preservation_band(z: float) -> str:
    if z > 10:
        return "strong"
    if z > 2:
        return "moderate"
    return "none"


@dataclass(frozen=True)
class ClusterPreservation:
    cluster: int
    size: int
    z_density: float
    z_connectivity: float
    z_summary: float
    band: str
    flags: tuple = ()

    def as_dict(self):
        return {"cluster": self.cluster, "size": self.size, "Z_density": self.z_density,
                "Z_connectivity": self.z_connectivity, "Z_summary": self.z_summary,
                "band": self.band, "flags": list(self.flags)}


@dataclass(frozen=True)
class PreservationResult:
    clusters: tuple
    n_perm: int
    skipped: tuple = ()

    def by_cluster(self) -> dict:
        return {c.cluster: c for c in self.clusters}

    def rows(self) -> list:
        return [c.as_dict() for c in self.clusters]


def _module_stats(A_ref, A_test, idx):
    sub_t = A_test[np.ix_(idx, idx)]
    n = idx.size
    density = (sub_t.sum() - np.trace(sub_t)) / (n * (n - 1))
    k_ref = A_ref[np.ix_(idx, idx)].sum(axis=1) - 1.0
    k_test = sub_t.sum(axis=1) - 1.0
    if np.std(k_ref) == 0 or np.std(k_test) == 0:
        conn = 0.0
    else:
        conn = float(np.corrcoef(k_ref, k_test)[0, 1])
    return density, conn


def _z(obs, null, flags, name):
    mu, sd = null.mean(), null.std(ddof=1)
    # spreads at rounding level (e.g. test set == reference) count as zero
    tol = 1e-9 * max(1.0, abs(mu))
    if sd > tol:
        return float((obs - mu) / sd)
    diff = obs - mu
    if abs(diff) <= tol:
        return 0.0
    flags.append(f"{name}: degenerate null")
    warnings.warn(f"{name} permutation null has zero spread; Z capped at +/-{Z_CAP}")
    return math.copysign(Z_CAP, diff)


def z_summary(reference, test, part: Partition, n_perm: int = 200, seed: int = 0,
              beta: float = 6.0, clusters=None) -> PreservationResult:
    """Permutation Z statistics for preservation of reference clusters in a test set.

    Density is the mean off-diagonal test-set adjacency among a cluster's genes;
    connectivity is the correlation between the genes' within-cluster
    connectivities in reference and test. Each observed value is standardised
    against ``n_perm`` random gene sets of the same size, and Z_summary is the
    mean of the two Z scores.
    """
    if n_perm < 50:
        raise ValidationError("n_perm must be at least 50")
    ref_ids = list(reference.gene_ids)
    if part.p != len(ref_ids):
        raise ValidationError("partition does not match the reference data")
    test_idx = test.index_of()
    common = [g for g in ref_ids if g in test_idx]
    if len(common) < 3:
        raise ValidationError("fewer than 3 genes shared by reference and test data")
    ref_pos = reference.index_of()
    ref_rows = np.array([ref_pos[g] for g in common])
    test_rows = np.array([test_idx[g] for g in common])
    labels = part.labels[ref_rows]
    A_ref = ((1 + correlation(reference.values[ref_rows])) / 2) ** beta
    A_test = ((1 + correlation(test.values[test_rows])) / 2) ** beta
    universe = np.arange(len(common))
    rng = make_rng(seed)
    out, skipped = [], []
    null_cache = {}
    ks = range(part.K) if clusters is None else clusters
    for k in ks:
        idx = np.flatnonzero(labels == k)
        if idx.size < 3:
            skipped.append(int(k))
            continue
        obs_d, obs_c = _module_stats(A_ref, A_test, idx)
        if idx.size not in null_cache:
            nd, nc = np.empty(n_perm), np.empty(n_perm)
            for b in range(n_perm):
                ridx = rng.choice(universe, size=idx.size, replace=False)
                nd[b], nc[b] = _module_stats(A_ref, A_test, ridx)
            null_cache[idx.size] = (nd, nc)
        nd, nc = null_cache[idx.size]
        flags = []
        zd = _z(obs_d, nd, flags, "density")
        zc = _z(obs_c, nc, flags, "connectivity")
        zs = 0.5 * (zd + zc)
        out.append(ClusterPreservation(int(k), int(idx.size), zd, zc, zs, preservation_band(zs), tuple(flags)))
    return PreservationResult(tuple(out), n_perm, tuple(skipped))
