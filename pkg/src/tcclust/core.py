"""Shared data model, seeding and CSV ingestion.

Mixture weights are called ``weights`` (pi_k) throughout the package so that
``p`` can always mean the number of genes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when input data or a configuration violates a contract."""


class ParseError(ValidationError):
    """Raised when a CSV cell cannot be read as a finite number."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing sampling times."""

    points: np.ndarray

    def __post_init__(self):
        pts = _readonly(self.points)
        if pts.ndim != 1 or pts.size < 2:
            raise ValidationError("a time grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("time grid contains non-finite values")
        if np.any(np.diff(pts) <= 0):
            raise ValidationError("time grid must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return self.points.size

    @property
    def span(self) -> float:
        return float(self.points[-1] - self.points[0])

    @classmethod
    def regular(cls, start, stop, step):
        n = int(round((stop - start) / step))
        return cls(start + step * np.arange(n + 1))


@dataclass(frozen=True)
class TimeCourseMatrix:
    """p genes observed on a common time grid (rows are genes)."""

    grid: TimeGrid
    values: np.ndarray
    gene_ids: tuple = None

    def __post_init__(self):
        vals = _readonly(self.values)
        if vals.ndim != 2 or vals.shape[0] < 1:
            raise ValidationError("values must be a non-empty p x m matrix")
        if vals.shape[1] != self.grid.m:
            raise ValidationError(
                f"values have {vals.shape[1]} columns but grid has {self.grid.m} points"
            )
        if not np.all(np.isfinite(vals)):
            i, j = np.argwhere(~np.isfinite(vals))[0]
            raise ValidationError(f"non-finite value at gene {i}, time column {j}")
        ids = self.gene_ids
        if ids is None:
            ids = tuple(f"gene_{i + 1:04d}" for i in range(vals.shape[0]))
        ids = tuple(str(g) for g in ids)
        if len(ids) != vals.shape[0]:
            raise ValidationError("gene_ids length does not match number of rows")
        if len(set(ids)) != len(ids):
            raise ValidationError("gene_ids must be unique")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "gene_ids", ids)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def index_of(self) -> dict:
        return {g: i for i, g in enumerate(self.gene_ids)}

    def subset(self, ids: Sequence[str]) -> "TimeCourseMatrix":
        idx = self.index_of()
        rows = [idx[g] for g in ids]
        return TimeCourseMatrix(self.grid, self.values[rows], tuple(ids))


@dataclass(frozen=True)
class CrossSectionalMatrix:
    """p genes measured once on each of n subjects with known ages."""

    values: np.ndarray
    ages: np.ndarray
    subject_ids: tuple = None
    gene_ids: tuple = None

    def __post_init__(self):
        vals = _readonly(self.values)
        ages = _readonly(self.ages)
        if vals.ndim != 2:
            raise ValidationError("values must be a p x n matrix")
        p, n = vals.shape
        if n < 2:
            raise ValidationError("cross-sectional data needs at least 2 subjects")
        if ages.shape != (n,):
            raise ValidationError(f"expected {n} ages, got {ages.size}")
        if not np.all(np.isfinite(ages)) or np.any(ages < 0):
            raise ValidationError("ages must be finite and nonnegative")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("cross-sectional values must be finite")
        sids = self.subject_ids
        if sids is None:
            sids = tuple(f"subject_{j + 1:04d}" for j in range(n))
        gids = self.gene_ids
        if gids is None:
            gids = tuple(f"gene_{i + 1:04d}" for i in range(p))
        sids, gids = tuple(map(str, sids)), tuple(map(str, gids))
        if len(sids) != n or len(set(sids)) != n:
            raise ValidationError("subject_ids must be unique, one per column")
        if len(gids) != p or len(set(gids)) != p:
            raise ValidationError("gene_ids must be unique, one per row")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "subject_ids", sids)
        object.__setattr__(self, "gene_ids", gids)

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Partition:
    """Cluster labels 0..K-1 with optional membership probabilities."""

    labels: np.ndarray
    K: int = None
    posteriors: Optional[np.ndarray] = None

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValidationError("labels must be a non-empty vector")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ValidationError("labels must be integers")
        labels = labels.astype(np.int64)
        K = int(labels.max()) + 1 if self.K is None else int(self.K)
        if labels.min() < 0 or labels.max() >= K:
            raise ValidationError("labels must lie in 0..K-1")
        if np.unique(labels).size != K:
            raise ValidationError("every cluster index 0..K-1 must be used")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "K", K)
        if self.posteriors is not None:
            post = _readonly(self.posteriors)
            if post.shape != (labels.size, K):
                raise ValidationError("posteriors must be p x K")
            if np.any(np.abs(post.sum(axis=1) - 1.0) > 1e-9):
                raise ValidationError("posterior rows must sum to 1")
            object.__setattr__(self, "posteriors", post)

    @classmethod
    def from_labels(cls, labels, posteriors=None) -> "Partition":
        """Build a partition from arbitrary labels, relabelled densely by first appearance."""
        labels = np.asarray(labels)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        dense = order[inverse.ravel()]
        if posteriors is not None:
            posteriors = np.asarray(posteriors)[:, np.argsort(first)]
        return cls(dense, int(dense.max()) + 1, posteriors)

    @property
    def p(self) -> int:
        return self.labels.size

    def members(self, k) -> np.ndarray:
        return np.flatnonzero(self.labels == k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)


@dataclass(frozen=True)
class SymmetricMatrix:
    """Square symmetric container for adjacency, overlap or distance values."""

    entries: np.ndarray
    kind: str = "distance"

    def __post_init__(self):
        e = _readonly(self.entries)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValidationError("a symmetric matrix must be square")
        if not np.array_equal(e, e.T):
            raise ValidationError("matrix is not exactly symmetric")
        object.__setattr__(self, "entries", e)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class GeneSet:
    ids: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        ids = frozenset(str(g) for g in self.ids)
        if not ids:
            raise ValidationError("a gene set must be nonempty")
        object.__setattr__(self, "ids", ids)

    def is_subset_of(self, universe: Iterable[str]) -> bool:
        return self.ids <= set(universe)

    def __len__(self):
        return len(self.ids)

    def __contains__(self, g):
        return g in self.ids


def make_rng(seed) -> np.random.Generator:
    """Return a PCG64 generator from an int seed, a SeedSequence or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    if seed is None:
        seed = 0
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1))))


def spawn_rngs(seed, n: int, key: int = 0) -> list:
    """Independent child generators (one per gene, replicate, ...)."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(key,))
    return [np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(n)]


def derive_seed(seed, *keys) -> int:
    """Deterministic 64-bit child seed from a master seed and integer keys."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------- CSV I/O


def _parse_float(cell, row, col, what="cell"):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"malformed numeric {what} {cell!r} at row {row}, column {col}", row, col)
    if not math.isfinite(v):
        raise ParseError(f"non-finite {what} {cell!r} at row {row}, column {col}", row, col)
    return v


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ValidationError(f"{path}: need a header row and at least one data row")
    return rows


def load_time_course(path, format: str = "csv") -> TimeCourseMatrix:
    """Read a gene x time CSV whose header cells (after the id column) are times.

    Columns are reordered so that times ascend. Rows and columns in error
    messages are 1-based file coordinates.
    """
    if format != "csv":
        raise ValidationError(f"unsupported format {format!r}")
    rows = _read_rows(path)
    header = rows[0]
    times = [_parse_float(c, 1, j + 1, "time") for j, c in enumerate(header[1:], start=1)]
    if len(set(times)) != len(times):
        raise ValidationError(f"{path}: duplicate time points in header")
    ids, vals = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"row {r} has {len(row)} cells, expected {len(header)}", r, None)
        ids.append(row[0].strip())
        vals.append([_parse_float(c, r, j + 1) for j, c in enumerate(row[1:], start=1)])
    order = np.argsort(times, kind="stable")
    values = np.asarray(vals, dtype=float)[:, order]
    return TimeCourseMatrix(TimeGrid(np.asarray(times)[order]), values, tuple(ids))


def write_time_course(tc: TimeCourseMatrix, path, id_header: str = "gene_id") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([id_header] + [repr(float(t)) for t in tc.grid.points])
        for g, row in zip(tc.gene_ids, tc.values):
            w.writerow([g] + [repr(float(v)) for v in row])


def load_cross_sectional(path, ages_path=None) -> CrossSectionalMatrix:
    """Read a gene x subject CSV plus ages.

    Ages come from ``ages_path`` (CSV with ``subject_id,age`` rows) or, when it
    is omitted, from a data row whose id cell is ``age``.
    """
    rows = _read_rows(path)
    subjects = [c.strip() for c in rows[0][1:]]
    ages_by_subject = {}
    data_rows = []
    for r, row in enumerate(rows[1:], start=2):
        if ages_path is None and row[0].strip().lower() == "age":
            for j, c in enumerate(row[1:], start=1):
                ages_by_subject[subjects[j - 1]] = _parse_float(c, r, j + 1, "age")
        else:
            data_rows.append((r, row))
    if ages_path is not None:
        arows = _read_rows(ages_path)
        for r, row in enumerate(arows[1:], start=2):
            if len(row) < 2 or not row[1].strip():
                raise ValidationError(f"{ages_path}: missing age at row {r}")
            ages_by_subject[row[0].strip()] = _parse_float(row[1], r, 2, "age")
    missing = [s for s in subjects if s not in ages_by_subject]
    if missing:
        raise ValidationError(f"missing age for subjects {missing[:5]}")
    ids, vals = [], []
    for r, row in data_rows:
        if len(row) != len(subjects) + 1:
            raise ParseError(f"row {r} has {len(row)} cells, expected {len(subjects) + 1}", r, None)
        ids.append(row[0].strip())
        vals.append([_parse_float(c, r, j + 1) for j, c in enumerate(row[1:], start=1)])
    ages = np.array([ages_by_subject[s] for s in subjects])
    return CrossSectionalMatrix(np.asarray(vals, dtype=float).reshape(len(ids), len(subjects)),
                                ages, tuple(subjects), tuple(ids))


def write_cross_sectional(cs: CrossSectionalMatrix, path, ages_path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["gene_id"] + list(cs.subject_ids))
        for g, row in zip(cs.gene_ids, cs.values):
            w.writerow([g] + [repr(float(v)) for v in row])
    with open(ages_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", "age"])
        for s, a in zip(cs.subject_ids, cs.ages):
            w.writerow([s, repr(float(a))])


def load_gene_set(path) -> GeneSet:
    """One gene id per line; blank lines and ``#`` comments ignored."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    return GeneSet(frozenset(l.strip() for l in text if l.strip() and not l.startswith("#")))


def write_partition(part: Partition, gene_ids, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["gene_id", "cluster"])
        for g, k in zip(gene_ids, part.labels):
            w.writerow([g, int(k)])


def write_matrix(entries, ids, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([""] + list(ids))
        for g, row in zip(ids, np.asarray(entries)):
            w.writerow([g] + [repr(float(v)) for v in row])
