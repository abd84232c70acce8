"""Benchmark harness: scenario runs, per-method pipelines, case-study pipeline."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .agetransform import age_trend_pvalues, apply_transform
from .core import (CrossSectionalMatrix, GeneSet, Partition, TimeCourseMatrix, ValidationError,
                   derive_seed, make_rng)
from .distance import acf_features, dtw_matrix, tom_distance_matrix
from .evaluation import adjusted_rand_index, confusion_vs_geneset, pick_aging_cluster, z_summary
from .hclust import (agglomerate, cut_height, cut_modules, eigengene, least_coherent_cluster,
                     membership_threshold, prune_by_membership)
from .mixture import FcmSpec, GmmSpec, MfdaSpec, fit_fcm, fit_gmm, fit_mfda, posterior_assign
from .simgen import STUDY1_INTERVALS, STUDY2_INTERVALS, default_sizes, simulate

log = logging.getLogger(__name__)

METHODS = ("gmm", "mfda", "fcm", "wgcna", "dtw", "acf")
DISTANCE_METHODS = ("wgcna", "dtw", "acf")
MIN_MODULE_FRACTION = 0.04


@dataclass(frozen=True)
class PipelineOptions:
    """Knobs shared by the distance pipelines and the mixtures."""

    beta: float = 6.0
    linkage: str = "average"
    min_module_fraction: float = MIN_MODULE_FRACTION
    membership_floor: float = 0.5
    membership_alpha: float = 0.05
    n_restarts: int = 10
    max_iter: int = 500
    tol: float = 1e-6
    gmm_covariance: str = "diagonal-varying"


def _tree_modules(dist, features, K, opts: PipelineOptions):
    dend = agglomerate(dist, opts.linkage)
    p = features.shape[0]
    min_size = max(2, math.ceil(opts.min_module_fraction * p))
    part, residual = cut_modules(dend, K, min_size)
    if residual is None:
        # K large branches and no small ones: the least coherent one plays the residual
        residual = least_coherent_cluster(features, part)
    thr = membership_threshold(features.shape[1], opts.membership_floor, opts.membership_alpha)
    return prune_by_membership(features, part, residual, thr), dend, residual


def distance_pipeline(data: TimeCourseMatrix, method: str, K: int,
                      opts: PipelineOptions = PipelineOptions()):
    """Distance matrix, average-linkage tree, module cut and membership pruning.

    Returns the partition, the dendrogram and the residual cluster label.
    """
    X = data.values
    if method == "wgcna":
        return _tree_modules(tom_distance_matrix(X, opts.beta), X, K, opts)
    if method == "dtw":
        return _tree_modules(dtw_matrix(data, center=True), X, K, opts)
    if method == "acf":
        F = acf_features(X)
        return _tree_modules(tom_distance_matrix(F, opts.beta), F, K, opts)
    raise ValidationError(f"not a distance method: {method!r}")


def mixture_fit(data: TimeCourseMatrix, method: str, K: int, seed,
                opts: PipelineOptions = PipelineOptions()):
    common = dict(max_iter=opts.max_iter, tol=opts.tol, n_restarts=opts.n_restarts)
    if method == "gmm":
        return fit_gmm(data, GmmSpec(K, covariance_model=opts.gmm_covariance, **common), seed)
    if method == "mfda":
        return fit_mfda(data, MfdaSpec(K, **common), seed)
    if method == "fcm":
        return fit_fcm(data, FcmSpec(K, **common), seed)
    raise ValidationError(f"not a mixture method: {method!r}")


def run_method(data: TimeCourseMatrix, method: str, fixed_K: int = 5, seed=0,
               opts: PipelineOptions = PipelineOptions()):
    """Cluster ``data`` with one method; returns (Partition, elapsed seconds)."""
    if method not in METHODS:
        raise ValidationError(f"method must be one of {METHODS}")
    t0 = time.perf_counter()
    if method in DISTANCE_METHODS:
        part = distance_pipeline(data, method, fixed_K, opts)[0]
    else:
        part = posterior_assign(mixture_fit(data, method, fixed_K, seed, opts))
    return part, time.perf_counter() - t0


# ---------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class ScenarioConfig:
    study: int = 1
    interval: int = 3
    cluster_sizes: tuple = None
    n_replicates: int = 20
    methods: tuple = ("wgcna", "gmm", "dtw")
    fixed_K: int = 5
    seed: int = 0
    n_jobs: int = 1
    orientation: str = "column"

    def __post_init__(self):
        if self.study not in (1, 2):
            raise ValidationError("study must be 1 or 2")
        valid = STUDY1_INTERVALS if self.study == 1 else STUDY2_INTERVALS
        if self.interval not in valid:
            raise ValidationError(f"study {self.study} interval must be one of {valid}")
        methods = tuple(self.methods)
        if not methods:
            raise ValidationError("methods must be nonempty")
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise ValidationError(f"unknown methods {bad}; choose from {METHODS}")
        object.__setattr__(self, "methods", methods)
        sizes = self.cluster_sizes
        sizes = default_sizes(self.study, self.interval) if sizes is None else tuple(int(s) for s in sizes)
        object.__setattr__(self, "cluster_sizes", sizes)
        if self.n_replicates < 1 or self.fixed_K < 1 or self.n_jobs < 1:
            raise ValidationError("n_replicates, fixed_K and n_jobs must be >= 1")

    @property
    def label(self) -> str:
        return f"S{self.study}I{self.interval}"

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        d = dict(d)
        for key in ("cluster_sizes", "methods"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class ReportRow:
    scenario: str
    method: str
    median_ari: float
    iqr_low: float
    iqr_high: float
    total_seconds: float
    median_seconds: float
    n_replicates: int
    failures: int
    short_partitions: int = 0


@dataclass(frozen=True)
class BenchReport:
    rows: tuple
    replicates: tuple = ()
    config: dict = field(default_factory=dict)

    def row(self, method: str) -> ReportRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def as_dict(self, timings: bool = True) -> dict:
        rows = [asdict(r) for r in self.rows]
        reps = [dict(r) for r in self.replicates]
        if not timings:
            for r in rows:
                r.pop("total_seconds"), r.pop("median_seconds")
            for r in reps:
                r.pop("seconds")
        return {"config": self.config, "rows": rows, "replicates": reps}

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_dict(), **kw)

    def table(self) -> str:
        head = f"{'scenario':<8} {'method':<6} {'ARI':>6} {'IQR':>15} {'sec/rep':>9} {'total s':>9} {'n':>4} {'fail':>4}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            iqr = "--" if math.isnan(r.median_ari) else f"{r.iqr_low:.2f}-{r.iqr_high:.2f}"
            lines.append(f"{r.scenario:<8} {r.method:<6} {r.median_ari:>6.3f} {iqr:>15} "
                         f"{r.median_seconds:>9.3f} {r.total_seconds:>9.2f} {r.n_replicates:>4} {r.failures:>4}")
        return "\n".join(lines)

    def write_replicates_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["scenario", "replicate", "method", "ari", "seconds",
                                               "n_clusters", "error"])
            w.writeheader()
            for r in self.replicates:
                w.writerow(r)


def _replicate(cfg: ScenarioConfig, r: int):
    sim = simulate(cfg.study, cfg.interval, cfg.cluster_sizes,
                   seed=derive_seed(cfg.seed, cfg.study, cfg.interval, r),
                   orientation=cfg.orientation)
    out = []
    for j, method in enumerate(cfg.methods):
        rec = {"scenario": cfg.label, "replicate": r, "method": method, "ari": None,
               "seconds": None, "n_clusters": None, "error": None}
        try:
            part, secs = run_method(sim.data, method, cfg.fixed_K,
                                    derive_seed(cfg.seed, cfg.study, cfg.interval, r, j + 1))
        except Exception as exc:  # one failed method must not stop the scenario
            log.warning("%s replicate %d %s failed: %s", cfg.label, r, method, exc)
            rec["error"] = f"{type(exc).__name__}: {exc}"
        else:
            rec.update(ari=adjusted_rand_index(part, sim.truth), seconds=secs, n_clusters=part.K)
        out.append(rec)
    return out


def run_benchmark(cfg: ScenarioConfig) -> BenchReport:
    """Simulate each replicate, run every method, aggregate ARI and timing."""
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(cfg.n_jobs) as ex:
            per_rep = list(ex.map(_replicate, [cfg] * cfg.n_replicates, range(cfg.n_replicates)))
    else:
        per_rep = [_replicate(cfg, r) for r in range(cfg.n_replicates)]
    records = [rec for rep in per_rep for rec in rep]
    rows = []
    for method in cfg.methods:
        recs = [x for x in records if x["method"] == method]
        ok = [x for x in recs if x["error"] is None]
        if ok:
            aris = np.array([x["ari"] for x in ok])
            secs = np.array([x["seconds"] for x in ok])
            lo, med, hi = np.percentile(aris, [25, 50, 75])
            total, med_s = float(secs.sum()), float(np.median(secs))
        else:
            lo = med = hi = float("nan")
            total = med_s = 0.0
        short = sum(1 for x in ok if x["n_clusters"] < cfg.fixed_K)
        rows.append(ReportRow(cfg.label, method, float(med), float(lo), float(hi), total, med_s,
                              len(recs), len(recs) - len(ok), short))
    config = asdict(cfg)
    config["cluster_sizes"] = list(cfg.cluster_sizes)
    config["methods"] = list(cfg.methods)
    return BenchReport(tuple(rows), tuple(records), config)


# ---------------------------------------------------------------- case pipeline


@dataclass(frozen=True)
class PlantedCase:
    data: CrossSectionalMatrix
    module: GeneSet
    truth: np.ndarray


def planted_age_module(n_genes: int = 2000, module_size: int = 100, n_subjects: int = 150,
                       age_range=(20, 80), effect: float = 1.0, n_background_modules: int = 3,
                       background_module_size: int = 100, seed=0) -> PlantedCase:
    """Cross-sectional data with one age-correlated module planted among background genes.

    Module genes follow ``a_i * g(age) + noise`` with ``g`` the standardized
    age. Background modules share a subject-level factor unrelated to age;
    every other gene is pure noise. All noise is standard normal.
    """
    used = module_size + n_background_modules * background_module_size
    if used > n_genes:
        raise ValidationError("modules do not fit in n_genes")
    rng = make_rng(seed)
    ages = np.round(rng.uniform(age_range[0], age_range[1], n_subjects))
    g = (ages - ages.mean()) / ages.std()
    Y = rng.standard_normal((n_genes, n_subjects))
    truth = np.full(n_genes, -1)
    perm = rng.permutation(n_genes)
    mod = perm[:module_size]
    amp = np.abs(1.0 + 0.2 * rng.standard_normal(module_size))
    Y[mod] += effect * amp[:, None] * g[None, :]
    truth[mod] = 0
    pos = module_size
    for b in range(n_background_modules):
        rows = perm[pos: pos + background_module_size]
        pos += background_module_size
        z = rng.standard_normal(n_subjects)
        load = np.abs(1.0 + 0.2 * rng.standard_normal(rows.size))
        Y[rows] += load[:, None] * z[None, :]
        truth[rows] = b + 1
    ids = tuple(f"gene_{i + 1:04d}" for i in range(n_genes))
    data = CrossSectionalMatrix(Y, ages, None, ids)
    return PlantedCase(data, GeneSet(frozenset(ids[i] for i in mod)), truth)


@dataclass(frozen=True)
class CaseOptions:
    """Case-pipeline settings (the gene count is unknown there, so no fixed K for wgcna)."""

    age_filter_q: float = 0.05
    cut_height: float = 0.9
    min_module_size: int = 20
    K: int = 5


def _full_partition(keep, sub_labels, n_modules):
    # genes dropped by the age filter join the residual cluster
    labels = np.full(keep.size, n_modules, dtype=np.int64)
    labels[keep] = sub_labels
    if np.all(labels < n_modules):
        return Partition(labels, n_modules), None
    return Partition(labels, n_modules + 1), n_modules


def run_case_pipeline(data: CrossSectionalMatrix, transform: str = "bin", bin_length=5.0,
                      method: str = "wgcna", target: GeneSet = None, test_sets=(), seed=0,
                      n_perm: int = 200, opts: PipelineOptions = PipelineOptions(),
                      case: CaseOptions = CaseOptions()) -> dict:
    """transform -> cluster -> aging cluster -> confusion vs target -> preservation.

    Genes without a significant age association (Benjamini-Hochberg q below
    ``case.age_filter_q``) are set aside in a residual cluster before
    clustering. wgcna cuts its tree at a fixed height; gmm fits ``case.K``
    components. The residual cluster is never the aging cluster and is not
    tested for preservation.
    """
    if method not in ("wgcna", "gmm"):
        raise ValidationError("case method must be 'wgcna' or 'gmm'")
    stage = "transform"
    try:
        tc = apply_transform(data, transform, bin_length)
        stage = "age filter"
        if case.age_filter_q is None:
            keep = np.ones(tc.p, dtype=bool)
        else:
            pv = age_trend_pvalues(data, transform, bin_length)
            keep = stats.false_discovery_control(pv) < case.age_filter_q
        X = tc.values[keep]
        stage = "cluster"
        if method == "wgcna":
            if X.shape[0] < 3:
                raise ValidationError(f"only {X.shape[0]} genes pass the age filter")
            dend = agglomerate(tom_distance_matrix(X, opts.beta), opts.linkage)
            sub, sub_res = cut_height(dend, case.cut_height, case.min_module_size)
            sub = prune_by_membership(X, sub, sub_res, membership_threshold(
                X.shape[1], opts.membership_floor, opts.membership_alpha))
            n_mod = sub.K - (sub_res is not None)
            if n_mod == 0:
                raise ValidationError("no module passes the height cut")
            sub_labels = np.where(sub.labels == sub_res, n_mod, sub.labels) if sub_res is not None \
                else sub.labels
            part, residual = _full_partition(keep, sub_labels, n_mod)
            reps = np.array([eigengene(tc, part, k).curve for k in range(n_mod)])
        else:
            if X.shape[0] <= case.K:
                raise ValidationError(f"only {X.shape[0]} genes pass the age filter")
            sub_tc = TimeCourseMatrix(tc.grid, X)
            fit = mixture_fit(sub_tc, "gmm", case.K, seed, opts)
            sub = posterior_assign(fit)
            if sub.K < fit.K:
                raise ValidationError("a mixture component is empty; reduce K")
            n_mod = sub.K
            part, residual = _full_partition(keep, sub.labels, n_mod)
            reps = np.asarray(fit.means)
        stage = "aging cluster"
        aging = pick_aging_cluster(reps, tc.grid)
        report = {"transform": transform, "bin_length": bin_length if transform == "bin" else None,
                  "method": method, "grid": tc.grid.points.tolist(), "n_genes": tc.p,
                  "n_age_associated": int(keep.sum()), "K": part.K,
                  "residual_cluster": residual, "cluster_sizes": part.sizes().tolist(),
                  "aging_cluster": int(aging), "aging_cluster_size": int(part.sizes()[aging]),
                  "notices": []}
        stage = "confusion"
        if target is None or len(target) == 0:
            report["confusion"] = None
            report["notices"].append("no target gene set given; confusion stage skipped")
        else:
            report["confusion"] = confusion_vs_geneset(part, aging, target, tc.gene_ids).as_dict()
        stage = "preservation"
        pres = []
        for i, test in enumerate(test_sets):
            ttc = apply_transform(test, transform, bin_length)
            res = z_summary(tc, ttc, part, n_perm=n_perm, seed=derive_seed(seed, i), beta=opts.beta,
                            clusters=list(range(n_mod)))
            pres.append({"test_set": i, "rows": res.rows(), "skipped": list(res.skipped)})
        report["preservation"] = pres
        report["partition"] = part
        return report
    except ValidationError as exc:
        raise ValidationError(f"case pipeline failed at stage '{stage}': {exc}") from exc
