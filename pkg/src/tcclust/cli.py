"""Command line entry point ``bench``.

Exit codes: 0 success, 2 invalid input or configuration, 3 nothing usable
was produced (every replicate of some method failed, or every restart of a
fit collapsed).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from . import __version__
from .agetransform import apply_transform, parse_transform
from .bench import (METHODS, CaseOptions, ScenarioConfig, distance_pipeline, run_benchmark,
                    run_case_pipeline, run_method)
from .core import (Partition, ValidationError, load_cross_sectional, load_gene_set,
                   load_time_course, write_matrix, write_partition, write_time_course)
from .distance import acf_features, dtw_matrix, tom_distance_matrix
from .evaluation import z_summary
from .hclust import agglomerate
from .mixture import FitError, select_k_bic
from .simgen import simulate

EXIT_OK, EXIT_INVALID, EXIT_EMPTY = 0, 2, 3

log = logging.getLogger("tcclust")


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, default=_json_default)
    if path is None or path == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _sizes(text):
    if text is None:
        return None
    return tuple(int(x) for x in text.split(","))


# ---------------------------------------------------------------- subcommands


def load_config(path) -> list:
    """Scenario configs from TOML: top-level keys, or one ``[[scenario]]`` table per scenario."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}")
    except OSError as exc:
        raise ValidationError(f"{path}: {exc}")
    tables = doc.get("scenario")
    if tables is None:
        return [ScenarioConfig.from_dict(doc)]
    defaults = {k: v for k, v in doc.items() if k != "scenario"}
    return [ScenarioConfig.from_dict({**defaults, **t}) for t in tables]


def cmd_run(args):
    configs = load_config(args.config)
    reports, empty = [], False
    for cfg in configs:
        if args.n_replicates is not None:
            cfg = ScenarioConfig.from_dict({**cfg.__dict__, "n_replicates": args.n_replicates})
        rep = run_benchmark(cfg)
        print(rep.table())
        reports.append(rep.as_dict())
        empty |= any(r.failures == r.n_replicates for r in rep.rows)
        if args.replicates_csv:
            path = Path(args.replicates_csv)
            if len(configs) > 1:
                path = path.with_name(f"{path.stem}_{cfg.label}{path.suffix}")
            rep.write_replicates_csv(path)
    if args.out:
        _write_json({"reports": reports}, args.out)
    return EXIT_EMPTY if empty else EXIT_OK


def cmd_sim(args):
    sim = simulate(args.study, args.interval, _sizes(args.sizes), seed=args.seed,
                   noise_sd=args.noise_sd, orientation=args.orientation)
    stem = args.out or f"S{args.study}I{args.interval}_seed{args.seed}"
    data_path, truth_path = Path(f"{stem}_data.csv"), Path(f"{stem}_truth.csv")
    write_time_course(sim.data, data_path)
    write_partition(sim.truth, sim.data.gene_ids, truth_path)
    print(f"wrote {data_path} ({sim.data.p} genes x {sim.data.m} times) and {truth_path}")
    return EXIT_OK


def cmd_transform(args):
    cs = load_cross_sectional(args.data, args.ages)
    tc = apply_transform(cs, args.method, args.bin_length)
    write_time_course(tc, args.out)
    print(f"wrote {args.out} ({tc.p} genes x {tc.m} grid points)")
    return EXIT_OK


def cmd_distance(args):
    tc = load_time_course(args.data)
    if args.method == "tom":
        D = tom_distance_matrix(tc, args.beta)
    elif args.method == "dtw":
        D = dtw_matrix(tc, center=args.center)
    else:
        F = acf_features(tc)
        if args.features_out:
            lags = [f"lag{r}" for r in range(1, F.shape[1] + 1)]
            with open(args.features_out, "w", encoding="utf-8") as fh:
                fh.write(",".join(["gene_id"] + lags) + "\n")
                for g, row in zip(tc.gene_ids, F):
                    fh.write(",".join([g] + [repr(float(v)) for v in row]) + "\n")
        D = tom_distance_matrix(F, args.beta)
    write_matrix(D.entries, tc.gene_ids, args.out)
    if args.newick:
        Path(args.newick).write_text(agglomerate(D).to_newick(tc.gene_ids) + "\n", encoding="utf-8")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_cluster(args):
    tc = load_time_course(args.data)
    part, secs = run_method(tc, args.method, args.K, args.seed)
    write_partition(part, tc.gene_ids, args.out)
    if args.newick and args.method in ("wgcna", "dtw", "acf"):
        dend = distance_pipeline(tc, args.method, args.K)[1]
        Path(args.newick).write_text(dend.to_newick(tc.gene_ids) + "\n", encoding="utf-8")
    print(f"wrote {args.out} ({part.K} clusters, {secs:.2f} s)")
    return EXIT_OK


def cmd_fit(args):
    tc = load_time_course(args.data)
    ks = [args.K] if args.k_range is None else _krange(args.k_range)
    opts = {"n_restarts": args.n_restarts}
    if args.model == "gmm" and args.covariance:
        opts["covariance_models"] = tuple(args.covariance.split(","))
    try:
        best, table = select_k_bic(tc, args.model, ks, seed=args.seed, **opts)
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    _write_json({"fit": best.as_dict(), "bic_table": table}, args.out)
    return EXIT_OK


def _krange(text):
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",")]


def cmd_case(args):
    method, length = parse_transform(args.transform)
    cs = load_cross_sectional(args.data, args.ages)
    target = None
    if args.target:
        lines = Path(args.target).read_text(encoding="utf-8").splitlines()
        if any(l.strip() and not l.startswith("#") for l in lines):
            target = load_gene_set(args.target)
    tests = []
    for i, path in enumerate(args.test or []):
        ages = args.test_ages[i] if args.test_ages and i < len(args.test_ages) else None
        tests.append(load_cross_sectional(path, ages))
    case = CaseOptions(age_filter_q=None if args.no_age_filter else args.age_filter_q,
                       cut_height=args.cut_height, min_module_size=args.min_module_size, K=args.K)
    report = run_case_pipeline(cs, method, length, args.method, target, tests, seed=args.seed,
                               n_perm=args.n_perm, case=case)
    part = report.pop("partition")
    if args.partition_out:
        write_partition(part, cs.gene_ids, args.partition_out)
    for note in report["notices"]:
        print(f"notice: {note}", file=sys.stderr)
    _write_json(report, args.out)
    return EXIT_OK


def cmd_preserve(args):
    ref = load_time_course(args.reference)
    test = load_time_course(args.test)
    labels = {}
    with open(args.partition, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if line.strip():
                g, k = line.strip().split(",")
                labels[g] = int(k)
    missing = [g for g in ref.gene_ids if g not in labels]
    if missing:
        raise ValidationError(f"partition lacks {len(missing)} reference genes, e.g. {missing[0]}")
    part = Partition.from_labels([labels[g] for g in ref.gene_ids])
    res = z_summary(ref, test, part, n_perm=args.n_perm, seed=args.seed, beta=args.beta)
    _write_json({"n_perm": res.n_perm, "rows": res.rows(), "skipped": list(res.skipped)}, args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bench", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run benchmark scenarios from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--replicates-csv", help="per-replicate CSV path")
    p.add_argument("--n-replicates", type=int, help="override n_replicates")
    p.set_defaults(func=cmd_run)

    for name in ("sim", "simgen"):
        p = sub.add_parser(name, help="simulate a study; writes <out>_data.csv and <out>_truth.csv")
        p.add_argument("--study", type=int, required=True, choices=(1, 2))
        p.add_argument("--interval", type=int, required=True)
        p.add_argument("--sizes", help="five comma-separated cluster sizes")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--noise-sd", type=float, default=0.4)
        p.add_argument("--orientation", choices=("column", "row"), default="column")
        p.add_argument("--out", help="output path stem")
        p.set_defaults(func=cmd_sim)

    p = sub.add_parser("transform", help="cross-sectional data to age curves")
    p.add_argument("--data", required=True)
    p.add_argument("--ages")
    p.add_argument("--method", choices=("bin", "smooth"), required=True)
    p.add_argument("--bin-length", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("distance", help="gene-gene distance matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("tom", "dtw", "acf"), required=True)
    p.add_argument("--beta", type=float, default=6.0)
    p.add_argument("--center", action="store_true", help="mean-centre curves before DTW")
    p.add_argument("--features-out", help="write ACF features (acf only)")
    p.add_argument("--newick", help="write the average-linkage tree")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("cluster", help="cluster a time-course CSV with one method")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--newick")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("fit", help="fit a mixture and write it as JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=("gmm", "mfda", "fcm"), required=True)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--k-range", help="e.g. 2..8; BIC picks the best")
    p.add_argument("--covariance", help="comma-separated GMM covariance models")
    p.add_argument("--n-restarts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("case", help="aging-cluster pipeline on cross-sectional data")
    p.add_argument("--data", required=True)
    p.add_argument("--ages")
    p.add_argument("--transform", default="bin:5", help="bin:<years> or smooth")
    p.add_argument("--method", choices=("wgcna", "gmm"), default="wgcna")
    p.add_argument("--target", help="reference gene set, one id per line")
    p.add_argument("--test", action="append", help="test data CSV (repeatable)")
    p.add_argument("--test-ages", action="append")
    p.add_argument("--K", type=int, default=5, help="components for gmm")
    p.add_argument("--age-filter-q", type=float, default=0.05)
    p.add_argument("--no-age-filter", action="store_true")
    p.add_argument("--cut-height", type=float, default=0.9)
    p.add_argument("--min-module-size", type=int, default=20)
    p.add_argument("--n-perm", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--partition-out")
    p.add_argument("--out")
    p.set_defaults(func=cmd_case)

    p = sub.add_parser("preserve", help="Z_summary of reference clusters in a test set")
    p.add_argument("--reference", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--partition", required=True, help="CSV gene_id,cluster")
    p.add_argument("--n-perm", type=int, default=200)
    p.add_argument("--beta", type=float, default=6.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_preserve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY


if __name__ == "__main__":
    sys.exit(main())
