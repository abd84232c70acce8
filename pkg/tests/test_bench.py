import json
import math

import numpy as np
import pytest

from tcclust.bench import (CaseOptions, PipelineOptions, ScenarioConfig, distance_pipeline,
                           planted_age_module, run_benchmark, run_case_pipeline, run_method)
from tcclust.core import CrossSectionalMatrix, GeneSet, ValidationError
from tcclust.evaluation import adjusted_rand_index
from tcclust.simgen import simulate


def test_wgcna_on_easy_replicate():
    sim = simulate(1, 1, seed=0)
    part, secs = run_method(sim.data, "wgcna")
    assert adjusted_rand_index(part, sim.truth) > 0.9
    assert part.K == 5 and secs > 0


def test_dtw_on_interval2_replicate():
    sim = simulate(1, 2, seed=1)
    part, _ = run_method(sim.data, "dtw")
    assert adjusted_rand_index(part, sim.truth) > 0.8


def test_acf_is_weak_on_short_curves():
    sim = simulate(1, 6, seed=0)
    part, _ = run_method(sim.data, "acf")
    assert adjusted_rand_index(part, sim.truth) < 0.5


def test_distance_pipeline_returns_tree_and_residual():
    sim = simulate(1, 3, seed=0)
    part, dend, residual = distance_pipeline(sim.data, "wgcna", 5)
    assert dend.n_leaves == sim.data.p
    assert residual == 4 and part.K == 5


def test_dtw_pipeline_always_prunes_into_the_noise_cluster():
    # the flat noise genes are the largest truth cluster (label 4)
    for seed in range(3):
        sim = simulate(1, 3, seed=seed)
        part, _, residual = distance_pipeline(sim.data, "dtw", 5)
        assert residual is not None
        members = part.members(residual)
        assert np.mean(sim.truth.labels[members] == 4) > 0.5


def test_unknown_method():
    sim = simulate(1, 6, (5, 5, 5, 5, 5))
    with pytest.raises(ValidationError):
        run_method(sim.data, "kmeans")


def test_report_shape_and_iqr():
    cfg = ScenarioConfig(1, 6, (10, 10, 10, 10, 10), n_replicates=3, methods=("wgcna", "gmm"))
    rep = run_benchmark(cfg)
    assert [r.method for r in rep.rows] == ["wgcna", "gmm"]
    for r in rep.rows:
        assert r.iqr_low <= r.median_ari <= r.iqr_high
        assert r.n_replicates == 3 and r.failures == 0
    assert len(rep.replicates) == 6
    d = json.loads(rep.to_json())
    assert d["config"]["methods"] == ["wgcna", "gmm"]


def test_single_replicate_collapses_iqr():
    rep = run_benchmark(ScenarioConfig(1, 6, (10, 10, 10, 10, 10), n_replicates=1,
                                       methods=("wgcna",)))
    r = rep.rows[0]
    assert r.iqr_low == r.median_ari == r.iqr_high


def test_benchmark_reproducible_without_timings():
    cfg = ScenarioConfig(1, 6, (10, 10, 10, 10, 10), n_replicates=2, methods=("wgcna", "gmm"))
    assert run_benchmark(cfg).as_dict(timings=False) == run_benchmark(cfg).as_dict(timings=False)


def test_failures_are_counted():
    # K larger than the data can support makes every mixture fit fail
    cfg = ScenarioConfig(1, 6, (1, 1, 1, 1, 1), n_replicates=2, methods=("gmm",), fixed_K=5)
    r = run_benchmark(cfg).rows[0]
    assert r.failures == 2 and math.isnan(r.median_ari)


def test_scenario_validation():
    with pytest.raises(ValidationError):
        ScenarioConfig(methods=())
    with pytest.raises(ValidationError):
        ScenarioConfig(study=2, interval=3)
    with pytest.raises(ValidationError):
        ScenarioConfig.from_dict({"study": 1, "colour": "red"})
    assert ScenarioConfig.from_dict({"methods": ["dtw"]}).methods == ("dtw",)


def test_parallel_matches_serial():
    cfg = dict(study=1, interval=6, cluster_sizes=(8, 8, 8, 8, 8), n_replicates=2, methods=("wgcna",))
    a = run_benchmark(ScenarioConfig(**cfg)).as_dict(timings=False)
    b = run_benchmark(ScenarioConfig(**cfg, n_jobs=2)).as_dict(timings=False)
    a["config"].pop("n_jobs"), b["config"].pop("n_jobs")
    assert a == b


# ---------------------------------------------------------------- case pipeline


@pytest.fixture(scope="module")
def small_case():
    return planted_age_module(n_genes=600, module_size=60, background_module_size=60, seed=3)


@pytest.mark.parametrize("transform,length", [("bin", 5.0), ("smooth", None)])
def test_case_recovers_planted_module(small_case, transform, length):
    rep = run_case_pipeline(small_case.data, transform, length, "wgcna", small_case.module,
                            n_perm=50)
    assert rep["confusion"]["sensitivity"] >= 0.8
    assert rep["confusion"]["precision"] >= 0.8
    assert rep["residual_cluster"] == rep["K"] - 1


def test_case_without_target_skips_confusion(small_case):
    rep = run_case_pipeline(small_case.data, "bin", 5.0, "wgcna", None, n_perm=50)
    assert rep["confusion"] is None
    assert any("skipped" in n for n in rep["notices"])


def test_case_self_preservation(small_case):
    rep = run_case_pipeline(small_case.data, "bin", 5.0, "wgcna", small_case.module,
                            test_sets=[small_case.data], n_perm=50)
    rows = rep["preservation"][0]["rows"]
    aging = [r for r in rows if r["cluster"] == rep["aging_cluster"]][0]
    assert aging["Z_summary"] > 10


def test_case_gmm_runs(small_case):
    rep = run_case_pipeline(small_case.data, "bin", 5.0, "gmm", small_case.module, n_perm=50,
                            case=CaseOptions(K=3))
    assert rep["confusion"]["precision"] >= 0.8


def test_case_reports_failing_stage(rng):
    cs = CrossSectionalMatrix(rng.standard_normal((50, 40)), rng.uniform(20, 80, 40).round())
    with pytest.raises(ValidationError, match="stage 'cluster'"):
        run_case_pipeline(cs, "bin", 5.0, "wgcna")
