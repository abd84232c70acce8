import json

import numpy as np
import pytest

from tcclust.bench import planted_age_module
from tcclust.cli import main
from tcclust.core import load_time_course, write_cross_sectional


@pytest.fixture
def case_files(tmp_path):
    c = planted_age_module(n_genes=400, module_size=60, background_module_size=40, seed=1)
    write_cross_sectional(c.data, tmp_path / "d.csv", tmp_path / "a.csv")
    (tmp_path / "target.txt").write_text("\n".join(sorted(c.module.ids)) + "\n")
    return tmp_path


def test_sim_writes_data_and_truth(tmp_path):
    stem = tmp_path / "s"
    assert main(["sim", "--study", "1", "--interval", "3", "--sizes", "5,5,5,5,5",
                 "--out", str(stem)]) == 0
    tc = load_time_course(f"{stem}_data.csv")
    assert (tc.p, tc.m) == (25, 11)
    assert (tmp_path / "s_truth.csv").read_text().startswith("gene_id,cluster")


def test_simgen_alias(tmp_path):
    assert main(["simgen", "--study", "2", "--interval", "4", "--out", str(tmp_path / "x")]) == 0


def test_run_from_config(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('n_replicates = 2\nmethods = ["wgcna", "gmm"]\n'
                   '[[scenario]]\nstudy = 1\ninterval = 6\ncluster_sizes = [10, 10, 10, 10, 10]\n')
    out = tmp_path / "rep.json"
    assert main(["run", "--config", str(cfg), "--out", str(out),
                 "--replicates-csv", str(tmp_path / "reps.csv")]) == 0
    rows = json.loads(out.read_text())["reports"][0]["rows"]
    assert [r["method"] for r in rows] == ["wgcna", "gmm"]
    assert len((tmp_path / "reps.csv").read_text().splitlines()) == 5


def test_run_bad_config_exit_2(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('methods = []\n')
    assert main(["run", "--config", str(cfg)]) == 2
    cfg.write_text('study = [\n')
    assert main(["run", "--config", str(cfg)]) == 2


def test_run_all_failed_exit_3(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('study = 1\ninterval = 6\ncluster_sizes = [1, 1, 1, 1, 1]\n'
                   'n_replicates = 1\nmethods = ["gmm"]\n')
    assert main(["run", "--config", str(cfg)]) == 3


def test_transform_and_distance(case_files):
    d = case_files
    assert main(["transform", "--data", str(d / "d.csv"), "--ages", str(d / "a.csv"),
                 "--method", "bin", "--bin-length", "5", "--out", str(d / "tc.csv")]) == 0
    for method in ("tom", "dtw", "acf"):
        out = d / f"{method}.csv"
        assert main(["distance", "--data", str(d / "tc.csv"), "--method", method,
                     "--out", str(out), "--newick", str(d / f"{method}.nwk")]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 401
        assert (d / f"{method}.nwk").read_text().strip().endswith(";")


def test_transform_missing_bin_length_exit_2(case_files):
    d = case_files
    assert main(["transform", "--data", str(d / "d.csv"), "--ages", str(d / "a.csv"),
                 "--method", "bin", "--out", str(d / "x.csv")]) == 2


def test_malformed_csv_exit_2(tmp_path):
    (tmp_path / "bad.csv").write_text("gene_id,0,1,2\ng1,1,NaN,3\n")
    assert main(["distance", "--data", str(tmp_path / "bad.csv"), "--method", "tom",
                 "--out", str(tmp_path / "o.csv")]) == 2


def test_fit_writes_json(tmp_path):
    stem = tmp_path / "s"
    main(["sim", "--study", "1", "--interval", "6", "--sizes", "10,10,10,10,10", "--out", str(stem)])
    out = tmp_path / "fit.json"
    assert main(["fit", "--data", f"{stem}_data.csv", "--model", "mfda", "--k-range", "2..3",
                 "--n-restarts", "2", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["fit"]["model"] == "mfda" and len(doc["bic_table"]) == 2


def test_cluster_writes_partition(tmp_path):
    stem = tmp_path / "s"
    main(["sim", "--study", "1", "--interval", "6", "--sizes", "10,10,10,10,10", "--out", str(stem)])
    out = tmp_path / "p.csv"
    assert main(["cluster", "--data", f"{stem}_data.csv", "--method", "dtw", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 51


def test_case_command(case_files):
    d = case_files
    out = d / "case.json"
    assert main(["case", "--data", str(d / "d.csv"), "--ages", str(d / "a.csv"),
                 "--transform", "bin:5", "--method", "wgcna", "--target", str(d / "target.txt"),
                 "--test", str(d / "d.csv"), "--test-ages", str(d / "a.csv"), "--n-perm", "50",
                 "--out", str(out), "--partition-out", str(d / "cp.csv")]) == 0
    rep = json.loads(out.read_text())
    assert rep["confusion"]["sensitivity"] >= 0.8
    assert rep["preservation"][0]["rows"][0]["band"] in ("strong", "moderate", "none")


def test_case_empty_target_notice(case_files, capsys):
    d = case_files
    (d / "empty.txt").write_text("")
    assert main(["case", "--data", str(d / "d.csv"), "--ages", str(d / "a.csv"),
                 "--target", str(d / "empty.txt"), "--out", str(d / "c.json")]) == 0
    assert "skipped" in capsys.readouterr().err
    assert json.loads((d / "c.json").read_text())["confusion"] is None


def test_preserve_command(tmp_path):
    stem = tmp_path / "s"
    main(["sim", "--study", "1", "--interval", "3", "--sizes", "20,20,20,20,20", "--out", str(stem)])
    out = tmp_path / "z.json"
    assert main(["preserve", "--reference", f"{stem}_data.csv", "--test", f"{stem}_data.csv",
                 "--partition", f"{stem}_truth.csv", "--n-perm", "50", "--out", str(out)]) == 0
    rows = json.loads(out.read_text())["rows"]
    assert {"cluster", "size", "Z_density", "Z_connectivity", "Z_summary", "band"} <= set(rows[0])


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as e:
        main(["distance", "--method", "euclid"])
    assert e.value.code == 2
