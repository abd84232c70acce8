import numpy as np
import pytest

from tcclust.core import (CrossSectionalMatrix, GeneSet, ParseError, Partition, SymmetricMatrix,
                          TimeCourseMatrix, TimeGrid, ValidationError, derive_seed,
                          load_cross_sectional, load_gene_set, load_time_course, make_rng,
                          spawn_rngs, write_cross_sectional, write_partition, write_time_course)


def test_load_small_time_course(tmp_path):
    f = tmp_path / "tc.csv"
    f.write_text("gene_id,0,1,2,3\ng1,1,2,3,4\ng2,0,0,1,1\ng3,5,4,3,2\n")
    tc = load_time_course(f)
    assert (tc.p, tc.m) == (3, 4)
    assert tc.gene_ids == ("g1", "g2", "g3")


def test_six_point_header_gives_six_point_grid(tmp_path):
    f = tmp_path / "tc.csv"
    f.write_text("gene_id,0,6,12,18,24,30\ng1,1,2,3,4,5,6\n")
    tc = load_time_course(f)
    assert tc.grid.m == 6
    np.testing.assert_array_equal(tc.grid.points, [0, 6, 12, 18, 24, 30])


def test_columns_sorted_by_time(tmp_path):
    f = tmp_path / "tc.csv"
    f.write_text("gene_id,2,0,1\ng1,30,10,20\n")
    tc = load_time_course(f)
    np.testing.assert_array_equal(tc.values[0], [10, 20, 30])


@pytest.mark.parametrize("cell", ["NaN", "inf", "abc"])
def test_bad_cell_names_coordinates(tmp_path, cell):
    f = tmp_path / "tc.csv"
    f.write_text(f"gene_id,0,1,2\ng1,1,2,3\ng2,1,{cell},3\n")
    with pytest.raises(ParseError) as err:
        load_time_course(f)
    assert (err.value.row, err.value.column) == (3, 3)
    assert "row 3" in str(err.value) and "column 3" in str(err.value)


def test_ragged_row_rejected(tmp_path):
    f = tmp_path / "tc.csv"
    f.write_text("gene_id,0,1,2\ng1,1,2\n")
    with pytest.raises(ParseError):
        load_time_course(f)


def test_time_course_roundtrip(tmp_path, rng):
    tc = TimeCourseMatrix(TimeGrid([0.0, 1.5, 3.0]), rng.standard_normal((4, 3)))
    write_time_course(tc, tmp_path / "x.csv")
    back = load_time_course(tmp_path / "x.csv")
    np.testing.assert_array_equal(back.values, tc.values)
    assert back.gene_ids == tc.gene_ids


def test_cross_sectional_shapes(rng):
    ages = np.linspace(16, 88, 10)
    cs = CrossSectionalMatrix(rng.standard_normal((5, 10)), ages)
    assert (cs.p, cs.n) == (5, 10)


def test_single_subject_rejected():
    with pytest.raises(ValidationError):
        CrossSectionalMatrix(np.ones((3, 1)), np.array([40.0]))


def test_short_ages_rejected():
    with pytest.raises(ValidationError):
        CrossSectionalMatrix(np.ones((3, 4)), np.array([20.0, 30.0, 40.0]))


def test_negative_age_rejected():
    with pytest.raises(ValidationError):
        CrossSectionalMatrix(np.ones((2, 3)), np.array([20.0, -1.0, 40.0]))


def test_cross_sectional_roundtrip(tmp_path, rng):
    cs = CrossSectionalMatrix(rng.standard_normal((3, 6)), np.arange(20.0, 26.0))
    write_cross_sectional(cs, tmp_path / "d.csv", tmp_path / "a.csv")
    back = load_cross_sectional(tmp_path / "d.csv", tmp_path / "a.csv")
    np.testing.assert_array_equal(back.values, cs.values)
    np.testing.assert_array_equal(back.ages, cs.ages)


def test_ages_from_inline_row(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("gene_id,s1,s2,s3\nage,20,30,40\ng1,1,2,3\n")
    cs = load_cross_sectional(f)
    np.testing.assert_array_equal(cs.ages, [20, 30, 40])
    assert cs.p == 1


def test_missing_age_rejected(tmp_path):
    (tmp_path / "d.csv").write_text("gene_id,s1,s2,s3\ng1,1,2,3\n")
    (tmp_path / "a.csv").write_text("subject_id,age\ns1,20\ns2,30\n")
    with pytest.raises(ValidationError):
        load_cross_sectional(tmp_path / "d.csv", tmp_path / "a.csv")


def test_time_grid_invariants():
    with pytest.raises(ValidationError):
        TimeGrid([0.0])
    with pytest.raises(ValidationError):
        TimeGrid([0.0, 2.0, 1.0])
    assert TimeGrid.regular(0, 30, 3).m == 11


def test_duplicate_gene_ids_rejected():
    with pytest.raises(ValidationError):
        TimeCourseMatrix(TimeGrid([0, 1]), np.ones((2, 2)), ("a", "a"))


def test_partition_invariants():
    with pytest.raises(ValidationError):
        Partition(np.array([0, 2, 2]), 3)
    with pytest.raises(ValidationError):
        Partition(np.array([0, 1]), 2, np.array([[0.5, 0.6], [1.0, 0.0]]))
    part = Partition(np.array([1, 0, 1]))
    assert part.K == 2
    np.testing.assert_array_equal(part.sizes(), [1, 2])


def test_partition_from_labels_is_dense():
    part = Partition.from_labels(["b", "a", "b", "c"])
    np.testing.assert_array_equal(part.labels, [0, 1, 0, 2])


def test_symmetric_matrix_exact():
    with pytest.raises(ValidationError):
        SymmetricMatrix(np.array([[0, 1], [1 + 1e-15, 0]]))


def test_gene_set(tmp_path):
    f = tmp_path / "g.txt"
    f.write_text("# reference\ng1\n\ng2\n")
    gs = load_gene_set(f)
    assert len(gs) == 2 and "g1" in gs
    with pytest.raises(ValidationError):
        GeneSet(frozenset())


def test_rng_reproducible():
    a = make_rng(7).standard_normal(5)
    b = make_rng(7).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    c1 = [g.standard_normal() for g in spawn_rngs(3, 4)]
    c2 = [g.standard_normal() for g in spawn_rngs(3, 4)]
    assert c1 == c2 and len(set(c1)) == 4
    assert derive_seed(1, 2) == derive_seed(1, 2) != derive_seed(1, 3)


def test_write_partition(tmp_path):
    write_partition(Partition(np.array([0, 1, 0])), ["a", "b", "c"], tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines() == ["gene_id,cluster", "a,0", "b,1", "c,0"]
