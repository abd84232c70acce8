import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tcclust.core import GeneSet, Partition, TimeCourseMatrix, TimeGrid, ValidationError
from tcclust.evaluation import (adjusted_rand_index, confusion_vs_geneset, pick_aging_cluster,
                                preservation_band, z_summary)


def ari_by_pair_counts(a, b):
    """Oracle: ARI from the 2x2 table of agreeing and disagreeing pairs."""
    n11 = n10 = n01 = n00 = 0
    for i, j in itertools.combinations(range(len(a)), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        if sa and sb:
            n11 += 1
        elif sa:
            n10 += 1
        elif sb:
            n01 += 1
        else:
            n00 += 1
    den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11)
    if den == 0:
        return 1.0
    return 2.0 * (n00 * n11 - n01 * n10) / den


labelings = st.integers(2, 30).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n),
                        st.lists(st.integers(0, 4), min_size=n, max_size=n)))


def test_identical_partitions():
    assert adjusted_rand_index([0, 0, 1, 2], [0, 0, 1, 2]) == 1.0


def test_relabelled_partitions():
    assert adjusted_rand_index([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0


def test_crossed_partitions_hand_value():
    # pairs: n11=0, n10=2, n01=2, n00=2 -> 2(0 - 4) / (4*2 + 4*2)
    assert adjusted_rand_index([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5, abs=1e-15)


@given(labelings)
def test_ari_matches_pair_count_oracle(ab):
    a, b = map(np.array, ab)
    assert adjusted_rand_index(a, b) == pytest.approx(ari_by_pair_counts(a, b), abs=1e-12)


@given(labelings)
def test_ari_symmetric(ab):
    a, b = ab
    assert adjusted_rand_index(a, b) == adjusted_rand_index(b, a)


@given(labelings, st.permutations(range(5)), st.randoms(use_true_random=False))
def test_ari_label_and_order_invariant(ab, relabel, rnd):
    a, b = map(np.array, ab)
    base = adjusted_rand_index(a, b)
    assert adjusted_rand_index(np.array(relabel)[a], b) == pytest.approx(base, abs=1e-12)
    order = list(range(a.size))
    rnd.shuffle(order)
    assert adjusted_rand_index(a[order], b[order]) == pytest.approx(base, abs=1e-12)


@given(st.lists(st.integers(0, 4), min_size=2, max_size=40))
def test_ari_identity(a):
    assert adjusted_rand_index(a, a) == 1.0


def test_ari_accepts_partitions():
    p = Partition(np.array([0, 1, 1, 0]))
    assert adjusted_rand_index(p, p) == 1.0


def test_confusion_cluster_equals_target():
    ids = [f"g{i}" for i in range(6)]
    m = confusion_vs_geneset(np.array([0, 0, 1, 1, 1, 1]), 0, GeneSet(frozenset({"g0", "g1"})), ids)
    assert (m.sensitivity, m.specificity, m.accuracy, m.precision) == (1, 1, 1, 1)


def test_confusion_disjoint():
    ids = [f"g{i}" for i in range(6)]
    m = confusion_vs_geneset(np.array([0, 0, 1, 1, 1, 1]), 0, {"g4", "g5"}, ids)
    assert m.sensitivity == 0 and m.precision == 0


def test_confusion_table_arithmetic():
    ids = [f"g{i}" for i in range(1000)]
    labels = np.ones(1000, dtype=int)
    labels[:100] = 0
    target = set(ids[50:250])   # overlap 50 with the cluster
    m = confusion_vs_geneset(labels, 0, target, ids)
    assert (m.tp, m.fp, m.fn, m.tn) == (50, 50, 150, 750)
    assert m.sensitivity == 0.25 and m.precision == 0.5
    assert m.specificity == 750 / 800 and m.accuracy == 0.8


def test_confusion_undefined_flagged():
    ids = ["a", "b"]
    m = confusion_vs_geneset(np.array([0, 0]), 0, {"a", "b"}, ids)
    assert "specificity" in m.undefined and np.isnan(m.specificity)


def test_confusion_target_outside_universe():
    with pytest.raises(ValidationError):
        confusion_vs_geneset(np.array([0, 1]), 0, {"zz"}, ["a", "b"])


def test_pick_aging_cluster(rng):
    t = np.linspace(20, 80, 12)
    reps = np.vstack([1 + 0.01 * rng.standard_normal(12), 3 * t, rng.standard_normal(12)])
    assert pick_aging_cluster(reps, t) == 1
    reps[1] = -t
    assert pick_aging_cluster(reps, t) == 1


def test_pick_aging_cluster_trend_over_flat(rng):
    t = np.arange(0, 31, 3.0)
    hits = 0
    for _ in range(100):
        reps = 0.2 * rng.standard_normal((5, t.size))
        reps[3] += 0.05 * t
        hits += pick_aging_cluster(reps, t) == 3
    assert hits >= 95


def test_pick_aging_cluster_all_constant():
    with pytest.raises(ValidationError):
        pick_aging_cluster(np.ones((2, 4)), np.arange(4.0))


def test_preservation_bands():
    assert [preservation_band(z) for z in (11, 5, 1)] == ["strong", "moderate", "none"]


def _modules(rng, p_mod=30, n_mod=3, p_noise=60, m=20, sd=0.3):
    f = rng.standard_normal((n_mod, m))
    X = [f[k] + sd * rng.standard_normal((p_mod, m)) for k in range(n_mod)]
    X.append(rng.standard_normal((p_noise, m)))
    labels = np.repeat(np.arange(n_mod + 1), [p_mod] * n_mod + [p_noise])
    return TimeCourseMatrix(TimeGrid(np.arange(m, dtype=float)), np.vstack(X)), Partition(labels)


def test_self_preservation_strong(rng):
    tc, part = _modules(rng)
    res = z_summary(tc, tc, part, n_perm=100, seed=1, clusters=[0, 1, 2])
    assert all(c.z_summary > 10 for c in res.clusters)
    assert all(c.band == "strong" for c in res.clusters)


def test_z_summary_reproducible(rng):
    tc, part = _modules(rng)
    a = z_summary(tc, tc, part, n_perm=60, seed=3).rows()
    b = z_summary(tc, tc, part, n_perm=60, seed=3).rows()
    assert a == b


def test_z_summary_is_mean_of_components(rng):
    tc, part = _modules(rng)
    for c in z_summary(tc, tc, part, n_perm=60, seed=3).clusters:
        assert c.z_summary == pytest.approx(0.5 * (c.z_density + c.z_connectivity))


def test_z_summary_needs_enough_permutations(rng):
    tc, part = _modules(rng)
    with pytest.raises(ValidationError):
        z_summary(tc, tc, part, n_perm=10)


def test_z_summary_skips_tiny_clusters(rng):
    tc, _ = _modules(rng)
    labels = np.zeros(tc.p, dtype=int)
    labels[:2] = 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = z_summary(tc, tc, Partition(labels), n_perm=50)
    assert res.skipped == (1,)
