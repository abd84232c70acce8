import numpy as np
import pytest

from tcclust.core import ValidationError
from tcclust.simgen import (FULL_SIZES, HALF_SIZES, TRANSITION, Study1Config, f1, f2,
                            simulate, simulate_study1, theta_path)


def test_study1_interval3_shape():
    sim = simulate(1, 3, FULL_SIZES, seed=0)
    assert sim.data.values.shape == (1050, 11)
    np.testing.assert_array_equal(sim.truth.sizes(), FULL_SIZES)
    # truth labels follow generation blocks
    assert np.all(np.diff(sim.truth.labels) >= 0)


def test_study1_interval6_grid():
    sim = simulate(1, 6, seed=0)
    np.testing.assert_array_equal(sim.data.grid.points, [0, 6, 12, 18, 24, 30])


def test_study1_default_sizes():
    assert simulate(1, 1).data.p == sum(HALF_SIZES)
    assert simulate(1, 6).data.p == sum(FULL_SIZES)


def test_noiseless_cluster_one_is_f1():
    cfg = Study1Config(3, (3, 1, 1, 1, 1), noise_sd=0.0, shift_halfwidth=0.0, amplitude_sd=0.0)
    sim = simulate_study1(cfg)
    t = sim.data.grid.points
    for row in sim.data.values[:3]:
        np.testing.assert_allclose(row, f1(t), rtol=0, atol=1e-12)
    np.testing.assert_allclose(sim.data.values[3], f2(t), atol=1e-12)


def test_noise_cluster_is_flat_without_noise():
    cfg = Study1Config(3, (1, 1, 1, 1, 5), noise_sd=0.0)
    vals = simulate_study1(cfg).data.values[4:]
    assert np.all(np.ptp(vals, axis=1) == 0)
    assert np.all(np.abs(vals[:, 0]) <= 1)


def test_first_state_is_first_column_of_transition():
    theta = theta_path()
    np.testing.assert_allclose(theta[:, 1], [0.8, 0.0, -0.1, 0.0], atol=1e-15)
    np.testing.assert_allclose(theta[:, 1], TRANSITION[:, 0], atol=0)


def test_row_orientation_uses_first_row():
    theta = theta_path(orientation="row")
    np.testing.assert_allclose(theta[:, 1], TRANSITION[0], atol=0)


def test_study2_shapes():
    assert simulate(2, 4, seed=0).data.m == 6
    np.testing.assert_array_equal(simulate(2, 4).data.grid.points, [0, 4, 8, 12, 16, 20])
    assert simulate(2, 1, HALF_SIZES).data.values.shape == (525, 21)


def test_study2_noiseless_rows_follow_state_path():
    sim = simulate(2, 2, (1, 1, 1, 1, 1), noise_sd=0.0)
    np.testing.assert_allclose(sim.data.values[:4], theta_path()[:, ::2], atol=1e-15)


def test_same_seed_bit_identical():
    a = simulate(1, 3, seed=11).data.values
    b = simulate(1, 3, seed=11).data.values
    assert np.array_equal(a, b)
    assert not np.array_equal(a, simulate(1, 3, seed=12).data.values)


@pytest.mark.parametrize("study,interval", [(1, 4), (1, 5), (2, 3), (3, 1)])
def test_invalid_interval(study, interval):
    with pytest.raises(ValidationError):
        simulate(study, interval)


def test_invalid_sizes():
    with pytest.raises(ValidationError):
        simulate(1, 3, (10, 10, 0, 10, 10))
    with pytest.raises(ValidationError):
        simulate(1, 3, (10, 10))


def test_amplitudes_positive():
    # amplitude a_i is redrawn until positive, so curves never flip sign of f_k
    cfg = Study1Config(3, (200, 1, 1, 1, 1), noise_sd=0.0, shift_halfwidth=0.0, amplitude_sd=2.0)
    vals = simulate_study1(cfg).data.values[:200]
    t = np.arange(0, 31, 3.0)
    ratio = vals / f1(t)
    assert np.all(ratio > 0)
