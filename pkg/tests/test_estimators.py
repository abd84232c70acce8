import numpy as np
import pytest
from sklearn.base import clone

from tcclust.core import ValidationError
from tcclust.estimators import (ACFClustering, AgeBinner, AgeSmoother, DTWClustering,
                                FCMClustering, GaussianMixtureClustering, MFDAClustering,
                                WGCNAClustering)
from tcclust.evaluation import adjusted_rand_index
from tcclust.simgen import simulate


@pytest.fixture(scope="module")
def sim():
    return simulate(1, 6, (25, 50, 100, 150, 200), seed=0)


@pytest.mark.parametrize("cls", [WGCNAClustering, DTWClustering, ACFClustering])
def test_distance_estimators(sim, cls):
    est = cls(n_clusters=5, times=sim.data.grid.points).fit(sim.data.values)
    assert est.labels_.shape == (sim.data.p,)
    assert est.n_features_in_ == 6
    assert est.partition_.K == 5


@pytest.mark.parametrize("cls", [GaussianMixtureClustering, MFDAClustering, FCMClustering])
def test_mixture_estimators(sim, cls):
    est = cls(n_clusters=5, times=sim.data.grid.points, n_restarts=2, random_state=0)
    labels = est.fit_predict(sim.data.values)
    assert adjusted_rand_index(labels, est.predict(sim.data.values)) == 1.0
    P = est.predict_proba(sim.data.values)
    np.testing.assert_allclose(P.sum(1), 1, atol=1e-9)
    assert np.isfinite(est.score(sim.data.values)) and np.isfinite(est.bic())


def test_get_params_and_clone():
    est = GaussianMixtureClustering(n_clusters=3, covariance_model="full-varying")
    assert est.get_params()["covariance_model"] == "full-varying"
    twin = clone(est).set_params(n_clusters=4)
    assert twin.n_clusters == 4 and est.n_clusters == 3


def test_input_validation():
    with pytest.raises(ValueError):
        WGCNAClustering().fit(np.array([[1.0, np.nan, 2.0]] * 10))
    with pytest.raises(ValidationError):
        WGCNAClustering(times=[0, 1]).fit(np.ones((10, 3)))


def test_age_binner(rng):
    X = rng.standard_normal((5, 60))
    ages = rng.uniform(20, 80, 60)
    b = AgeBinner(bin_length=10.0)
    out = b.fit_transform(X, ages)
    assert out.shape == (5, b.grid_.size)


def test_age_smoother(rng):
    ages = np.repeat(np.arange(20.0, 70.0, 5.0), 3)
    X = rng.standard_normal((4, ages.size))
    s = AgeSmoother().fit(X, ages)
    assert s.transform(X).shape == (4, 10)
