import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from epimest import EpiSplineDensity, EpiSplineRegressor, integral


def test_density_fit_predict(rng):
    X = rng.random((200, 2))
    est = EpiSplineDensity(cells=3, box=([0, 0], [1, 1])).fit(X)
    assert est.n_features_in_ == 2
    assert est.predict(X).shape == (200,)
    assert integral(est.model_) == pytest.approx(1.0, abs=1e-8)
    assert np.all(est.predict(X) >= -1e-12)
    assert est.transform(X).shape == (200, 1)
    assert np.isclose(est.score(X), est.score_samples(X).sum())
    assert est.result_.feasible


def test_density_infers_box(rng):
    X = rng.normal(size=(100, 1))
    est = EpiSplineDensity(cells=4).fit(X)
    assert np.allclose(est.box_.lower, X.min()) and np.allclose(est.box_.upper, X.max())


def test_regressor_score(rng):
    X = rng.random((150, 2))
    y = 2 * X[:, 0] + X[:, 1]
    reg = EpiSplineRegressor(cells=2, constraints=[{"type": "Continuity"}]).fit(X, y)
    assert reg.score(X, y) > 0.999


def test_params_and_clone():
    est = EpiSplineDensity(loss="ls_density", cells=5, penalty=0.1)
    params = est.get_params()
    assert params["loss"] == "ls_density" and params["cells"] == 5
    assert clone(est).get_params() == params


def test_not_fitted_and_bad_input(rng):
    with pytest.raises(NotFittedError):
        EpiSplineDensity().predict([[0.5]])
    with pytest.raises(ValueError):
        EpiSplineDensity(loss="hinge").fit(rng.random((10, 1)))
    est = EpiSplineDensity(cells=2).fit(rng.random((20, 1)))
    with pytest.raises(ValueError):
        est.predict(rng.random((3, 2)))
