import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ritzkit import DeepRitzRegressor
from ritzkit.cases import poisson_cube

SMALL = dict(widths=(4, 8), lambdas=(10.0, 100.0), deltas=(1e-2, 1e-3), max_steps=100, n_interior=128, n_boundary=16)


def test_params_round_trip():
    est = DeepRitzRegressor(lr=5e-3, random_state=3)
    params = est.get_params()
    assert params["lr"] == 5e-3 and params["random_state"] == 3 and params["case"] == "poisson_1d_sine"
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(max_steps=10)
    assert est.max_steps == 10


def test_not_fitted():
    with pytest.raises(NotFittedError):
        DeepRitzRegressor().predict(np.zeros((2, 1)))


@pytest.fixture(scope="module")
def fitted():
    return DeepRitzRegressor(**SMALL, random_state=1).fit()


def test_fit_sets_attributes(fitted):
    assert fitted.n_features_in_ == 1
    assert len(fitted.reports_) == 2 and fitted.params_.width == 8
    assert all(r.seconds == 0.0 for r in fitted.reports_)


def test_predict(fitted):
    X = np.linspace(0, 1, 11)[:, None]
    y = fitted.predict(X)
    assert y.shape == (11,)
    assert fitted.predict_gradient(X).shape == (11, 1)
    with pytest.raises(ValueError):
        fitted.predict(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        fitted.predict([[np.nan]])


def test_score_against_exact_solution(fitted):
    X = np.linspace(0.05, 0.95, 50)[:, None]
    assert fitted.score(X, np.sin(np.pi * X[:, 0])) <= 1.0


def test_energy(fitted):
    e = fitted.energy(N=4096, M=64)
    assert np.isfinite(e.total) and e.stderr > 0


def test_fit_is_reproducible():
    a = DeepRitzRegressor(**SMALL, random_state=2).fit(np.zeros((5, 1)))
    b = DeepRitzRegressor(**SMALL, random_state=2).fit()
    assert a.params_.flat().tobytes() == b.params_.flat().tobytes()


def test_case_object_accepted():
    est = DeepRitzRegressor(case=poisson_cube(2), **{**SMALL, "max_steps": 20}).fit()
    assert est.n_features_in_ == 2 and est.predict(np.full((1, 2), 0.5)).shape == (1,)


@pytest.mark.parametrize(
    "bad", [dict(max_steps=0), dict(lr=-1.0), dict(patience=1.5), dict(random_state=-1), dict(kink_width=-0.1),
            dict(widths=(8, 4)), dict(case="nope")],
)
def test_invalid_hyperparameters(bad):
    with pytest.raises((ValueError, KeyError)):
        DeepRitzRegressor(**{**SMALL, **bad}).fit()
