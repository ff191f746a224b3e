import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from localsieve import Grid, GridFunction, apply_localized, builtin_kernel, builtin_localizer, oscillation_report
from localsieve.estimators import LocalizedTransform, OscillationFeatures
from localsieve.spaces import BallFamily


@pytest.fixture(scope="module")
def X():
    g = Grid(1, 8.0, 256)
    rng = np.random.default_rng(0)
    return np.where(np.abs(g.axis) < 1.5, rng.normal(size=(3, g.n)), 0.0)


def test_localized_transform_rows(X):
    est = LocalizedTransform().fit(X)
    Y = est.transform(X)
    assert Y.shape == X.shape and est.certificate_.ok
    g = Grid(1, 8.0, 256)
    ref = apply_localized(builtin_kernel("hilbert"), builtin_localizer("bump"), GridFunction(g, X[1]))
    assert np.allclose(Y[1], ref.values)


def test_params_and_clone():
    est = LocalizedTransform(eta="one", half_width=4.0)
    assert est.get_params() == {"kernel": "hilbert", "eta": "one", "half_width": 4.0}
    assert clone(est).get_params() == est.get_params()


def test_not_fitted_and_shape_checks(X):
    with pytest.raises(NotFittedError):
        LocalizedTransform().transform(X)
    est = LocalizedTransform().fit(X)
    with pytest.raises(ValueError):
        est.transform(X[:, :128])
    with pytest.raises(ValueError):
        LocalizedTransform().fit(np.zeros((2, 100)))


def test_oscillation_features(X):
    est = OscillationFeatures(stride=8)
    F = est.fit_transform(X)
    assert F.shape == (3, 4)
    assert list(est.get_feature_names_out()) == ["bmo", "bmo_loc", "lmo_loc", "large_mean"]
    rep = oscillation_report(GridFunction(Grid(1, 8.0, 256), X[0]), BallFamily(Grid(1, 8.0, 256), stride=8))
    assert F[0] == pytest.approx([rep.value, rep.bmo_loc, rep.lmo_loc, rep.large_mean])


def test_pipeline(X):
    pipe = make_pipeline(LocalizedTransform(), OscillationFeatures(stride=8))
    assert pipe.fit_transform(X).shape == (3, 4)
