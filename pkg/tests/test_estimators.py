import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from transindex import oracles
from transindex.estimators import HeatKernelEstimator, IndexEstimator


def test_heat_estimator_predicts_torus_kernel():
    est = HeatKernelEstimator(space="flat-torus").fit()
    X = np.array([[0.1, 1.0, 1.0, 1.2, 0.9], [0.3, 0.0, 0.0, 3.0, 3.0]])
    ref = [oracles.torus_kernel((2 * np.pi, 2 * np.pi), t, np.array([y - x]))[0]
           for t, x, y in ((r[0], r[1:3], r[3:]) for r in X)]
    assert np.allclose(est.predict(X), ref, rtol=1e-12)
    assert est.log_gradient(X).shape == (2, 2)


def test_heat_estimator_params_and_validation():
    est = HeatKernelEstimator(space="football", q=3)
    assert est.get_params() == {"space": "football", "q": 3}
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((1, 7)))
    est.fit()
    with pytest.raises(ValueError):
        est.predict(np.zeros((1, 5)))
    with pytest.raises(ValueError):
        est.predict(np.array([[0.0, 0, 0, 1, 0, 0, 1]]))


def test_index_estimator_on_torus():
    est = IndexEstimator(space="flat-torus", twist=2, n_paths=300, seed=5).fit()
    assert est.geometric_ == pytest.approx(2.0)
    assert est.score() > -4
    assert est.report_.verdict == "pass"
    with pytest.raises(ValueError):
        IndexEstimator(seed=None).fit()
