import numpy as np
import pytest
from sklearn.base import clone

from dinf.estimator import GridFieldRegressor, PDEFieldSolver


def _plane(n=400, seed=0):
    X = np.random.default_rng(seed).uniform(-1, 1, (n, 2))
    return X, 0.5 * X[:, 0] - 0.25 * X[:, 1]


def test_fit_predict_and_gradient():
    X, y = _plane()
    reg = GridFieldRegressor(n_max=16, n_scales=2, iters=300, lr=1e-2).fit(X, y)
    assert reg.predict(X).shape == (400,)
    assert np.mean(np.abs(reg.predict(X) - y)) < 0.03
    g = reg.gradient(X[:50])
    assert g.shape == (50, 2)
    np.testing.assert_allclose(g.mean(0), [0.5, -0.25], atol=0.1)


def test_multi_output_shapes():
    X, y = _plane(100)
    Y = np.stack([y, -y], 1)
    reg = GridFieldRegressor(n_max=8, n_scales=1, iters=5).fit(X, Y)
    assert reg.predict(X).shape == (100, 2)
    assert reg.gradient(X).shape == (100, 2, 2)


def test_input_validation():
    X, y = _plane(50)
    reg = GridFieldRegressor(n_max=8, n_scales=1, iters=2).fit(X, y)
    with pytest.raises(ValueError, match=r"\[-1, 1\]"):
        reg.predict(X * 2)
    with pytest.raises(ValueError, match="features"):
        reg.predict(X[:, :1])
    with pytest.raises(ValueError):
        GridFieldRegressor(iters=1).fit(np.zeros((5, 4)), np.zeros(5))
    with pytest.raises(ValueError):
        GridFieldRegressor(n_max=48, n_scales=6, iters=1).fit(X, y)


def test_clone_keeps_params():
    reg = GridFieldRegressor(n_max=24, lr=3e-3)
    assert clone(reg).get_params() == reg.get_params()


def test_pde_solver_short_heat():
    sol = PDEFieldSolver("heat", "heat_desk", overrides=("train.iters=3", "sample.res=16", "eval.res=16"))
    sol.fit()
    assert np.isfinite(sol.score())
    assert sol.predict(np.zeros((3, 2))).shape == (3, 1)
