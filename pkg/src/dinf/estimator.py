"""scikit-learn style estimators over the functional core.

``GridFieldRegressor`` fits a field to scattered samples (the signal-fitting
loss); ``PDEFieldSolver`` solves one of the bundled problems from a config and
then behaves like a fitted regressor on normalised coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .config import parse_config, resolve_config
from .errors import ConfigError
from .field import FieldModel
from .interp import RbfConfig, query_batch
from .optim import TrainConfig, train
from .pde import Problem, signal_fit_loss


@dataclass
class _SampleFit(Problem):
    """Signal fit on a fixed set of scattered samples."""

    points: np.ndarray | None = None
    targets: np.ndarray | None = None

    def __post_init__(self):
        self.kind = "fit"
        self.primary = "mae"
        super().__post_init__()
        self._batch = None

    def sample(self, model, rng):
        table = model.query_table()
        if self._batch is None or self._batch.table is not table:
            self._batch = query_batch(self.points, table, {"target": self.targets})
        return {"samples": self._batch}

    def loss_term(self, name, u, batch):
        return signal_fit_loss(u, batch)

    def metrics(self, model):
        return {"mae": float(np.mean(np.abs(model.predict(self.points) - self.targets)))}


def _check_coords(X, d=None):
    X = check_array(X, dtype=np.float64)
    if d is not None and X.shape[1] != d:
        raise ValueError(f"X has {X.shape[1]} features, the field was fitted with {d}")
    if np.any(np.abs(X) > 1.0):
        raise ValueError("coordinates must lie in [-1, 1]")
    return X


class GridFieldRegressor(RegressorMixin, BaseEstimator):
    """Multi-resolution RBF feature grid fitted to samples ``(X, y)``.

    ``X`` holds coordinates in ``[-1, 1]^d`` (d = 1, 2 or 3), ``y`` one or more
    output channels. Training minimises the mean absolute error with Adam.
    """

    def __init__(self, n_max=32, n_scales=3, n_features=2, eps=1.0, rho=3, decoder="linear", hidden=(),
                 activation="tanh", iters=500, lr=5e-3, seed=0):
        self.n_max = n_max
        self.n_scales = n_scales
        self.n_features = n_features
        self.eps = eps
        self.rho = rho
        self.decoder = decoder
        self.hidden = hidden
        self.activation = activation
        self.iters = iters
        self.lr = lr
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, multi_output=True, y_numeric=True)
        X = _check_coords(X)
        if X.shape[1] not in (1, 2, 3):
            raise ValueError(f"fields are 1-, 2- or 3-D, got {X.shape[1]} input columns")
        self._y_1d = y.ndim == 1
        Y = y.reshape(len(y), -1)
        d, m = X.shape[1], Y.shape[1]
        try:
            self.model_ = FieldModel.create(
                d, m, self.n_max, self.n_scales, self.n_features, rbf=RbfConfig(self.eps, self.rho),
                decoder=self.decoder, hidden=tuple(self.hidden), activation=self.activation, seed=self.seed,
            )
        except ConfigError as exc:
            raise ValueError(str(exc)) from exc
        problem = _SampleFit(d=d, m=m, points=X, targets=Y)
        self.history_ = train(self.model_, problem, TrainConfig(iters=self.iters, lr=self.lr, seed=self.seed,
                                                                log_every=max(1, self.iters)))
        self.n_features_in_ = d
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = _check_coords(X, self.n_features_in_)
        out = self.model_.predict(X)
        return out[:, 0] if self._y_1d else out

    def gradient(self, X):
        """Spatial gradient, shape ``(n, d)`` (single output) or ``(n, m, d)``."""
        check_is_fitted(self, "model_")
        X = _check_coords(X, self.n_features_in_)
        g = np.moveaxis(self.model_.evaluate_points(X).grad, 0, -1)
        return g[:, 0] if self._y_1d else g


class PDEFieldSolver(BaseEstimator):
    """Solve a bundled problem (``heat``, ``advect``, ``poisson``, ...) from a config.

    ``fit`` ignores ``X``; ``predict`` evaluates the solved field at normalised
    coordinates and ``metrics_`` holds the final metrics.
    """

    def __init__(self, command="heat", config="heat_desk", overrides=(), deterministic=True):
        self.command = command
        self.config = config
        self.overrides = overrides
        self.deterministic = deterministic

    def fit(self, X=None, y=None):
        from .cli import build_model, build_problem, train_config

        text = resolve_config(self.config).read_text()
        cfg = parse_config(text, self.command, tuple(self.overrides), str(self.config))
        self.problem_ = build_problem(cfg)
        self.model_ = build_model(cfg, self.problem_)
        tc = train_config(cfg, None, self.deterministic, cfg["run.threads"])
        self.history_ = train(self.model_, self.problem_, tc)
        self.metrics_ = dict(self.history_.final_metrics)
        self.n_features_in_ = self.problem_.d
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = _check_coords(X, self.n_features_in_)
        return self.model_.predict(X)

    def score(self, X=None, y=None):
        """The problem's primary metric (sign as reported, e.g. MAE or PSNR)."""
        check_is_fitted(self, "metrics_")
        return self.metrics_[self.problem_.primary]
