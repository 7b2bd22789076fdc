"""PDE solving with differentiable multi-resolution RBF feature grids."""

__version__ = "0.1.0"
__all__ = ["GridFieldRegressor", "PDEFieldSolver", "FieldModel", "__version__"]


def __getattr__(name):
    # lazy: the estimators pull in scikit-learn, the CLI does not need it
    if name in ("GridFieldRegressor", "PDEFieldSolver"):
        from . import estimator

        return getattr(estimator, name)
    if name == "FieldModel":
        from .field import FieldModel

        return FieldModel
    raise AttributeError(f"module 'dinf' has no attribute {name!r}")
