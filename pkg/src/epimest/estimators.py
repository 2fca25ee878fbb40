"""scikit-learn style estimators wrapping the refinement loop."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .constraints import IntegralEquals, Nonnegativity, spec_from_dict
from .epispline import evaluate
from .estimate import EstimationConfig, run
from .geometry import BoxDomain
from .hypodist import HypoDistanceConfig
from .losses import Sample
from .solver import SolverConfig


def _specs(constraints):
    return [spec_from_dict(c) if isinstance(c, dict) else c for c in (constraints or ())]


class _EpiSplineBase(BaseEstimator):
    def __init__(self, cells=10, schedule=None, box=None, constraints=None, penalty=0.0,
                 epsilon=1e-6, tol_gap=1e-7, max_iters=200, seed=0):
        self.cells = cells
        self.schedule = schedule
        self.box = box
        self.constraints = constraints
        self.penalty = penalty
        self.epsilon = epsilon
        self.tol_gap = tol_gap
        self.max_iters = max_iters
        self.seed = seed

    def _box(self, X) -> BoxDomain:
        if self.box is not None:
            lo, hi = self.box
            return BoxDomain(lo, hi)
        lo, hi = X.min(axis=0), X.max(axis=0)
        pad = np.where(hi > lo, 0.0, 0.5)
        return BoxDomain(lo - pad, hi + pad)

    def _config(self, box: BoxDomain, loss: str, specs) -> EstimationConfig:
        schedule = self.schedule if self.schedule is not None else [self.cells]
        return EstimationConfig(
            box=box, loss=loss, penalty=float(self.penalty), constraints=specs,
            schedule=list(schedule), epsilon=float(self.epsilon),
            hypodist=HypoDistanceConfig(seed=int(self.seed)),
            solver=SolverConfig(tol_gap=float(self.tol_gap), max_iters=int(self.max_iters)),
            seed=int(self.seed),
        )

    def _fit(self, X, y, loss, default_specs):
        box = self._box(X)
        specs = _specs(self.constraints) if self.constraints is not None else default_specs
        self.result_ = run(self._config(box, loss, specs), Sample.within_box(X, box, y))
        self.model_ = self.result_.model
        self.box_ = box
        self.n_features_in_ = X.shape[1]
        return self

    def _values(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return np.atleast_1d(evaluate(self.model_, X))

    def transform(self, X) -> np.ndarray:
        """Fitted function values as a single feature column."""
        return self._values(X)[:, None]


class EpiSplineDensity(DensityMixin, _EpiSplineBase):
    """Density estimate over first-order epi-splines.

    ``loss`` is ``ml_density`` or ``ls_density``. Without explicit constraints
    the fit uses nonnegativity and unit integral.
    """

    def __init__(self, loss="ml_density", cells=10, schedule=None, box=None, constraints=None, penalty=0.0,
                 epsilon=1e-6, tol_gap=1e-7, max_iters=200, seed=0):
        super().__init__(cells, schedule, box, constraints, penalty, epsilon, tol_gap, max_iters, seed)
        self.loss = loss

    def fit(self, X, y=None):
        if self.loss not in ("ml_density", "ls_density"):
            raise ValueError("loss must be 'ml_density' or 'ls_density'")
        X = check_array(X)
        return self._fit(X, None, self.loss, [Nonnegativity(), IntegralEquals(1.0)])

    def predict(self, X) -> np.ndarray:
        """Density values."""
        return self._values(X)

    def score_samples(self, X) -> np.ndarray:
        """Log density; -inf where the estimate vanishes."""
        v = self._values(X)
        with np.errstate(divide="ignore"):
            return np.where(v > 0, np.log(np.maximum(v, 1e-300)), -np.inf)

    def score(self, X, y=None) -> float:
        """Total log-likelihood of X."""
        return float(self.score_samples(X).sum())


class EpiSplineRegressor(RegressorMixin, _EpiSplineBase):
    """Least-squares regression over first-order epi-splines."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        return self._fit(X, y, "ls_regression", [])

    def predict(self, X) -> np.ndarray:
        return self._values(X)
