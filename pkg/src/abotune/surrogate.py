"""Surrogate models predicting a mean and a standard deviation per input.

All models work on encoded vectors (see :mod:`abotune.space`) and on costs
to be minimized.  Three kinds are provided:

``rf``
    Random forest of variance-reduction regression trees; the std is the
    dispersion of the per-tree predictions.
``gp``
    Gaussian process with a fixed isotropic squared-exponential kernel.
``rand``
    Placeholder used by random search; it never ranks anything.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from . import _forest
from .exceptions import FitError, LayoutError, NotFittedError, NumericError

SURROGATE_KINDS = ("rf", "gp", "rand")


def _check_training_set(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] == 0:
        raise FitError("cannot fit a surrogate on an empty training set")
    if X.shape[0] != y.shape[0]:
        raise FitError(f"|X| = {X.shape[0]} but |y| = {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise FitError("training targets must be finite")
    return X, y


class _Surrogate:
    n_features_: int | None = None

    def _check_input(self, X):
        if self.n_features_ is None:
            raise NotFittedError(f"{type(self).__name__} is not fitted")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features_:
            raise LayoutError(f"expected {self.n_features_} features, got {X.shape[1]}")
        return X


class RandomForestModel(_Surrogate):
    """Bagged regression trees grown on variance reduction.

    Args:
        n_trees: Number of trees.
        min_samples_leaf: Minimum number of distinct training rows per leaf.
        max_features: Fraction of the features examined at every split.
        bootstrap: Resample rows with replacement for each tree.
        seed: Seed for the bootstrap draws and the feature subsets.
    """

    def __init__(self, n_trees=100, min_samples_leaf=1, max_features=1.0, bootstrap=True, seed=None):
        if n_trees < 1 or min_samples_leaf < 1 or not 0 < max_features <= 1:
            raise ValueError("invalid random forest hyperparameters")
        self.n_trees = n_trees
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed

    def fit(self, X, y):
        X, y = _check_training_set(X, y)
        n, n_feat = X.shape
        rng = np.random.default_rng(self.seed)
        if self.bootstrap:
            draws = rng.integers(0, n, size=(self.n_trees, n))
            weights = np.stack([np.bincount(d, minlength=n) for d in draws]).astype(float)
        else:
            weights = np.ones((self.n_trees, n))
        seeds = rng.integers(0, 2**31 - 1, size=self.n_trees)
        n_try = max(1, int(round(self.max_features * n_feat)))
        arrays = _forest.grow_forest(
            np.ascontiguousarray(X), y, weights, int(self.min_samples_leaf), n_try, seeds
        )
        width = int(arrays[4].max())
        self.feature_, self.threshold_, self.left_, self.value_ = (
            np.ascontiguousarray(a[:, :width]) for a in arrays[:4]
        )
        self.n_features_ = n_feat
        return self

    def predict_trees(self, X):
        """Per-tree predictions, shape ``(n_trees, n_rows)``."""
        X = self._check_input(X)
        return _forest.predict_forest(
            np.ascontiguousarray(X), self.feature_, self.threshold_, self.left_, self.value_
        )

    def predict(self, X):
        per_tree = self.predict_trees(X)
        # shifting by the first tree leaves the std unchanged and makes it exactly 0 when all trees agree
        return per_tree.mean(axis=0), (per_tree - per_tree[0]).std(axis=0)

    def state(self) -> dict:
        """Fitted tree arrays, enough to rebuild the predictor."""
        if not hasattr(self, "feature_"):
            raise NotFittedError("model has not been fitted")
        return {
            "feature": self.feature_,
            "threshold": self.threshold_,
            "left": self.left_,
            "value": self.value_,
            "n_features": np.array(self.n_features_),
        }

    def load_state(self, state: dict) -> "RandomForestModel":
        self.feature_ = np.ascontiguousarray(state["feature"])
        self.threshold_ = np.ascontiguousarray(state["threshold"])
        self.left_ = np.ascontiguousarray(state["left"])
        self.value_ = np.ascontiguousarray(state["value"])
        self.n_features_ = int(state["n_features"])
        return self


def _jitter_schedule(max_jitter):
    yield 0.0
    jitter = 1e-10
    while jitter <= max_jitter * (1 + 1e-9):
        yield jitter
        jitter *= 10


class GaussianProcessModel(_Surrogate):
    """Exact GP regression with a squared-exponential kernel.

    Hyperparameters are fixed; nothing is optimized.  The posterior mean is
    computed around the empirical mean of the targets and the returned std
    is that of the latent function.
    """

    max_jitter = 1e-2

    def __init__(self, length_scale=0.5, signal_variance=1.0, noise_variance=1e-6, max_points=5000):
        self.length_scale = length_scale
        self.signal_variance = signal_variance
        self.noise_variance = noise_variance
        self.max_points = max_points

    def kernel(self, A, B):
        sq = (
            np.einsum("ij,ij->i", A, A)[:, None]
            + np.einsum("ij,ij->i", B, B)[None, :]
            - 2.0 * A @ B.T
        )
        np.maximum(sq, 0.0, out=sq)
        return self.signal_variance * np.exp(-0.5 * sq / self.length_scale**2)

    def fit(self, X, y):
        X, y = _check_training_set(X, y)
        if X.shape[0] > self.max_points:
            raise FitError(f"GP capped at {self.max_points} points, got {X.shape[0]}")
        K = self.kernel(X, X)
        K[np.diag_indices_from(K)] += self.noise_variance
        for jitter in _jitter_schedule(self.max_jitter):
            try:
                chol = linalg.cho_factor(K + jitter * np.eye(len(K)), lower=True, check_finite=False)
                break
            except linalg.LinAlgError:
                continue
        else:
            raise NumericError("kernel matrix is not positive definite after jitter escalation")
        self.y_mean_ = y.mean()
        self.alpha_ = linalg.cho_solve(chol, y - self.y_mean_, check_finite=False)
        self.chol_ = chol
        self.jitter_ = jitter
        self.X_ = X
        self.n_features_ = X.shape[1]
        return self

    def predict(self, X):
        X = self._check_input(X)
        Ks = self.kernel(X, self.X_)
        mean = self.y_mean_ + Ks @ self.alpha_
        v = linalg.solve_triangular(self.chol_[0], Ks.T, lower=True, check_finite=False)
        var = self.signal_variance - np.einsum("ij,ij->j", v, v)
        return mean, np.sqrt(np.maximum(var, 0.0))


class RandomModel(_Surrogate):
    """Stores nothing; predicts ``(0, 1)`` everywhere."""

    def __init__(self, **_):
        pass

    def fit(self, X, y):
        X, _ = _check_training_set(X, y)
        self.n_features_ = X.shape[1]
        return self

    def predict(self, X):
        X = self._check_input(X)
        return np.zeros(X.shape[0]), np.ones(X.shape[0])


def make_model(kind: str, seed=None, **params):
    if kind == "rf":
        return RandomForestModel(seed=seed, **params)
    if kind == "gp":
        return GaussianProcessModel(**params)
    if kind == "rand":
        return RandomModel()
    raise ValueError(f"unknown surrogate kind {kind!r}; expected one of {SURROGATE_KINDS}")


def fit(kind: str, X, y, seed=None, **params):
    """Fit a surrogate of the given kind on ``(X, y)``."""
    return make_model(kind, seed=seed, **params).fit(X, y)


def predict(model, x):
    """Mean and std at one encoded vector ``x`` (or arrays for a 2-D input)."""
    x = np.asarray(x, dtype=float)
    mean, std = model.predict(x)
    if x.ndim == 1:
        return float(mean[0]), float(std[0])
    return mean, std
