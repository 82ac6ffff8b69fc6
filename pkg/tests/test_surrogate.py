import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abotune.exceptions import FitError, LayoutError, NotFittedError, NumericError
from abotune.surrogate import (
    GaussianProcessModel,
    RandomForestModel,
    RandomModel,
    fit,
    make_model,
    predict,
)


def reference_tree(X, y, w, min_leaf):
    """Plain recursive variance-reduction tree; returns a predict function.

    Uses the same split rule: midpoints between distinct sorted values, the
    first best split in (feature, position) order, and leaves holding at
    least ``min_leaf`` distinct rows.
    """
    rows = np.flatnonzero(w > 0)

    def build(idx):
        W, S = w[idx].sum(), (w[idx] * y[idx]).sum()
        parent = S * S / W
        best = (-np.inf, None, None)
        for f in range(X.shape[1]):
            srt = idx[np.argsort(X[idx, f], kind="mergesort")]
            vals = X[srt, f]
            cw = np.cumsum(w[srt])
            cs = np.cumsum(w[srt] * y[srt])
            for j in range(1, len(srt)):
                if vals[j] <= vals[j - 1]:
                    continue
                if j < min_leaf or len(srt) - j < min_leaf:
                    continue
                wl, sl = cw[j - 1], cs[j - 1]
                score = sl * sl / wl + (S - sl) ** 2 / (W - wl)
                if score > best[0]:
                    best = (score, f, 0.5 * (vals[j - 1] + vals[j]))
        score, f, thr = best
        if f is None or score - parent <= 1e-12 * max(1.0, abs(parent)):
            return ("leaf", S / W)
        go_right = X[idx, f] > thr
        return ("split", f, thr, build(idx[~go_right]), build(idx[go_right]))

    root = build(rows)

    def predict_one(x):
        node = root
        while node[0] == "split":
            node = node[4] if x[node[1]] > node[2] else node[3]
        return node[1]

    return lambda Z: np.array([predict_one(z) for z in Z])


# -- random forest ----------------------------------------------------------


def test_single_tree_memorizes_distinct_inputs():
    x = np.linspace(0, 1, 40)[:, None]
    y = np.sin(7 * x[:, 0])
    model = RandomForestModel(n_trees=1, bootstrap=False, seed=0).fit(x, y)
    mean, std = model.predict(x)
    assert np.array_equal(mean, y)
    assert np.all(std == 0)


def test_identical_trees_have_zero_std():
    rng = np.random.default_rng(0)
    X, y = rng.random((60, 3)), rng.random(60)
    model = RandomForestModel(n_trees=10, bootstrap=False, seed=1).fit(X, y)
    _, std = model.predict(rng.random((200, 3)))
    assert np.all(std == 0)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("min_leaf", [1, 3])
def test_tree_matches_reference_implementation(seed, min_leaf):
    rng = np.random.default_rng(seed)
    X = rng.random((70, 4))
    y = X[:, 0] * 3 + np.sin(5 * X[:, 1]) + rng.normal(0, 0.1, 70)
    w = rng.integers(0, 3, 70).astype(float)
    w[0] = 1.0
    ref = reference_tree(X, y, w, min_leaf)
    from abotune import _forest

    arrays = _forest.grow_forest(X, y, w[None, :], min_leaf, X.shape[1], np.array([0]))
    Z = rng.random((300, 4))
    got = _forest.predict_forest(Z, *arrays[:4])[0]
    np.testing.assert_allclose(got, ref(Z), rtol=1e-12, atol=1e-12)


def test_leaf_holds_min_samples_leaf_rows():
    rng = np.random.default_rng(3)
    X, y = rng.random((200, 5)), rng.random(200)
    for min_leaf in (1, 4, 9):
        model = RandomForestModel(n_trees=5, min_samples_leaf=min_leaf, bootstrap=False, seed=0).fit(X, y)
        for t in range(model.n_trees):
            feat, thr, lft = model.feature_[t], model.threshold_[t], model.left_[t]
            leaves = []
            for x in X:
                nd = 0
                while feat[nd] >= 0:
                    nd = lft[nd] + (x[feat[nd]] > thr[nd])
                leaves.append(nd)
            assert np.bincount(leaves).max() >= min_leaf
            assert np.bincount(leaves)[np.unique(leaves)].min() >= min_leaf


def test_linear_function_midpoint():
    rng = np.random.default_rng(7)
    X = rng.random((50, 1))
    y = 3.0 * X[:, 0]
    mean, _ = predict(fit("rf", X, y, seed=7), np.array([0.5]))
    assert abs(mean - 1.5) < 0.3


def test_rf_deterministic_given_seed():
    rng = np.random.default_rng(11)
    X, y = rng.random((80, 6)), rng.random(80)
    Z = rng.random((100, 6))
    a = RandomForestModel(max_features=0.5, seed=3).fit(X, y).predict(Z)
    b = RandomForestModel(max_features=0.5, seed=3).fit(X, y).predict(Z)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    n=st.integers(1, 40),
    max_features=st.sampled_from([0.3, 0.7, 1.0]),
    bootstrap=st.booleans(),
)
def test_rf_prediction_is_convex_combination(seed, n, max_features, bootstrap):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, (n, 3)).astype(float) / 3
    y = rng.normal(size=n)
    model = RandomForestModel(n_trees=8, max_features=max_features, bootstrap=bootstrap, seed=seed).fit(X, y)
    mean, std = model.predict(rng.random((50, 3)))
    assert np.all(mean >= y.min() - 1e-12) and np.all(mean <= y.max() + 1e-12)
    assert np.all(std >= 0) and np.all(np.isfinite(mean))


def test_rf_std_is_population_std_of_trees():
    rng = np.random.default_rng(5)
    X, y = rng.random((40, 2)), rng.random(40)
    model = RandomForestModel(n_trees=7, seed=2).fit(X, y)
    Z = rng.random((20, 2))
    per_tree = model.predict_trees(Z)
    _, std = model.predict(Z)
    manual = np.sqrt(((per_tree - per_tree.mean(axis=0)) ** 2).sum(axis=0) / 7)
    np.testing.assert_allclose(std, manual, rtol=1e-12, atol=1e-15)


def test_rf_state_round_trip():
    rng = np.random.default_rng(5)
    X, y = rng.random((40, 2)), rng.random(40)
    model = RandomForestModel(n_trees=5, seed=2).fit(X, y)
    clone = RandomForestModel(n_trees=5).load_state(model.state())
    Z = rng.random((20, 2))
    assert np.array_equal(clone.predict(Z)[0], model.predict(Z)[0])


# -- errors -----------------------------------------------------------------


@pytest.mark.parametrize("kind", ["rf", "gp", "rand"])
def test_empty_training_set(kind):
    with pytest.raises(FitError):
        fit(kind, np.empty((0, 3)), np.empty(0))


@pytest.mark.parametrize("kind", ["rf", "gp", "rand"])
def test_non_finite_targets_rejected(kind):
    with pytest.raises(FitError):
        fit(kind, np.zeros((2, 1)), np.array([1.0, np.nan]))


@pytest.mark.parametrize("kind", ["rf", "gp", "rand"])
def test_unfitted_predict(kind):
    with pytest.raises(NotFittedError):
        make_model(kind).predict(np.zeros((1, 2)))


@pytest.mark.parametrize("kind", ["rf", "gp", "rand"])
def test_layout_mismatch(kind):
    model = fit(kind, np.random.default_rng(0).random((5, 3)), np.arange(5.0))
    with pytest.raises(LayoutError):
        model.predict(np.zeros((1, 4)))


def test_gp_cap():
    with pytest.raises(FitError):
        GaussianProcessModel(max_points=10).fit(np.random.default_rng(0).random((11, 2)), np.zeros(11))


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_model("svm")


# -- gaussian process -------------------------------------------------------


def test_gp_interpolates_with_tiny_noise():
    rng = np.random.default_rng(0)
    X, y = rng.random((20, 3)), rng.normal(size=20)
    model = GaussianProcessModel(noise_variance=1e-9).fit(X, y)
    mean, _ = model.predict(X)
    np.testing.assert_allclose(mean, y, atol=1e-6)
    # the residual is exactly the noise term: y - mean = noise * alpha
    np.testing.assert_allclose(y - mean, 1e-9 * model.alpha_, atol=1e-12)


def test_gp_posterior_matches_textbook_formula():
    rng = np.random.default_rng(1)
    X, y, Z = rng.random((15, 2)), rng.normal(size=15), rng.random((10, 2))

    def k(A, B):
        d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
        return np.exp(-0.5 * d2 / 0.5**2)

    K = k(X, X) + 1e-6 * np.eye(15)
    Ks = k(Z, X)
    m = y.mean()
    mean_ref = m + Ks @ np.linalg.solve(K, y - m)
    var_ref = 1.0 - np.einsum("ij,ji->i", Ks, np.linalg.solve(K, Ks.T))
    mean, std = GaussianProcessModel().fit(X, y).predict(Z)
    np.testing.assert_allclose(mean, mean_ref, rtol=1e-7, atol=1e-8)
    np.testing.assert_allclose(std**2, np.maximum(var_ref, 0), rtol=1e-6, atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 25))
def test_gp_variance_bounds(seed, n):
    rng = np.random.default_rng(seed)
    model = GaussianProcessModel().fit(rng.random((n, 4)), rng.normal(size=n))
    _, std = model.predict(rng.random((40, 4)))
    assert np.all(std >= 0)
    assert np.all(std**2 <= 1.0 + 1e-6 + 1e-12)


def test_gp_std_shrinks_with_noise_at_training_points():
    rng = np.random.default_rng(4)
    X, y = rng.random((20, 3)), rng.normal(size=20)
    stds = [GaussianProcessModel(noise_variance=s).fit(X, y).predict(X)[1] for s in (1e-2, 1e-4, 1e-6)]
    assert np.all(stds[1] <= stds[0] + 1e-12)
    assert np.all(stds[2] <= stds[1] + 1e-12)


def test_gp_duplicate_row_never_increases_variance():
    rng = np.random.default_rng(6)
    X, y = rng.random((12, 2)), rng.normal(size=12)
    before = GaussianProcessModel(noise_variance=1e-3).fit(X, y).predict(X[:1])[1][0]
    X2, y2 = np.vstack([X, X[:1]]), np.append(y, y[0])
    after = GaussianProcessModel(noise_variance=1e-3).fit(X2, y2).predict(X[:1])[1][0]
    assert after <= before + 1e-12


def test_gp_jitter_recovers_duplicates():
    X = np.zeros((5, 2))
    model = GaussianProcessModel(noise_variance=0.0).fit(X, np.ones(5))
    assert model.jitter_ > 0
    assert np.isfinite(model.predict(X)[0]).all()


def test_gp_numeric_error_when_jitter_exhausted():
    X = np.zeros((5, 1))
    with pytest.raises(NumericError):
        GaussianProcessModel(signal_variance=-1.0, noise_variance=0.0).fit(X, np.ones(5))


def test_gp_fit_time_grows_superlinearly():
    rng = np.random.default_rng(0)

    def fit_time(n):
        X, y = rng.random((n, 10)), rng.normal(size=n)
        best = np.inf
        for _ in range(7):
            t = time.perf_counter()
            GaussianProcessModel().fit(X, y)
            best = min(best, time.perf_counter() - t)
        return best

    fit_time(50)  # warm-up
    assert fit_time(400) >= 8 * fit_time(100)


# -- random baseline --------------------------------------------------------


def test_random_model_constant_prediction():
    model = RandomModel().fit(np.zeros((3, 2)), np.arange(3.0))
    mean, std = model.predict(np.ones((4, 2)))
    assert mean.tolist() == [0.0] * 4 and std.tolist() == [1.0] * 4
    assert predict(model, np.ones(2)) == (0.0, 1.0)
