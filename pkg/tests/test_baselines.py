import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ffca.archetype import Archetype, Classification
from ffca.baselines import (ImportanceVector, engineer_features, gradient_importance, importance_table_csv,
                            perturb_weights, ridge_fit, ridge_r2, robustness_report, sampled_shapley,
                            permutation_importance)
from ffca.datasets import Dataset, gen_linear_world
from ffca.errors import DimensionMismatchError, InteractionUnavailableError, SingularSystemError
from ffca.functions import Polynomial
from ffca.model import Mlp, init_model
from ffca.signature import AnalysisConfig, InteractionMatrix
from ffca.training import TrainConfig, train

from oracles import exact_shapley, gd_least_squares


# ridge --------------------------------------------------------------------------------------------

def test_ridge_exact_fit():
    m = ridge_fit([[1.0], [2.0]], [1.0, 2.0], lam=0.0)
    assert m.weights.tolist() == pytest.approx([1.0]) and m.intercept == pytest.approx(0.0, abs=1e-12)
    assert ridge_r2(m, [[1.0], [2.0]], [1.0, 2.0]) == pytest.approx(1.0)


def test_ridge_large_lambda_shrinks_to_mean():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3))
    y = X @ [1.0, -2.0, 0.5] + 3.0
    m = ridge_fit(X, y, lam=1e12)
    assert np.max(np.abs(m.weights)) < 1e-8
    assert np.allclose(m.predict(X), y.mean(), atol=1e-6)
    assert abs(ridge_r2(m, X, y)) < 1e-8


def test_ridge_matches_gradient_descent_oracle():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 4))
    y = X @ rng.normal(size=4) + rng.normal(size=100)
    for lam in (0.0, 0.5, 10.0):
        m = ridge_fit(X, y, lam)
        w, b = gd_least_squares(X, y, lam)
        np.testing.assert_allclose(m.weights, w, atol=1e-6)
        assert m.intercept == pytest.approx(b, abs=1e-6)


def test_ridge_normal_equations():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(300, 5))
    y = rng.normal(size=300)
    lam = 2.0
    m = ridge_fit(X, y, lam)
    Xc, yc = X - X.mean(axis=0), y - y.mean()
    resid = (Xc.T @ Xc + lam * np.eye(5)) @ m.weights - Xc.T @ yc
    assert np.max(np.abs(resid)) < 1e-8


def test_ridge_singular():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(SingularSystemError, match="lam > 0"):
        ridge_fit(X, [1.0, 2.0, 3.0], lam=0.0)
    assert np.all(np.isfinite(ridge_fit(X, [1.0, 2.0, 3.0], lam=1e-3).weights))


# shapley ------------------------------------------------------------------------------------------

def test_shapley_additive_is_exact():
    w = [2.0, -1.0, 0.5, 3.0]
    f = Polynomial(4, [(c, {i: 1}) for i, c in enumerate(w)])
    X = np.random.default_rng(3).normal(size=(20, 4))
    for n_perm in (1, 5):
        imp = sampled_shapley(f, X, baseline=np.zeros(4), n_permutations=n_perm)
        np.testing.assert_allclose(imp.attributions, X * w, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 1000))
def test_shapley_efficiency(n_perm, seed):
    f = Polynomial(3, [(1.5, {0: 1, 1: 1}), (-2.0, {2: 2}), (0.7, {0: 1, 1: 1, 2: 1})])
    rng = np.random.default_rng(seed)
    X, b = rng.normal(size=(10, 3)), rng.normal(size=3)
    imp = sampled_shapley(f, X, baseline=b, n_permutations=n_perm, seed=seed)
    gap = f.score(X) - f.score(b[None, :])
    assert np.max(np.abs(imp.attributions.sum(axis=1) - gap)) < 1e-8


def test_shapley_product_matches_enumeration():
    f = Polynomial(2, [(1.0, {0: 1, 1: 1})])
    X = np.array([[1.0, 2.0], [-0.5, 3.0]])
    b = np.array([0.2, -0.4])
    exact = np.array([exact_shapley(lambda z: f.score(z[None, :])[0], row, b) for row in X])
    # each ordering is off by half the product term in opposite directions; sampling averages them out
    half = np.abs((X - b).prod(axis=1)) / 2
    errs = [np.max(np.abs(sampled_shapley(f, X, baseline=b, n_permutations=k, seed=0).attributions - exact)
                   / half[:, None]) for k in (1, 4000)]
    assert errs[0] == pytest.approx(1.0) and errs[1] < 0.05


def test_shapley_symmetry():
    f = Polynomial(3, [(2.0, {0: 1, 1: 1}), (1.0, {0: 1}), (1.0, {1: 1}), (4.0, {2: 1})])
    X = np.random.default_rng(5).normal(size=(30, 3))
    a = sampled_shapley(f, X, baseline=np.zeros(3), n_permutations=4000, seed=1)
    swapped = sampled_shapley(f, X[:, [1, 0, 2]], baseline=np.zeros(3), n_permutations=4000, seed=1)
    # f is symmetric in x0, x1: swapping the columns swaps their attributions, up to sampling noise
    scale = np.abs(2.0 * X[:, 0] * X[:, 1])[:, None]
    assert np.max(np.abs(a.attributions[:, [1, 0]] - swapped.attributions[:, :2]) / scale) < 0.1
    np.testing.assert_allclose(a.attributions[:, 2], 4.0 * X[:, 2], atol=1e-12)


def test_shapley_defaults_and_errors():
    f = Polynomial(2, [(1.0, {0: 1})])
    X = np.array([[1.0, 0.0], [3.0, 0.0]])
    imp = sampled_shapley(f, X)
    assert imp.values.tolist() == [1.0, 0.0]  # baseline is the mean, 2.0
    with pytest.raises(ValueError):
        sampled_shapley(f, X, n_permutations=0)
    with pytest.raises(DimensionMismatchError):
        sampled_shapley(f, X, baseline=[0.0])
    with pytest.raises(ValueError):
        ImportanceVector([1.0], "lime")


# permutation and gradient importance --------------------------------------------------------------

def test_permutation_importance_ignored_and_constant_columns():
    data, _ = gen_linear_world(1000, 0)
    data.X[:, 2] = 0.25
    m = init_model([4, 8, 1], 0)
    m.weights[0][:, 3] = 0.0
    imp = permutation_importance(m, data, repeats=3, seed=0)
    assert imp.values[2] < 1e-6 and imp.values[3] < 1e-6
    assert np.all(imp.values >= 0)
    with pytest.raises(ValueError):
        permutation_importance(m, data, repeats=0)


def test_permutation_importance_orders_trained_model():
    data, _ = gen_linear_world(2000, 1)
    m, _ = train(init_model([4, 16, 1], 0), data, TrainConfig(epochs=60, seed=0))
    v = permutation_importance(m, data, seed=0).values
    assert np.argmax(v) == 0 and v[0] > v[1] > v[2]


def test_gradient_importance_linear():
    m = Mlp([3, 1], [np.array([[3.0, 0.0, 0.0]])], [np.array([0.5])], "relu")
    X = np.random.default_rng(0).normal(size=(50, 3))
    assert gradient_importance(m, X).values.tolist() == [3.0, 0.0, 0.0]


def test_importance_table():
    text = importance_table_csv(["a", "b"], {"gradient": [1.0, 2.0], "impact": np.array([0.5, 0.25])})
    assert text.splitlines() == ["feature,gradient,impact", "a,1.0,0.5", "b,2.0,0.25"]


# feature engineering --------------------------------------------------------------------------------

NAMES = ["dti_ratio", "loan_purpose_risk", "num_recent_inquiries", "employment_stability_score"]


def fe_inputs(archetypes):
    X = np.random.default_rng(0).uniform(size=(10, 4))
    data = Dataset(X, np.zeros(10), NAMES, "regression", np.arange(8), [8, 9])
    levels = {"I": "Mid", "S": "Low", "N": "Low", "X": "High"}
    diag = [Classification(n, a, dict(levels)) for n, a in zip(NAMES, archetypes)]
    M = np.array([[0, 0.1, 0.2, 0.0], [0.1, 0, 5.0, 0.3], [0.2, 5.0, 0, 0.1], [0.0, 0.3, 0.1, 0]])
    return data, diag, InteractionMatrix(M, NAMES)


def test_engineer_features_paper_diagnosis():
    data, diag, M = fe_inputs([Archetype.NONLINEAR_DRIVER, Archetype.HIDDEN_INTERACTOR,
                               Archetype.HIDDEN_INTERACTOR, Archetype.STABLE_CONTRIBUTOR])
    out = engineer_features(data, diag, M)
    assert out.feature_names[4:] == ["dti_ratio^2", "loan_purpose_risk*num_recent_inquiries"]
    np.testing.assert_array_equal(out.X[:, 4], data.X[:, 0] ** 2)
    np.testing.assert_array_equal(out.X[:, 5], data.X[:, 1] * data.X[:, 2])


def test_engineer_features_nothing_flagged():
    data, diag, M = fe_inputs([Archetype.STABLE_CONTRIBUTOR] * 4)
    assert engineer_features(data, diag, M) is data


def test_engineer_features_needs_full_hessian():
    data, diag, M = fe_inputs([Archetype.NONLINEAR_DRIVER] * 4)
    diag[0].levels["X"] = None
    with pytest.raises(InteractionUnavailableError):
        engineer_features(data, diag, M)
    with pytest.raises(InteractionUnavailableError):
        engineer_features(data, diag[1:], None)


# robustness -------------------------------------------------------------------------------------------

def test_perturb_weights():
    m = init_model([3, 5, 1], 0)
    same = perturb_weights(m, 0.0, 1)
    assert all(np.array_equal(a, b) for a, b in zip(same.weights, m.weights))
    moved = perturb_weights(m, 0.1, 1)
    assert not np.array_equal(moved.weights[0], m.weights[0])
    assert np.array_equal(moved.weights[0], perturb_weights(m, 0.1, 1).weights[0])
    with pytest.raises(ValueError):
        perturb_weights(m, -1.0)


def test_robustness_report():
    m = init_model([4, 12, 1], 3)
    U = np.random.default_rng(0).uniform(size=(128, 4))
    rep = robustness_report(m, [0.0, 0.01, 0.3, 1.0], U, config=AnalysisConfig(hessian_mode="full"))
    assert rep[0]["pearson_r"] == pytest.approx(1.0) and rep[0]["agreement"] == 1.0
    assert rep[1]["pearson_r"] > 0.95
    r = [row["pearson_r"] for row in rep]
    assert r[0] >= r[1] >= r[2] >= r[3]
