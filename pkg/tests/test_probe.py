"""Ridge probing and the metric suite against independent oracles."""

import numpy as np
import pytest

from smflab.errors import ContractError, DimensionError
from smflab.probe import (
    DEFAULT_ALPHAS,
    FoldSplit,
    cross_entropy,
    kfold_ridge_r2,
    loo_errors,
    mse,
    r2_score,
    ridge_fit_loo,
    weighted_f1,
)


def explicit_loo_errors(X, y, alpha):
    """n explicit refits, each leaving one row out of the solve.

    Standardization and target centering stay fixed on the full data, which
    is the model the closed form shortcuts.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds < 1e-12, 1.0, stds)
    Xs = (X - means) / stds
    yc = y - y.mean()
    n, d = Xs.shape
    errors = np.empty(n)
    for i in range(n):
        keep = np.arange(n) != i
        A = Xs[keep].T @ Xs[keep] + alpha * np.eye(d)
        w = np.linalg.solve(A, Xs[keep].T @ yc[keep])
        errors[i] = yc[i] - Xs[i] @ w
    return errors


class TestRidgeLoo:
    @pytest.mark.parametrize("seed", range(3))
    def test_closed_form_matches_explicit_refits(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((50, 5))
        y = X @ rng.standard_normal(5) + 0.3 * rng.standard_normal(50)
        for alpha in [1e-4, 1e-1, 1.0, 1e2, 1e4]:
            closed = loo_errors(X, y, alpha)
            explicit = explicit_loo_errors(X, y, alpha)
            assert np.max(np.abs(closed - explicit)) < 1e-8

    def test_exactly_linear_target(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((60, 5))
        w_true = rng.standard_normal(5)
        y = X @ w_true
        model = ridge_fit_loo(X, y, alphas=[1e-4])
        assert r2_score(y, model.predict(X)) >= 0.999

    def test_infinite_regularization_limit(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((40, 3))
        y = rng.standard_normal(40) + 5.0
        model = ridge_fit_loo(X, y, alphas=[1e12])
        assert np.max(np.abs(model.weights)) < 1e-8
        np.testing.assert_allclose(model.predict(X), np.full(40, y.mean()), atol=1e-6)

    def test_ties_break_toward_larger_alpha(self):
        # A constant (zero-information) feature matrix makes every alpha
        # produce identical LOO errors; the largest alpha must win.
        X = np.zeros((10, 2))
        y = np.arange(10.0)
        model = ridge_fit_loo(X, y, alphas=[0.1, 1.0, 10.0])
        assert model.alpha == 10.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ContractError):
            ridge_fit_loo(np.ones((5, 2)) * np.nan, np.ones(5))
        with pytest.raises(ContractError):
            ridge_fit_loo(np.ones((5, 2)), np.ones(5), alphas=[0.0])
        with pytest.raises(DimensionError):
            ridge_fit_loo(np.ones((5, 2)), np.ones(4))

    def test_alpha_grid_is_inclusive_log_spaced(self):
        assert DEFAULT_ALPHAS.shape == (100,)
        assert DEFAULT_ALPHAS[0] == pytest.approx(1e-4)
        assert DEFAULT_ALPHAS[-1] == pytest.approx(1e4)


class TestKfold:
    def test_folds_partition_with_balanced_sizes(self):
        split = FoldSplit.random(103, 5, seed=0)
        seen = np.zeros(103, dtype=int)
        sizes = []
        for fold in range(5):
            _, held = split.fold_indices(fold)
            seen[held] += 1
            sizes.append(len(held))
        assert np.all(seen == 1)
        assert max(sizes) - min(sizes) <= 1

    def test_constant_target_scores_zero(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((50, 4))
        y = np.full(50, 2.5)
        mean_r2, _ = kfold_ridge_r2(X, y, seed=3)
        assert mean_r2 == 0.0

    def test_pure_noise_near_chance(self):
        rng = np.random.default_rng(2)
        scores = []
        for rep in range(20):
            X = rng.standard_normal((400, 5))
            y = rng.standard_normal(400)
            mean_r2, _ = kfold_ridge_r2(X, y, seed=rep)
            scores.append(mean_r2)
        assert np.mean(scores) <= 0.05

    def test_perfectly_linear_target(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((100, 4))
        y = X @ rng.standard_normal(4) + 1.0
        mean_r2, _ = kfold_ridge_r2(X, y, seed=0)
        assert mean_r2 >= 0.999

    def test_alpha_selection_never_touches_held_rows(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((60, 4))
        y = X @ rng.standard_normal(4) + 0.5 * rng.standard_normal(60)
        seed = 9
        _, alphas_base = kfold_ridge_r2(X, y, seed=seed)
        split = FoldSplit.random(60, 5, seed=seed)
        # Shuffle one fold's held-out targets at a time: that fold's chosen
        # alpha must not move (its selection saw only the training rows).
        for fold in range(5):
            _, held = split.fold_indices(fold)
            y_mod = y.copy()
            y_mod[held] = rng.permutation(y_mod[held])
            _, alphas_mod = kfold_ridge_r2(X, y_mod, seed=seed)
            assert alphas_mod[fold] == alphas_base[fold]


class TestMetrics:
    def test_r2_perfect(self):
        y = np.array([1.0, 2.0, 3.0])
        assert r2_score(y, y) == 1.0

    def test_r2_mean_predictor(self):
        y = np.array([1.0, 2.0, 3.0])
        assert r2_score(y, np.full(3, y.mean())) == 0.0

    def test_r2_golden(self):
        assert r2_score([1.0, 2.0, 3.0], [1.0, 2.0, 2.0]) == pytest.approx(0.5, abs=0.0)

    def test_r2_shift_invariant_not_scale_invariant(self):
        rng = np.random.default_rng(5)
        y = rng.standard_normal(30)
        pred = y + 0.3 * rng.standard_normal(30)
        base = r2_score(y, pred)
        shifted = r2_score(y + 7.0, pred + 7.0)
        assert shifted == pytest.approx(base, abs=1e-12)
        scaled = r2_score(2.0 * y, pred)
        assert abs(scaled - base) > 1e-3

    def test_r2_zero_variance_convention(self):
        assert r2_score([2.0, 2.0, 2.0], [1.0, 2.0, 3.0]) == 0.0

    def test_f1_all_correct(self):
        y = np.array([0, 1, 1, 0, 2])
        assert weighted_f1(y, y, classes=[0, 1, 2]) == 1.0

    def test_f1_support_weighting_golden(self):
        # supports (3, 1); per-class F1 (1.0, 0.0) -> (3*1 + 1*0)/4 = 0.75
        y_true = np.array([0, 0, 0, 1])
        y_pred = np.array([0, 0, 0, 2])
        got = weighted_f1(y_true, y_pred, classes=[0, 1, 2])
        assert got == pytest.approx(0.75, abs=0.0)

    def test_f1_single_class(self):
        y = np.zeros(5, dtype=int)
        assert weighted_f1(y, y, classes=[0]) == 1.0

    def test_f1_empty_rejected(self):
        with pytest.raises(ContractError):
            weighted_f1(np.array([]), np.array([]), classes=[0])

    def test_mse_zero_and_golden(self):
        assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert mse([0.0, 2.0], [1.0, 1.0]) == pytest.approx(1.0, abs=0.0)

    def test_cross_entropy_one_hot_match(self):
        probs = np.array([[1.0, 0.0], [0.0, 1.0]])
        value = cross_entropy(probs, np.array([0, 1]))
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_cross_entropy_golden(self):
        probs = np.array([[0.5, 0.5]])
        assert cross_entropy(probs, np.array([1])) == pytest.approx(np.log(2.0))

    def test_cross_entropy_rejects_malformed_rows(self):
        with pytest.raises(ContractError):
            cross_entropy(np.array([[0.9, 0.3]]), np.array([0]))
        with pytest.raises(ContractError):
            cross_entropy(np.array([[-0.1, 1.1]]), np.array([0]))
