"""Frozen-embedding probing: ridge regression with closed-form leave-one-out
tuning inside five-fold cross-validation, plus the shared metric suite.

The ridge path standardizes features and centers the target before the
solve and restores the target mean at prediction time.  For each candidate
alpha the leave-one-out residual is ``e_i / (1 - h_ii)`` with hat diagonal
``h_ii = x_i^T (X^T X + alpha I)^{-1} x_i``; no refits are needed.  Solves
use a Cholesky factorization of the (symmetric positive definite)
regularized Gram matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ContractError, DimensionError

DEFAULT_ALPHAS = np.logspace(-4.0, 4.0, 100)  # inclusive log grid
STD_FLOOR = 1e-12  # guards constant feature columns
HAT_CLAMP = 1.0 - 1e-12


@dataclass
class RidgeModel:
    """Ridge fit on standardized features with a centered target."""

    weights: np.ndarray
    alpha: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    target_mean: float
    loo_mse: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        Xs = (X - self.feature_means) / self.feature_stds
        return Xs @ self.weights + self.target_mean


def _standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds < STD_FLOOR, 1.0, stds)
    return (X - means) / stds, means, stds


def ridge_fit_loo(X: np.ndarray, y: np.ndarray, alphas=DEFAULT_ALPHAS) -> RidgeModel:
    """Fit ridge, choosing alpha by closed-form leave-one-out error.

    Ties in the mean squared LOO residual break toward the larger alpha
    (stronger regularization).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionError(f"ridge needs (n, d) and (n,), got {X.shape}, {y.shape}")
    if X.shape[0] < 2:
        raise ContractError("ridge needs at least two rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ContractError("ridge inputs must be finite")
    alphas = np.asarray(alphas, dtype=np.float64)
    if np.any(alphas <= 0):
        raise ContractError("all ridge alphas must be positive")

    Xs, means, stds = _standardize(X)
    y_mean = float(y.mean())
    yc = y - y_mean

    gram = Xs.T @ Xs
    xty = Xs.T @ yc
    d = Xs.shape[1]
    eye = np.eye(d)

    best = None
    for alpha in np.sort(alphas):
        factor = cho_factor(gram + alpha * eye, lower=True)
        w = cho_solve(factor, xty)
        residuals = yc - Xs @ w
        hat = np.einsum("ij,ji->i", Xs, cho_solve(factor, Xs.T))
        if np.any(hat >= 1.0):
            warnings.warn(
                "leave-one-out hat diagonal reached 1; clamping",
                RuntimeWarning,
                stacklevel=2,
            )
            hat = np.minimum(hat, HAT_CLAMP)
        loo = residuals / (1.0 - hat)
        mse = float(np.mean(loo * loo))
        if best is None or mse <= best[0]:
            best = (mse, float(alpha), w)

    mse, alpha, w = best
    return RidgeModel(
        weights=w,
        alpha=alpha,
        feature_means=means,
        feature_stds=stds,
        target_mean=y_mean,
        loo_mse=mse,
    )


def loo_errors(X: np.ndarray, y: np.ndarray, alpha: float) -> np.ndarray:
    """Closed-form leave-one-out residuals at one alpha (for verification)."""
    Xs, _, _ = _standardize(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    yc = y - y.mean()
    d = Xs.shape[1]
    factor = cho_factor(Xs.T @ Xs + alpha * np.eye(d), lower=True)
    w = cho_solve(factor, Xs.T @ yc)
    residuals = yc - Xs @ w
    hat = np.einsum("ij,ji->i", Xs, cho_solve(factor, Xs.T))
    hat = np.minimum(hat, HAT_CLAMP)
    return residuals / (1.0 - hat)


@dataclass(frozen=True)
class FoldSplit:
    """Assignment of each sample to one of k folds (sizes differ by <= 1)."""

    assignments: np.ndarray
    k: int

    @classmethod
    def random(cls, n: int, k: int, seed: int) -> "FoldSplit":
        if n < k:
            raise ContractError(f"cannot split {n} rows into {k} folds")
        order = np.random.default_rng(seed).permutation(n)
        assignments = np.empty(n, dtype=np.int64)
        for fold, idx in enumerate(np.array_split(order, k)):
            assignments[idx] = fold
        return cls(assignments=assignments, k=k)

    def fold_indices(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        held = self.assignments == fold
        return np.nonzero(~held)[0], np.nonzero(held)[0]


def kfold_ridge_r2(
    X: np.ndarray,
    y: np.ndarray,
    k: int = 5,
    alphas=DEFAULT_ALPHAS,
    seed: int = 0,
) -> tuple[float, list[float]]:
    """Mean held-out R^2 over a seeded k-fold split, with per-fold alphas.

    Alpha selection sees only the training rows of each fold.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    split = FoldSplit.random(X.shape[0], k, seed)
    scores = []
    fold_alphas = []
    for fold in range(k):
        train_idx, held_idx = split.fold_indices(fold)
        model = ridge_fit_loo(X[train_idx], y[train_idx], alphas)
        scores.append(r2_score(y[held_idx], model.predict(X[held_idx])))
        fold_alphas.append(model.alpha)
    return float(np.mean(scores)), fold_alphas


# ---------------------------------------------------------------------------
# metrics


def r2_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Coefficient of determination; zero-variance targets score 0 by convention."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ContractError(
            f"r2_score needs matching vectors, got {y_true.shape}, {y_pred.shape}"
        )
    if y_true.size < 2:
        raise ContractError("r2_score needs at least two samples")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        return 0.0
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


def weighted_f1(y_true, y_pred, classes) -> float:
    """Support-weighted mean of per-class F1 scores.

    Classes with zero precision + recall contribute 0; classes absent from
    ``y_true`` have zero support and drop out of the average.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise ContractError("weighted_f1 needs at least one sample")
    if y_true.shape != y_pred.shape:
        raise ContractError(
            f"label vectors disagree: {y_true.shape} vs {y_pred.shape}"
        )
    total = 0.0
    support_sum = 0
    for cls in classes:
        tp = int(np.sum((y_true == cls) & (y_pred == cls)))
        fp = int(np.sum((y_true != cls) & (y_pred == cls)))
        fn = int(np.sum((y_true == cls) & (y_pred != cls)))
        support = tp + fn
        if support == 0:
            continue
        denom = 2 * tp + fp + fn  # equals (p + r) scaled; zero iff p + r == 0
        f1 = (2.0 * tp / denom) if denom > 0 else 0.0
        total += support * f1
        support_sum += support
    if support_sum == 0:
        raise ContractError("no true labels fall in the given class set")
    return total / support_sum


def mse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Mean squared error."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise DimensionError(f"mse shapes disagree: {y_true.shape} vs {y_pred.shape}")
    return float(np.mean((y_true - y_pred) ** 2))


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of integer labels under probability rows.

    Rows must be valid distributions; probabilities are clamped at 1e-12
    before the log.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2 or labels.ndim != 1 or probs.shape[0] != labels.shape[0]:
        raise ContractError(
            f"cross_entropy needs (n, k) probs and (n,) labels, got "
            f"{probs.shape}, {labels.shape}"
        )
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise ContractError("probability rows must be nonnegative and sum to 1")
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise ContractError("labels outside the class range")
    picked = probs[np.arange(probs.shape[0]), labels]
    return float(-np.mean(np.log(np.maximum(picked, 1e-12))))
