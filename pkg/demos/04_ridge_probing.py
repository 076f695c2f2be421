"""Ridge probing machinery: closed-form leave-one-out inside 5-fold CV.

Shows that the hat-diagonal shortcut reproduces explicit refits, how the
alpha grid gets searched, and the metric suite on small hand cases.

Run:  python3 demos/04_ridge_probing.py
"""

import numpy as np

from smflab.probe import (
    kfold_ridge_r2,
    loo_errors,
    mse,
    r2_score,
    ridge_fit_loo,
    weighted_f1,
)

rng = np.random.default_rng(2)
X = rng.standard_normal((50, 5))
y = X @ rng.standard_normal(5) + 0.3 * rng.standard_normal(50)

# The closed form: residual_i / (1 - h_ii), no refits.
closed = loo_errors(X, y, alpha=1.0)

# The slow way: drop each row and re-solve.
means, stds = X.mean(axis=0), X.std(axis=0)
Xs = (X - means) / stds
yc = y - y.mean()
explicit = np.empty(50)
for i in range(50):
    keep = np.arange(50) != i
    w = np.linalg.solve(Xs[keep].T @ Xs[keep] + np.eye(5), Xs[keep].T @ yc[keep])
    explicit[i] = yc[i] - Xs[i] @ w
print(f"closed-form vs explicit leave-one-out: max |diff| = {np.max(np.abs(closed - explicit)):.2e}")

model = ridge_fit_loo(X, y)
print(f"alpha chosen from the 100-point log grid: {model.alpha:.4g} (LOO mse {model.loo_mse:.4f})")

mean_r2, fold_alphas = kfold_ridge_r2(X, y, seed=0)
print(f"5-fold held-out R^2: {mean_r2:.3f}  per-fold alphas: {[f'{a:.3g}' for a in fold_alphas]}")

print("\nmetric suite on hand cases:")
print(f"  r2([1,2,3] vs [1,2,2])        = {r2_score([1, 2, 3], [1, 2, 2]):.2f}")
print(f"  mse([0,2]  vs [1,1])          = {mse([0.0, 2.0], [1.0, 1.0]):.2f}")
print(
    "  weighted F1, supports (3,1)   = "
    f"{weighted_f1(np.array([0, 0, 0, 1]), np.array([0, 0, 0, 2]), classes=[0, 1, 2]):.2f}"
)
