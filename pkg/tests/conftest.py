"""Shared test utilities, chiefly the central finite-difference oracle."""

import numpy as np
import pytest

from smflab.tensor import Tape, backward

FD_STEP = 1e-5
FD_REL_TOL = 1e-4


def fd_gradcheck(build_loss, leaves, step=FD_STEP, rel_tol=FD_REL_TOL):
    """Compare tape gradients against central finite differences.

    ``build_loss`` must rebuild the scalar loss from the current contents
    of ``leaves`` on every call.  Relative error uses a 1e-6 scale floor so
    near-zero gradients are compared absolutely.
    """
    with Tape() as tape:
        loss = build_loss()
        grads = backward(tape, loss)

    for leaf in leaves:
        analytic = grads[leaf]
        assert leaf.data.flags["C_CONTIGUOUS"]
        flat = leaf.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = build_loss().item()
            flat[i] = orig - step
            f_minus = build_loss().item()
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * step)
        numeric = numeric.reshape(leaf.data.shape)
        scale = np.maximum(np.abs(numeric), 1e-6)
        rel = np.abs(analytic - numeric) / scale
        worst = float(rel.max())
        assert worst < rel_tol, (
            f"gradient mismatch (worst rel err {worst:.3e}) for leaf "
            f"shape {leaf.data.shape}"
        )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
