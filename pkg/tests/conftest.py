"""Shared numerical helpers for the test suite."""

import numpy as np
import pytest


def central_diff_grad(f, y, h=1e-6):
    """Central finite-difference gradient of a scalar function of an N x d array."""
    g = np.zeros_like(y)
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            yp = y.copy()
            yp[i, j] += h
            ym = y.copy()
            ym[i, j] -= h
            g[i, j] = (f(yp) - f(ym)) / (2.0 * h)
    return g


def central_diff_jacobian(g, y, h=1e-6):
    """Central finite-difference Jacobian of a vector field g: (N,d) -> (N,d).

    Returns shape (N, d, N, d): entry [i, a, k, b] = d g[i,a] / d y[k,b].
    """
    n, d = y.shape
    out = np.zeros((n, d, n, d))
    for k in range(n):
        for b in range(d):
            yp = y.copy()
            yp[k, b] += h
            ym = y.copy()
            ym[k, b] -= h
            out[:, :, k, b] = (g(yp) - g(ym)) / (2.0 * h)
    return out


def full_hessian(hess_diag, hess_cross):
    """Assemble (N, d, N, d) from diagonal blocks plus optional cross blocks."""
    n, d = hess_diag.shape[0], hess_diag.shape[1]
    out = np.zeros((n, d, n, d))
    for i in range(n):
        out[i, :, i, :] = hess_diag[i]
    if hess_cross is not None:
        out += hess_cross.transpose(0, 2, 1, 3)
    return out


def rel_err(a, b):
    """Frobenius relative error of a against reference b."""
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(
        np.linalg.norm(np.asarray(b)), 1e-12
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
