"""Shared test helpers: central-difference gradients and error metrics."""

import numpy as np


def numerical_grad(f, x, h=1e-3):
    """Central finite difference of scalar f() with respect to array x.

    f must close over x; entries are perturbed in place and restored.
    Returns float64 gradient of x's shape.
    """
    x = np.asarray(x)
    flat = x.reshape(-1)
    g = np.zeros(flat.shape, dtype=np.float64)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * h)
    return g.reshape(x.shape)


def rel_err(analytic, numeric):
    """L2 ratio ||a - n|| / max(||a|| + ||n||, tiny)."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)
