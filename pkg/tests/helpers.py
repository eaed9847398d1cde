"""Finite-difference oracle shared by the gradient tests."""

import numpy as np

STEP = 1e-5
TOL = 1e-4


def numeric_grad(f, arr: np.ndarray, h: float = STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``arr``, perturbed in place."""
    g = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + h
        fp = f()
        arr[idx] = old - h
        fm = f()
        arr[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric, floor: float = 1e-5) -> float:
    """Worst entrywise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def worst_error(f, params: dict, grads: dict) -> float:
    """Largest :func:`rel_error` over every named array."""
    return max(rel_error(grads[k], numeric_grad(f, params[k])) for k in params)
