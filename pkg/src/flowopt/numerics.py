"""Dense linear-algebra and differencing kernels.

Everything here operates on plain numpy arrays: vectors are 1-D float
arrays, matrices are 2-D row-major float arrays.  Problem sizes are
desk-scale (n <= 100), so the solvers are direct and dense.
"""

from __future__ import annotations

import numpy as np

# Pivot threshold is relative to the largest matrix entry; chosen so
# mildly indefinite saddle Hessians (det of order 1) never trip it.
PIVOT_RTOL = 1e-13
SYMMETRY_ATOL = 1e-12


class SingularMatrix(Exception):
    """A pivot fell below the singularity threshold during elimination."""


class NoConvergence(Exception):
    """An iterative kernel hit its iteration cap without converging."""


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Coerce to a finite 1-D float array, optionally checking its length."""
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got array of shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"expected a vector of length {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def as_matrix(m, square: bool = False) -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {a.shape}")
    if square and a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def is_symmetric(m: np.ndarray, atol: float = SYMMETRY_ATOL) -> bool:
    return bool(np.all(np.abs(m - m.T) <= atol))


def lu_factor(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """LU factorization with partial pivoting; returns (LU, perm).

    Raises SingularMatrix when a pivot magnitude falls below
    PIVOT_RTOL * max|entry|, which is how Hessian non-invertibility
    surfaces to the flow builders.
    """
    a = as_matrix(m, square=True).copy()
    n = a.shape[0]
    scale = np.max(np.abs(a)) if n else 0.0
    if scale == 0.0:
        raise SingularMatrix("zero matrix")
    threshold = PIVOT_RTOL * scale
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) < threshold:
            raise SingularMatrix(f"pivot {a[p, k]:.3e} below threshold {threshold:.3e} at column {k}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        a[k + 1:, k] /= a[k, k]
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return a, perm


def lu_backsolve(lu: np.ndarray, perm: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = lu.shape[0]
    x = rhs[perm].astype(float)
    for i in range(1, n):           # forward: L y = P rhs
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):  # backward: U x = y
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def lu_solve(m, rhs) -> np.ndarray:
    """Solve M s = rhs by LU with partial pivoting.

    One step of iterative refinement keeps the residual within
    1e-9 * max(1, ||rhs||) even for conditioning up to ~1e6.
    """
    a = as_matrix(m, square=True)
    b = as_vector(rhs, dim=a.shape[0])
    lu, perm = lu_factor(a)
    x = lu_backsolve(lu, perm, b)
    x += lu_backsolve(lu, perm, b - a @ x)
    return x


def min_eigenvalue_symmetric(m) -> float:
    """Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.

    Accurate to ~1e-8 relative for conditioning up to 1e6.  Raises
    NoConvergence if the off-diagonal mass has not collapsed after
    10 * n^2 rotations.
    """
    a = as_matrix(m, square=True)
    if not is_symmetric(a, atol=1e-9 * max(1.0, float(np.max(np.abs(a))))):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n == 1:
        return float(a[0, 0])
    scale = max(float(np.max(np.abs(a))), np.finfo(float).tiny)
    cap = 10 * n * n
    rotations = 0
    while np.max(np.abs(a - np.diag(np.diag(a)))) > 1e-14 * scale * n:
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-16 * scale:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # Rotate rows/columns p and q in place.
                row_p, row_q = a[p].copy(), a[q].copy()
                a[p] = c * row_p - s * row_q
                a[q] = s * row_p + c * row_q
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                rotations += 1
                if rotations > cap:
                    raise NoConvergence(f"Jacobi iteration did not converge within {cap} rotations")
    return float(np.min(np.diag(a)))


def finite_diff_gradient(f, x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar field, O(h^2) for C^3 fields."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = as_vector(x)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def finite_diff_hessian(f, x, h: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian, symmetrized as (H + H^T) / 2."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = as_vector(x)
    n = x.size
    hess = np.empty((n, n))
    fx = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        hess[i, i] = (f(x + ei) - 2.0 * fx + f(x - ei)) / (h * h)
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            hess[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h * h)
            hess[j, i] = hess[i, j]
    return 0.5 * (hess + hess.T)
