"""Dense linear-algebra kernel: validated arrays, norms, direct solves.

Everything here operates on float64 numpy arrays sized for desk-scale
problems (a few hundred unknowns at most), so factorizations are simply
recomputed on every call. Solves are backed by LAPACK through scipy but
wrapped with explicit pivot checks so that near-singular systems fail
loudly instead of returning garbage.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np
import scipy.linalg

# Relative floor for pivots / Cholesky diagonal entries.
PIVOT_RTOL = 1e-14
# Allowed relative asymmetry before a matrix is rejected as non-symmetric.
SYMMETRY_RTOL = 1e-12

# Flipped on by the test suite: every solve then verifies its own residual.
_CHECK_RESIDUALS = False


class SingularMatrixError(Exception):
    """LU factorization produced a pivot below the relative floor."""


class NotPositiveDefiniteError(Exception):
    """Cholesky factorization failed or hit a non-positive pivot."""


class Norms(NamedTuple):
    l1: float
    l2: float
    linf: float


def as_vector(x, n: int | None = None, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-d float64 array, optionally of length n."""
    v = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    if n is not None and v.size != n:
        raise ValueError(f"{name} must have length {n}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def as_matrix(a, shape: tuple[int, int] | None = None, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-d float64 array, optionally of a given shape."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {m.shape}")
    if shape is not None and m.shape != tuple(shape):
        raise ValueError(f"{name} must have shape {tuple(shape)}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def max_abs(a) -> float:
    """Largest entry magnitude; 0.0 for empty input."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a)))


def require_symmetric(a: np.ndarray, name: str = "matrix") -> None:
    """Reject matrices with |A - A^T| beyond 1e-12 * max(1, ||A||_max)."""
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    tol = SYMMETRY_RTOL * max(1.0, max_abs(a))
    if max_abs(a - a.T) > tol:
        raise ValueError(f"{name} is not symmetric to tolerance {tol:g}")


def norms(v) -> Norms:
    """l1, l2 and l-infinity norms of a vector (all 0.0 for empty input)."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        return Norms(0.0, 0.0, 0.0)
    av = np.abs(v)
    return Norms(float(av.sum()), float(np.linalg.norm(v)), float(av.max()))


def _check_residual(a: np.ndarray, x: np.ndarray, b: np.ndarray) -> None:
    # Backward-stable direct solves keep ||Ax - b|| small relative to ||A|| ||x||.
    res = max_abs(a @ x - b)
    bound = 1e-10 * (1.0 + max_abs(a) * max_abs(x))
    if res > bound:
        raise AssertionError(f"solve residual {res:g} exceeds bound {bound:g}")


def lu_solve(a, b) -> np.ndarray:
    """Solve A x = b by LU with partial pivoting.

    Parameters
    ----------
    a : array_like, shape (n, n)
    b : array_like, shape (n,)

    Returns
    -------
    numpy.ndarray
        Solution vector. A zero right-hand side returns exact zeros.

    Raises
    ------
    SingularMatrixError
        If any pivot magnitude falls below 1e-14 * ||A||_max.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    if b.shape != (n,):
        raise ValueError(f"right-hand side must have shape ({n},), got {b.shape}")
    scale = max_abs(a)
    if scale == 0.0:
        raise SingularMatrixError("matrix is identically zero")
    with warnings.catch_warnings():
        # The pivot check below raises a typed error for singular input;
        # scipy's advisory warning about it is redundant here.
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diagonal(lu))
    if np.min(pivots) < PIVOT_RTOL * scale:
        raise SingularMatrixError(
            f"pivot {np.min(pivots):g} below {PIVOT_RTOL:g} * ||A||_max = {PIVOT_RTOL * scale:g}"
        )
    x = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    if _CHECK_RESIDUALS:
        _check_residual(a, x, b)
    return x


def cholesky_solve(a, b) -> np.ndarray:
    """Solve A x = b for symmetric positive definite A via Cholesky.

    Raises
    ------
    NotPositiveDefiniteError
        If factorization fails or a diagonal factor entry is
        <= 1e-14 * ||A||_max.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    require_symmetric(a)
    n = a.shape[0]
    if b.shape != (n,):
        raise ValueError(f"right-hand side must have shape ({n},), got {b.shape}")
    scale = max_abs(a)
    try:
        factor = scipy.linalg.cholesky(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    if scale == 0.0 or np.min(np.diagonal(factor)) <= PIVOT_RTOL * scale:
        raise NotPositiveDefiniteError("diagonal factor entry at or below the pivot floor")
    x = scipy.linalg.cho_solve((factor, True), b, check_finite=False)
    if _CHECK_RESIDUALS:
        _check_residual(a, x, b)
    return x
