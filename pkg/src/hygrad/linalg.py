"""Dense linear algebra kernels: LU solves and power-iteration norms.

Everything operates on float64 numpy arrays. Matrix inverses are never
formed; all inverse applications go through the LU factorization.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ContractViolation, NumericalFailure, SingularMatrixError

Array = np.ndarray

# Pivot threshold relative to the largest entry of the input matrix.
PIVOT_RTOL = 1e-14


def _check_finite(a: Array, name: str) -> Array:
    a = np.asarray(a, dtype=float)
    if not np.isfinite(a).all():
        raise ContractViolation(f"{name} contains non-finite entries")
    return a


def lu_factor(a: Array, what: str = "matrix") -> tuple[Array, Array]:
    """LU factorization with partial pivoting: returns (lu, piv) with PA = LU.

    ``lu`` packs unit-lower L below the diagonal and U on/above it; ``piv``
    is the row permutation as an index vector.
    """
    a = _check_finite(a, what)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractViolation(f"{what} must be square, got shape {a.shape}")
    lu = a.copy()
    n = lu.shape[0]
    piv = np.arange(n)
    threshold = PIVOT_RTOL * (np.max(np.abs(a)) if a.size else 0.0)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= threshold:
            raise SingularMatrixError(
                f"{what} is singular to working precision (pivot {lu[p, k]:.3e} "
                f"at column {k})", what=what)
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            piv[[k, p]] = piv[[p, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, piv


def _solve_factored(lu: Array, piv: Array, b: Array) -> Array:
    n = lu.shape[0]
    x = b[piv].astype(float)
    for i in range(1, n):              # L z = Pb, unit diagonal
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):     # U x = z
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def _solve_factored_transpose(lu: Array, piv: Array, b: Array) -> Array:
    n = lu.shape[0]
    w = b.astype(float).copy()
    for i in range(n):                 # Uᵀ w = b, lower triangular
        w[i] = (w[i] - lu[:i, i] @ w[:i]) / lu[i, i]
    for i in range(n - 1, -1, -1):     # Lᵀ z = w, unit diagonal
        w[i] -= lu[i + 1:, i] @ w[i + 1:]
    x = np.empty_like(w)
    x[piv] = w
    return x


def _prep_rhs(a: Array, b: Array, what: str) -> tuple[Array, bool]:
    b = _check_finite(b, "right-hand side")
    vector = b.ndim == 1
    if vector:
        b = b[:, None]
    if b.shape[0] != a.shape[0]:
        raise ContractViolation(
            f"right-hand side has {b.shape[0]} rows, {what} has {a.shape[0]}")
    return b, vector


def linear_solve(a: Array, b: Array, what: str = "matrix") -> Array:
    """Solve AX = B by LU with partial pivoting. B may be a vector or matrix."""
    a = _check_finite(a, what)
    b, vector = _prep_rhs(a, b, what)
    lu, piv = lu_factor(a, what=what)
    x = _solve_factored(lu, piv, b)
    return x[:, 0] if vector else x


def solve_transpose(a: Array, b: Array, what: str = "matrix") -> Array:
    """Solve AᵀX = B reusing the factorization of A (Aᵀ is never formed)."""
    a = _check_finite(a, what)
    b, vector = _prep_rhs(a, b, what)
    lu, piv = lu_factor(a, what=what)
    x = _solve_factored_transpose(lu, piv, b)
    return x[:, 0] if vector else x


def top_singular(m: Array, tol: float = 1e-12, max_iter: int = 10000) -> tuple[float, Array]:
    """Largest singular value and a maximizing right singular vector.

    Power iteration on MᵀM from the normalized all-ones start vector. Ties
    between singular values are accepted: any maximizer is valid. Returns
    (0, start vector) for the zero matrix.
    """
    if tol <= 0:
        raise ContractViolation("tol must be positive")
    m = _check_finite(np.atleast_2d(m), "matrix")
    cols = m.shape[1]
    v = np.ones(cols) / math.sqrt(cols)
    if not np.any(m):
        return 0.0, v
    # A start vector can land in the null space; fall back to basis vectors,
    # deterministically, until the image is nonzero.
    basis = 0
    sigma = 0.0
    for _ in range(max_iter):
        w = m.T @ (m @ v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            if basis >= cols:
                return 0.0, v
            v = np.zeros(cols)
            v[basis] = 1.0
            basis += 1
            continue
        v = w / nw
        new_sigma = float(np.linalg.norm(m @ v))
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1e-300):
            return new_sigma, v
        sigma = new_sigma
    raise NumericalFailure(
        f"power iteration did not converge in {max_iter} iterations",
        last_estimate=sigma)


def spectral_norm(m: Array, tol: float = 1e-12, max_iter: int = 10000) -> float:
    """Operator (spectral) norm of a dense matrix."""
    sigma, _ = top_singular(m, tol=tol, max_iter=max_iter)
    return sigma
