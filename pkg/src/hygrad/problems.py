"""Bilevel problem contracts: derivative oracles and their validation.

A bilevel problem is a pair of oracles over (x, y) with x the inner variable
(dimension d_x) and y the outer variable (dimension d_y):

- the inner oracle exposes the residual F whose root in x defines the inner
  solution, its Jacobians in x and y, and directional derivatives of the
  x-Jacobian (second-derivative information is consumed only through such
  directional contractions, never as stored third-order tensors);
- the outer oracle exposes the objective value, gradients, and the
  second-derivative blocks the estimators need.

All oracles must be pure functions of their arguments: problems are shared
freely across concurrent read-only evaluations, so implementations must not
mutate interior state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np

from .errors import ContractViolation

Array = np.ndarray


def as_vector(a, dim: int | None = None, name: str = "vector") -> Array:
    """Validate and return a finite float64 vector, optionally of length dim."""
    v = np.asarray(a, dtype=float)
    if v.ndim != 1:
        raise ContractViolation(f"{name} must be 1-d, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ContractViolation(f"{name} must have length {dim}, got {v.shape[0]}")
    if not np.isfinite(v).all():
        raise ContractViolation(f"{name} contains non-finite entries")
    return v


def as_matrix(a, shape: tuple[int, int] | None = None, name: str = "matrix") -> Array:
    """Validate and return a finite float64 matrix, optionally of given shape."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ContractViolation(f"{name} must be 2-d, got shape {m.shape}")
    if shape is not None and m.shape != shape:
        raise ContractViolation(f"{name} must have shape {shape}, got {m.shape}")
    if not np.isfinite(m).all():
        raise ContractViolation(f"{name} contains non-finite entries")
    return m


class InnerOracle(Protocol):
    """Derivative oracle for the inner residual F(x, y)."""

    def residual(self, x: Array, y: Array) -> Array: ...

    def jac_x(self, x: Array, y: Array) -> Array:
        """Jacobian of F w.r.t. x, shape (d_x, d_x)."""
        ...

    def jac_y(self, x: Array, y: Array) -> Array:
        """Jacobian of F w.r.t. y, shape (d_x, d_y)."""
        ...

    def djac_x_dir_x(self, x: Array, y: Array, u: Array) -> Array:
        """Directional derivative of jac_x along u in x, shape (d_x, d_x)."""
        ...

    def djac_x_dir_y(self, x: Array, y: Array, e: Array) -> Array:
        """Directional derivative of jac_x along e in y, shape (d_x, d_x)."""
        ...

    def exact_root(self, y: Array) -> Optional[Array]:
        """Direct solve of F(., y) = 0 when available, else None."""
        ...


class OuterOracle(Protocol):
    """Derivative oracle for the outer objective g(x, y)."""

    def value(self, x: Array, y: Array) -> float: ...

    def grad_x(self, x: Array, y: Array) -> Array: ...

    def grad_y(self, x: Array, y: Array) -> Array: ...

    def hess_xx(self, x: Array, y: Array) -> Array:
        """Second derivative in x, shape (d_x, d_x); must be symmetric."""
        ...

    def jac_gradY_x(self, x: Array, y: Array) -> Array:
        """x-Jacobian of grad_y, shape (d_y, d_x)."""
        ...

    def jac_gradX_y(self, x: Array, y: Array) -> Array:
        """y-Jacobian of grad_x, shape (d_x, d_y)."""
        ...


@dataclass(frozen=True)
class CallableInnerOracle:
    """Inner oracle assembled from plain callables (fixtures, adapters)."""

    residual_fn: Callable[[Array, Array], Array]
    jac_x_fn: Callable[[Array, Array], Array]
    jac_y_fn: Callable[[Array, Array], Array]
    djac_x_dir_x_fn: Callable[[Array, Array, Array], Array]
    djac_x_dir_y_fn: Callable[[Array, Array, Array], Array]
    exact_root_fn: Optional[Callable[[Array], Array]] = None

    def residual(self, x, y):
        return self.residual_fn(x, y)

    def jac_x(self, x, y):
        return self.jac_x_fn(x, y)

    def jac_y(self, x, y):
        return self.jac_y_fn(x, y)

    def djac_x_dir_x(self, x, y, u):
        return self.djac_x_dir_x_fn(x, y, u)

    def djac_x_dir_y(self, x, y, e):
        return self.djac_x_dir_y_fn(x, y, e)

    def exact_root(self, y):
        if self.exact_root_fn is None:
            return None
        return self.exact_root_fn(y)


@dataclass(frozen=True)
class CallableOuterOracle:
    """Outer oracle assembled from plain callables."""

    value_fn: Callable[[Array, Array], float]
    grad_x_fn: Callable[[Array, Array], Array]
    grad_y_fn: Callable[[Array, Array], Array]
    hess_xx_fn: Callable[[Array, Array], Array]
    jac_gradY_x_fn: Callable[[Array, Array], Array]
    jac_gradX_y_fn: Callable[[Array, Array], Array]

    def value(self, x, y):
        return self.value_fn(x, y)

    def grad_x(self, x, y):
        return self.grad_x_fn(x, y)

    def grad_y(self, x, y):
        return self.grad_y_fn(x, y)

    def hess_xx(self, x, y):
        return self.hess_xx_fn(x, y)

    def jac_gradY_x(self, x, y):
        return self.jac_gradY_x_fn(x, y)

    def jac_gradX_y(self, x, y):
        return self.jac_gradX_y_fn(x, y)


@dataclass(frozen=True)
class BilevelProblem:
    """An inner/outer oracle pair with declared dimensions.

    ``affine_in_x`` marks residuals affine in x (jac_x independent of x and
    djac_x_dir_x identically zero); the Newton-like reparameterization uses
    it to invert the residual by a single linear solve.
    """

    inner: InnerOracle
    outer: OuterOracle
    d_x: int
    d_y: int
    name: str = ""
    affine_in_x: bool = False

    def __post_init__(self):
        if self.d_x < 1 or self.d_y < 1:
            raise ContractViolation("dimensions must be positive")

    def residual(self, x: Array, y: Array) -> Array:
        return as_vector(self.inner.residual(x, y), self.d_x, "residual")

    def jac_x(self, x: Array, y: Array) -> Array:
        return as_matrix(self.inner.jac_x(x, y), (self.d_x, self.d_x), "jac_x")

    def jac_y(self, x: Array, y: Array) -> Array:
        return as_matrix(self.inner.jac_y(x, y), (self.d_x, self.d_y), "jac_y")

    def exact_root(self, y: Array) -> Optional[Array]:
        root = self.inner.exact_root(y)
        if root is None:
            return None
        return as_vector(root, self.d_x, "exact_root")


def _fd_jacobian(fn: Callable[[Array], Array], at: Array, step: float) -> Array:
    """Central-difference Jacobian of a vector map, columns over coordinates."""
    cols = []
    for j in range(at.shape[0]):
        hi = at.copy()
        lo = at.copy()
        hi[j] += step
        lo[j] -= step
        cols.append((np.asarray(fn(hi), float) - np.asarray(fn(lo), float)) / (2 * step))
    return np.stack(cols, axis=-1)


def _fd_directional(fn: Callable[[Array], Array], at: Array, direction: Array,
                    step: float) -> Array:
    hi = at + step * direction
    lo = at - step * direction
    return (np.asarray(fn(hi), float) - np.asarray(fn(lo), float)) / (2 * step)


def _rel_mismatch(analytic: Array, approx: Array) -> float:
    analytic = np.asarray(analytic, float)
    approx = np.asarray(approx, float)
    return float(np.max(np.abs(analytic - approx)) / (1.0 + np.max(np.abs(analytic))))


def validate_oracles(problem: BilevelProblem, x: Array, y: Array,
                     step: float = 1e-5) -> dict[str, float]:
    """Cross-check every analytic derivative oracle against central differences.

    Returns, per oracle, the max relative deviation from a finite difference
    of the parent quantity. Shape mismatches raise ContractViolation.
    """
    if step <= 0:
        raise ContractViolation("step must be positive")
    x = as_vector(x, problem.d_x, "x")
    y = as_vector(y, problem.d_y, "y")
    inner, outer = problem.inner, problem.outer
    d_x, d_y = problem.d_x, problem.d_y

    report: dict[str, float] = {}
    report["jac_x"] = _rel_mismatch(
        problem.jac_x(x, y),
        _fd_jacobian(lambda xx: problem.residual(xx, y), x, step))
    report["jac_y"] = _rel_mismatch(
        problem.jac_y(x, y),
        _fd_jacobian(lambda yy: problem.residual(x, yy), y, step))

    directions_x = [np.ones(d_x) / np.sqrt(d_x)] + [np.eye(d_x)[j] for j in range(min(d_x, 2))]
    report["djac_x_dir_x"] = max(
        _rel_mismatch(
            as_matrix(inner.djac_x_dir_x(x, y, u), (d_x, d_x), "djac_x_dir_x"),
            _fd_directional(lambda xx: problem.jac_x(xx, y), x, u, step))
        for u in directions_x)
    directions_y = [np.ones(d_y) / np.sqrt(d_y)] + [np.eye(d_y)[j] for j in range(min(d_y, 2))]
    report["djac_x_dir_y"] = max(
        _rel_mismatch(
            as_matrix(inner.djac_x_dir_y(x, y, e), (d_x, d_x), "djac_x_dir_y"),
            _fd_directional(lambda yy: problem.jac_x(x, yy), y, e, step))
        for e in directions_y)

    grad_x = as_vector(outer.grad_x(x, y), d_x, "grad_x")
    grad_y = as_vector(outer.grad_y(x, y), d_y, "grad_y")
    report["grad_x"] = _rel_mismatch(
        grad_x, _fd_jacobian(lambda xx: np.atleast_1d(outer.value(xx, y)), x, step)[0])
    report["grad_y"] = _rel_mismatch(
        grad_y, _fd_jacobian(lambda yy: np.atleast_1d(outer.value(x, yy)), y, step)[0])
    report["hess_xx"] = _rel_mismatch(
        as_matrix(outer.hess_xx(x, y), (d_x, d_x), "hess_xx"),
        _fd_jacobian(lambda xx: as_vector(outer.grad_x(xx, y), d_x, "grad_x"), x, step))
    report["jac_gradY_x"] = _rel_mismatch(
        as_matrix(outer.jac_gradY_x(x, y), (d_y, d_x), "jac_gradY_x"),
        _fd_jacobian(lambda xx: as_vector(outer.grad_y(xx, y), d_y, "grad_y"), x, step))
    report["jac_gradX_y"] = _rel_mismatch(
        as_matrix(outer.jac_gradX_y(x, y), (d_x, d_y), "jac_gradX_y"),
        _fd_jacobian(lambda yy: as_vector(outer.grad_x(x, yy), d_x, "grad_x"), y, step))
    return report


@dataclass(frozen=True)
class FDInnerOracle:
    """Inner oracle for a user-supplied residual, derivatives by differences.

    First derivatives use central differences with step 1e-6*(1+|x|); the
    directional derivatives of jac_x difference the (already approximate)
    Jacobian with a larger step to keep nested-difference noise in check.
    """

    residual_fn: Callable[[Array, Array], Array]
    d_x: int
    d_y: int
    exact_root_fn: Optional[Callable[[Array], Array]] = None
    step: float = 1e-6
    directional_step: float = 1e-4

    def residual(self, x, y):
        return np.asarray(self.residual_fn(x, y), float)

    def _step(self, at: Array) -> float:
        return self.step * (1.0 + float(np.linalg.norm(at)))

    def jac_x(self, x, y):
        return _fd_jacobian(lambda xx: self.residual(xx, y), x, self._step(x))

    def jac_y(self, x, y):
        return _fd_jacobian(lambda yy: self.residual(x, yy), y, self._step(y))

    def djac_x_dir_x(self, x, y, u):
        h = self.directional_step * (1.0 + float(np.linalg.norm(x)))
        return _fd_directional(lambda xx: self.jac_x(xx, y), x, u, h)

    def djac_x_dir_y(self, x, y, e):
        h = self.directional_step * (1.0 + float(np.linalg.norm(y)))
        return _fd_directional(lambda yy: self.jac_x(x, yy), y, e, h)

    def exact_root(self, y):
        if self.exact_root_fn is None:
            return None
        return np.asarray(self.exact_root_fn(y), float)
