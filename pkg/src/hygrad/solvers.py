"""Inner-problem iteration and finite-difference ground-truth oracles.

The finite-difference hypergradient here is the reference every estimator is
judged against; it only touches the problem through exact_root and the outer
value, so it shares no code path with the estimation formulas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, NumericalFailure, UsageError
from .linalg import linear_solve, spectral_norm
from .problems import BilevelProblem, as_vector

Array = np.ndarray

# Relative residual at which a root is treated as exact; small enough that
# oracle error is negligible against 1e-6 level acceptance tolerances.
ROOT_TOL = 1e-13


@dataclass(frozen=True)
class Trajectory:
    """Gradient-descent iterates including the start point."""

    iterates: list
    step_sizes: list

    @property
    def steps(self) -> int:
        return len(self.step_sizes)


def gradient_descent(problem: BilevelProblem, y: Array, x0: Array, steps: int,
                     step_size: float | None = None) -> Trajectory:
    """Run x_k = x_{k-1} - tau * F(x_{k-1}, y) for a fixed number of steps.

    With step_size None, tau = 1 / lambda_max(F_1(x0, y)), frozen at x0 and
    never recomputed. Non-finite iterates raise NumericalFailure carrying
    the step index.
    """
    if steps < 0:
        raise UsageError("steps must be nonnegative")
    x = as_vector(x0, problem.d_x, "x0")
    y = as_vector(y, problem.d_y, "y")
    if step_size is None:
        lam = spectral_norm(problem.jac_x(x, y))
        if lam <= 0:
            raise NumericalFailure("cannot derive a step size from a zero Jacobian")
        tau = 1.0 / lam
    else:
        tau = float(step_size)
    iterates = [x]
    for k in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            x = x - tau * problem.residual(x, y)
        if not np.isfinite(x).all():
            raise NumericalFailure(f"iterate became non-finite at step {k + 1}",
                                   step=k + 1)
        iterates.append(x)
    return Trajectory(iterates=iterates, step_sizes=[tau] * steps)


def newton_root(residual_fn, jac_fn, x0: Array, tol: float = ROOT_TOL,
                max_iter: int = 100) -> Array:
    """Damped Newton with Armijo backtracking on the squared residual.

    Stops when |F(x)| <= tol * (1 + |x|).
    """
    x = np.asarray(x0, dtype=float)
    for _ in range(max_iter):
        f = np.asarray(residual_fn(x), dtype=float)
        norm_f = float(np.linalg.norm(f))
        if norm_f <= tol * (1.0 + float(np.linalg.norm(x))):
            return x
        dx = linear_solve(jac_fn(x), -f, what="F_1")
        merit = 0.5 * norm_f ** 2
        t = 1.0
        while t >= 1e-12:
            trial = x + t * dx
            f_trial = np.asarray(residual_fn(trial), dtype=float)
            if np.isfinite(f_trial).all() and (
                    0.5 * float(np.linalg.norm(f_trial)) ** 2
                    <= merit * (1.0 - 2e-4 * t)):
                x = trial
                break
            t *= 0.5
        else:
            raise NumericalFailure("Newton line search stalled")
    raise NumericalFailure(f"Newton did not reach tolerance in {max_iter} iterations")


def _require_root(problem: BilevelProblem, y: Array) -> Array:
    root = problem.exact_root(y)
    if root is None:
        raise CapabilityError(f"problem {problem.name!r} has no exact_root")
    return root


def exact_root(problem: BilevelProblem, y: Array) -> Array:
    """The inner root x*(y); CapabilityError when the problem cannot solve it."""
    return _require_root(problem, as_vector(y, problem.d_y, "y"))


def fd_hypergradient(problem: BilevelProblem, y: Array,
                     eps: float | None = None) -> Array:
    """Ground-truth hypergradient by central differences of y -> g(x*(y), y)."""
    y = as_vector(y, problem.d_y, "y")
    if eps is None:
        eps = 1e-6 * (1.0 + float(np.linalg.norm(y)))
    if eps <= 0:
        raise UsageError("eps must be positive")
    grad = np.zeros(problem.d_y)
    for j in range(problem.d_y):
        hi, lo = y.copy(), y.copy()
        hi[j] += eps
        lo[j] -= eps
        h_hi = problem.outer.value(_require_root(problem, hi), hi)
        h_lo = problem.outer.value(_require_root(problem, lo), lo)
        grad[j] = (h_hi - h_lo) / (2.0 * eps)
    return grad


def fd_jac_xstar(problem: BilevelProblem, y: Array,
                 eps: float | None = None) -> Array:
    """Jacobian of the solution map y -> x*(y) by central differences."""
    y = as_vector(y, problem.d_y, "y")
    if eps is None:
        eps = 1e-6 * (1.0 + float(np.linalg.norm(y)))
    if eps <= 0:
        raise UsageError("eps must be positive")
    cols = []
    for j in range(problem.d_y):
        hi, lo = y.copy(), y.copy()
        hi[j] += eps
        lo[j] -= eps
        cols.append((_require_root(problem, hi) - _require_root(problem, lo))
                    / (2.0 * eps))
    return np.stack(cols, axis=1)
