"""Hypergradient estimation formulas and the shipped strategy constructors.

Four estimator families share one shape: given a point (x, y), produce a
d_y vector approximating the gradient of the outer objective through the
inner solution map. All of them are consistent (exact when x is the inner
root); they differ in how fast their error decays as x approaches the root.

- plain implicit-differentiation estimate;
- preconditioned estimate: one corrective step x - P^{-1}F before the
  implicit formula;
- reparameterized estimate: the implicit formula of the problem rewritten
  in z with x = phi(z, y);
- localized estimate: a separable change of variables re-anchored at every
  query point.

Inverse applications are linear solves throughout; no matrix is inverted
except where a contract explicitly hands out the resolvent matrix itself.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import CapabilityError, DomainError, SingularMatrixError, UsageError
from .linalg import linear_solve, solve_transpose
from .problems import BilevelProblem, as_vector
from .solvers import newton_root

Array = np.ndarray

# Strategy keys as they appear on the CLI and in trace files.
STRATEGIES = ("vanilla", "newton", "diag", "exp", "diag-rep", "opt")


# --------------------------------------------------------------------------
# plain implicit-differentiation estimate

def solution_sensitivity(problem: BilevelProblem, x: Array, y: Array) -> Array:
    """The matrix -F_2' F_1^{-1}, the implicit estimate of [dx*/dy]'.

    Computed by a transpose solve of F_1 against F_2; exact at the root.
    """
    f1 = problem.jac_x(x, y)
    f2 = problem.jac_y(x, y)
    w = solve_transpose(f1, f2, what="F_1")
    return -w.T


def ift_estimate(problem: BilevelProblem, x: Array, y: Array) -> Array:
    """Implicit-differentiation hypergradient estimate at (x, y)."""
    x = as_vector(x, problem.d_x, "x")
    y = as_vector(y, problem.d_y, "y")
    return problem.outer.grad_y(x, y) + solution_sensitivity(problem, x, y) \
        @ problem.outer.grad_x(x, y)


# --------------------------------------------------------------------------
# preconditioning

@dataclass(frozen=True)
class PreconditionerOracle:
    """Invertible map P(x, y) applied as one corrective step before estimating.

    ``solve`` applies [P(x, y)]^{-1} to a vector or to the columns of a
    matrix; ``matrix`` hands out P(x, y) itself for deviation measurements.
    """

    solve_fn: Callable[[Array, Array, Array], Array]
    matrix_fn: Callable[[Array, Array], Array]

    def solve(self, x, y, v):
        return self.solve_fn(x, y, v)

    def matrix(self, x, y):
        return self.matrix_fn(x, y)


def preconditioned_estimate(problem: BilevelProblem, precond: PreconditionerOracle,
                            x: Array, y: Array) -> Array:
    """Estimate at the corrected point x - P^{-1} F(x, y)."""
    x = as_vector(x, problem.d_x, "x")
    y = as_vector(y, problem.d_y, "y")
    corrected = x - precond.solve(x, y, problem.residual(x, y))
    return ift_estimate(problem, corrected, y)


def newton_preconditioner(problem: BilevelProblem) -> PreconditionerOracle:
    """P = F_1: the corrective step becomes one Newton step."""
    def solve(x, y, v):
        try:
            return linear_solve(problem.jac_x(x, y), v, what="P")
        except SingularMatrixError as err:
            raise SingularMatrixError(str(err), what="P") from err
    return PreconditionerOracle(solve_fn=solve,
                                matrix_fn=lambda x, y: problem.jac_x(x, y))


def diag_preconditioner(problem: BilevelProblem) -> PreconditionerOracle:
    """P = diag(F_1), the Jacobi choice."""
    def diagonal(x, y):
        d = np.diag(problem.jac_x(x, y)).copy()
        if np.min(np.abs(d)) <= 1e-14 * max(np.max(np.abs(d)), 1.0):
            raise SingularMatrixError("diagonal of F_1 is singular", what="P")
        return d

    def solve(x, y, v):
        d = diagonal(x, y)
        v = np.asarray(v, float)
        return v / d if v.ndim == 1 else v / d[:, None]

    return PreconditionerOracle(solve_fn=solve,
                                matrix_fn=lambda x, y: np.diag(diagonal(x, y)))


def scaled_preconditioner(precond: PreconditionerOracle, factor: float) -> PreconditionerOracle:
    """P scaled by a constant, handy for manufacturing controlled deviations."""
    if factor == 0:
        raise UsageError("scale factor must be nonzero")
    return PreconditionerOracle(
        solve_fn=lambda x, y, v: precond.solve(x, y, v) / factor,
        matrix_fn=lambda x, y: factor * precond.matrix(x, y))


# --------------------------------------------------------------------------
# reparameterization

@dataclass(frozen=True)
class Reparameterization:
    """Bijective change of inner variable x = phi(z, y) with derivatives.

    Second derivatives enter only as output-contracted matrices:

        hess_zz_contract(z, y, w)[i, j] = sum_k w_k d2 phi_k / dz_i dz_j
        hess_zy_contract(z, y, w)[i, e] = sum_k w_k d2 phi_k / dz_i dy_e
    """

    forward_fn: Callable[[Array, Array], Array]
    inverse_fn: Callable[[Array, Array], Array]
    jac_z_fn: Callable[[Array, Array], Array]
    jac_y_fn: Callable[[Array, Array], Array]
    hess_zz_contract_fn: Callable[[Array, Array, Array], Array]
    hess_zy_contract_fn: Callable[[Array, Array, Array], Array]

    def forward(self, z, y):
        return self.forward_fn(z, y)

    def inverse(self, x, y):
        return self.inverse_fn(x, y)

    def jac_z(self, z, y):
        return self.jac_z_fn(z, y)

    def jac_y(self, z, y):
        return self.jac_y_fn(z, y)

    def hess_zz_contract(self, z, y, w):
        return self.hess_zz_contract_fn(z, y, w)

    def hess_zy_contract(self, z, y, w):
        return self.hess_zy_contract_fn(z, y, w)


def reparam_sensitivity(problem: BilevelProblem, phi: Reparameterization,
                        x: Array, y: Array) -> Array:
    """Sensitivity matrix of the estimate rewritten through x = phi(z, y).

    With z = phi^{-1}(x, y) and all residual terms at (x, y):

        U = F_2 + F_1 phi_2 + phi_1^{-T} (phi_21 F)
        V = phi_1^{-T} (phi_11 F) phi_1^{-1} + F_1
        result = phi_2' - U' V^{-1}

    (The transpose on the phi_1 inverse in U follows from the chain rule;
    it matters only for changes of variables with a nonsymmetric Jacobian.)
    At the root both contraction terms vanish and this reduces to the plain
    sensitivity matrix, whatever phi is.
    """
    z = phi.inverse(x, y)
    f = problem.residual(x, y)
    f1 = problem.jac_x(x, y)
    f2 = problem.jac_y(x, y)
    p1 = phi.jac_z(z, y)
    p2 = phi.jac_y(z, y)
    u = f2 + f1 @ p2 + solve_transpose(p1, phi.hess_zy_contract(z, y, f), what="phi_1")
    czz = phi.hess_zz_contract(z, y, f)
    half = solve_transpose(p1, czz, what="phi_1")
    v = solve_transpose(p1, half.T, what="phi_1").T + f1
    return p2.T - solve_transpose(v, u, what="V").T


def reparameterized_estimate(problem: BilevelProblem, phi: Reparameterization,
                             x: Array, y: Array) -> Array:
    """Hypergradient estimate under the change of variables phi."""
    x = as_vector(x, problem.d_x, "x")
    y = as_vector(y, problem.d_y, "y")
    return problem.outer.grad_y(x, y) + reparam_sensitivity(problem, phi, x, y) \
        @ problem.outer.grad_x(x, y)


def identity_reparam() -> Reparameterization:
    """phi(z, y) = z; the estimate collapses to the plain implicit formula."""
    return Reparameterization(
        forward_fn=lambda z, y: z,
        inverse_fn=lambda x, y: x,
        jac_z_fn=lambda z, y: np.eye(z.shape[0]),
        jac_y_fn=lambda z, y: np.zeros((z.shape[0], y.shape[0])),
        hess_zz_contract_fn=lambda z, y, w: np.zeros((z.shape[0], z.shape[0])),
        hess_zy_contract_fn=lambda z, y, w: np.zeros((z.shape[0], y.shape[0])),
    )


def signed_exp_reparam(anchor_x: Array) -> Reparameterization:
    """phi(z) = sign(anchor) * exp(z), element-wise.

    Every anchor coordinate must be nonzero: a zero sign would collapse a
    coordinate of the map. Callers that sweep iterates are expected to skip
    such points rather than perturb them.
    """
    anchor = np.asarray(anchor_x, dtype=float)
    if np.any(anchor == 0.0):
        raise DomainError("exponential reparameterization needs nonzero coordinates")
    signs = np.sign(anchor)

    def inverse(x, y):
        q = signs * np.asarray(x, float)
        if np.any(q <= 0.0):
            raise DomainError("point is outside the signed-exponential range")
        return np.log(q)

    return Reparameterization(
        forward_fn=lambda z, y: signs * np.exp(z),
        inverse_fn=inverse,
        jac_z_fn=lambda z, y: np.diag(signs * np.exp(z)),
        jac_y_fn=lambda z, y: np.zeros((z.shape[0], y.shape[0])),
        hess_zz_contract_fn=lambda z, y, w: np.diag(w * signs * np.exp(z)),
        hess_zy_contract_fn=lambda z, y, w: np.zeros((z.shape[0], y.shape[0])),
    )


def exp_family_reparam_1d(alpha: float, beta: float) -> Reparameterization:
    """Scalar map phi(z) = alpha * exp(beta z) (z and x one-dimensional)."""
    if alpha == 0 or beta == 0:
        raise UsageError("alpha and beta must be nonzero")

    def inverse(x, y):
        q = x[0] / alpha
        if q <= 0.0:
            raise DomainError("point is outside the exponential range")
        return np.array([np.log(q) / beta])

    return Reparameterization(
        forward_fn=lambda z, y: np.array([alpha * np.exp(beta * z[0])]),
        inverse_fn=inverse,
        jac_z_fn=lambda z, y: np.array([[alpha * beta * np.exp(beta * z[0])]]),
        jac_y_fn=lambda z, y: np.zeros((1, y.shape[0])),
        hess_zz_contract_fn=lambda z, y, w: np.array(
            [[w[0] * alpha * beta * beta * np.exp(beta * z[0])]]),
        hess_zy_contract_fn=lambda z, y, w: np.zeros((1, y.shape[0])),
    )


# --------------------------------------------------------------------------
# separable localized reparameterization

@dataclass(frozen=True)
class SeparableReparam:
    """Separable family psi(z, y) = R(x, y) Q(z, ybar) [+ x], anchored later.

    R carries the y-dependence, Q the z-dependence; the anchor (x, ybar) is
    fixed when the family is instantiated at a query point. Derivatives of R
    in y enter through two contractions of the 3-tensor R_2:

        r2_contract_left(x, y, w)[m, e]  = sum_k w_k (R_2)_{km,e}
        r2_contract_right(x, y, q)[k, e] = sum_m (R_2)_{km,e} q_m
    """

    r_fn: Callable[[Array, Array], Array]
    r_solve_fn: Callable[[Array, Array, Array], Array]
    r2_contract_left_fn: Callable[[Array, Array, Array], Array]
    r2_contract_right_fn: Callable[[Array, Array, Array], Array]
    q_fn: Callable[[Array, Array], Array]
    q_jac_fn: Callable[[Array, Array], Array]
    q_hess_contract_fn: Callable[[Array, Array, Array], Array]
    q_inverse_fn: Callable[[Array, Array], Array]
    offset: bool

    def r(self, x, y):
        return self.r_fn(x, y)

    def r_solve(self, x, y, v):
        return self.r_solve_fn(x, y, v)

    def r2_contract_left(self, x, y, w):
        return self.r2_contract_left_fn(x, y, w)

    def r2_contract_right(self, x, y, q):
        return self.r2_contract_right_fn(x, y, q)

    def q(self, z, ybar):
        return self.q_fn(z, ybar)

    def q_jac(self, z, ybar):
        return self.q_jac_fn(z, ybar)

    def q_hess_contract(self, z, ybar, w):
        return self.q_hess_contract_fn(z, ybar, w)

    def q_inverse(self, v, ybar):
        return self.q_inverse_fn(v, ybar)


def anchored_reparam(sep: SeparableReparam, anchor_x: Array,
                     anchor_y: Array) -> Reparameterization:
    """Freeze the separable family at an anchor, yielding a full phi oracle.

    x enters R through the anchor while y stays live, so the y-derivatives
    of phi flow through R_2 at the anchor point.
    """
    xa = np.array(anchor_x, dtype=float)
    ya = np.array(anchor_y, dtype=float)
    shift = xa if sep.offset else np.zeros_like(xa)
    return Reparameterization(
        forward_fn=lambda z, y: sep.r(xa, y) @ sep.q(z, ya) + shift,
        inverse_fn=lambda x, y: sep.q_inverse(sep.r_solve(xa, y, x - shift), ya),
        jac_z_fn=lambda z, y: sep.r(xa, y) @ sep.q_jac(z, ya),
        jac_y_fn=lambda z, y: sep.r2_contract_right(xa, y, sep.q(z, ya)),
        hess_zz_contract_fn=lambda z, y, w: sep.q_hess_contract(
            z, ya, sep.r(xa, y).T @ w),
        hess_zy_contract_fn=lambda z, y, w: sep.q_jac(z, ya).T
        @ sep.r2_contract_left(xa, y, w),
    )


def localized_estimate(problem: BilevelProblem, sep: SeparableReparam,
                       x: Array, y: Array) -> Array:
    """Estimate under the separable family anchored at the query point itself."""
    x = as_vector(x, problem.d_x, "x")
    y = as_vector(y, problem.d_y, "y")
    return reparameterized_estimate(problem, anchored_reparam(sep, x, y), x, y)


def localized_sensitivity(problem: BilevelProblem, sep: SeparableReparam,
                          x: Array, y: Array) -> Array:
    """Sensitivity matrix of the query-anchored separable estimate."""
    return reparam_sensitivity(problem, anchored_reparam(sep, x, y), x, y)


def _diag_of_jac_y_dirs(problem: BilevelProblem, x: Array, y: Array) -> Array:
    """Matrix [k, e] = diagonal entry k of the y_e-derivative of F_1."""
    d_y = problem.d_y
    cols = []
    for e in range(d_y):
        direction = np.zeros(d_y)
        direction[e] = 1.0
        cols.append(np.diag(problem.inner.djac_x_dir_y(x, y, direction)))
    return np.stack(cols, axis=1)


def diag_scaling_reparam(problem: BilevelProblem) -> SeparableReparam:
    """Separable family with R = [diag(F_1)]^{-1} and Q the identity."""
    def diagonal(x, y):
        d = np.diag(problem.jac_x(x, y)).copy()
        if np.min(np.abs(d)) <= 1e-14 * max(np.max(np.abs(d)), 1.0):
            raise SingularMatrixError("diagonal of F_1 is singular", what="R")
        return d

    def r2_contract(x, y, w):
        # R_2 is diagonal per y-coordinate: (R_2)_{kk,e} = -dF1_kk/dy_e / d_k^2,
        # so the left and right contractions share one formula.
        d = diagonal(x, y)
        return -_diag_of_jac_y_dirs(problem, x, y) * (w / (d * d))[:, None]

    return SeparableReparam(
        r_fn=lambda x, y: np.diag(1.0 / diagonal(x, y)),
        r_solve_fn=lambda x, y, v: v * diagonal(x, y),
        r2_contract_left_fn=r2_contract,
        r2_contract_right_fn=r2_contract,
        q_fn=lambda z, ybar: z,
        q_jac_fn=lambda z, ybar: np.eye(z.shape[0]),
        q_hess_contract_fn=lambda z, ybar, w: np.zeros((z.shape[0], z.shape[0])),
        q_inverse_fn=lambda v, ybar: v,
        offset=False,
    )


def newton_separable_reparam(problem: BilevelProblem) -> SeparableReparam:
    """Separable family with R = F_1^{-1}, Q = -F, and the anchor offset.

    The q_hess contraction reuses the directional derivative of F_1, which
    contracts over the output index only because the residual is a gradient
    field (its second-derivative tensor is symmetric in all indices); every
    shipped problem satisfies this.

    Inverting Q means solving F(z, ybar) = -v: a single linear solve when
    the residual is affine in x, otherwise a damped Newton run seeded at the
    exact root, which the problem must then provide.
    """
    def r(x, y):
        f1 = problem.jac_x(x, y)
        return linear_solve(f1, np.eye(problem.d_x), what="F_1")

    def r2_contract_left(x, y, w):
        f1 = problem.jac_x(x, y)
        t = solve_transpose(f1, w, what="F_1")
        cols = []
        for e in range(problem.d_y):
            direction = np.zeros(problem.d_y)
            direction[e] = 1.0
            g_e = problem.inner.djac_x_dir_y(x, y, direction)
            cols.append(-solve_transpose(f1, g_e.T @ t, what="F_1"))
        return np.stack(cols, axis=1)

    def r2_contract_right(x, y, q):
        f1 = problem.jac_x(x, y)
        s = linear_solve(f1, q, what="F_1")
        cols = []
        for e in range(problem.d_y):
            direction = np.zeros(problem.d_y)
            direction[e] = 1.0
            g_e = problem.inner.djac_x_dir_y(x, y, direction)
            cols.append(-linear_solve(f1, g_e @ s, what="F_1"))
        return np.stack(cols, axis=1)

    def q_inverse(v, ybar):
        if problem.affine_in_x:
            origin = np.zeros(problem.d_x)
            return linear_solve(problem.jac_x(origin, ybar),
                                -v - problem.residual(origin, ybar), what="F_1")
        start = problem.exact_root(ybar)
        if start is None:
            raise CapabilityError(
                "inverting the Newton-like family on a nonlinear residual "
                "requires the problem to provide exact_root")
        return newton_root(lambda z: problem.residual(z, ybar) + v,
                           lambda z: problem.jac_x(z, ybar), start)

    return SeparableReparam(
        r_fn=r,
        r_solve_fn=lambda x, y, v: problem.jac_x(x, y) @ v,
        r2_contract_left_fn=r2_contract_left,
        r2_contract_right_fn=r2_contract_right,
        q_fn=lambda z, ybar: -problem.residual(z, ybar),
        q_jac_fn=lambda z, ybar: -problem.jac_x(z, ybar),
        q_hess_contract_fn=lambda z, ybar, w: -problem.inner.djac_x_dir_x(z, ybar, w),
        q_inverse_fn=q_inverse,
        offset=True,
    )


def scale_separable_r(sep: SeparableReparam, factor: float) -> SeparableReparam:
    """Scale only the R field of a separable family (controlled deviation).

    The y-derivative contractions are left untouched on purpose, so the
    scaled family deviates from the Newton-like ideal in R alone.
    """
    if factor == 0:
        raise UsageError("scale factor must be nonzero")
    return replace(
        sep,
        r_fn=lambda x, y: factor * sep.r(x, y),
        r_solve_fn=lambda x, y, v: sep.r_solve(x, y, v) / factor,
    )


# --------------------------------------------------------------------------
# strategy registry

@dataclass(frozen=True)
class Estimator:
    """Named map (x, y) -> hypergradient estimate."""

    name: str
    fn: Callable[[Array, Array], Array]

    def __call__(self, x: Array, y: Array) -> Array:
        return self.fn(x, y)


def make_estimator(problem: BilevelProblem, strategy: str) -> Estimator:
    """Build the estimator for one of the shipped strategy keys."""
    if strategy == "vanilla":
        return Estimator("vanilla", lambda x, y: ift_estimate(problem, x, y))
    if strategy == "newton":
        precond = newton_preconditioner(problem)
        return Estimator("newton",
                         lambda x, y: preconditioned_estimate(problem, precond, x, y))
    if strategy == "diag":
        precond = diag_preconditioner(problem)
        return Estimator("diag",
                         lambda x, y: preconditioned_estimate(problem, precond, x, y))
    if strategy == "exp":
        return Estimator("exp", lambda x, y: reparameterized_estimate(
            problem, signed_exp_reparam(x), x, y))
    if strategy == "diag-rep":
        sep = diag_scaling_reparam(problem)
        return Estimator("diag-rep",
                         lambda x, y: localized_estimate(problem, sep, x, y))
    if strategy == "opt":
        sep = newton_separable_reparam(problem)
        return Estimator("opt",
                         lambda x, y: localized_estimate(problem, sep, x, y))
    raise UsageError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")


def make_sensitivity_fn(problem: BilevelProblem,
                        kind: str | Reparameterization | SeparableReparam
                        ) -> Callable[[Array, Array], Array]:
    """Sensitivity-matrix map for a strategy kind or an explicit oracle.

    Accepts "vanilla", "exp" (signed exponential re-anchored at every query
    point), a Reparameterization (fixed phi), or a SeparableReparam
    (anchored at each query point).
    """
    if kind == "vanilla":
        return lambda x, y: solution_sensitivity(problem, x, y)
    if kind == "exp":
        return lambda x, y: reparam_sensitivity(problem, signed_exp_reparam(x), x, y)
    if isinstance(kind, Reparameterization):
        return lambda x, y: reparam_sensitivity(problem, kind, x, y)
    if isinstance(kind, SeparableReparam):
        return lambda x, y: localized_sensitivity(problem, kind, x, y)
    raise UsageError(f"unsupported sensitivity kind {kind!r}")
