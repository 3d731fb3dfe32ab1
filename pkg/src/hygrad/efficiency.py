"""Efficiency constants, estimator Jacobians, and the comparison bounds.

The efficiency constant of an estimator at y is the operator norm of its
Jacobian in x, taken at the inner root: it is the first-order factor by
which inner error is amplified into hypergradient error. An estimator with
a zero constant has quadratically decaying error ("super-efficient").

Everything here is evaluated at the root, where the simplifications behind
the closed-form Jacobian expressions are valid; nothing is extrapolated to
other points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import HygradError, NumericalFailure, UsageError
from .estimators import (
    Estimator,
    PreconditionerOracle,
    Reparameterization,
    SeparableReparam,
    ift_estimate,
    localized_estimate,
    make_sensitivity_fn,
    newton_separable_reparam,
    preconditioned_estimate,
    reparameterized_estimate,
    signed_exp_reparam,
    solution_sensitivity,
)
from .linalg import linear_solve, spectral_norm, top_singular
from .problems import BilevelProblem, as_vector
from .seeding import rng_from_seed
from .solvers import exact_root

Array = np.ndarray
ReparamKind = Union[str, Reparameterization, SeparableReparam]

# Default relative step for estimator Jacobians; larger than the first-order
# steps because these maps get differenced near a stationary value.
JACOBIAN_FD_STEP = 1e-5

# Operator-norm deviations of 3-tensor terms are sampled over this many
# seeded unit probe directions instead of computing true tensor norms.
PROBE_COUNT = 8
PROBE_SEED = 90210


@dataclass(frozen=True)
class EfficiencyReport:
    """Efficiency constant of one strategy at one y."""

    strategy: str
    y: Array
    c_y: float
    jacobian: Array
    method: str = "fd"


@dataclass(frozen=True)
class ComparisonBounds:
    """Both sides of the two quadratic comparison inequalities.

    lhs_phi_minus_p compares against rhs_phi_minus_p (and symmetrically for
    p_minus_phi); each lhs must dominate its rhs up to finite-difference
    noise. v_p and v_phi are the unit maximizers of the two estimator
    Jacobians' actions.
    """

    lhs_phi_minus_p: float
    rhs_phi_minus_p: float
    lhs_p_minus_phi: float
    rhs_p_minus_phi: float
    v_p: Array
    v_phi: Array


def estimator_for_kind(problem: BilevelProblem, kind: ReparamKind,
                       name: str = "reparam") -> Estimator:
    """Estimator callable for a reparameterization kind (fixed or localized)."""
    if kind == "vanilla":
        return Estimator("vanilla", lambda x, y: ift_estimate(problem, x, y))
    if kind == "exp":
        return Estimator("exp", lambda x, y: reparameterized_estimate(
            problem, signed_exp_reparam(x), x, y))
    if isinstance(kind, Reparameterization):
        return Estimator(name, lambda x, y: reparameterized_estimate(
            problem, kind, x, y))
    if isinstance(kind, SeparableReparam):
        return Estimator(name, lambda x, y: localized_estimate(problem, kind, x, y))
    raise UsageError(f"unsupported reparameterization kind {kind!r}")


def _fd_map_jacobian(map_fn: Callable[[Array], Array], at: Array, eps: float,
                     label: str) -> Array:
    cols = []
    for j in range(at.shape[0]):
        hi, lo = at.copy(), at.copy()
        hi[j] += eps
        lo[j] -= eps
        try:
            f_hi = np.asarray(map_fn(hi), float)
            f_lo = np.asarray(map_fn(lo), float)
        except HygradError as err:
            raise NumericalFailure(
                f"{label} failed at probe coordinate {j}: {err}") from err
        cols.append((f_hi - f_lo) / (2.0 * eps))
    return np.stack(cols, axis=1)


def _default_eps(xstar: Array, eps: float | None) -> float:
    if eps is not None:
        if eps <= 0:
            raise UsageError("eps must be positive")
        return eps
    return JACOBIAN_FD_STEP * (1.0 + float(np.linalg.norm(xstar)))


def estimator_jacobian_fd(problem: BilevelProblem, estimator: Estimator,
                          y: Array, eps: float | None = None) -> Array:
    """Central-difference Jacobian in x of an estimator, at the inner root."""
    y = as_vector(y, problem.d_y, "y")
    xstar = exact_root(problem, y)
    eps = _default_eps(xstar, eps)
    return _fd_map_jacobian(lambda x: estimator(x, y), xstar, eps,
                            f"estimator {estimator.name!r}")


def efficiency_constant(problem: BilevelProblem, estimator: Estimator,
                        y: Array, eps: float | None = None) -> EfficiencyReport:
    """Efficiency constant via the finite-difference estimator Jacobian."""
    jac = estimator_jacobian_fd(problem, estimator, y, eps=eps)
    return EfficiencyReport(strategy=estimator.name, y=np.array(y, float),
                            c_y=spectral_norm(jac), jacobian=jac, method="fd")


# --------------------------------------------------------------------------
# closed-form Jacobians at the root

def ift_jacobian_analytic(problem: BilevelProblem, y: Array) -> Array:
    """Jacobian in x of the plain estimate at the root, from the oracles.

    Assembled as g_21 + (sensitivity-term Jacobian) + S g_11 where the
    middle term contracts the second derivatives of F directionally:
    row e is -(dF_1/dy_e)' s with s = F_1^{-1} g_1, plus
    F_2' F_1^{-1} (dF_1/dx along s).
    """
    y = as_vector(y, problem.d_y, "y")
    xstar = exact_root(problem, y)
    f1 = problem.jac_x(xstar, y)
    f2 = problem.jac_y(xstar, y)
    g1 = problem.outer.grad_x(xstar, y)
    s = linear_solve(f1, g1, what="F_1")
    rows = []
    for e in range(problem.d_y):
        direction = np.zeros(problem.d_y)
        direction[e] = 1.0
        rows.append(-problem.inner.djac_x_dir_y(xstar, y, direction).T @ s)
    term_y = np.stack(rows, axis=0)
    m_s = problem.inner.djac_x_dir_x(xstar, y, s)
    term_x = f2.T @ linear_solve(f1, m_s, what="F_1")
    sens = solution_sensitivity(problem, xstar, y)
    return problem.outer.jac_gradY_x(xstar, y) + term_y + term_x \
        + sens @ problem.outer.hess_xx(xstar, y)


def precond_error_factor_at_root(problem: BilevelProblem,
                                 precond: PreconditionerOracle, y: Array) -> Array:
    """The matrix I - P^{-1} F_1 at the root (the residual term vanishes there)."""
    y = as_vector(y, problem.d_y, "y")
    xstar = exact_root(problem, y)
    f1 = problem.jac_x(xstar, y)
    return np.eye(problem.d_x) - precond.solve(xstar, y, f1)


def precond_jacobian_at_root(problem: BilevelProblem,
                             precond: PreconditionerOracle, y: Array) -> Array:
    """Jacobian of the preconditioned estimate at the root: Omega_1 (I - P^{-1}F_1)."""
    return ift_jacobian_analytic(problem, y) @ precond_error_factor_at_root(
        problem, precond, y)


def outer_curvature(problem: BilevelProblem, y: Array,
                    method: str = "analytic") -> Array:
    """The term g_21 + [dx*/dy]' g_11 at the root.

    With an affine outer objective this vanishes, which is exactly when
    inner-only super-efficiency transfers to the hypergradient.
    """
    y = as_vector(y, problem.d_y, "y")
    xstar = exact_root(problem, y)
    if method == "analytic":
        jac_t = solution_sensitivity(problem, xstar, y)
    elif method == "fd":
        from .solvers import fd_jac_xstar
        jac_t = fd_jac_xstar(problem, y).T
    else:
        raise UsageError(f"unknown method {method!r}")
    return problem.outer.jac_gradY_x(xstar, y) + jac_t @ problem.outer.hess_xx(xstar, y)


def sensitivity_term_jacobian_fd(problem: BilevelProblem, kind: ReparamKind,
                                 y: Array, eps: float | None = None) -> Array:
    """FD Jacobian at the root of x -> S(x, y) g_1(x*, y), outer factor frozen.

    S is the sensitivity matrix of the requested kind, so only the implicit
    factor varies across probes.
    """
    y = as_vector(y, problem.d_y, "y")
    xstar = exact_root(problem, y)
    g1 = problem.outer.grad_x(xstar, y)
    sens = make_sensitivity_fn(problem, kind)
    eps = _default_eps(xstar, eps)
    return _fd_map_jacobian(lambda x: sens(x, y) @ g1, xstar, eps,
                            "sensitivity term")


def sensitivity_efficiency_constant(problem: BilevelProblem, kind: ReparamKind,
                                    y: Array, eps: float | None = None) -> float:
    """Efficiency constant of the sensitivity matrix itself.

    Operator norm of the FD Jacobian of x -> vec(S(x, y)), a
    (d_y d_x) x d_x matrix.
    """
    y = as_vector(y, problem.d_y, "y")
    xstar = exact_root(problem, y)
    sens = make_sensitivity_fn(problem, kind)
    eps = _default_eps(xstar, eps)
    jac = _fd_map_jacobian(lambda x: sens(x, y).ravel(), xstar, eps,
                           "sensitivity matrix")
    return spectral_norm(jac)


# --------------------------------------------------------------------------
# comparison bounds

def compare_bounds(problem: BilevelProblem, precond: PreconditionerOracle,
                   reparam: ReparamKind, y: Array,
                   eps: float | None = None) -> ComparisonBounds:
    """Evaluate both quadratic comparison inequalities between a
    preconditioned and a reparameterized estimator at the root.

    With D the outer curvature term, T/T_phi the two sensitivity-term
    Jacobians and E the preconditioner error factor:

        U+- = D +- D E + T_phi +- T E
        V+- = D E +- D + T E +- T_phi

    and each lhs (difference of squared efficiency constants) dominates the
    inner product of the corresponding U/V pair applied to the other
    estimator's maximizing direction.
    """
    y = as_vector(y, problem.d_y, "y")
    d = outer_curvature(problem, y)
    e_p = precond_error_factor_at_root(problem, precond, y)
    t_vanilla = sensitivity_term_jacobian_fd(problem, "vanilla", y, eps=eps)
    t_phi = sensitivity_term_jacobian_fd(problem, reparam, y, eps=eps)

    u_plus = d + d @ e_p + t_phi + t_vanilla @ e_p
    u_minus = d - d @ e_p + t_phi - t_vanilla @ e_p
    v_plus = d @ e_p + d + t_vanilla @ e_p + t_phi
    v_minus = d @ e_p - d + t_vanilla @ e_p - t_phi

    est_p = Estimator("precond", lambda x, yy: preconditioned_estimate(
        problem, precond, x, yy))
    jac_p = estimator_jacobian_fd(problem, est_p, y, eps=eps)
    jac_phi = estimator_jacobian_fd(problem, estimator_for_kind(problem, reparam),
                                    y, eps=eps)
    sigma_p, v_p = top_singular(jac_p)
    sigma_phi, v_phi = top_singular(jac_phi)

    lhs_phi_minus_p = sigma_phi ** 2 - sigma_p ** 2
    return ComparisonBounds(
        lhs_phi_minus_p=lhs_phi_minus_p,
        rhs_phi_minus_p=float((u_plus @ v_p) @ (u_minus @ v_p)),
        lhs_p_minus_phi=-lhs_phi_minus_p,
        rhs_p_minus_phi=float((v_plus @ v_phi) @ (v_minus @ v_phi)),
        v_p=v_p,
        v_phi=v_phi,
    )


def precond_gap(problem: BilevelProblem, precond: PreconditionerOracle,
                reparam: ReparamKind, y: Array,
                eps: float | None = None) -> tuple[float, float, float]:
    """Asymptotic advantage of a near-ideal preconditioner.

    Returns (delta, lower_bound, lhs) with delta the deviation of P from F_1
    at the root, lhs the difference of squared efficiency constants
    (reparameterized minus preconditioned), and lower_bound the term that
    survives as delta -> 0. lhs >= lower_bound up to o(delta) and FD noise.
    """
    y = as_vector(y, problem.d_y, "y")
    xstar = exact_root(problem, y)
    delta = spectral_norm(precond.matrix(xstar, y) - problem.jac_x(xstar, y))

    d = outer_curvature(problem, y)
    t_phi = sensitivity_term_jacobian_fd(problem, reparam, y, eps=eps)
    est_p = Estimator("precond", lambda x, yy: preconditioned_estimate(
        problem, precond, x, yy))
    jac_p = estimator_jacobian_fd(problem, est_p, y, eps=eps)
    _, v_p = top_singular(jac_p)
    lower = float(np.linalg.norm((d + t_phi) @ v_p) ** 2)

    c_phi = efficiency_constant(problem, estimator_for_kind(problem, reparam),
                                y, eps=eps).c_y
    c_p = spectral_norm(jac_p)
    return delta, lower, c_phi ** 2 - c_p ** 2


def reparam_gap(problem: BilevelProblem, precond: PreconditionerOracle,
                sep: SeparableReparam, y: Array,
                eps: float | None = None) -> tuple[float, float, float]:
    """Asymptotic advantage of a near-ideal localized reparameterization.

    Returns (sigma, lower_bound, lhs) with sigma = |g_1| times the
    sensitivity efficiency constant of the localized family, lhs the
    difference of squared efficiency constants (preconditioned minus
    localized), and lower_bound the sigma -> 0 limit term.
    """
    y = as_vector(y, problem.d_y, "y")
    xstar = exact_root(problem, y)
    g1 = problem.outer.grad_x(xstar, y)
    sigma = float(np.linalg.norm(g1)) * sensitivity_efficiency_constant(
        problem, sep, y, eps=eps)

    d = outer_curvature(problem, y)
    e_p = precond_error_factor_at_root(problem, precond, y)
    t_vanilla = sensitivity_term_jacobian_fd(problem, "vanilla", y, eps=eps)
    est_loc = estimator_for_kind(problem, sep, name="localized")
    jac_loc = estimator_jacobian_fd(problem, est_loc, y, eps=eps)
    _, v_phi = top_singular(jac_loc)
    lower = float(np.linalg.norm((d + t_vanilla) @ e_p @ v_phi) ** 2
                  - np.linalg.norm(d @ v_phi) ** 2)

    est_p = Estimator("precond", lambda x, yy: preconditioned_estimate(
        problem, precond, x, yy))
    c_p = efficiency_constant(problem, est_p, y, eps=eps).c_y
    c_loc = spectral_norm(jac_loc)
    return sigma, lower, c_p ** 2 - c_loc ** 2


# --------------------------------------------------------------------------
# deviations from the Newton-like separable family

@dataclass(frozen=True)
class ReparamDeviations:
    """Operator-norm distances of (R, Q) and derivatives from the Newton-like
    choice, measured at the root. All five vanish for that family itself."""

    dev_q: float
    dev_q_jac: float
    dev_q_hess: float
    dev_r: float
    dev_r2: float


def _probe_directions(dim: int) -> list[Array]:
    rng = rng_from_seed(PROBE_SEED)
    probes = []
    for _ in range(PROBE_COUNT):
        v = rng.normal(size=dim)
        probes.append(v / np.linalg.norm(v))
    return probes


def newton_reparam_deviations(problem: BilevelProblem, sep: SeparableReparam,
                              y: Array) -> ReparamDeviations:
    """Measure how far a separable family is from the Newton-like one.

    Tensor-valued terms (the Q second derivative and the y-derivative of R)
    are compared through contractions against a fixed set of seeded unit
    probe directions rather than true tensor norms.
    """
    y = as_vector(y, problem.d_y, "y")
    xstar = exact_root(problem, y)
    shift = xstar if sep.offset else np.zeros_like(xstar)
    zstar = sep.q_inverse(sep.r_solve(xstar, y, xstar - shift), y)
    f1 = problem.jac_x(xstar, y)

    dev_q = float(np.linalg.norm(sep.q(zstar, y) + problem.residual(xstar, y)))
    dev_q_jac = spectral_norm(sep.q_jac(zstar, y) + f1)
    ideal = newton_separable_reparam(problem)
    probes = _probe_directions(problem.d_x)
    dev_q_hess = max(
        spectral_norm(sep.q_hess_contract(zstar, y, w)
                      + problem.inner.djac_x_dir_x(xstar, y, w))
        for w in probes)
    dev_r = spectral_norm(sep.r(xstar, y)
                          - linear_solve(f1, np.eye(problem.d_x), what="F_1"))
    dev_r2 = max(
        spectral_norm(sep.r2_contract_left(xstar, y, w)
                      - ideal.r2_contract_left(xstar, y, w))
        for w in probes)
    return ReparamDeviations(dev_q=dev_q, dev_q_jac=dev_q_jac,
                             dev_q_hess=dev_q_hess, dev_r=dev_r, dev_r2=dev_r2)


# --------------------------------------------------------------------------
# 1-D super-efficiency residual

def super_efficiency_residual_1d(problem: BilevelProblem,
                                 phi: Reparameterization, y: Array) -> float:
    """Residual of the scalar super-efficiency condition at the root.

    For one-dimensional problems whose residual and outer gradient are
    linear in x, the change of variables phi kills the first-order error
    exactly when this residual is zero:

        phi_12/phi_1 - phi_2 phi_11 / phi_1^2 - F_2 phi_11 / (F_1 phi_1^2)
            - (g_12/g_1 - F_12/F_1)
    """
    if problem.d_x != 1 or problem.d_y != 1:
        raise UsageError("the scalar residual needs d_x = d_y = 1")
    y = as_vector(y, 1, "y")
    xstar = exact_root(problem, y)
    zstar = phi.inverse(xstar, y)
    one = np.ones(1)

    f1 = float(problem.jac_x(xstar, y)[0, 0])
    f2 = float(problem.jac_y(xstar, y)[0, 0])
    f12 = float(problem.inner.djac_x_dir_y(xstar, y, one)[0, 0])
    g1 = float(problem.outer.grad_x(xstar, y)[0])
    if g1 == 0.0:
        raise UsageError("degenerate problem: outer gradient vanishes at the root")
    g12 = float(problem.outer.jac_gradX_y(xstar, y)[0, 0])

    p1 = float(phi.jac_z(zstar, y)[0, 0])
    p2 = float(phi.jac_y(zstar, y)[0, 0])
    p11 = float(phi.hess_zz_contract(zstar, y, one)[0, 0])
    p12 = float(phi.hess_zy_contract(zstar, y, one)[0, 0])

    return (p12 / p1 - p2 * p11 / p1 ** 2 - f2 * p11 / (f1 * p1 ** 2)
            - (g12 / g1 - f12 / f1))
