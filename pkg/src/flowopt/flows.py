"""Flow-field builders: state -> velocity maps for the accelerated dynamics.

All fields share one singularity treatment: the driving gradient g enters
through g / ||g||^e, which for e in (0, 1) is 0/0 at an optimum.  Since the
field norm ||g||^(1-e) tends to 0 there, the continuous extension is zero,
and we realize it by returning exactly zero whenever ||g|| <= eps_sing.
That gives integrators a true fixed point instead of a removable singularity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import problems as pb
from .numerics import SingularMatrix, as_vector, lu_solve

EPS_SING_DEFAULT = 1e-12


class SingularHessian(Exception):
    """The Hessian-inverse step hit a numerically singular matrix."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class FlowParams:
    """Gains and exponents shared by every two-term flow.

    c1, c2 > 0 are gains; p1 > 2 and p2 in (1, 2) set the rescaling
    exponents e_i = (p_i - 2)/(p_i - 1), giving e1 in (0, 1) (singular,
    drives the endgame) and e2 < 0 (superlinear, drives the approach from
    far away).  Single-exponent flows ignore (c2, p2).
    """

    c1: float = 1.0
    c2: float = 1.0
    p1: float = 3.0
    p2: float = 1.5
    eps_sing: float = EPS_SING_DEFAULT

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("gains c1, c2 must be positive")
        if self.p1 <= 2:
            raise ValueError("p1 must exceed 2")
        if not 1.0 < self.p2 < 2.0:
            raise ValueError("p2 must lie in (1, 2)")
        if self.eps_sing <= 0:
            raise ValueError("eps_sing must be positive")

    @property
    def e1(self) -> float:
        return (self.p1 - 2.0) / (self.p1 - 1.0)

    @property
    def e2(self) -> float:
        return (self.p2 - 2.0) / (self.p2 - 1.0)

    @property
    def alpha1(self) -> float:
        return 2.0 - self.e1

    @property
    def alpha2(self) -> float:
        return 2.0 - self.e2


@dataclass(frozen=True)
class FlowField:
    """A state -> velocity map together with the oracles the integrator needs.

    gradient returns the driving gradient (whose norm is the stopping
    signal); objective/optimum, when available, feed the objective trace and
    the optimality-gap Lyapunov function.
    """

    dim: int
    label: str
    velocity: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    objective: Optional[Callable[[np.ndarray], float]] = None
    optimum: Optional[float] = None
    params: dict = field(default_factory=dict)


def rescaled_direction(g, exponent_e: float, eps_sing: float = EPS_SING_DEFAULT) -> np.ndarray:
    """The map g -> -g / ||g||^e, regularized to zero inside the eps ball.

    Requires e < 1 so the output norm ||g||^(1-e) vanishes continuously at
    g = 0.  e = 0 recovers the plain negative gradient.
    """
    if exponent_e >= 1.0:
        raise ValueError("exponent must be < 1 for a continuously vanishing field")
    g = as_vector(g)
    norm = float(np.linalg.norm(g))
    if norm <= eps_sing:
        return np.zeros_like(g)
    return -g * norm ** (-exponent_e)


def _p_exponent(pexp: float) -> float:
    if pexp <= 2:
        raise ValueError("rescaling order must exceed 2")
    return (pexp - 2.0) / (pexp - 1.0)


def build_gradient_flow(p: pb.ObjectiveProblem,
                        eps_sing: float = EPS_SING_DEFAULT) -> FlowField:
    """Nominal flow xdot = -grad f(x)."""
    return FlowField(
        dim=p.dim, label="nominal",
        velocity=lambda x: rescaled_direction(p.gradient(x), 0.0, eps_sing),
        gradient=p.gradient, objective=p.value, optimum=p.known_optimum,
        params={"problem": p.name},
    )


def build_p_flow(p: pb.ObjectiveProblem, pexp: float = 3.0,
                 eps_sing: float = EPS_SING_DEFAULT) -> FlowField:
    """Rescaled flow xdot = -grad f / ||grad f||^((pexp-2)/(pexp-1)).

    pexp = 3 gives the half-power scheme xdot = -grad f / ||grad f||^(1/2);
    pexp -> inf approaches the normalized flow xdot = -grad f / ||grad f||.
    """
    e = _p_exponent(pexp)
    return FlowField(
        dim=p.dim, label="p-rescaled",
        velocity=lambda x: rescaled_direction(p.gradient(x), e, eps_sing),
        gradient=p.gradient, objective=p.value, optimum=p.known_optimum,
        params={"problem": p.name, "pexp": pexp, "e": e},
    )


def _two_term_direction(g: np.ndarray, fp: FlowParams) -> np.ndarray:
    return (fp.c1 * rescaled_direction(g, fp.e1, fp.eps_sing)
            + fp.c2 * rescaled_direction(g, fp.e2, fp.eps_sing))


def build_fixed_time_flow(p: pb.ObjectiveProblem, fp: FlowParams) -> FlowField:
    """Two-term flow xdot = -c1 g/||g||^e1 - c2 g/||g||^e2 with g = grad f."""
    return FlowField(
        dim=p.dim, label="fixed-time",
        velocity=lambda x: _two_term_direction(p.gradient(x), fp),
        gradient=p.gradient, objective=p.value, optimum=p.known_optimum,
        params={"problem": p.name, "fp": fp},
    )


def build_newton_fixed_time_flow(p: pb.ObjectiveProblem, fp: FlowParams) -> FlowField:
    """Newton-preconditioned two-term flow: hess f(x) . xdot = -w(grad f(x)).

    Raises SingularHessian wherever the Hessian solve breaks down, carrying
    the offending state.
    """
    if p.hessian is None:
        raise ValueError(f"problem {p.name!r} has no Hessian oracle")

    def velocity(x):
        g = p.gradient(x)
        if np.linalg.norm(g) <= fp.eps_sing:
            return np.zeros_like(np.atleast_1d(np.asarray(x, dtype=float)))
        d = _two_term_direction(g, fp)
        try:
            return lu_solve(p.hessian(x), d)
        except SingularMatrix as exc:
            raise SingularHessian(f"Hessian of {p.name!r} is singular: {exc}", state=np.asarray(x, dtype=float)) from exc

    return FlowField(
        dim=p.dim, label="newton-fixed-time",
        velocity=velocity, gradient=p.gradient,
        objective=p.value, optimum=p.known_optimum,
        params={"problem": p.name, "fp": fp},
    )


def build_dual_ascent_flow(cp: pb.ConstrainedProblem, fp: FlowParams) -> FlowField:
    """Two-term ascent on the dual function, run as descent on h = -g.

    State is the multiplier vector; the driving gradient is grad h(nu) =
    -grad g(nu), so equilibria are dual optima.
    """
    def grad_h(nu):
        return -pb.dual_function_gradient(cp, nu)

    def h_value(nu):
        return -pb.dual_function_value(cp, nu)

    h_opt = None if cp.known_dual_optimum is None else -cp.known_dual_optimum
    return FlowField(
        dim=cp.n_constraints, label="dual-ascent",
        velocity=lambda nu: _two_term_direction(grad_h(nu), fp),
        gradient=grad_h, objective=h_value, optimum=h_opt,
        params={"problem": cp.name, "fp": fp},
    )


def build_primal_flow_at_nu(cp: pb.ConstrainedProblem, nu_star, fp: FlowParams) -> FlowField:
    """Two-term descent on x -> L(x, nu*) for a frozen multiplier nu*.

    With nu* at the dual optimum the equilibrium is the constrained
    program's optimizer.
    """
    nu_star = as_vector(nu_star, dim=cp.n_constraints)

    def grad_l(x):
        return pb.lagrangian_gradient_x(cp, x, nu_star)

    def l_value(x):
        return cp.objective.value(x) + float(nu_star @ (cp.A @ x - cp.b))

    return FlowField(
        dim=cp.objective.dim, label="primal-at-nu-star",
        velocity=lambda x: _two_term_direction(grad_l(x), fp),
        gradient=grad_l, objective=l_value,
        params={"problem": cp.name, "fp": fp, "nu_star": nu_star},
    )


def build_saddle_newton_flow(sp: pb.SaddleProblem, fp: FlowParams) -> FlowField:
    """Newton-preconditioned two-term flow on the stacked state s = (x, z).

    The driving gradient is v(s) = (grad_x F, grad_z F); the velocity solves
    hess F(s) . sdot = -w(v), so equilibria are exactly the zeros of v.
    """
    def stacked_gradient(s):
        x, z = sp.split(s)
        return np.concatenate([sp.grad_x(x, z), sp.grad_z(x, z)])

    def value(s):
        x, z = sp.split(s)
        return sp.value(x, z)

    def velocity(s):
        v = stacked_gradient(s)
        if np.linalg.norm(v) <= fp.eps_sing:
            return np.zeros_like(v)
        d = _two_term_direction(v, fp)
        x, z = sp.split(s)
        try:
            return lu_solve(pb.full_saddle_hessian(sp, x, z), d)
        except SingularMatrix as exc:
            raise SingularHessian(f"stacked Hessian of {sp.name!r} is singular: {exc}", state=np.asarray(s, dtype=float)) from exc

    return FlowField(
        dim=sp.n + sp.m, label="saddle-newton",
        velocity=velocity, gradient=stacked_gradient, objective=value,
        params={"problem": sp.name, "fp": fp},
    )
