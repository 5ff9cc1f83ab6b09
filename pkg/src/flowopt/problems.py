"""Test-problem catalog: objectives, constrained programs, saddle objectives.

Every problem carries analytic value/gradient (and usually Hessian) oracles
plus whatever certificates it can honestly claim: a strong-convexity
constant k (Hessian >= k*I everywhere) and/or a gradient-dominance constant
mu (0.5*||grad f||^2 >= mu*(f - f_star)).  A zero certificate means
"uncertified", not "known to fail".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numerics import as_matrix, as_vector, lu_solve, min_eigenvalue_symmetric


class MissingOptimum(Exception):
    """The operation needs a known optimal value but the problem has none."""


@dataclass(frozen=True)
class ObjectiveProblem:
    """Unconstrained objective with oracles and convexity certificates."""

    name: str
    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    known_minimizer: Optional[np.ndarray] = None
    known_optimum: Optional[float] = None
    strong_convexity_k: float = 0.0
    pl_constant_mu: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.strong_convexity_k < 0 or self.pl_constant_mu < 0:
            raise ValueError("certificates must be nonnegative")


@dataclass(frozen=True)
class ConstrainedProblem:
    """Equality-constrained convex program  min f(x)  s.t.  A x = b.

    The convex conjugate of f is supplied in closed form so the dual
    function g(nu) = -nu.b - fstar(-A.T nu) has exact oracles.
    """

    name: str
    objective: ObjectiveProblem
    A: np.ndarray
    b: np.ndarray
    dual_conjugate_value: Callable[[np.ndarray], float]
    dual_conjugate_gradient: Callable[[np.ndarray], np.ndarray]
    dual_strong_convexity: float = 0.0
    known_dual_maximizer: Optional[np.ndarray] = None
    known_dual_optimum: Optional[float] = None
    known_primal_minimizer: Optional[np.ndarray] = None

    def __post_init__(self):
        m, n = self.A.shape
        if n != self.objective.dim or self.b.shape[0] != m:
            raise ValueError("constraint dimensions do not match the objective")

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class SaddleProblem:
    """Convex-concave bivariate objective F(x, z): minimized in x, maximized in z.

    k1, k2 certify hess_xx >= k1*I and hess_zz <= -k2*I near the saddle.
    invertibility_only marks problems (such as Lagrangian wrappings, whose
    zz-block is identically zero) that only certify an invertible xx-block
    plus a full-row-rank mixed block, so convergence is to a critical point
    of the gradient field rather than to a certified saddle.
    """

    name: str
    n: int
    m: int
    value: Callable[[np.ndarray, np.ndarray], float]
    grad_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_z: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hess_xx: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hess_zx: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hess_zz: Callable[[np.ndarray, np.ndarray], np.ndarray]
    known_saddle: Optional[tuple[np.ndarray, np.ndarray]] = None
    k1: float = 0.0
    k2: float = 0.0
    invertibility_only: bool = False

    def split(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = as_vector(s, dim=self.n + self.m)
        return s[: self.n], s[self.n:]


def full_saddle_hessian(sp: SaddleProblem, x, z) -> np.ndarray:
    """Assemble the stacked (n+m)x(n+m) Hessian of F at (x, z).

    The lower-left block is the transpose of the upper-right one, which is
    exact for C^2 objectives.
    """
    x = as_vector(x, dim=sp.n)
    z = as_vector(z, dim=sp.m)
    hxx = as_matrix(sp.hess_xx(x, z))
    hzx = as_matrix(sp.hess_zx(x, z))
    hzz = as_matrix(sp.hess_zz(x, z))
    return np.block([[hxx, hzx], [hzx.T, hzz]])


# ---------------------------------------------------------------------------
# objective builders


def sphere_problem(dim: int = 2) -> ObjectiveProblem:
    """f(x) = 0.5*||x||^2; the identity-Hessian benchmark (k = mu = 1)."""
    return ObjectiveProblem(
        name="sphere",
        dim=dim,
        value=lambda x: 0.5 * float(x @ x),
        gradient=lambda x: np.asarray(x, dtype=float).copy(),
        hessian=lambda x: np.eye(dim),
        known_minimizer=np.zeros(dim),
        known_optimum=0.0,
        strong_convexity_k=1.0,
        pl_constant_mu=1.0,
    )


def quadratic_problem(Q, q=None, name: str = "quadratic-Q") -> ObjectiveProblem:
    """f(x) = 0.5*x.Q.x + q.x for SPD Q; k = mu = min eigenvalue of Q."""
    Q = as_matrix(Q, square=True)
    n = Q.shape[0]
    q = np.zeros(n) if q is None else as_vector(q, dim=n)
    k = min_eigenvalue_symmetric(Q)
    if k <= 0:
        raise ValueError("Q must be positive definite")
    xstar = lu_solve(Q, -q)
    return ObjectiveProblem(
        name=name,
        dim=n,
        value=lambda x: 0.5 * float(x @ (Q @ x)) + float(q @ x),
        gradient=lambda x: Q @ x + q,
        hessian=lambda x: Q.copy(),
        known_minimizer=xstar,
        known_optimum=0.5 * float(xstar @ (Q @ xstar)) + float(q @ xstar),
        strong_convexity_k=k,
        pl_constant_mu=k,
        params={"Q": Q, "q": q},
    )


def random_spd_matrix(n: int, cond: float, rng: np.random.Generator) -> np.ndarray:
    """Random SPD matrix with spectrum log-spaced in [1/sqrt(cond), sqrt(cond)]."""
    eigs = np.logspace(-0.5 * np.log10(cond), 0.5 * np.log10(cond), n)
    u, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return 0.5 * ((u * eigs) @ u.T + u @ (eigs[:, None] * u.T))


def random_quadratic_problem(n: int = 5, cond: float = 10.0, seed: int = 0,
                             name: str = "quadratic-Q") -> ObjectiveProblem:
    rng = np.random.default_rng(seed)
    Q = random_spd_matrix(n, cond, rng)
    q = rng.standard_normal(n)
    return quadratic_problem(Q, q, name=name)


def quartic_problem(dim: int = 4) -> ObjectiveProblem:
    """Separable f(x) = sum(x_i^4 + x_i^2); strongly convex with k = 2."""
    return ObjectiveProblem(
        name="quartic",
        dim=dim,
        value=lambda x: float(np.sum(x ** 4 + x ** 2)),
        gradient=lambda x: 4.0 * x ** 3 + 2.0 * x,
        hessian=lambda x: np.diag(12.0 * x ** 2 + 2.0),
        known_minimizer=np.zeros(dim),
        known_optimum=0.0,
        strong_convexity_k=2.0,
        pl_constant_mu=2.0,
    )


def pl_sine_problem(mu: Optional[float] = None) -> ObjectiveProblem:
    """Scalar f(x) = x^2 + 3 sin^2 x: nonconvex but gradient dominated.

    The only critical point is x = 0, yet f'' = 2 + 6 cos(2x) goes negative,
    so this problem separates gradient dominance from strict convexity.
    When mu is not given it is certified empirically by a grid scan of
    0.5*f'(x)^2 / f(x) over [-10, 10].
    """
    prob = ObjectiveProblem(
        name="pl-sine",
        dim=1,
        value=lambda x: float(x[0] ** 2 + 3.0 * np.sin(x[0]) ** 2),
        gradient=lambda x: np.array([2.0 * x[0] + 3.0 * np.sin(2.0 * x[0])]),
        hessian=lambda x: np.array([[2.0 + 6.0 * np.cos(2.0 * x[0])]]),
        known_minimizer=np.zeros(1),
        known_optimum=0.0,
        strong_convexity_k=0.0,
        pl_constant_mu=0.0,
    )
    if mu is None:
        mu = estimate_pl_constant(prob, (-10.0, 10.0), grid_n=2001)
    return ObjectiveProblem(
        name=prob.name, dim=1, value=prob.value, gradient=prob.gradient,
        hessian=prob.hessian, known_minimizer=prob.known_minimizer,
        known_optimum=prob.known_optimum, strong_convexity_k=0.0,
        pl_constant_mu=mu, params={"mu_source": "grid"},
    )


def log_sum_exp_problem(n: int = 3, n_terms: int = 6, eps: float = 0.5,
                        seed: int = 7) -> ObjectiveProblem:
    """f(x) = log sum_i exp(a_i.x) + (eps/2)*||x||^2, strongly convex with k = eps."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n_terms, n))

    def softmax_weights(x):
        s = A @ x
        w = np.exp(s - np.max(s))
        return w / np.sum(w)

    def value(x):
        s = A @ x
        smax = np.max(s)
        return float(smax + np.log(np.sum(np.exp(s - smax))) + 0.5 * eps * (x @ x))

    def gradient(x):
        return A.T @ softmax_weights(x) + eps * x

    def hessian(x):
        w = softmax_weights(x)
        return A.T @ (np.diag(w) - np.outer(w, w)) @ A + eps * np.eye(n)

    return ObjectiveProblem(
        name="log-sum-exp-reg", dim=n, value=value, gradient=gradient,
        hessian=hessian, strong_convexity_k=eps, params={"rows": A, "eps": eps},
    )


def catalog() -> list[ObjectiveProblem]:
    """The default objective corpus.

    Five of the six entries have globally invertible Hessians; pl-sine does
    not (its second derivative changes sign) and is the one gradient-dominated
    nonconvex entry.
    """
    return [
        sphere_problem(),
        random_quadratic_problem(n=5, cond=10.0, seed=0, name="quadratic-Q"),
        random_quadratic_problem(n=8, cond=1e4, seed=1, name="quadratic-ill"),
        quartic_problem(),
        pl_sine_problem(),
        log_sum_exp_problem(),
    ]


def estimate_pl_constant(p: ObjectiveProblem, box, grid_n: int = 201) -> float:
    """Empirical gradient-dominance constant over a box, by grid scan.

    Returns 0.99 times the grid minimum of 0.5*||grad f(x)||^2 / (f(x) - f_star),
    skipping points where the gap is below 1e-12.  The grid minimum is an
    upper bound on the true constant over the box, hence the safety factor.
    Only feasible at low dimension (<= 3).
    """
    if p.known_optimum is None:
        raise MissingOptimum(f"problem {p.name!r} has no known optimal value")
    if p.dim > 3:
        raise ValueError("grid certification is only supported for dim <= 3")
    if grid_n < 100:
        raise ValueError("grid_n must be at least 100 per axis")
    bounds = np.asarray(box, dtype=float)
    if bounds.ndim == 1:
        bounds = np.tile(bounds, (p.dim, 1))
    axes = [np.linspace(lo, hi, grid_n) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    best = np.inf
    fstar = p.known_optimum
    for x in points:
        gap = p.value(x) - fstar
        if abs(gap) < 1e-12:
            continue
        g = p.gradient(x)
        best = min(best, 0.5 * float(g @ g) / gap)
    if not np.isfinite(best):
        raise ValueError("no grid point had a usable optimality gap")
    return 0.99 * best


# ---------------------------------------------------------------------------
# constrained programs


def dual_function_value(cp: ConstrainedProblem, nu) -> float:
    """g(nu) = -nu.b - fstar(-A.T nu), the concave dual of the program."""
    nu = as_vector(nu, dim=cp.n_constraints)
    return -float(nu @ cp.b) - cp.dual_conjugate_value(-cp.A.T @ nu)


def dual_function_gradient(cp: ConstrainedProblem, nu) -> np.ndarray:
    """grad g(nu) = -b + A * grad fstar(-A.T nu).

    By conjugate calculus this equals A*xhat(nu) - b where xhat minimizes
    the Lagrangian at nu, i.e. the constraint residual at the inner minimizer.
    """
    nu = as_vector(nu, dim=cp.n_constraints)
    return -cp.b + cp.A @ cp.dual_conjugate_gradient(-cp.A.T @ nu)


def lagrangian_gradient_x(cp: ConstrainedProblem, x, nu) -> np.ndarray:
    """grad_x of f(x) + nu.(Ax - b), namely grad f(x) + A.T nu."""
    x = as_vector(x, dim=cp.objective.dim)
    nu = as_vector(nu, dim=cp.n_constraints)
    return cp.objective.gradient(x) + cp.A.T @ nu


def quadratic_constrained_problem(Q, q, A, b, name: str = "quadratic-eq") -> ConstrainedProblem:
    """Equality-constrained QP with the closed-form conjugate of its objective.

    For f = 0.5*x.Q.x + q.x the conjugate is fstar(y) = 0.5*(y-q).Qinv.(y-q),
    so every dual oracle is exact.  The dual optimum and the KKT pair are
    precomputed at construction.
    """
    A = as_matrix(A)
    b = as_vector(b, dim=A.shape[0])
    obj = quadratic_problem(Q, q, name=name)
    Q = obj.params["Q"]
    q = obj.params["q"]
    m = A.shape[0]
    if min_eigenvalue_symmetric(A @ A.T) <= 1e-10:
        raise ValueError("constraint matrix is not full row-rank")

    def conj_value(y):
        d = y - q
        return 0.5 * float(d @ lu_solve(Q, d))

    def conj_gradient(y):
        return lu_solve(Q, y - q)

    # Dual Hessian is A Qinv A.T; its least eigenvalue certifies strong
    # concavity of g, equivalently gradient dominance of -g.
    AQiAT = A @ np.column_stack([lu_solve(Q, A[i]) for i in range(m)])
    AQiAT = 0.5 * (AQiAT + AQiAT.T)
    mu_dual = min_eigenvalue_symmetric(AQiAT)
    nu_star = lu_solve(AQiAT, -(A @ lu_solve(Q, q) + b))
    x_star = lu_solve(Q, -(q + A.T @ nu_star))
    gstar = -float(nu_star @ b) - conj_value(-A.T @ nu_star)
    return ConstrainedProblem(
        name=name, objective=obj, A=A, b=b,
        dual_conjugate_value=conj_value, dual_conjugate_gradient=conj_gradient,
        dual_strong_convexity=mu_dual,
        known_dual_maximizer=nu_star, known_dual_optimum=gstar,
        known_primal_minimizer=x_star,
    )


def sphere_line_problem(dim: int = 2) -> ConstrainedProblem:
    """min 0.5*||x||^2 s.t. x_0 = 1: the hand-checkable instance (x* = e_0, nu* = -1)."""
    A = np.zeros((1, dim))
    A[0, 0] = 1.0
    return quadratic_constrained_problem(np.eye(dim), np.zeros(dim), A, np.array([1.0]),
                                         name="sphere-line")


def random_constrained_qp(n: int = 10, m: int = 3, seed: int = 0,
                          cond: float = 4.0) -> ConstrainedProblem:
    rng = np.random.default_rng(seed)
    Q = random_spd_matrix(n, cond, rng)
    q = rng.standard_normal(n)
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    return quadratic_constrained_problem(Q, q, A, b, name="random-qp")


# ---------------------------------------------------------------------------
# saddle objectives


def scalar_saddle_problem() -> SaddleProblem:
    """F(x, z) = 0.5 x^2 + x z - 0.5 z^2 with its saddle at the origin."""
    return SaddleProblem(
        name="scalar-saddle", n=1, m=1,
        value=lambda x, z: 0.5 * float(x[0] ** 2) + float(x[0] * z[0]) - 0.5 * float(z[0] ** 2),
        grad_x=lambda x, z: np.array([x[0] + z[0]]),
        grad_z=lambda x, z: np.array([x[0] - z[0]]),
        hess_xx=lambda x, z: np.array([[1.0]]),
        hess_zx=lambda x, z: np.array([[1.0]]),
        hess_zz=lambda x, z: np.array([[-1.0]]),
        known_saddle=(np.zeros(1), np.zeros(1)),
        k1=1.0, k2=1.0,
    )


def bilinear_quadratic_saddle(P, S, R, lin_x=None, lin_z=None,
                              name: str = "bilinear-quad") -> SaddleProblem:
    """F = 0.5 x.P.x + x.S.z - 0.5 z.R.z + lin_x.x + lin_z.z with SPD P, R.

    The saddle solves the linear system [P S; S.T -R][x; z] = -[lin_x; lin_z].
    """
    P = as_matrix(P, square=True)
    R = as_matrix(R, square=True)
    S = as_matrix(S)
    n, m = S.shape
    if P.shape[0] != n or R.shape[0] != m:
        raise ValueError("block dimensions are inconsistent")
    lin_x = np.zeros(n) if lin_x is None else as_vector(lin_x, dim=n)
    lin_z = np.zeros(m) if lin_z is None else as_vector(lin_z, dim=m)
    k1 = min_eigenvalue_symmetric(P)
    k2 = min_eigenvalue_symmetric(R)
    if k1 <= 0 or k2 <= 0:
        raise ValueError("P and R must be positive definite")
    M = np.block([[P, S], [S.T, -R]])
    saddle = lu_solve(M, -np.concatenate([lin_x, lin_z]))
    return SaddleProblem(
        name=name, n=n, m=m,
        value=lambda x, z: (0.5 * float(x @ (P @ x)) + float(x @ (S @ z))
                            - 0.5 * float(z @ (R @ z)) + float(lin_x @ x) + float(lin_z @ z)),
        grad_x=lambda x, z: P @ x + S @ z + lin_x,
        grad_z=lambda x, z: S.T @ x - R @ z + lin_z,
        hess_xx=lambda x, z: P.copy(),
        hess_zx=lambda x, z: S.copy(),
        hess_zz=lambda x, z: -R.copy(),
        known_saddle=(saddle[:n], saddle[n:]),
        k1=k1, k2=k2,
    )


def random_bilinear_saddle(n: int = 3, m: int = 2, seed: int = 0,
                           cond: float = 4.0, affine: bool = True) -> SaddleProblem:
    rng = np.random.default_rng(seed)
    P = random_spd_matrix(n, cond, rng)
    R = random_spd_matrix(m, cond, rng)
    S = rng.standard_normal((n, m))
    lin_x = rng.standard_normal(n) if affine else None
    lin_z = rng.standard_normal(m) if affine else None
    return bilinear_quadratic_saddle(P, S, R, lin_x, lin_z)


def constrained_as_saddle(cp: ConstrainedProblem) -> SaddleProblem:
    """Wrap an equality-constrained program as the saddle of its Lagrangian.

    F(x, nu) = f(x) + nu.(Ax - b).  The zz-block of the Hessian is zero, so
    no concavity certificate exists; the wrapping relies on an invertible
    xx-block and a full-row-rank constraint matrix, and its critical point
    is the KKT pair.
    """
    obj = cp.objective
    if obj.hessian is None:
        raise ValueError("Lagrangian saddle wrapping needs a Hessian oracle")
    n, m = obj.dim, cp.n_constraints
    known = None
    if cp.known_primal_minimizer is not None and cp.known_dual_maximizer is not None:
        known = (cp.known_primal_minimizer, cp.known_dual_maximizer)
    return SaddleProblem(
        name=f"constrained-as-saddle[{cp.name}]", n=n, m=m,
        value=lambda x, z: obj.value(x) + float(z @ (cp.A @ x - cp.b)),
        grad_x=lambda x, z: obj.gradient(x) + cp.A.T @ z,
        grad_z=lambda x, z: cp.A @ x - cp.b,
        hess_xx=lambda x, z: obj.hessian(x),
        hess_zx=lambda x, z: cp.A.T.copy(),
        hess_zz=lambda x, z: np.zeros((m, m)),
        known_saddle=known,
        k1=obj.strong_convexity_k, k2=0.0,
        invertibility_only=True,
    )


def saddle_catalog() -> list[SaddleProblem]:
    return [
        bilinear_quadratic_saddle(np.eye(2), np.zeros((2, 1)), np.eye(1)),
        scalar_saddle_problem(),
        constrained_as_saddle(sphere_line_problem()),
    ]
