"""Built-in verification suites behind the `verify` CLI subcommand.

Each suite runs a batch of property checks (oracle agreement, pointwise
inequalities, algebraic identities, canonical convergence runs) and reports
pass/fail counts.  These are the same properties the test suite asserts;
having them runnable from the CLI makes the whole verification story a
one-command affair on an installed package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import analysis, flows, harness, problems as pb
from .integrate import IntegratorConfig, integrate
from .numerics import finite_diff_gradient, finite_diff_hessian, lu_solve


@dataclass
class SuiteResult:
    name: str
    failures: list[str] = field(default_factory=list)
    n_checks: int = 0

    def check(self, ok: bool, label: str) -> None:
        self.n_checks += 1
        if not ok:
            self.failures.append(label)

    @property
    def passed(self) -> bool:
        return not self.failures


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def verify_problems(seed: int = 0) -> SuiteResult:
    res = SuiteResult("problems")
    rng = np.random.default_rng(seed)

    for prob in pb.catalog():
        for _ in range(50):
            x = rng.uniform(-2.0, 2.0, size=prob.dim)
            g = prob.gradient(x)
            g_fd = finite_diff_gradient(prob.value, x, 1e-5)
            rel = np.linalg.norm(g - g_fd) / max(1.0, np.linalg.norm(g))
            res.check(rel <= 1e-6, f"{prob.name}: gradient oracle vs finite differences")
            if prob.hessian is not None:
                h = prob.hessian(x)
                h_fd = finite_diff_hessian(prob.value, x, 1e-4)
                rel = np.linalg.norm(h - h_fd) / max(1.0, np.linalg.norm(h))
                res.check(rel <= 1e-4, f"{prob.name}: Hessian oracle vs finite differences")
        if prob.known_minimizer is not None:
            res.check(np.linalg.norm(prob.gradient(prob.known_minimizer)) <= 1e-10,
                      f"{prob.name}: gradient vanishes at the known minimizer")
        if prob.pl_constant_mu > 0 and prob.known_optimum is not None:
            ok = True
            for _ in range(10_000):
                x = rng.uniform(-8.0, 8.0, size=prob.dim)
                gap = prob.value(x) - prob.known_optimum
                g = prob.gradient(x)
                if 0.5 * float(g @ g) < prob.pl_constant_mu * gap - 1e-9:
                    ok = False
                    break
            res.check(ok, f"{prob.name}: gradient-dominance certificate holds at samples")

    for cp in (pb.sphere_line_problem(), pb.random_constrained_qp(seed=3)):
        Q, q = cp.objective.params["Q"], cp.objective.params["q"]
        for _ in range(25):
            nu = rng.standard_normal(cp.n_constraints)
            via_conjugate = pb.dual_function_gradient(cp, nu)
            xhat = np.linalg.solve(Q, -(q + cp.A.T @ nu))
            res.check(np.linalg.norm(via_conjugate - (cp.A @ xhat - cp.b)) <= 1e-9,
                      f"{cp.name}: dual gradient, conjugate route vs inner-minimizer route")
            x = rng.standard_normal(cp.objective.dim)
            y = rng.standard_normal(cp.objective.dim)
            fy = cp.objective.value(x) + cp.dual_conjugate_value(y)
            res.check(fy >= float(y @ x) - 1e-9, f"{cp.name}: conjugate pair satisfies Fenchel-Young")

    for sp in pb.saddle_catalog():
        for _ in range(20):
            x = rng.uniform(-2.0, 2.0, size=sp.n)
            z = rng.uniform(-2.0, 2.0, size=sp.m)
            hzx = sp.hess_zx(x, z)
            hxz_fd = finite_diff_hessian(
                lambda s: sp.value(s[:sp.n], s[sp.n:]), np.concatenate([x, z]), 1e-4
            )[sp.n:, :sp.n]
            res.check(np.linalg.norm(hzx.T - hxz_fd) <= 1e-4,
                      f"{sp.name}: mixed Hessian block matches its transpose")
            try:
                lu_solve(pb.full_saddle_hessian(sp, x, z), np.ones(sp.n + sp.m))
                res.check(True, "")
            except Exception:
                res.check(False, f"{sp.name}: stacked Hessian is invertible at samples")
    return res


def verify_flows(seed: int = 0) -> SuiteResult:
    res = SuiteResult("flows")
    rng = np.random.default_rng(seed)
    fp = flows.FlowParams()

    res.check(abs(flows.build_p_flow(pb.sphere_problem(), 3.0).params["e"] - 0.5) == 0.0,
              "half-power flow exponent is exactly 1/2 at pexp=3")

    for prob in pb.catalog():
        for build in (lambda p: flows.build_p_flow(p, 3.0),
                      lambda p: flows.build_fixed_time_flow(p, fp)):
            f = build(prob)
            for _ in range(25):
                x = rng.uniform(-2.0, 2.0, size=prob.dim)
                g = prob.gradient(x)
                v = f.velocity(x)
                if np.linalg.norm(g) > flows.EPS_SING_DEFAULT:
                    res.check(float(g @ v) < 0.0, f"{prob.name}/{f.label}: strict descent direction")
                else:
                    res.check(np.all(v == 0.0), f"{prob.name}/{f.label}: equilibrium inside the eps ball")
        if prob.known_minimizer is not None:
            f = flows.build_fixed_time_flow(prob, fp)
            res.check(np.all(f.velocity(prob.known_minimizer) == 0.0),
                      f"{prob.name}: zero velocity at the minimizer")

    newton_probs = [p for p in pb.catalog() if p.name != "pl-sine"]
    for prob in newton_probs:
        f = flows.build_newton_fixed_time_flow(prob, fp)
        for _ in range(40):
            x = rng.uniform(-2.0, 2.0, size=prob.dim)
            g = prob.gradient(x)
            if np.linalg.norm(g) <= 1e-6:
                continue
            v = f.velocity(x)
            lhs = float(g @ (prob.hessian(x) @ v))
            gn = np.linalg.norm(g)
            rhs = -fp.c1 * gn ** fp.alpha1 - fp.c2 * gn ** fp.alpha2
            res.check(_rel_err(lhs, rhs) <= 1e-9,
                      f"{prob.name}: Newton flow cancels the Hessian in the Lyapunov derivative")

    for sp in pb.saddle_catalog():
        f = flows.build_saddle_newton_flow(sp, fp)
        for _ in range(40):
            s = rng.uniform(-2.0, 2.0, size=sp.n + sp.m)
            x, z = sp.split(s)
            v = np.concatenate([sp.grad_x(x, z), sp.grad_z(x, z)])
            vn = np.linalg.norm(v)
            if vn <= 1e-6:
                continue
            vel = f.velocity(s)
            lhs = float(v @ (pb.full_saddle_hessian(sp, x, z) @ vel))
            rhs = -fp.c1 * vn ** fp.alpha1 - fp.c2 * vn ** fp.alpha2
            res.check(_rel_err(lhs, rhs) <= 1e-9,
                      f"{sp.name}: saddle flow Lyapunov derivative identity")
        if sp.known_saddle is not None:
            s_star = np.concatenate(sp.known_saddle)
            res.check(np.all(f.velocity(s_star) == 0.0), f"{sp.name}: saddle is an equilibrium")
    return res


def verify_bounds() -> SuiteResult:
    res = SuiteResult("bounds")
    fp = flows.FlowParams()

    tnm = analysis.bound_TNM(fp)
    generic = analysis.generic_fixed_bound(
        a_ft=fp.c1 * 2.0 ** (fp.alpha1 / 2.0), alpha_ft=fp.alpha1 / 2.0,
        b_ft=fp.c2 * 2.0 ** (fp.alpha2 / 2.0), beta_ft=fp.alpha2 / 2.0)
    res.check(_rel_err(tnm.value, generic.value) <= 1e-12,
              "generic fixed-time formula reproduces the Newton-flow bound")

    for k in (0.5, 1.0, 2.0):
        for g0 in (0.1, 4.0, 100.0):
            t1 = analysis.bound_T1(k, g0)
            gen = analysis.generic_finite_bound(2.0 ** 0.75 * k, 0.75, 0.5 * g0 * g0)
            res.check(_rel_err(t1.value, gen.value) <= 1e-12,
                      "generic finite-time formula reproduces the half-power strict bound")
            res.check(_rel_err(t1.value, analysis.bound_Tp_finite("strict", 3.0, k, g0).value) <= 1e-12,
                      "p-flow strict bound at pexp=3 matches the half-power bound")
    for mu in (0.25, 0.5, 1.0):
        for gap in (0.2, 1.0, 9.0):
            t2 = analysis.bound_T2(mu, gap, as_printed=False)
            gen = analysis.generic_finite_bound((2 * mu) ** 0.75, 7.0 / 8.0, 0.5 * gap * gap)
            res.check(_rel_err(t2.value, gen.value) <= 1e-12,
                      "re-derived gap bound matches the generic finite-time formula")
            res.check(_rel_err(t2.value, analysis.bound_Tp_finite("pl", 3.0, mu, gap).value) <= 1e-12,
                      "p-flow dominance bound at pexp=3 matches the re-derived gap bound")

    res.check(analysis.bound_T1(1.0, 4.0).value < analysis.bound_T1(1.0, 9.0).value,
              "strict bound grows with the starting gradient norm")
    res.check(analysis.bound_T1(2.0, 4.0).value < analysis.bound_T1(1.0, 4.0).value,
              "strict bound shrinks with stronger convexity")
    res.check(analysis.bound_T2(1.0, 1.0).value < analysis.bound_T2(0.5, 1.0).value,
              "gap bound shrinks with stronger dominance")

    strict = analysis.bound_T3(fp, "strict", 1.0)
    res.check(_rel_err(strict.value, 2.0 ** 0.25 / 0.5 + 2.0 ** -0.5) <= 1e-12,
              "two-term strict bound evaluates to its closed form at defaults")
    res.check(_rel_err(analysis.bound_T3(fp, "pl", 0.5).value, 12.0) <= 1e-12,
              "two-term dominance bound evaluates to 12 at defaults")
    tsp = analysis.bound_TSP(fp)
    res.check(tsp.value >= tsp.inputs["newton_pattern"] and tsp.value >= tsp.inputs["printed"] - 1e-15,
              "saddle bound takes the larger of its two variants")

    # Fixed-time values are pure functions of gains and exponents.
    res.check(analysis.bound_TNM(fp).value == analysis.bound_TNM(fp).value == tnm.value,
              "Newton-flow bound is reproducible")
    return res


def verify_dynamics(seed: int = 0) -> SuiteResult:
    """Canonical convergence runs: closed-form settling, uniformity,
    dominance, two-phase and saddle agreement."""
    res = SuiteResult("dynamics")
    fp = flows.FlowParams()
    cfg = IntegratorConfig()

    sphere = pb.sphere_problem()
    traj = integrate(flows.build_p_flow(sphere, 3.0), [4.0, 0.0], cfg)
    res.check(traj.stop_reason == "converged" and abs(traj.settle_time - 4.0) <= 0.04,
              "half-power flow on the sphere settles at t=4 from radius 4")

    rep = harness.run_experiment(harness.ExperimentSpec(
        name="verify-uniformity", problem="sphere", flow="fixed-time",
        norms=[1e-2, 1.0, 1e2, 1e4, 1e6], bounds_to_check=("T3-strict",), seed=seed))
    res.check(rep.passed and rep.aggregate["uniformity_pass"] is True,
              "two-term flow settles uniformly across 8 orders of magnitude")

    tnm = analysis.bound_TNM(fp)
    for prob in (pb.random_quadratic_problem(n=5, cond=10.0, seed=0),
                 pb.random_quadratic_problem(n=8, cond=1e4, seed=1, name="quadratic-ill")):
        rng = np.random.default_rng(seed)
        x0 = prob.known_minimizer + rng.standard_normal(prob.dim)
        t = integrate(flows.build_newton_fixed_time_flow(prob, fp), x0, cfg)
        res.check(t.stop_reason == "converged" and t.settle_time <= tnm.value * 1.05,
                  f"{prob.name}: Newton flow dominates its problem-independent bound")

    cp = pb.sphere_line_problem()
    x_hat, nu_hat, rep_c = harness.solve_constrained(cp, fp, fp, cfg, x0=[5.0, 5.0], nu0=[0.0])
    res.check(np.linalg.norm(x_hat - np.array([1.0, 0.0])) <= 1e-6
              and abs(nu_hat[0] + 1.0) <= 1e-6 and rep_c["dominance_pass"],
              "two-phase solve recovers the hand-checkable KKT pair")

    sp = pb.scalar_saddle_problem()
    x_s, z_s, rep_s = harness.solve_saddle(sp, fp, cfg, s0=[1.0, 1.0])
    res.check(rep_s["converged"] and rep_s["distance_to_saddle"] <= 1e-6 and rep_s["dominance_pass"],
              "saddle flow reaches the scalar saddle within its bound")

    wrapped = pb.constrained_as_saddle(cp)
    x_w, z_w, _ = harness.solve_saddle(wrapped, fp, cfg, s0=[5.0, 5.0, 0.0])
    res.check(np.linalg.norm(x_w - x_hat) <= 1e-5 and np.linalg.norm(z_w - nu_hat) <= 1e-5,
              "Lagrangian saddle wrapping agrees with the two-phase answer")

    cfg_lyap = IntegratorConfig(method="fixed-rk4", dt=1e-3, t_max=50.0)
    t = integrate(flows.build_fixed_time_flow(sphere, fp), [4.0, 0.0], cfg_lyap, lyap="grad-sq")
    rhs, _ = analysis.lyapunov_rhs_model("T3-strict", fp=fp, k=1.0)
    res.check(analysis.check_lyapunov_inequality(t, rhs).passed,
              "two-term flow satisfies its decay inequality along the trajectory")

    t = integrate(flows.build_p_flow(sphere, 3.0), [4.0, 0.0], cfg_lyap, lyap="grad-sq")
    rhs, _ = analysis.lyapunov_rhs_model("T1", k=1.0)
    res.check(analysis.check_lyapunov_inequality(t, rhs).passed,
              "half-power flow satisfies its strict decay inequality")

    pls = pb.pl_sine_problem()
    t = integrate(flows.build_p_flow(pls, 3.0), [6.0], cfg_lyap, lyap="gap-sq")
    rhs, _ = analysis.lyapunov_rhs_model("T2", mu=pls.pl_constant_mu)
    res.check(analysis.check_lyapunov_inequality(t, rhs).passed,
              "half-power flow satisfies the dominance decay inequality")
    return res


def run_scope(scope: str = "all", seed: int = 0) -> list[SuiteResult]:
    if scope == "problems":
        return [verify_problems(seed)]
    if scope == "flows":
        return [verify_flows(seed)]
    if scope == "bounds":
        return [verify_bounds()]
    if scope == "all":
        return [verify_problems(seed), verify_flows(seed), verify_bounds(), verify_dynamics(seed)]
    raise ValueError(f"unknown scope {scope!r}")
