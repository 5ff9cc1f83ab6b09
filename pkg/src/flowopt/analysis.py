"""Settling-time bound calculators and Lyapunov-inequality verification.

Every calculator returns a SettlingBound tagging which convergence theorem
produced the value and which inputs went in.  Two of the published formulas
(tags T2 and TSP) disagree with the generic settling-time machinery they
cite; those calculators can produce both the formula exactly as printed and
the re-derived variant, and verification uses the larger of the two so a
transcription quirk cannot fail a correct implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .flows import FlowParams
from .integrate import Trajectory


class InsufficientRecords(Exception):
    """Too few trajectory records to estimate a time derivative."""


@dataclass(frozen=True)
class SettlingBound:
    """A theoretical convergence-time value with its provenance.

    Fixed-time tags (T3-*, TNM, TSP, generic-fixed, Tnu, Tineq) take no
    initial-condition data, so their values are invariant across starts.
    """

    theorem: str
    value: float
    inputs: dict = field(default_factory=dict)
    as_printed: bool = True

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise ValueError(f"bound value must be finite and nonnegative, got {self.value}")

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "value": self.value,
            "as_printed": self.as_printed,
            "inputs": {k: (float(v) if np.isscalar(v) else v) for k, v in self.inputs.items()},
        }


@dataclass(frozen=True)
class LyapunovCheckReport:
    n_samples: int
    max_violation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "max_violation": self.max_violation,
            "tolerance": self.tolerance,
            "pass": self.passed,
        }


def _require_positive(**kwargs):
    for name, v in kwargs.items():
        if v <= 0:
            raise ValueError(f"{name} must be positive, got {v}")


def _require_nonnegative(**kwargs):
    for name, v in kwargs.items():
        if v < 0:
            raise ValueError(f"{name} must be nonnegative, got {v}")


def p_flow_beta1(pexp: float) -> float:
    """Lyapunov exponent of the gradient-norm function under the p-rescaled flow."""
    if pexp <= 2:
        raise ValueError("pexp must exceed 2")
    return pexp / (2.0 * (pexp - 1.0))


def p_flow_beta2(pexp: float) -> float:
    """Lyapunov exponent of the optimality-gap function under the p-rescaled flow."""
    if pexp <= 2:
        raise ValueError("pexp must exceed 2")
    return (3.0 * pexp - 2.0) / (4.0 * (pexp - 1.0))


def bound_T1(k: float, grad0_norm: float) -> SettlingBound:
    """Finite settling bound 2*||grad f(x0)||^(1/2) / k for the half-power
    rescaled flow under a strong-convexity certificate k."""
    _require_positive(k=k)
    _require_nonnegative(grad0_norm=grad0_norm)
    return SettlingBound("T1", 2.0 * np.sqrt(grad0_norm) / k,
                         inputs={"k": k, "grad0_norm": grad0_norm})


def bound_T2(mu: float, gap0: float, as_printed: bool = True) -> SettlingBound:
    """Finite settling bound for the half-power flow under gradient dominance.

    as_printed: 8*gap0^(1/8) / (2*mu)^(3/4), the published constant.
    re-derived: the generic finite-time formula applied to V0 = gap0^2/2 and
    Vdot <= -(2*mu)^(3/4) V^(7/8), i.e. 8*(gap0^2/2)^(1/8) / (2*mu)^(3/4).
    The two differ in the gap exponent; use the larger for safe checks.
    """
    _require_positive(mu=mu)
    _require_nonnegative(gap0=gap0)
    c = (2.0 * mu) ** 0.75
    if as_printed:
        value = 8.0 * gap0 ** 0.125 / c
    else:
        value = generic_finite_bound(c, 7.0 / 8.0, 0.5 * gap0 ** 2).value
    return SettlingBound("T2", value, inputs={"mu": mu, "gap0": gap0}, as_printed=as_printed)


def bound_Tp_finite(which: str, pexp: float, k_or_mu: float, initial: float,
                    k2: Optional[float] = None) -> SettlingBound:
    """Finite settling bound for the general p-rescaled flow (pexp > 2).

    which='strict': initial is the starting gradient norm, k_or_mu is the
    strong-convexity constant, and the value is
    initial^(2-2*beta1) / (2*k*(1-beta1)).

    which='pl': initial is the starting optimality gap, k_or_mu is the
    gradient-dominance constant, and the decay constant k2 of the gap
    function is never published explicitly; the default follows the same
    pattern as the half-power case, k2 = (2*mu)^(2*beta2-1), and can be
    overridden.
    """
    _require_positive(k_or_mu=k_or_mu)
    _require_nonnegative(initial=initial)
    if which == "strict":
        b1 = p_flow_beta1(pexp)
        value = initial ** (2.0 - 2.0 * b1) / (2.0 * k_or_mu * (1.0 - b1))
        inputs = {"pexp": pexp, "k": k_or_mu, "grad0_norm": initial, "beta1": b1}
    elif which == "pl":
        b2 = p_flow_beta2(pexp)
        if k2 is None:
            k2 = (2.0 * k_or_mu) ** (2.0 * b2 - 1.0)
        value = initial ** (2.0 - 2.0 * b2) / (2.0 ** (1.0 - b2) * k2 * (1.0 - b2))
        inputs = {"pexp": pexp, "mu": k_or_mu, "gap0": initial, "beta2": b2, "k2": k2}
    else:
        raise ValueError(f"which must be 'strict' or 'pl', got {which!r}")
    return SettlingBound("Tp-finite", value, inputs=inputs)


def bound_T3(fp: FlowParams, which: str, k_or_mu: float) -> SettlingBound:
    """Fixed settling bound of the two-term gradient flow; no initial data.

    which='strict' (Hessian >= k*I):
        2^(1-a1/2)/(c1*k*(2-a1)) + 2^(1-a2/2)/(c2*k*(a2-2)).
    which='pl' (gradient dominance with constant mu):
        4/(c1*(2mu)^(a1/2)*(2-a1)) + 4/(c2*(2mu)^(a2/2)*(a2-2)).
    """
    _require_positive(k_or_mu=k_or_mu)
    a1, a2 = fp.alpha1, fp.alpha2
    if which == "strict":
        k = k_or_mu
        value = (2.0 ** (1.0 - a1 / 2.0) / (fp.c1 * k * (2.0 - a1))
                 + 2.0 ** (1.0 - a2 / 2.0) / (fp.c2 * k * (a2 - 2.0)))
        tag = "T3-strict"
        inputs = {"c1": fp.c1, "c2": fp.c2, "alpha1": a1, "alpha2": a2, "k": k}
    elif which == "pl":
        mu = k_or_mu
        value = (4.0 / (fp.c1 * (2.0 * mu) ** (a1 / 2.0) * (2.0 - a1))
                 + 4.0 / (fp.c2 * (2.0 * mu) ** (a2 / 2.0) * (a2 - 2.0)))
        tag = "T3-pl"
        inputs = {"c1": fp.c1, "c2": fp.c2, "alpha1": a1, "alpha2": a2, "mu": mu}
    else:
        raise ValueError(f"which must be 'strict' or 'pl', got {which!r}")
    return SettlingBound(tag, value, inputs=inputs)


def bound_TNM(fp: FlowParams) -> SettlingBound:
    """Fixed settling bound of the Newton-preconditioned two-term flow.

    2^(1-a1/2)/(c1*(2-a1)) + 2^(1-a2/2)/(c2*(a2-2)): gains and exponents
    only, no problem data at all.
    """
    a1, a2 = fp.alpha1, fp.alpha2
    value = (2.0 ** (1.0 - a1 / 2.0) / (fp.c1 * (2.0 - a1))
             + 2.0 ** (1.0 - a2 / 2.0) / (fp.c2 * (a2 - 2.0)))
    return SettlingBound("TNM", value,
                         inputs={"c1": fp.c1, "c2": fp.c2, "alpha1": a1, "alpha2": a2})


def bound_TSP(fp: FlowParams) -> SettlingBound:
    """Fixed settling bound of the saddle Newton flow.

    The published second term reuses the 2^(1-a1/2) numerator where the
    Newton-flow pattern has 2^(1-a2/2); both variants are computed, both are
    recorded in the inputs, and the larger one is the bound value.
    """
    a1, a2 = fp.alpha1, fp.alpha2
    first = 2.0 ** (1.0 - a1 / 2.0) / (fp.c1 * (2.0 - a1))
    printed = first + 2.0 ** (1.0 - a1 / 2.0) / (fp.c2 * (a2 - 2.0))
    pattern = first + 2.0 ** (1.0 - a2 / 2.0) / (fp.c2 * (a2 - 2.0))
    return SettlingBound(
        "TSP", max(printed, pattern),
        inputs={"c1": fp.c1, "c2": fp.c2, "alpha1": a1, "alpha2": a2,
                "printed": printed, "newton_pattern": pattern},
        as_printed=printed >= pattern,
    )


def bound_Tineq(t_nu: SettlingBound, t_x: SettlingBound) -> SettlingBound:
    """Two-phase constrained-solve bound: dual phase plus primal phase."""
    return SettlingBound("Tineq", t_nu.value + t_x.value,
                         inputs={"t_nu": t_nu.value, "t_x": t_x.value})


def generic_fixed_bound(a_ft: float, b_ft: float, alpha_ft: float, beta_ft: float) -> SettlingBound:
    """Settling time of Vdot <= -a*V^alpha - b*V^beta with alpha < 1 < beta:
    1/(a*(1-alpha)) + 1/(b*(beta-1))."""
    _require_positive(a_ft=a_ft, b_ft=b_ft)
    if not (alpha_ft < 1.0 < beta_ft):
        raise ValueError("need alpha_ft < 1 < beta_ft")
    value = 1.0 / (a_ft * (1.0 - alpha_ft)) + 1.0 / (b_ft * (beta_ft - 1.0))
    return SettlingBound("generic-fixed", value,
                         inputs={"a_ft": a_ft, "b_ft": b_ft, "alpha_ft": alpha_ft, "beta_ft": beta_ft})


def generic_finite_bound(c: float, alpha: float, V0: float) -> SettlingBound:
    """Settling time of Vdot <= -c*V^alpha with alpha in (0,1):
    V0^(1-alpha) / (c*(1-alpha))."""
    _require_positive(c=c)
    _require_nonnegative(V0=V0)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    value = V0 ** (1.0 - alpha) / (c * (1.0 - alpha))
    return SettlingBound("generic-finite", value, inputs={"c": c, "alpha": alpha, "V0": V0})


def check_lyapunov_inequality(traj: Trajectory, rhs: Callable[[float], float],
                              tol: Optional[float] = None) -> LyapunovCheckReport:
    """Verify Vdot <= rhs(V) along a recorded trajectory.

    Vdot is estimated at interior records by central differences of the
    recorded Lyapunov trace, keeping the check independent of any model of
    the dynamics.  The default tolerance 1e-3 * max(1, |Vdot| scale)
    absorbs the differencing error.
    """
    V = traj.lyapunov_values
    t = traj.times
    if V.shape[0] < 3 or not np.all(np.isfinite(V)):
        raise InsufficientRecords("need at least 3 records with finite Lyapunov values")
    vdot = (V[2:] - V[:-2]) / (t[2:] - t[:-2])
    required = np.array([rhs(v) for v in V[1:-1]])
    violations = vdot - required
    scale = float(np.max(np.abs(vdot))) if vdot.size else 0.0
    if tol is None:
        tol = 1e-3 * max(1.0, scale)
    return LyapunovCheckReport(n_samples=int(vdot.size),
                               max_violation=float(np.max(violations)),
                               tolerance=float(tol))


def lyapunov_rhs_model(tag: str, fp: Optional[FlowParams] = None, pexp: float = 3.0,
                       k: Optional[float] = None, mu: Optional[float] = None,
                       ) -> tuple[Callable[[float], float], str]:
    """Decay-rate model Vdot <= rhs(V) implied by a theorem tag.

    Returns (rhs, lyapunov_kind) where the kind names the V the model
    applies to: 'grad-sq' for V = ||g||^2/2, 'gap-sq' for V = (f-f*)^2/2.
    """
    if tag == "T1" or (tag == "Tp-finite" and mu is None):
        if k is None:
            raise ValueError(f"{tag} model needs a strong-convexity constant")
        b1 = p_flow_beta1(pexp)
        rate = k * 2.0 ** b1
        return (lambda V: -rate * V ** b1), "grad-sq"
    if tag == "T2" or tag == "Tp-finite":
        if mu is None:
            raise ValueError(f"{tag} model needs a gradient-dominance constant")
        b2 = p_flow_beta2(pexp)
        rate = (2.0 * mu) ** (2.0 * b2 - 1.0)
        return (lambda V: -rate * V ** b2), "gap-sq"
    if tag == "T3-strict":
        if fp is None or k is None:
            raise ValueError("T3-strict model needs flow params and k")
        a1, a2 = fp.alpha1, fp.alpha2
        r1 = fp.c1 * k * 2.0 ** (a1 / 2.0)
        r2 = fp.c2 * k * 2.0 ** (a2 / 2.0)
        return (lambda V: -r1 * V ** (a1 / 2.0) - r2 * V ** (a2 / 2.0)), "grad-sq"
    if tag in ("T3-pl", "Tnu"):
        if fp is None or mu is None:
            raise ValueError(f"{tag} model needs flow params and mu")
        a1, a2 = fp.alpha1, fp.alpha2
        r1 = fp.c1 * (2.0 * mu) ** (a1 / 2.0)
        r2 = fp.c2 * (2.0 * mu) ** (a2 / 2.0)
        return (lambda V: -r1 * V ** ((2.0 + a1) / 4.0) - r2 * V ** ((2.0 + a2) / 4.0)), "gap-sq"
    if tag in ("TNM", "TSP"):
        if fp is None:
            raise ValueError(f"{tag} model needs flow params")
        a1, a2 = fp.alpha1, fp.alpha2
        r1 = fp.c1 * 2.0 ** (a1 / 2.0)
        r2 = fp.c2 * 2.0 ** (a2 / 2.0)
        return (lambda V: -r1 * V ** (a1 / 2.0) - r2 * V ** (a2 / 2.0)), "grad-sq"
    raise ValueError(f"no Lyapunov model for tag {tag!r}")
