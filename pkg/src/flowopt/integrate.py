"""ODE integration of flow fields with gradient-norm stopping events.

Stopping is event-based on the driving gradient norm rather than on state
distance, because the optimizer is unknown in general.  The first step on
which the norm crosses the stop threshold is located by linear interpolation
in time, which removes the O(dt) bias a raw step-end timestamp would put on
settling-time measurements.  The final record therefore carries the
interpolated crossing time together with the first post-crossing state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .flows import FlowField, SingularHessian
from .numerics import as_vector

METHODS = ("fixed-euler", "fixed-rk4", "adaptive-rk45")
LYAPUNOV_KINDS = ("grad-sq", "gap-sq", "none")

STEP_FLOOR = 1e-12


class NonFiniteState(Exception):
    """A state entry became NaN/Inf, typically from too large a step on the
    superlinear flow term.  Carries the partial trajectory."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "adaptive-rk45"
    dt: float = 1e-3
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    t_max: float = 100.0
    stop_grad_norm: float = 1e-8
    record_stride: int = 1
    max_steps: int = 20_000_000  # hard guard against stalled adaptive runs

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.dt <= 0 or self.t_max <= 0 or self.dt >= self.t_max:
            raise ValueError("need 0 < dt < t_max")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.stop_grad_norm <= 0:
            raise ValueError("stop_grad_norm must be positive")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")


@dataclass(frozen=True)
class Trajectory:
    """Recorded integration run: states plus derived traces.

    objective_values and lyapunov_values hold NaN where the flow offers no
    objective oracle or no Lyapunov kind was requested.
    """

    times: np.ndarray
    states: np.ndarray
    grad_norms: np.ndarray
    objective_values: np.ndarray
    lyapunov_values: np.ndarray
    stop_reason: str
    settle_time: Optional[float]
    lyapunov_kind: str = "none"

    def __post_init__(self):
        n = self.times.shape[0]
        if not (self.states.shape[0] == self.grad_norms.shape[0]
                == self.objective_values.shape[0] == self.lyapunov_values.shape[0] == n):
            raise ValueError("trace arrays must have equal length")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path) -> None:
        """Write `t,x_0..x_{n-1},grad_norm,f_value,lyapunov` rows."""
        dim = self.states.shape[1]
        header = ",".join(["t"] + [f"x_{i}" for i in range(dim)] + ["grad_norm", "f_value", "lyapunov"])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for i in range(self.times.shape[0]):
                cells = [repr(float(self.times[i]))]
                cells += [repr(float(v)) for v in self.states[i]]
                cells += [repr(float(self.grad_norms[i])),
                          repr(float(self.objective_values[i])),
                          repr(float(self.lyapunov_values[i]))]
                fh.write(",".join(cells) + "\n")


class _Recorder:
    def __init__(self, field: FlowField, lyap: str):
        self.field = field
        self.lyap = lyap
        self.times: list[float] = []
        self.states: list[np.ndarray] = []
        self.grad_norms: list[float] = []
        self.objectives: list[float] = []
        self.lyapunovs: list[float] = []

    def add(self, t: float, x: np.ndarray, grad_norm: float) -> None:
        f_val = float(self.field.objective(x)) if self.field.objective is not None else float("nan")
        if self.lyap == "grad-sq":
            v = 0.5 * grad_norm * grad_norm
        elif self.lyap == "gap-sq":
            v = 0.5 * (f_val - self.field.optimum) ** 2
        else:
            v = float("nan")
        self.times.append(t)
        self.states.append(x.copy())
        self.grad_norms.append(grad_norm)
        self.objectives.append(f_val)
        self.lyapunovs.append(v)

    def build(self, stop_reason: str, settle_time: Optional[float]) -> Trajectory:
        return Trajectory(
            times=np.asarray(self.times), states=np.asarray(self.states),
            grad_norms=np.asarray(self.grad_norms),
            objective_values=np.asarray(self.objectives),
            lyapunov_values=np.asarray(self.lyapunovs),
            stop_reason=stop_reason, settle_time=settle_time,
            lyapunov_kind=self.lyap,
        )


def _rk4_step(v: Callable, x: np.ndarray, h: float) -> np.ndarray:
    k1 = v(x)
    k2 = v(x + 0.5 * h * k1)
    k3 = v(x + 0.5 * h * k2)
    k4 = v(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rkf45_step(v: Callable, x: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """One Fehlberg 4(5) step; returns the 5th-order state and the local
    error estimate (difference of the embedded solutions)."""
    k1 = v(x)
    k2 = v(x + h * 0.25 * k1)
    k3 = v(x + h * (3.0 / 32.0 * k1 + 9.0 / 32.0 * k2))
    k4 = v(x + h * (1932.0 / 2197.0 * k1 - 7200.0 / 2197.0 * k2 + 7296.0 / 2197.0 * k3))
    k5 = v(x + h * (439.0 / 216.0 * k1 - 8.0 * k2 + 3680.0 / 513.0 * k3 - 845.0 / 4104.0 * k4))
    k6 = v(x + h * (-8.0 / 27.0 * k1 + 2.0 * k2 - 3544.0 / 2565.0 * k3
                    + 1859.0 / 4104.0 * k4 - 11.0 / 40.0 * k5))
    x5 = x + h * (16.0 / 135.0 * k1 + 6656.0 / 12825.0 * k3 + 28561.0 / 56430.0 * k4
                  - 9.0 / 50.0 * k5 + 2.0 / 55.0 * k6)
    x4 = x + h * (25.0 / 216.0 * k1 + 1408.0 / 2565.0 * k3 + 2197.0 / 4104.0 * k4 - 0.2 * k5)
    return x5, x5 - x4


def _initial_step(x: np.ndarray, v0: np.ndarray, cfg: IntegratorConfig) -> float:
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(x)
    d0 = float(np.sqrt(np.mean((x / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((v0 / scale) ** 2)))
    if d0 > 1e-5 and d1 > 1e-5:
        h = 0.01 * d0 / d1
    else:
        h = 1e-6
    return float(min(max(h, STEP_FLOOR), 0.1 * cfg.t_max))


def integrate(field: FlowField, x0, cfg: IntegratorConfig = IntegratorConfig(),
              lyap: str = "none") -> Trajectory:
    """Step the flow until a gradient-norm event, the horizon, or a field error.

    Raises SingularHessian / NonFiniteState with the partial trajectory
    attached on its `trajectory` attribute.
    """
    if lyap not in LYAPUNOV_KINDS:
        raise ValueError(f"unknown Lyapunov kind {lyap!r}; expected one of {LYAPUNOV_KINDS}")
    if lyap == "gap-sq" and (field.objective is None or field.optimum is None):
        raise ValueError("gap-sq Lyapunov trace needs an objective oracle with a known optimum")
    fp = field.params.get("fp")
    if fp is not None and cfg.stop_grad_norm <= fp.eps_sing:
        raise ValueError("stop_grad_norm must exceed the flow regularization ball")

    x = as_vector(x0, dim=field.dim)
    rec = _Recorder(field, lyap)
    g_prev = float(np.linalg.norm(field.gradient(x)))
    rec.add(0.0, x, g_prev)
    if g_prev <= cfg.stop_grad_norm:
        return rec.build("converged", 0.0)

    t = 0.0
    last_recorded_t = 0.0
    steps = 0
    adaptive = cfg.method == "adaptive-rk45"
    try:
        h = _initial_step(x, field.velocity(x), cfg) if adaptive else cfg.dt
        while t < cfg.t_max - 1e-15 and steps < cfg.max_steps:
            h = min(h, cfg.t_max - t)
            if adaptive:
                while True:
                    x_new, err = _rkf45_step(field.velocity, x, h)
                    with np.errstate(invalid="ignore"):
                        tol = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
                        err_norm = float(np.sqrt(np.mean((err / tol) ** 2)))
                    if not np.isfinite(err_norm):
                        err_norm = np.inf
                    if err_norm <= 1.0 or h <= STEP_FLOOR:
                        break
                    h = max(STEP_FLOOR, h * max(0.2, 0.9 * err_norm ** -0.2))
                h_taken = h
                growth = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
                h = max(STEP_FLOOR, h * growth)
            elif cfg.method == "fixed-rk4":
                x_new = _rk4_step(field.velocity, x, h)
                h_taken = h
            else:
                x_new = x + h * field.velocity(x)
                h_taken = h
            t_new = t + h_taken
            steps += 1

            if not np.all(np.isfinite(x_new)):
                raise NonFiniteState(f"state became non-finite at t={t_new:.6g} (step {steps})",
                                     trajectory=rec.build("non-finite-state", None))
            g_new = float(np.linalg.norm(field.gradient(x_new)))
            if not np.isfinite(g_new):
                raise NonFiniteState(f"gradient became non-finite at t={t_new:.6g}",
                                     trajectory=rec.build("non-finite-state", None))

            if g_new <= cfg.stop_grad_norm:
                frac = (g_prev - cfg.stop_grad_norm) / (g_prev - g_new)
                t_cross = t + h_taken * min(max(frac, 0.0), 1.0)
                if t_cross <= last_recorded_t:
                    t_cross = np.nextafter(last_recorded_t, np.inf)
                rec.add(t_cross, x_new, g_new)
                return rec.build("converged", t_cross)

            if steps % cfg.record_stride == 0 and t_new > last_recorded_t:
                rec.add(t_new, x_new, g_new)
                last_recorded_t = t_new
            x, t, g_prev = x_new, t_new, g_new
    except SingularHessian as exc:
        if t > last_recorded_t:
            rec.add(t, x, g_prev)
        exc.trajectory = rec.build("singular-hessian", None)
        raise

    if t > last_recorded_t:
        rec.add(t, x, g_prev)
    return rec.build("horizon", None)


@dataclass(frozen=True)
class SweepEntry:
    x0: np.ndarray
    settle_time: Optional[float]
    stop_reason: str


def settle_time_sweep(field_builder: Callable[[], FlowField], x0_set,
                      cfg: IntegratorConfig = IntegratorConfig(),
                      lyap: str = "none") -> list[SweepEntry]:
    """Integrate one flow from many starts; capture per-entry failures.

    field_builder is called once; a single field is shared read-only across
    the runs.  A failed run contributes its error kind as the stop reason
    instead of aborting the sweep.
    """
    field = field_builder()
    out: list[SweepEntry] = []
    for x0 in x0_set:
        try:
            traj = integrate(field, x0, cfg, lyap=lyap)
            out.append(SweepEntry(as_vector(x0), traj.settle_time, traj.stop_reason))
        except SingularHessian:
            out.append(SweepEntry(as_vector(x0), None, "singular-hessian"))
        except NonFiniteState:
            out.append(SweepEntry(as_vector(x0), None, "non-finite-state"))
    return out
