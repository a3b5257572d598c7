"""Fixed-step RK4 and step-doubling adaptive RK4 for the closed loop."""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import (ClosedLoop, ControllerMode, SimState, alpha, control_u,
                       theta_hat as _theta_hat)
from .errors import MaxStepsExceeded, NonFiniteState


@dataclass(frozen=True)
class IntegrationConfig:
    t0: float = 0.0
    t_end: float = 10.0
    h: float = 1e-3
    log_stride: int = 1
    max_steps: int = 10_000_000
    adaptive: bool = False
    tol_rel: float = 1e-8
    tol_abs: float = 1e-10
    h_min: float = 1e-12

    def __post_init__(self):
        if not self.t_end > self.t0:
            raise ValueError("t_end must exceed t0")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.log_stride < 1:
            raise ValueError("log_stride must be >= 1")
        if not (self.tol_rel > 0 and self.tol_abs > 0):
            raise ValueError("tolerances must be positive")

    @property
    def h_init(self):
        return self.h


def _guard(v, t, what):
    if not np.all(np.isfinite(v)):
        raise NonFiniteState(f"non-finite {what} at t={t!r}", t=t)
    return v


def step_rk4(rhs, t, y, h):
    """One classical Runge-Kutta step; every stage is checked for finiteness."""
    k1 = _guard(rhs(t, y), t, "stage 1")
    k2 = _guard(rhs(t + 0.5 * h, y + 0.5 * h * k1), t, "stage 2")
    k3 = _guard(rhs(t + 0.5 * h, y + 0.5 * h * k2), t, "stage 3")
    k4 = _guard(rhs(t + h, y + h * k3), t, "stage 4")
    return _guard(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), t + h, "state")


def solve(rhs, t0, y0, cfg):
    """Integrate a generic ``rhs(t, y)``; returns (times, states) on the log grid.

    On a non-finite value the raised NonFiniteState carries the partial log
    as ``partial = (times, states)``.
    """
    y = np.array(y0, dtype=float)
    _guard(y, t0, "initial state")
    times = [float(t0)]
    states = [y.copy()]
    try:
        if cfg.adaptive:
            _solve_adaptive(rhs, float(t0), y, cfg, times, states)
        else:
            _solve_fixed(rhs, float(t0), y, cfg, times, states)
    except NonFiniteState as exc:
        exc.partial = (np.array(times), np.array(states))
        raise
    return np.array(times), np.array(states)


def _solve_fixed(rhs, t0, y, cfg, times, states):
    span = cfg.t_end - t0
    nsteps = max(1, math.ceil(span / cfg.h - 1e-9))
    if nsteps > cfg.max_steps:
        raise MaxStepsExceeded(f"{nsteps} steps needed, max_steps={cfg.max_steps}")
    t = t0
    for k in range(1, nsteps + 1):
        t_next = cfg.t_end if k == nsteps else t0 + k * cfg.h
        y = step_rk4(rhs, t, y, t_next - t)
        t = t_next
        if k % cfg.log_stride == 0 or k == nsteps:
            times.append(t)
            states.append(y.copy())


def _solve_adaptive(rhs, t0, y, cfg, times, states):
    t = t0
    h = min(cfg.h, cfg.t_end - t0)
    accepted = 0
    attempts = 0
    while t < cfg.t_end:
        attempts += 1
        if attempts > cfg.max_steps:
            raise MaxStepsExceeded(f"exceeded max_steps={cfg.max_steps} at t={t}")
        h = min(h, cfg.t_end - t)
        big = step_rk4(rhs, t, y, h)
        half = step_rk4(rhs, t, y, 0.5 * h)
        small = step_rk4(rhs, t + 0.5 * h, half, 0.5 * h)
        scale = cfg.tol_abs + cfg.tol_rel * np.maximum(np.abs(y), np.abs(small))
        err = float(np.max(np.abs(small - big) / scale)) / 15.0
        if err <= 1.0 or h <= cfg.h_min:
            t = cfg.t_end if cfg.t_end - (t + h) <= 1e-14 * max(1.0, abs(cfg.t_end)) else t + h
            y = small
            accepted += 1
            if accepted % cfg.log_stride == 0 or t >= cfg.t_end:
                times.append(t)
                states.append(y.copy())
        factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        h = max(h * factor, cfg.h_min)


@dataclass
class Trajectory:
    """Logged closed-loop run plus the derived signals diagnostics consume.

    ``states`` is a (K, size) array in the ClosedLoop layout. ``derived`` maps
    signal names to per-sample arrays.
    """
    times: np.ndarray
    states: np.ndarray
    derived: dict
    n: int
    m: int
    d: int
    failure: Optional[dict] = None

    def __len__(self):
        return len(self.times)

    def column(self, name):
        n, d = self.n, self.d
        sl = {"x": slice(0, n), "theta": slice(n, n + d), "theta_hat_I": slice(n + d, n + 2 * d),
              "xi": slice(n + 2 * d, 2 * n + 2 * d), "nu": slice(2 * n + 2 * d, 2 * n + 3 * d),
              "eps0": -3, "eps1": -2, "eps2": -1}[name]
        return self.states[:, sl]

    def state(self, k):
        return SimState.from_vector(self.times[k], self.states[k], self.n, self.d)


def derive_signals(models, mode, x, theta, theta_hat, xi):
    """Per-sample derived records from (x, theta, theta_hat, xi) arrays.

    Depends only on values that also appear in the trajectory CSV, so a
    trajectory reloaded from disk reproduces them exactly.
    """
    plant, target = models.plant, models.target
    K = x.shape[0]
    out = {
        "theta_hat": np.asarray(theta_hat, float),
        "u": np.empty((K, plant.m)),
        "e": np.empty((K, plant.n)),
        "alpha_err": np.empty((K, plant.n)),
        "grad_psi": np.empty((K, plant.n)),
        "psi": np.empty(K),
        "varphi_psi": np.empty(K),
        "kappa": np.empty(K),
        "alpha_xi": np.empty((K, plant.n, plant.d)),
        "dist": np.empty(K),
    }
    for k in range(K):
        a_xi = alpha(plant, xi[k])
        a_x = alpha(plant, x[k])
        out["alpha_xi"][k] = a_xi
        out["u"][k] = control_u(plant, target, x[k], xi[k], theta_hat[k])
        out["e"][k] = (a_x - a_xi) @ theta[k]
        out["alpha_err"][k] = a_xi @ (theta[k] - theta_hat[k])
        out["grad_psi"][k] = np.asarray(target.grad_psi(x[k]), float).reshape(-1)
        p = float(target.psi(x[k]))
        out["psi"][k] = p
        out["varphi_psi"][k] = float(target.varphi(p))
        out["kappa"][k] = 0.0 if mode.kappa_zero else float(target.kappa(xi[k]))
        out["dist"][k] = target.distance(x[k])
    return out


def build_trajectory(models, mode, times, states, theta_hat=None, failure=None):
    plant = models.plant
    n, d = plant.n, plant.d
    x = states[:, :n]
    theta = states[:, n:n + d]
    xi = states[:, n + 2 * d:2 * n + 2 * d]
    if theta_hat is None:
        thI = states[:, n + d:n + 2 * d]
        theta_hat = np.array([
            _theta_hat(plant, models.drift, models.target, mode, x[k], xi[k], thI[k])
            for k in range(len(times))]).reshape(len(times), d)
    derived = derive_signals(models, mode, x, theta, theta_hat, xi)
    return Trajectory(np.asarray(times, float), np.asarray(states, float), derived,
                      n, plant.m, d, failure)


def integrate(models, mode, s0, cfg):
    """Integrate the closed loop from ``s0`` and log a Trajectory.

    Raises NonFiniteState (time of first failure in ``.t``, partial
    trajectory in ``.partial``) or MaxStepsExceeded.
    """
    if mode is None:
        mode = ControllerMode()
    if not models.drift.contains(s0.theta):
        raise ValueError("theta(t0) lies outside theta_box")
    if abs(s0.t - cfg.t0) > 0:
        s0 = SimState(cfg.t0, s0.x, s0.theta, s0.theta_hat_I, s0.xi, s0.nu, s0.eps0, s0.eps1, s0.eps2)
    loop = ClosedLoop(models, mode)
    try:
        times, states = solve(loop, cfg.t0, s0.to_vector(), cfg)
    except NonFiniteState as exc:
        times, states = exc.partial
        failure = {"kind": "NonFiniteState", "t": exc.t, "message": str(exc)}
        exc.partial = build_trajectory(models, mode, times, states, failure=failure)
        raise
    return build_trajectory(models, mode, times, states)
