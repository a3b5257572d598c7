"""Model definitions and every right-hand side of the adaptive closed loop.

Plant:      x' = f(x) + Gu (Phi(x) theta + u),   theta' = S(theta)
Control:    u = u0(x) - Phi(xi) theta_hat
Estimate:   theta_hat = H^-1 Psi(xi) x + theta_hat_I,  Psi = (kappa^2 + 1) alpha(xi)^T
Observer:   (xi, nu) embedding system with gain lambda(x, xi)

``theta_hat`` is never integrated: it is recomputed from (x, xi, theta_hat_I)
whenever it is needed. The controller path reads x, xi, nu and theta_hat_I
only; the true theta is simulated for the plant and the diagnostics.
"""
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, NonFiniteState
from .linalg import as_matrix, check_symmetric, cholesky, cho_solve

Vector = np.ndarray
Matrix = np.ndarray

FD_EPS = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass(frozen=True, eq=False)
class PlantModel:
    n: int
    m: int
    d: int
    f: Callable[[Vector], Vector]
    Gu: Matrix
    Phi: Callable[[Vector], Matrix]
    phi_row_lipschitz: Callable[[Vector, Vector], Vector]
    dPhi: Optional[Callable[[Vector, Vector], Matrix]] = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.d < 1:
            raise DimensionMismatch(
                f"n, m, d must all be positive (got {self.n}, {self.m}, {self.d})")
        object.__setattr__(self, "Gu", as_matrix(self.Gu, self.n, self.m))


@dataclass(frozen=True, eq=False)
class DriftModel:
    S: Callable[[Vector], Vector]
    JS: Callable[[Vector], Matrix]
    H: Matrix
    theta_box: Matrix  # d x 2, columns (lower, upper)
    validate: bool = True
    H_inv: Matrix = field(init=False, repr=False)

    def __post_init__(self):
        H = as_matrix(self.H)
        object.__setattr__(self, "H", H)
        box = as_matrix(self.theta_box)
        if box.shape != (H.shape[0], 2):
            raise DimensionMismatch(f"theta_box must be {H.shape[0]} x 2, got {box.shape}")
        if np.any(box[:, 0] > box[:, 1]):
            raise ValueError("theta_box lower bounds exceed upper bounds")
        object.__setattr__(self, "theta_box", box)
        if self.validate:
            L = cholesky(H)
            inv = cho_solve(L, np.eye(H.shape[0]))
        else:
            # Unchecked models exist only so that the assumption verifier can
            # report an indefinite H as a failed check.
            check_symmetric(H)
            inv = np.linalg.pinv(H)
        object.__setattr__(self, "H_inv", 0.5 * (inv + inv.T))

    @property
    def d(self):
        return self.H.shape[0]

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.theta_box[:, 0]) and np.all(theta <= self.theta_box[:, 1]))


@dataclass(frozen=True, eq=False)
class TargetSpec:
    u0: Callable[[Vector], Vector]
    psi: Callable[[Vector], float]
    grad_psi: Callable[[Vector], Vector]
    varphi: Callable[[float], float]
    kappa: Callable[[Vector], float]
    beta_min: float
    dkappa: Optional[Callable[[Vector, Vector], float]] = None
    dist_to_target: Optional[Callable[[Vector], float]] = None

    def __post_init__(self):
        if not self.beta_min > 0:
            raise ValueError("beta_min must be positive")

    def distance(self, x):
        if self.dist_to_target is not None:
            return float(self.dist_to_target(x))
        return abs(float(self.varphi(float(self.psi(x)))))


class Variant(str, enum.Enum):
    THEOREM1 = "theorem1"
    THEOREM2_KAPPA_ZERO = "theorem2"


@dataclass(frozen=True)
class ControllerMode:
    variant: Variant = Variant.THEOREM1
    fd_step_scale: float = 1.0

    @property
    def kappa_zero(self):
        return self.variant is Variant.THEOREM2_KAPPA_ZERO

    @classmethod
    def parse(cls, name, **kw):
        return cls(variant=Variant(name), **kw)


@dataclass(frozen=True, eq=False)
class Models:
    plant: PlantModel
    drift: DriftModel
    target: TargetSpec

    def __post_init__(self):
        if self.drift.d != self.plant.d:
            raise DimensionMismatch(
                f"drift dimension {self.drift.d} != plant parameter dimension {self.plant.d}")


@dataclass
class SimState:
    t: float
    x: Vector
    theta: Vector
    theta_hat_I: Vector
    xi: Vector
    nu: Vector
    eps0: float = 0.0
    eps1: float = 0.0
    eps2: float = 0.0

    def to_vector(self):
        return np.concatenate([
            np.asarray(self.x, float), np.asarray(self.theta, float),
            np.asarray(self.theta_hat_I, float), np.asarray(self.xi, float),
            np.asarray(self.nu, float), [self.eps0, self.eps1, self.eps2],
        ])

    @classmethod
    def from_vector(cls, t, y, n, d):
        y = np.asarray(y, dtype=float)
        if y.shape != (state_size(n, d),):
            raise DimensionMismatch(f"state vector must have length {state_size(n, d)}")
        i = 0
        parts = []
        for k in (n, d, d, n, d):
            parts.append(y[i:i + k].copy())
            i += k
        return cls(float(t), *parts, float(y[i]), float(y[i + 1]), float(y[i + 2]))

    def is_finite(self):
        return bool(np.all(np.isfinite(self.to_vector())) and math.isfinite(self.t))


def state_size(n, d):
    return 2 * n + 3 * d + 3


def state_slices(n, d):
    """Name -> slice into the flat state vector."""
    out = {}
    i = 0
    for name, k in (("x", n), ("theta", d), ("theta_hat_I", d), ("xi", n), ("nu", d)):
        out[name] = slice(i, i + k)
        i += k
    out["eps"] = slice(i, i + 3)
    return out


def _vec(v, k, what):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != k:
        raise DimensionMismatch(f"{what} must have length {k}, got {v.shape[0]}")
    return v


def _phi(plant, x):
    P = np.asarray(plant.Phi(x), dtype=float)
    if P.shape != (plant.m, plant.d):
        P = P.reshape(plant.m, plant.d) if P.size == plant.m * plant.d else P
        if P.shape != (plant.m, plant.d):
            raise DimensionMismatch(f"Phi must be {plant.m} x {plant.d}, got {P.shape}")
    return P


def _kappa(target, mode, xi):
    return 0.0 if mode.kappa_zero else float(target.kappa(xi))


def alpha(plant, xi):
    """Gu Phi(xi), the n x d regressor seen through the input matrix."""
    xi = _vec(xi, plant.n, "xi")
    return plant.Gu @ _phi(plant, xi)


def big_psi(plant, target, mode, xi):
    xi = _vec(xi, plant.n, "xi")
    k = _kappa(target, mode, xi)
    return (k * k + 1.0) * alpha(plant, xi).T


def theta_hat(plant, drift, target, mode, x, xi, theta_hat_I):
    x = _vec(x, plant.n, "x")
    return drift.H_inv @ (big_psi(plant, target, mode, xi) @ x) + _vec(theta_hat_I, plant.d, "theta_hat_I")


def control_u(plant, target, x, xi, theta_hat):
    x = _vec(x, plant.n, "x")
    xi = _vec(xi, plant.n, "xi")
    u0 = _vec(target.u0(x), plant.m, "u0(x)")
    return u0 - _phi(plant, xi) @ _vec(theta_hat, plant.d, "theta_hat")


def f0(plant, target, x):
    """Nominal closed-loop field f(x) + Gu u0(x)."""
    return np.asarray(plant.f(x), float) + plant.Gu @ np.asarray(target.u0(x), float)


def d_big_psi(plant, target, mode, xi, v):
    """Directional derivative of Psi at xi along v (d x n).

    Analytic when the plant supplies dPhi and kappa's derivative is known
    (or kappa is identically zero); central differences otherwise.
    """
    xi = _vec(xi, plant.n, "xi")
    v = _vec(v, plant.n, "v")
    if plant.dPhi is not None and (mode.kappa_zero or target.dkappa is not None):
        dalpha = plant.Gu @ np.asarray(plant.dPhi(xi, v), float).reshape(plant.m, plant.d)
        if mode.kappa_zero:
            return dalpha.T
        k = float(target.kappa(xi))
        dk = float(target.dkappa(xi, v))
        return 2.0 * k * dk * alpha(plant, xi).T + (k * k + 1.0) * dalpha.T
    return _fd_big_psi(plant, target, mode, xi, v)


def _fd_big_psi(plant, target, mode, xi, v):
    vn = float(np.linalg.norm(v))
    if vn == 0.0:
        return np.zeros((plant.d, plant.n))
    h = mode.fd_step_scale * (1.0 + float(np.linalg.norm(xi))) * FD_EPS
    vhat = v / vn
    hi = big_psi(plant, target, mode, xi + h * vhat)
    lo = big_psi(plant, target, mode, xi - h * vhat)
    return (hi - lo) / (2.0 * h) * vn


def observer_gain(plant, target, mode, x, xi):
    """lambda(x, xi) = 1 + sum_i lambda_i^2 (1 + kappa(xi)^2)."""
    lam = np.asarray(plant.phi_row_lipschitz(x, xi), float).reshape(-1)
    if lam.shape[0] != plant.m:
        raise DimensionMismatch(f"phi_row_lipschitz must return {plant.m} moduli")
    k = _kappa(target, mode, xi)
    return 1.0 + float(lam @ lam) * (1.0 + k * k)


def observer_rhs(plant, drift, target, mode, x, xi, nu, u):
    x = _vec(x, plant.n, "x")
    xi = _vec(xi, plant.n, "xi")
    nu = _vec(nu, plant.d, "nu")
    u = _vec(u, plant.m, "u")
    a_x = alpha(plant, x)
    dx = x - xi
    lam = observer_gain(plant, target, mode, x, xi)
    # same summation order as the plant rate so that x == xi is preserved exactly
    xi_rate = np.asarray(plant.f(x), float) + a_x @ nu + plant.Gu @ u + lam * dx
    nu_rate = np.asarray(drift.S(nu), float) + drift.H_inv @ (a_x.T @ dx)
    return xi_rate, nu_rate


def theta_hat_I_rhs(plant, drift, target, mode, x, xi, nu, theta_hat_I, u=None):
    """Rate of the integral part of the finite-form estimate.

    S(theta_hat) - H^-1 DPsi(xi)[f_xi] x - H^-1 Psi(xi) f0(x), with f_xi the
    observer rate. ``u`` defaults to the control computed from the same state.
    """
    x = _vec(x, plant.n, "x")
    xi = _vec(xi, plant.n, "xi")
    th = theta_hat(plant, drift, target, mode, x, xi, theta_hat_I)
    if u is None:
        u = control_u(plant, target, x, xi, th)
    xi_rate, _ = observer_rhs(plant, drift, target, mode, x, xi, nu, u)
    Psi = big_psi(plant, target, mode, xi)
    dPsi = d_big_psi(plant, target, mode, xi, xi_rate)
    return (np.asarray(drift.S(th), float)
            - drift.H_inv @ (dPsi @ x)
            - drift.H_inv @ (Psi @ f0(plant, target, x)))


def virtual_rhs(plant, drift, target, mode, x, xi, theta, theta_hat, eps_input):
    """Idealized estimator rate; needs the true theta so it is a test oracle only."""
    xi = _vec(xi, plant.n, "xi")
    a = alpha(plant, xi)
    k = _kappa(target, mode, xi)
    err = a @ (_vec(theta, plant.d, "theta") - _vec(theta_hat, plant.d, "theta_hat"))
    err = err + _vec(eps_input, plant.n, "eps_input")
    return np.asarray(drift.S(theta_hat), float) + drift.H_inv @ ((k * k + 1.0) * (a.T @ err))


class ClosedLoop:
    """The assembled closed loop as a rate function on flat state vectors.

    Layout: x (n), theta (d), theta_hat_I (d), xi (n), nu (d), eps0, eps1, eps2.
    The eps entries accumulate the squared norms of the three mismatch
    channels, so their rates are nonnegative.
    """

    def __init__(self, models, mode=ControllerMode()):
        self.models = models
        self.mode = mode
        p = models.plant
        self.n, self.d = p.n, p.d
        self.size = state_size(p.n, p.d)
        self.slices = state_slices(p.n, p.d)
        self._probe()

    def _probe(self):
        """Check callable output shapes once so the hot path can skip it."""
        p, dr, tg = self.models.plant, self.models.drift, self.models.target
        z = np.zeros(p.n)
        checks = [
            ("f(x)", p.f(z), (p.n,)), ("Phi(x)", p.Phi(z), (p.m, p.d)),
            ("u0(x)", tg.u0(z), (p.m,)), ("grad_psi(x)", tg.grad_psi(z), (p.n,)),
            ("phi_row_lipschitz", p.phi_row_lipschitz(z, z), (p.m,)),
            ("S(theta)", dr.S(np.zeros(p.d)), (p.d,)),
        ]
        if p.dPhi is not None:
            checks.append(("dPhi", p.dPhi(z, z), (p.m, p.d)))
        for what, val, shape in checks:
            if not isinstance(val, np.ndarray) or val.shape != shape:
                raise DimensionMismatch(
                    f"{what} must return a float array of shape {shape}, got {np.shape(val)}")

    def split(self, y):
        n, d = self.n, self.d
        return (y[:n], y[n:n + d], y[n + d:n + 2 * d], y[n + 2 * d:2 * n + 2 * d],
                y[2 * n + 2 * d:2 * n + 3 * d])

    def theta_hat(self, y):
        x, _, thI, xi, _ = self.split(y)
        return theta_hat(self.models.plant, self.models.drift, self.models.target, self.mode, x, xi, thI)

    def __call__(self, t, y):
        plant, drift, target = self.models.plant, self.models.drift, self.models.target
        kappa_zero = self.mode.kappa_zero
        n, d = self.n, self.d
        x = y[:n]
        theta = y[n:n + d]
        thI = y[n + d:n + 2 * d]
        xi = y[n + 2 * d:2 * n + 2 * d]
        nu = y[2 * n + 2 * d:2 * n + 3 * d]
        Gu, H_inv, S = plant.Gu, drift.H_inv, drift.S

        k = 0.0 if kappa_zero else float(target.kappa(xi))
        w = k * k + 1.0
        Phi_xi = plant.Phi(xi)
        a_xi = Gu @ Phi_xi
        a_x = Gu @ plant.Phi(x)
        Psi = w * a_xi.T
        th = H_inv @ (Psi @ x) + thI

        u0 = target.u0(x)
        Gu_u = Gu @ (u0 - Phi_xi @ th)
        fx = plant.f(x)
        x_rate = fx + a_x @ theta + Gu_u

        dx = x - xi
        lam = plant.phi_row_lipschitz(x, xi)
        gain = 1.0 + float(lam @ lam) * w
        # same summation order as x_rate so that x == xi is preserved exactly
        xi_rate = fx + a_x @ nu + Gu_u + gain * dx
        nu_rate = S(nu) + H_inv @ (a_x.T @ dx)

        if plant.dPhi is not None and (kappa_zero or target.dkappa is not None):
            dalpha_T = (Gu @ plant.dPhi(xi, xi_rate)).T
            if kappa_zero:
                dPsi = dalpha_T
            else:
                dPsi = (2.0 * k * float(target.dkappa(xi, xi_rate))) * a_xi.T + w * dalpha_T
        else:
            dPsi = _fd_big_psi(plant, target, self.mode, xi, xi_rate)
        thI_rate = S(th) - H_inv @ (dPsi @ x + Psi @ (fx + Gu @ u0))

        e = (a_x - a_xi) @ theta
        r = a_xi @ (theta - th)

        out = np.empty(self.size)
        out[:n] = x_rate
        out[n:n + d] = S(theta)
        out[n + d:n + 2 * d] = thI_rate
        out[n + 2 * d:2 * n + 2 * d] = xi_rate
        out[2 * n + 2 * d:2 * n + 3 * d] = nu_rate
        if kappa_zero:
            out[-3] = 0.0
        else:
            g = float(target.grad_psi(x) @ (r + e))
            out[-3] = g * g
        out[-2] = float(e @ e)
        out[-1] = float(r @ r)
        return out


def closed_loop_rhs(models, mode, s):
    """Rate of a SimState under the closed loop, returned as a SimState (t slot = 1)."""
    y = s.to_vector()
    if not (np.all(np.isfinite(y)) and math.isfinite(s.t)):
        raise NonFiniteState("state is not finite", t=s.t)
    loop = ClosedLoop(models, mode)
    rate = loop(s.t, y)
    if not np.all(np.isfinite(rate)):
        raise NonFiniteState("closed-loop rate is not finite", t=s.t)
    return SimState.from_vector(1.0, rate, loop.n, loop.d)


def identity_initialized(models, mode, t0, x0, theta0):
    """State with xi = x, nu = theta and theta_hat_I chosen so theta_hat = theta."""
    plant, drift, target = models.plant, models.drift, models.target
    x0 = _vec(x0, plant.n, "x0")
    theta0 = _vec(theta0, plant.d, "theta0")
    thI = theta0 - drift.H_inv @ (big_psi(plant, target, mode, x0) @ x0)
    return SimState(float(t0), x0.copy(), theta0.copy(), thI, x0.copy(), theta0.copy())


def initial_state(models, mode, t0, x0, theta0, xi0, nu0, theta_hat0):
    """State whose finite-form estimate at t0 equals ``theta_hat0``."""
    plant, drift, target = models.plant, models.drift, models.target
    x0 = _vec(x0, plant.n, "x0")
    xi0 = _vec(xi0, plant.n, "xi0")
    thI = _vec(theta_hat0, plant.d, "theta_hat0") - drift.H_inv @ (big_psi(plant, target, mode, xi0) @ x0)
    return SimState(float(t0), x0.copy(), _vec(theta0, plant.d, "theta0").copy(), thI,
                    xi0.copy(), _vec(nu0, plant.d, "nu0").copy())
