"""Built-in benchmark scenarios and construction of scenarios from config."""
import math
from dataclasses import dataclass, replace

import numpy as np

from .config import validate
from .diagnostics import DiagnosticsConfig, SampleRegion
from .dynamics import (ControllerMode, DriftModel, Models, PlantModel, TargetSpec, Variant, initial_state)
from .errors import DimensionMismatch, NotPositiveDefinite, NotSymmetric, SchemaError, UnknownScenario
from .integrate import IntegrationConfig
from .polynomial import Polynomial, poly_matrix, poly_vector

BUILTINS = ("scalar-equilibrium", "hopf-circle", "hopf-circle-drift", "hopf-circle-kappa-zero")


@dataclass(frozen=True, eq=False)
class InitialConditions:
    x0: np.ndarray
    theta0: np.ndarray
    theta_hat0: np.ndarray
    xi0: np.ndarray
    nu0: np.ndarray


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    models: Models
    mode: ControllerMode
    init: InitialConditions
    integration: IntegrationConfig
    diagnostics: DiagnosticsConfig
    asserted_assumptions: tuple = ()

    def __post_init__(self):
        p = self.models.plant
        for what, v, k in (("x0", self.init.x0, p.n), ("xi0", self.init.xi0, p.n),
                           ("theta0", self.init.theta0, p.d), ("nu0", self.init.nu0, p.d),
                           ("theta_hat0", self.init.theta_hat0, p.d)):
            if np.asarray(v).shape != (k,):
                raise DimensionMismatch(f"{what} must have length {k}")
        if not self.models.drift.contains(self.init.theta0):
            raise ValueError("theta0 lies outside theta_box")

    @property
    def s0(self):
        i = self.init
        return initial_state(self.models, self.mode, self.integration.t0,
                             i.x0, i.theta0, i.xi0, i.nu0, i.theta_hat0)

    def with_overrides(self, **kw):
        """Copy with fields of ``init``, ``integration`` or ``diagnostics`` replaced."""
        init_kw = {k: np.asarray(kw.pop(k), float) for k in list(kw) if k in InitialConditions.__dataclass_fields__}
        integ_kw = {k: kw.pop(k) for k in list(kw) if k in IntegrationConfig.__dataclass_fields__}
        diag_kw = {k: kw.pop(k) for k in list(kw) if k in DiagnosticsConfig.__dataclass_fields__}
        mode = kw.pop("mode", self.mode)
        if isinstance(mode, str):
            mode = ControllerMode(Variant(mode), self.mode.fd_step_scale)
        if kw:
            raise TypeError(f"unknown overrides: {sorted(kw)}")
        return replace(self, mode=mode, init=replace(self.init, **init_kw),
                       integration=replace(self.integration, **integ_kw),
                       diagnostics=replace(self.diagnostics, **diag_kw))

    def identity_initialized(self):
        """Copy started on the embedding's fixed point: xi = x, nu = theta = theta_hat."""
        i = self.init
        return self.with_overrides(xi0=i.x0, nu0=i.theta0, theta_hat0=i.theta0)


# scalar benchmark: x' = x + theta x + u, u0 = -2x, f0 = -x

def _scalar_models():
    plant = PlantModel(
        n=1, m=1, d=1,
        f=lambda x: np.array([x[0]]),
        Gu=[[1.0]],
        Phi=lambda x: np.array([[x[0]]]),
        phi_row_lipschitz=lambda x, xi: np.array([1.0]),
        dPhi=lambda x, v: np.array([[v[0]]]),
    )
    drift = DriftModel(
        S=lambda th: np.zeros(1),
        JS=lambda th: np.zeros((1, 1)),
        H=[[1.0]],
        theta_box=[[-10.0, 10.0]],
    )
    target = TargetSpec(
        u0=lambda x: np.array([-2.0 * x[0]]),
        psi=lambda x: float(x[0]),
        grad_psi=lambda x: np.array([1.0]),
        varphi=lambda s: s,
        kappa=lambda x: 1.0,
        dkappa=lambda x, v: 0.0,
        beta_min=0.5,
        dist_to_target=lambda x: abs(float(x[0])),
    )
    return Models(plant, drift, target)


# Hopf benchmark: nominal field rotates the plane and attracts the unit circle

def _hopf_psi(x):
    return float(x[0] * x[0] + x[1] * x[1] - 1.0)


def _hopf_kappa(x):
    return 2.0 * math.hypot(x[0], x[1]) + 1.0


def _hopf_dkappa(x, v):
    r = math.hypot(x[0], x[1])
    if r == 0.0:
        return 0.0
    return 2.0 * float(x[0] * v[0] + x[1] * v[1]) / r


def _hopf_models(omega=0.0):
    plant = PlantModel(
        n=2, m=1, d=2,
        f=lambda x: np.array([-x[1] - _hopf_psi(x) * x[0], x[0]]),
        Gu=[[0.0], [1.0]],
        Phi=lambda x: np.array([[x[0], x[1]]]),
        phi_row_lipschitz=lambda x, xi: np.array([1.0]),
        dPhi=lambda x, v: np.array([[v[0], v[1]]]),
    )
    S_mat = np.array([[0.0, omega], [-omega, 0.0]])
    drift = DriftModel(
        S=lambda th: S_mat @ th,
        JS=lambda th: S_mat,
        H=np.eye(2),
        theta_box=[[-2.0, 2.0], [-2.0, 2.0]],
    )
    target = TargetSpec(
        u0=lambda x: np.array([-_hopf_psi(x) * x[1]]),
        psi=_hopf_psi,
        grad_psi=lambda x: np.array([2.0 * x[0], 2.0 * x[1]]),
        varphi=lambda s: s,
        kappa=_hopf_kappa,
        dkappa=_hopf_dkappa,
        # beta(x) = 2|x|^2 >= 0.08 on 0.2 <= |x| <= 3; halved for margin
        beta_min=0.04,
        dist_to_target=lambda x: abs(_hopf_psi(x)),
    )
    return Models(plant, drift, target)


HOPF_REGION = SampleRegion(lower=(-3.0, -3.0), upper=(3.0, 3.0), r_min=0.2, r_max=3.0)


def builtin(name):
    if name == "scalar-equilibrium":
        return Scenario(
            name=name,
            models=_scalar_models(),
            mode=ControllerMode(),
            init=InitialConditions(x0=np.array([1.0]), theta0=np.array([2.0]),
                                   theta_hat0=np.array([0.0]), xi0=np.array([0.0]),
                                   nu0=np.array([0.0])),
            integration=IntegrationConfig(t0=0.0, t_end=10.0, h=1e-3, log_stride=10),
            diagnostics=DiagnosticsConfig(
                sample_region=SampleRegion(lower=(-3.0,), upper=(3.0,)),
                pe_window_T=2.0,
                expect_pe=False,
            ),
            asserted_assumptions=("A1", "A6"),
        )
    if name in ("hopf-circle", "hopf-circle-drift", "hopf-circle-kappa-zero"):
        omega = 0.5 if name == "hopf-circle-drift" else 0.0
        variant = Variant.THEOREM2_KAPPA_ZERO if name == "hopf-circle-kappa-zero" else Variant.THEOREM1
        asserted = ("A1", "A7") if variant is Variant.THEOREM2_KAPPA_ZERO else ("A1", "A6")
        return Scenario(
            name=name,
            models=_hopf_models(omega),
            mode=ControllerMode(variant),
            init=InitialConditions(x0=np.array([2.0, 0.0]), theta0=np.array([0.5, -0.5]),
                                   theta_hat0=np.zeros(2), xi0=np.zeros(2), nu0=np.zeros(2)),
            # with kappa = 2|x| + 1 the observer gain is ~11 on the circle and nu
            # converges slowly, so the Theorem 1 variants need a longer horizon
            integration=IntegrationConfig(t0=0.0, t_end=40.0 if variant is Variant.THEOREM2_KAPPA_ZERO
                                          else 150.0, h=1e-3, log_stride=10),
            diagnostics=DiagnosticsConfig(sample_region=HOPF_REGION, expect_pe=True),
            asserted_assumptions=asserted,
        )
    raise UnknownScenario(f"unknown scenario {name!r}; choose from {', '.join(BUILTINS)}")


# ---------------------------------------------------------------- config

def _drift_error(fn):
    def wrapped(*a):
        try:
            return fn(*a)
        except (NotPositiveDefinite, NotSymmetric) as exc:
            raise type(exc)(f"drift.H: {exc}") from None
    return wrapped


def _psi_family(spec, n):
    if spec["family"] == "polynomial":
        poly = Polynomial(spec["terms"], n, "model.psi.terms")
        return poly, poly.grad
    c = np.asarray(spec["center"], float)
    if c.shape != (n,):
        raise DimensionMismatch(f"model.psi.center must have length {n}")
    r2 = float(spec["radius"]) ** 2

    def psi(x):
        z = np.asarray(x, float) - c
        return float(z @ z) - r2
    return psi, lambda x: 2.0 * (np.asarray(x, float) - c)


def _varphi_family(spec):
    if spec is None or spec["family"] == "identity":
        return lambda s: s
    g = float(spec["gain"])
    return lambda s: g * s


def _kappa_family(spec):
    if spec["family"] == "constant":
        v = float(spec["value"])
        return (lambda x: v), (lambda x, w: 0.0)
    a, b = float(spec["a"]), float(spec["b"])

    def kappa(x):
        return a * float(np.linalg.norm(x)) + b

    def dkappa(x, w):
        # not differentiable at the origin; the one-sided choice 0 is used there
        r = float(np.linalg.norm(x))
        return 0.0 if r == 0.0 else a * float(np.asarray(x, float) @ np.asarray(w, float)) / r
    return kappa, dkappa


def _linear_drift(S, H, box, d, strict):
    S = np.asarray(S, float)
    if S.shape != (d, d):
        raise DimensionMismatch(f"drift.S must be {d} x {d}, got {S.shape}")
    return DriftModel(S=lambda th: S @ th, JS=lambda th: S, H=H, theta_box=box, validate=strict)


@_drift_error
def _inline_models(model, drift_cfg, strict):
    n, m, d = model["n"], model["m"], model["d"]
    if len(model["f"]) != n:
        raise DimensionMismatch(f"model.f must have {n} components")
    if len(model["u0"]) != m:
        raise DimensionMismatch(f"model.u0 must have {m} components")
    lam = np.asarray(model["phi_lipschitz"], float)
    if lam.shape != (m,):
        raise DimensionMismatch(f"model.phi_lipschitz must have length {m}")
    Phi, dPhi = poly_matrix(model["Phi"], n, m, d, "model.Phi")
    plant = PlantModel(n=n, m=m, d=d, f=poly_vector(model["f"], n, "model.f"), Gu=model["Gu"],
                       Phi=Phi, phi_row_lipschitz=lambda x, xi: lam, dPhi=dPhi)
    psi, grad_psi = _psi_family(model["psi"], n)
    varphi = _varphi_family(model.get("varphi"))
    kappa, dkappa = _kappa_family(model["kappa"])
    dist = None
    if model.get("dist") == "norm":
        dist = lambda x: float(np.linalg.norm(x))
    target = TargetSpec(u0=poly_vector(model["u0"], n, "model.u0"), psi=psi, grad_psi=grad_psi,
                        varphi=varphi, kappa=kappa, dkappa=dkappa, beta_min=float(model["beta_min"]),
                        dist_to_target=dist)
    for key in ("S", "H", "theta_box"):
        if key not in drift_cfg:
            raise SchemaError([(f"drift.{key}", "required for an inline model")])
    drift = _linear_drift(drift_cfg["S"], drift_cfg["H"], drift_cfg["theta_box"], d, strict)
    return Models(plant, drift, target)


@_drift_error
def _override_drift(models, drift_cfg, strict):
    if not drift_cfg:
        return models
    old = models.drift
    d = models.plant.d
    H = drift_cfg.get("H", old.H)
    box = drift_cfg.get("theta_box", old.theta_box)
    if "S" in drift_cfg:
        drift = _linear_drift(drift_cfg["S"], H, box, d, strict)
    else:
        drift = DriftModel(S=old.S, JS=old.JS, H=H, theta_box=box, validate=strict)
    return Models(models.plant, drift, models.target)


def _region(spec):
    return SampleRegion(lower=tuple(float(v) for v in spec["lower"]),
                        upper=tuple(float(v) for v in spec["upper"]),
                        r_min=float(spec.get("r_min", 0.0)), r_max=float(spec.get("r_max", math.inf)))


def from_config(cfg, strict=True):
    """Build a Scenario from a validated config mapping.

    With ``strict=False`` an indefinite H is accepted so that the assumption
    verifier can report it instead of failing at construction.
    """
    validate(cfg)
    drift_cfg = cfg.get("drift", {})
    if "scenario" in cfg:
        base = builtin(cfg["scenario"])
        models = _override_drift(base.models, drift_cfg, strict)
        init, integ, diag = base.init, base.integration, base.diagnostics
        mode, asserted = base.mode, base.asserted_assumptions
        name = cfg.get("name", base.name)
    else:
        models = _inline_models(cfg["model"], drift_cfg, strict)
        p = models.plant
        init = InitialConditions(x0=np.zeros(p.n), theta0=np.zeros(p.d), theta_hat0=np.zeros(p.d),
                                 xi0=np.zeros(p.n), nu0=np.zeros(p.d))
        integ = IntegrationConfig()
        diag = DiagnosticsConfig(sample_region=SampleRegion(lower=(-1.0,) * p.n, upper=(1.0,) * p.n))
        mode, asserted = ControllerMode(), ()
        name = cfg.get("name", "inline")
        if "x0" not in cfg["initial"] or "theta0" not in cfg["initial"]:
            raise SchemaError([("initial", "x0 and theta0 are required for an inline model")])

    init = replace(init, **{k: np.asarray(v, float) for k, v in cfg.get("initial", {}).items()})
    integ_kw = dict(cfg.get("integration", {}))
    t0 = integ_kw.get("t0", integ.t0)
    t_end = integ_kw.get("t_end", integ.t_end)
    if not t_end > t0:
        raise SchemaError([("integration.t_end", f"must exceed integration.t0 (t0={t0!r}, t_end={t_end!r})")])
    integ = replace(integ, **integ_kw)
    diag_kw = dict(cfg.get("diagnostics", {}))
    if "sample_region" in diag_kw:
        diag_kw["sample_region"] = _region(diag_kw["sample_region"])
        if len(diag_kw["sample_region"].lower) != models.plant.n:
            raise DimensionMismatch(f"diagnostics.sample_region must have dimension {models.plant.n}")
    diag = replace(diag, **diag_kw)
    if "mode" in cfg or "fd_step_scale" in cfg:
        mode = ControllerMode(Variant(cfg.get("mode", mode.variant.value)),
                              float(cfg.get("fd_step_scale", mode.fd_step_scale)))
    asserted = tuple(cfg.get("asserted_assumptions", asserted))
    return Scenario(name=name, models=models, mode=mode, init=init, integration=integ,
                    diagnostics=diag, asserted_assumptions=asserted)


def designed_violations():
    """Hopf-circle variants that each break exactly one verifiable assumption.

    Returns (base scenario, {check name: (models, diagnostics config)}).
    """
    sc = builtin("hopf-circle")
    m = sc.models
    indefinite = DriftModel(S=m.drift.S, JS=m.drift.JS, H=[[1.0, 2.0], [2.0, 1.0]],
                            theta_box=m.drift.theta_box, validate=False)
    expanding = DriftModel(S=lambda th: th, JS=lambda th: np.eye(2), H=np.eye(2),
                           theta_box=m.drift.theta_box)
    low_kappa = replace(m.target, kappa=lambda x: float(np.linalg.norm(x)), dkappa=None)
    with_origin = replace(sc.diagnostics, sample_region=SampleRegion((-3.0, -3.0), (3.0, 3.0)))
    return sc, {
        "H_positive_definite": (Models(m.plant, indefinite, m.target), sc.diagnostics),
        "drift_contraction": (Models(m.plant, expanding, m.target), sc.diagnostics),
        "kappa_bound": (Models(m.plant, m.drift, low_kappa), sc.diagnostics),
        "manifold_inequality": (m, with_origin),
    }
