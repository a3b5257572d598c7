"""Post-hoc checks over a logged Trajectory."""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .dynamics import f0 as nominal_field
from .dynamics import virtual_rhs
from .errors import (DegenerateSeries, EmptyTrajectory, NotPositiveDefinite,
                     UnknownSignal, WindowTooLong)
from .linalg import cholesky, sym_max_eig, sym_min_eig


@dataclass(frozen=True)
class SampleRegion:
    """Axis-aligned box, optionally intersected with an annulus r_min <= |x| <= r_max."""
    lower: tuple
    upper: tuple
    r_min: float = 0.0
    r_max: float = math.inf

    def contains(self, x):
        r = float(np.linalg.norm(x))
        return (bool(np.all(np.asarray(x) >= self.lower) and np.all(np.asarray(x) <= self.upper))
                and self.r_min <= r <= self.r_max)


@dataclass(frozen=True)
class DiagnosticsConfig:
    sample_region: SampleRegion = SampleRegion(lower=(-1.0,), upper=(1.0,))
    sample_count: int = 512
    pe_window_T: float = 2 * math.pi
    pe_delta: float = 2.5
    pe_start_fraction: float = 0.5
    expect_pe: bool = True
    monotonicity_slack: float = 1e-6
    l2_tail_fraction: float = 0.25
    l2_tail_ratio: float = 0.05
    convergence_tol: float = 1e-2
    convergence_tail_fraction: float = 0.25
    observer_tol: float = 1e-3
    bound_factor: float = 10.0
    rate_floor: float = 1e-10
    rate_residual_max: float = 0.5
    finite_form_coeff: float = 1000.0
    tol_contraction: float = 1e-8
    tol_manifold: float = 1e-8
    tol_kappa: float = 1e-8
    tol_invariance: float = 1e-6
    tol_potential: float = 1e-9


@dataclass
class Check:
    name: str
    status: str  # "pass" | "fail" | "not_evaluated"
    measured: Optional[float] = None
    threshold: Optional[float] = None
    location: Optional[object] = None
    hard: bool = True
    note: str = ""

    @property
    def passed(self):
        return self.status == "pass"

    def to_dict(self):
        return {
            "name": self.name,
            "status": self.status,
            "passed": self.passed,
            "hard": self.hard,
            "measured": _json_float(self.measured),
            "threshold": _json_float(self.threshold),
            "location": _json_loc(self.location),
            "note": self.note,
        }


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _json_loc(loc):
    if loc is None:
        return None
    if isinstance(loc, dict):
        return {k: _json_loc(v) for k, v in loc.items()}
    if isinstance(loc, (list, tuple, np.ndarray)):
        return [_json_float(v) for v in np.asarray(loc, float).reshape(-1)]
    return _json_float(loc)


def _check(name, measured, threshold, ok, location=None, hard=True, note=""):
    return Check(name, "pass" if ok else "fail", measured, threshold, location, hard, note)


@dataclass
class Verdict:
    checks: list = field(default_factory=list)
    failure: Optional[dict] = None

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self):
        return [c.name for c in self.checks]

    @property
    def hard_failures(self):
        return [c for c in self.checks if c.hard and c.status != "pass"]

    @property
    def ok(self):
        return self.failure is None and not self.hard_failures


# ---------------------------------------------------------------- quadrature

def trapezoid_cumulative(times, values):
    """Cumulative trapezoid integral from times[0]; same leading shape as values."""
    values = np.asarray(values, float)
    dt = np.diff(np.asarray(times, float))
    inc = 0.5 * (values[1:] + values[:-1]) * dt.reshape((-1,) + (1,) * (values.ndim - 1))
    out = np.zeros_like(values)
    out[1:] = np.cumsum(inc, axis=0)
    return out


def adaptive_simpson(fn, a, b, tol=1e-9, max_depth=50):
    """Integral of a scalar function on [a, b] by adaptive Simpson."""
    if a == b:
        return 0.0
    fa, fb = fn(a), fn(b)
    c = 0.5 * (a + b)
    fc = fn(c)
    whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb)
    return _simpson_rec(fn, a, b, fa, fb, fc, whole, tol, max_depth)


def _simpson_rec(fn, a, b, fa, fb, fc, whole, tol, depth):
    c = 0.5 * (a + b)
    d, e = 0.5 * (a + c), 0.5 * (c + b)
    fd, fe = fn(d), fn(e)
    left = (c - a) / 6.0 * (fa + 4.0 * fd + fc)
    right = (b - c) / 6.0 * (fc + 4.0 * fe + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_simpson_rec(fn, a, c, fa, fc, fd, left, 0.5 * tol, depth - 1)
            + _simpson_rec(fn, c, b, fc, fb, fe, right, 0.5 * tol, depth - 1))


# ---------------------------------------------------------------- traces

def _require(traj):
    if traj is None or len(traj.times) == 0:
        raise EmptyTrajectory("trajectory has no samples")


def v_theta_trace(traj, models):
    """(t, V_theta) with the future-tail term reconstructed by trapezoid quadrature.

    V_theta = |theta - theta_hat|_H^2 + 1/2 int_t^{t_end} (kappa(xi)^2 + 1) |e|^2.
    The mode is already folded into the logged kappa (zero under Theorem 2).
    """
    _require(traj)
    H = models.drift.H
    err = traj.column("theta") - traj.derived["theta_hat"]
    quad = np.einsum("ki,ij,kj->k", err, H, err)
    e = traj.derived["e"]
    g = 0.5 * (traj.derived["kappa"] ** 2 + 1.0) * np.einsum("ki,ki->k", e, e)
    cum = trapezoid_cumulative(traj.times, g)
    tail = cum[-1] - cum
    return traj.times.copy(), quad + tail


def v_xi_trace(traj, models):
    _require(traj)
    H = models.drift.H
    dx = traj.column("x") - traj.column("xi")
    dth = traj.column("theta") - traj.column("nu")
    v = 0.5 * np.einsum("ki,ki->k", dx, dx) + 0.5 * np.einsum("ki,ij,kj->k", dth, H, dth)
    return traj.times.copy(), v


def v_psi_trace(traj, models):
    """(t, integral of varphi from 0 to psi(x(t))) per logged sample."""
    _require(traj)
    varphi = models.target.varphi
    vals = np.array([adaptive_simpson(varphi, 0.0, float(p)) for p in traj.derived["psi"]])
    return traj.times.copy(), vals


def max_forward_increase(values):
    """Largest rise of a series above its running minimum (0 for nonincreasing)."""
    values = np.asarray(values, float)
    if values.size == 0:
        return 0.0, 0
    rise = values - np.minimum.accumulate(values)
    k = int(np.argmax(rise))
    return float(rise[k]), k


# ---------------------------------------------------------------- excitation

def gramian_integrand(traj):
    a = traj.derived["alpha_xi"]
    return np.einsum("kia,kib->kab", a, a)


def _cum_at(times, cum, g, t):
    """Integral from times[0] to t of the piecewise-linear interpolant of g."""
    j = int(np.searchsorted(times, t, side="right")) - 1
    j = min(max(j, 0), len(times) - 2)
    dt = times[j + 1] - times[j]
    s = t - times[j]
    return cum[j] + s * g[j] + 0.5 * s * s / dt * (g[j + 1] - g[j])


def pe_min_eig(traj, models, T, start=None, max_windows=400):
    """Minimum eigenvalue of the sliding-window Gramian int_t^{t+T} alpha(xi)^T alpha(xi).

    Returns (window starts, eigenvalues); windows start at logged samples at or
    after ``start`` (default: beginning), thinned to at most ``max_windows``.
    """
    _require(traj)
    times = traj.times
    span = times[-1] - times[0]
    if T > span:
        raise WindowTooLong(f"window {T} exceeds trajectory span {span}")
    if len(times) < 3 or T < 2 * float(np.max(np.diff(times))):
        raise WindowTooLong(f"window {T} must cover at least two logged intervals")
    g = gramian_integrand(traj)
    cum = trapezoid_cumulative(times, g)
    t_start = times[0] if start is None else start
    idx = np.nonzero((times >= t_start - 1e-12) & (times + T <= times[-1] + 1e-12))[0]
    if idx.size == 0:
        raise WindowTooLong("no complete window after the requested start")
    if idx.size > max_windows:
        idx = idx[np.linspace(0, idx.size - 1, max_windows).round().astype(int)]
    starts, eigs = [], []
    for k in idx:
        G = _cum_at(times, cum, g, times[k] + T) - cum[k]
        eigs.append(sym_min_eig(0.5 * (G + G.T)))
        starts.append(times[k])
    return np.array(starts), np.array(eigs)


@dataclass(frozen=True)
class RateFit:
    D0: float
    c: float
    residual: float
    points: int


def fit_exp_rate(times, values, floor=1e-12):
    """Least-squares fit of log(value) = log(D0) - c t over values above ``floor``."""
    times = np.asarray(times, float)
    values = np.asarray(values, float)
    keep = np.isfinite(values) & (values > floor)
    if int(keep.sum()) < 5:
        raise DegenerateSeries(f"only {int(keep.sum())} usable points")
    t, lv = times[keep], np.log(values[keep])
    A = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    resid = lv - A @ coef
    return RateFit(float(math.exp(coef[0])), float(-coef[1]),
                   float(math.sqrt(np.mean(resid * resid))), int(keep.sum()))


# ---------------------------------------------------------------- consistency

def finite_form_consistency(traj, models, mode):
    """Max norm gap between d/dt theta_hat (central differences) and the virtual algorithm.

    Only interior samples whose two neighbouring intervals are equal are used.
    Returns (max residual, time of the max, logging step).
    """
    _require(traj)
    times = traj.times
    if len(times) < 3:
        return 0.0, None, None
    th = traj.derived["theta_hat"]
    dts = np.diff(times)
    best, where = 0.0, None
    plant, drift, target = models.plant, models.drift, models.target
    x, xi, theta = traj.column("x"), traj.column("xi"), traj.column("theta")
    e = traj.derived["e"]
    for k in range(1, len(times) - 1):
        h0, h1 = dts[k - 1], dts[k]
        if abs(h0 - h1) > 1e-9 * max(h0, h1):
            continue
        fd = (th[k + 1] - th[k - 1]) / (h0 + h1)
        ref = virtual_rhs(plant, drift, target, mode, x[k], xi[k], theta[k], th[k], e[k])
        r = float(np.max(np.abs(fd - ref)))
        if r > best:
            best, where = r, float(times[k])
    return best, where, float(np.median(dts))


# ---------------------------------------------------------------- L2 tails

SIGNALS = {
    "alpha_err": "alpha(xi)(theta - theta_hat)",
    "e": "(alpha(x) - alpha(xi)) theta",
}


def l2_tail(traj, signal, tail_fraction=0.25):
    """(total, tail) of int |signal|^2 over the whole span and over its final fraction."""
    _require(traj)
    if signal not in SIGNALS:
        raise UnknownSignal(f"unknown signal {signal!r}; choose from {sorted(SIGNALS)}")
    v = traj.derived[signal]
    sq = np.einsum("ki,ki->k", v, v)
    cum = trapezoid_cumulative(traj.times, sq)
    total = float(cum[-1])
    t_cut = traj.times[-1] - tail_fraction * (traj.times[-1] - traj.times[0])
    if len(traj.times) < 2:
        return total, 0.0
    at_cut = _cum_at(traj.times, cum, sq, t_cut)
    return total, float(total - at_cut)


# ---------------------------------------------------------------- assumptions

def halton_points(lower, upper, count, skip=0):
    """Unscrambled Halton points mapped into the box [lower, upper]."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    if count <= 0:
        return np.zeros((0, lower.size))
    sampler = qmc.Halton(d=lower.size, scramble=False)
    if skip:
        sampler.fast_forward(skip)
    return lower + sampler.random(count) * (upper - lower)


def region_samples(region, count):
    """First ``count`` low-discrepancy points of the box that satisfy the radial limits."""
    out = []
    drawn = 0
    while len(out) < count and drawn < 64 * count:
        batch = halton_points(region.lower, region.upper, count, skip=drawn)
        drawn += count
        r = np.linalg.norm(batch, axis=1)
        ok = (r >= region.r_min) & (r <= region.r_max)
        out.extend(batch[ok])
    return np.array(out[:count]).reshape(-1, len(region.lower))


def project_to_level_set(target, x, iters=60, tol=1e-13):
    """Newton projection of x onto {varphi(psi(x)) = 0} along the gradient; None on failure."""
    x = np.array(x, float)
    for _ in range(iters):
        p = float(target.psi(x))
        g = float(target.varphi(p))
        if abs(g) <= tol:
            return x
        h = 1e-6 * (1.0 + abs(p))
        dphi = (float(target.varphi(p + h)) - float(target.varphi(p - h))) / (2.0 * h)
        grad = dphi * np.asarray(target.grad_psi(x), float)
        gg = float(grad @ grad)
        if gg == 0.0 or not math.isfinite(gg):
            return None
        x = x - g / gg * grad
    return x if abs(float(target.varphi(float(target.psi(x))))) <= 1e-10 else None


def _worst(values, points):
    values = np.asarray(values, float)
    if values.size == 0:
        return -math.inf, None
    k = int(np.argmax(values))  # first occurrence on ties
    return float(values[k]), points[k]


def verify_drift_contraction(drift, cfg):
    thetas = halton_points(drift.theta_box[:, 0], drift.theta_box[:, 1], cfg.sample_count)
    vals = []
    for th in thetas:
        J = np.asarray(drift.JS(th), float)
        M = drift.H @ J + J.T @ drift.H
        vals.append(sym_max_eig(0.5 * (M + M.T)))
    worst, where = _worst(vals, thetas)
    return _check("drift_contraction", worst, cfg.tol_contraction, worst <= cfg.tol_contraction,
                  {"theta": where}, note="max eigenvalue of H dS + dS^T H over parameter samples")


def verify_H(drift):
    try:
        cholesky(drift.H)
        ok, note = True, ""
    except NotPositiveDefinite as exc:
        ok, note = False, f"NotPositiveDefinite: {exc}"
    return _check("H_positive_definite", sym_min_eig(drift.H), 0.0, ok, note=note or "min eigenvalue of H")


def verify_manifold_inequality(models, xs, cfg):
    plant, target = models.plant, models.target
    vals = []
    for x in xs:
        p = float(target.psi(x))
        lhs = p * float(np.asarray(target.grad_psi(x), float) @ nominal_field(plant, target, x))
        vals.append(lhs + 2.0 * target.beta_min * float(target.varphi(p)) * p)
    worst, where = _worst(vals, xs)
    return _check("manifold_inequality", worst, cfg.tol_manifold, worst <= cfg.tol_manifold,
                  {"x": where}, note="psi dpsi f0 + 2 beta_min varphi(psi) psi")


def verify_potential(models, xs, cfg):
    target = models.target
    vals = [-adaptive_simpson(target.varphi, 0.0, float(target.psi(x))) for x in xs]
    worst, where = _worst(vals, xs)
    return _check("potential_nonnegative", worst, cfg.tol_potential, worst <= cfg.tol_potential,
                  {"x": where}, note="negated integral of varphi from 0 to psi(x)")


def verify_kappa_bound(models, xs, cfg, mode=None):
    target = models.target
    vals = [float(np.linalg.norm(target.grad_psi(x))) - abs(float(target.kappa(x))) for x in xs]
    worst, where = _worst(vals, xs)
    kappa_zero = mode is not None and mode.kappa_zero
    return _check("kappa_bound", worst, cfg.tol_kappa, worst <= cfg.tol_kappa, {"x": where},
                  hard=not kappa_zero,
                  note="|grad psi| - |kappa|" + ("; informational: controller runs with kappa = 0"
                                                 if kappa_zero else ""))


def verify_feasibility_residual(models, xs, cfg):
    """|grad psi . f0| on points of the target level set (its invariance under f0)."""
    plant, target = models.plant, models.target
    pts = [p for p in (project_to_level_set(target, x) for x in xs) if p is not None]
    if not pts:
        return Check("target_invariance", "fail", None, cfg.tol_invariance,
                     note="no sample could be projected onto the target level set")
    pts = np.array(pts)
    vals = [abs(float(np.asarray(target.grad_psi(x), float) @ nominal_field(plant, target, x)))
            for x in pts]
    worst, where = _worst(vals, pts)
    return _check("target_invariance", worst, cfg.tol_invariance, worst <= cfg.tol_invariance,
                  {"x": where}, note=f"|grad psi . f0| on {len(pts)} level-set points")


def verify_regressor_lipschitz(plant, xs, tol=1e-9):
    vals = []
    locs = []
    for a, b in zip(xs[:-1], xs[1:]):
        Pa, Pb = np.asarray(plant.Phi(a), float), np.asarray(plant.Phi(b), float)
        lam = np.asarray(plant.phi_row_lipschitz(a, b), float)
        gap = np.linalg.norm(Pa - Pb, axis=1) - lam * float(np.linalg.norm(a - b))
        vals.append(float(np.max(gap)))
        locs.append(np.concatenate([a, b]))
    worst, where = _worst(vals, locs)
    return _check("regressor_lipschitz", worst, tol, worst <= tol, {"x_xi": where},
                  note="row-wise |Phi_i(x) - Phi_i(xi)| - lambda_i |x - xi| on sample pairs")


ASSERTED = {
    "A1": "target set is bounded and closed",
    "A6": "bounded psi(x(t)) implies bounded x(t)",
    "A7": "finite L2 -> Linf gain of the perturbed nominal system",
}


def verify_assumptions(models, cfg, mode=None, asserted=()):
    xs = region_samples(cfg.sample_region, cfg.sample_count)
    checks = [
        verify_H(models.drift),
        verify_drift_contraction(models.drift, cfg),
        verify_regressor_lipschitz(models.plant, xs),
        verify_manifold_inequality(models, xs, cfg),
        verify_potential(models, xs, cfg),
        verify_kappa_bound(models, xs, cfg, mode),
        verify_feasibility_residual(models, xs, cfg),
    ]
    for a in asserted:
        checks.append(Check(f"{a}_asserted", "asserted", hard=False,
                            note=f"asserted by scenario author: {ASSERTED.get(a, a)}"))
    return Verdict(checks)


# ---------------------------------------------------------------- report

REPORT_CHECKS = (
    "integration_finite", "boundedness", "regulation", "observer_convergence",
    "v_theta_monotone", "v_xi_monotone", "v_psi_final", "l2_alpha_err", "l2_embedding",
    "pe_excitation", "exp_rate", "finite_form_consistency",
)


def _initial_scale(traj):
    vals = [1.0]
    for name in ("x", "theta", "xi", "nu"):
        vals.append(float(np.linalg.norm(traj.column(name)[0])))
    vals.append(float(np.linalg.norm(traj.derived["theta_hat"][0])))
    return max(vals)


def _monotone(name, times, values, cfg, slack_scale):
    rise, k = max_forward_increase(values)
    v0 = float(values[0])
    measured = rise / (1.0 + abs(v0))
    thr = cfg.monotonicity_slack * slack_scale
    return _check(name, measured, thr, measured <= thr, float(times[k]),
                  note="max rise above running minimum, relative to 1 + initial value")


def report(traj, models, mode, cfg, slack_scale=1.0):
    """Aggregate every trajectory check into one Verdict."""
    if traj.failure is not None:
        t_fail = traj.failure.get("t")
        checks = [Check("integration_finite", "fail", None, None, t_fail,
                        note=traj.failure.get("message", ""))]
        checks += [Check(n, "not_evaluated", note="integration failed") for n in REPORT_CHECKS[1:]]
        return Verdict(checks, failure=dict(traj.failure))
    _require(traj)
    times = traj.times
    span = times[-1] - times[0]
    checks = [Check("integration_finite", "pass", float(times[-1]), None, note="final time reached")]

    norms = np.column_stack([np.linalg.norm(traj.column(c), axis=1) for c in ("x", "xi", "nu")]
                            + [np.linalg.norm(traj.derived["theta_hat"], axis=1)])
    peak = norms.max(axis=1)
    k = int(np.argmax(peak))
    scale = _initial_scale(traj)
    checks.append(_check("boundedness", float(peak[k]), cfg.bound_factor * scale,
                         bool(np.all(np.isfinite(norms))) and peak[k] < cfg.bound_factor * scale,
                         float(times[k]), note="max of |x|, |xi|, |nu|, |theta_hat|"))

    tail = times >= times[-1] - cfg.convergence_tail_fraction * span
    dist = traj.derived["dist"]
    j = int(np.argmax(np.where(tail, dist, -np.inf)))
    checks.append(_check("regulation", float(dist[j]), cfg.convergence_tol,
                         dist[j] <= cfg.convergence_tol, float(times[j]),
                         note="max distance to target over the final tail"))

    gap = float(np.linalg.norm(traj.column("x")[-1] - traj.column("xi")[-1]))
    checks.append(_check("observer_convergence", gap, cfg.observer_tol, gap <= cfg.observer_tol,
                         float(times[-1]), note="final |x - xi|"))

    checks.append(_monotone("v_theta_monotone", *v_theta_trace(traj, models), cfg, slack_scale))
    checks.append(_monotone("v_xi_monotone", *v_xi_trace(traj, models), cfg, slack_scale))

    _, vpsi = v_psi_trace(traj, models)
    checks.append(Check("v_psi_final", "pass", float(vpsi[-1]), None, float(times[-1]), hard=False,
                        note=f"informational: potential term went from {float(vpsi[0])!r}"))

    for name, sig in (("l2_alpha_err", "alpha_err"), ("l2_embedding", "e")):
        total, tl = l2_tail(traj, sig, cfg.l2_tail_fraction)
        thr = cfg.l2_tail_ratio * total
        checks.append(_check(name, tl, thr, tl <= thr, {"total": total},
                             note=f"tail mass of |{SIGNALS[sig]}|^2 over the final "
                                  f"{cfg.l2_tail_fraction:g} of the span"))

    checks.append(_pe_check(traj, models, cfg))
    checks.append(_rate_check(traj, cfg))

    res, where, step = finite_form_consistency(traj, models, mode)
    thr = cfg.finite_form_coeff * (step or 0.0) ** 2
    checks.append(_check("finite_form_consistency", res, thr, res <= thr, where,
                         note=f"central-difference theta_hat vs virtual algorithm, log step {step!r}"))
    return Verdict(checks)


def _pe_check(traj, models, cfg):
    hard = cfg.expect_pe
    times = traj.times
    start = times[0] + cfg.pe_start_fraction * (times[-1] - times[0])
    try:
        starts, eigs = pe_min_eig(traj, models, cfg.pe_window_T, start=start)
    except WindowTooLong as exc:
        return Check("pe_excitation", "fail", None, cfg.pe_delta, hard=hard, note=str(exc))
    k = int(np.argmin(eigs))
    ok = eigs[k] >= cfg.pe_delta
    note = "inf over windows of the Gramian's min eigenvalue"
    if not ok and not hard:
        note = "fail (expected: regressor vanishes)"
    return _check("pe_excitation", float(eigs[k]), cfg.pe_delta, ok, float(starts[k]),
                  hard=hard, note=note)


def decay_envelope(values):
    """Future supremum sup_{s >= t} v(s): the tightest nonincreasing upper bound."""
    return np.maximum.accumulate(np.asarray(values, float)[::-1])[::-1]


def _rate_check(traj, cfg):
    hard = cfg.expect_pe
    times = traj.times
    err = np.linalg.norm(traj.column("theta") - traj.derived["theta_hat"], axis=1)
    # exponential convergence is a bound, so fit the envelope on the post-transient segment
    seg = times >= times[0] + cfg.pe_start_fraction * (times[-1] - times[0])
    try:
        fit = fit_exp_rate(times[seg], decay_envelope(err)[seg], cfg.rate_floor)
    except DegenerateSeries as exc:
        return Check("exp_rate", "fail", None, 0.0, hard=hard, note=str(exc))
    ok = fit.c > 0 and fit.residual <= cfg.rate_residual_max
    return _check("exp_rate", fit.c, 0.0, ok,
                  {"D0": fit.D0, "residual": fit.residual, "points": fit.points}, hard=hard,
                  note=f"log-linear fit of the decay envelope of |theta - theta_hat| after the transient, "
                       f"rms residual limit {cfg.rate_residual_max:g}")
