import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adareg.diagnostics import (REPORT_CHECKS, DiagnosticsConfig, adaptive_simpson,
                                decay_envelope, finite_form_consistency, fit_exp_rate, halton_points,
                                l2_tail, max_forward_increase, pe_min_eig, project_to_level_set,
                                region_samples, report, v_psi_trace, v_theta_trace, v_xi_trace,
                                verify_assumptions)
from adareg.dynamics import DriftModel, Models
from adareg.errors import DegenerateSeries, EmptyTrajectory, UnknownSignal, WindowTooLong
from adareg.integrate import Trajectory, build_trajectory, integrate
from adareg.scenarios import HOPF_REGION, builtin, designed_violations


def _synthetic(times, n=1, d=1, **derived):
    K = len(times)
    return Trajectory(np.asarray(times, float), np.zeros((K, 2 * n + 3 * d + 3)), derived, n, 1, d)


def _hopf_on_circle(times, T1=True):
    """Logged states of the Hopf plant sitting on the unit circle with x = xi."""
    sc = builtin("hopf-circle")
    K = len(times)
    states = np.zeros((K, 2 * 2 + 3 * 2 + 3))
    c, s = np.cos(times), np.sin(times)
    states[:, 0], states[:, 1] = c, s
    states[:, 6], states[:, 7] = c, s
    return sc, build_trajectory(sc.models, sc.mode, times, states)


@pytest.fixture(scope="module")
def scalar_run():
    sc = builtin("scalar-equilibrium")
    return sc, integrate(sc.models, sc.mode, sc.s0, sc.integration)


# quadrature and small helpers ----------------------------------------------

def test_adaptive_simpson_polynomial():
    assert adaptive_simpson(lambda s: s, 0.0, 3.0) == pytest.approx(4.5, abs=1e-12)
    assert adaptive_simpson(math.sin, 0.0, math.pi) == pytest.approx(2.0, abs=1e-9)
    assert adaptive_simpson(lambda s: s, 2.0, 2.0) == 0.0


def test_max_forward_increase():
    assert max_forward_increase([3.0, 2.0, 1.0]) == (0.0, 0)
    assert max_forward_increase([3.0, 1.0, 1.5, 0.5]) == (0.5, 2)


def test_decay_envelope():
    assert np.array_equal(decay_envelope([1.0, 3.0, 2.0, 0.5]), [3.0, 3.0, 2.0, 0.5])


# L2 tails ---------------------------------------------------------------------

def test_l2_tail_zero_signal():
    t = np.linspace(0, 20, 2001)
    tr = _synthetic(t, alpha_err=np.zeros((t.size, 1)))
    assert l2_tail(tr, "alpha_err") == (0.0, 0.0)


def test_l2_tail_exponential():
    t = np.linspace(0, 20, 20001)
    tr = _synthetic(t, e=np.exp(-t).reshape(-1, 1))
    total, tail = l2_tail(tr, "e", 0.25)
    assert total == pytest.approx(0.5 * (1 - math.exp(-40)), rel=1e-6)
    assert tail == pytest.approx(0.5 * (math.exp(-30) - math.exp(-40)), rel=1e-3)
    assert tail <= 0.05 * total


def test_l2_tail_constant_fails():
    t = np.linspace(0, 20, 201)
    tr = _synthetic(t, e=np.ones((t.size, 1)))
    total, tail = l2_tail(tr, "e", 0.25)
    assert tail == pytest.approx(0.25 * total, rel=1e-12)
    assert not tail <= 0.05 * total


def test_l2_tail_unknown_signal():
    tr = _synthetic([0.0, 1.0], e=np.zeros((2, 1)))
    with pytest.raises(UnknownSignal):
        l2_tail(tr, "u")


def test_empty_trajectory():
    tr = _synthetic([], e=np.zeros((0, 1)))
    with pytest.raises(EmptyTrajectory):
        l2_tail(tr, "e")


# PE Gramian -------------------------------------------------------------------

def _const_alpha(times, d, scale=1.0):
    K = len(times)
    return _synthetic(times, n=d, d=d, alpha_xi=np.broadcast_to(scale * np.eye(d), (K, d, d)).copy())


def test_pe_identity_alpha():
    tr = _const_alpha(np.linspace(0, 10, 1001), 2)
    _, eigs = pe_min_eig(tr, None, 2.0)
    assert np.allclose(eigs, 2.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 4.0), st.floats(0.1, 3.0))
def test_pe_scales_linearly_in_T(T, scale):
    tr = _const_alpha(np.linspace(0, 10, 501), 2, scale)
    _, e1 = pe_min_eig(tr, None, T)
    _, e2 = pe_min_eig(tr, None, 2 * T)
    assert np.allclose(e2, 2 * e1[:e2.size], rtol=1e-10)


def test_pe_unit_circle_is_pi():
    times = np.linspace(0, 4 * math.pi, 8001)
    sc, tr = _hopf_on_circle(times)
    _, eigs = pe_min_eig(tr, sc.models, 2 * math.pi)
    assert np.max(np.abs(eigs - math.pi)) <= 1e-3


def test_pe_window_too_long():
    tr = _const_alpha(np.linspace(0, 1, 11), 1)
    with pytest.raises(WindowTooLong):
        pe_min_eig(tr, None, 2.0)
    with pytest.raises(WindowTooLong):
        pe_min_eig(tr, None, 0.15)


def test_pe_fails_for_scalar(scalar_run):
    sc, tr = scalar_run
    _, eigs = pe_min_eig(tr, sc.models, 2.0, start=5.0)
    assert eigs.min() < 1e-3
    v = report(tr, sc.models, sc.mode, sc.diagnostics)
    pe = v["pe_excitation"]
    assert pe.status == "fail" and not pe.hard
    assert pe.note == "fail (expected: regressor vanishes)"


# rate fit ---------------------------------------------------------------------

def test_fit_exp_rate_exact():
    t = np.linspace(0, 5, 101)
    fit = fit_exp_rate(t, 3 * np.exp(-2 * t))
    assert fit.D0 == pytest.approx(3.0, abs=1e-6)
    assert fit.c == pytest.approx(2.0, abs=1e-6)
    assert fit.residual < 1e-10


def test_fit_exp_rate_constant():
    fit = fit_exp_rate(np.linspace(0, 5, 50), np.full(50, 0.7))
    assert abs(fit.c) < 1e-12


def test_fit_exp_rate_degenerate():
    with pytest.raises(DegenerateSeries):
        fit_exp_rate(np.arange(10.0), np.r_[np.ones(4), np.zeros(6)])


# traces -----------------------------------------------------------------------

def test_traces_identity_initialized():
    sc = builtin("scalar-equilibrium").with_overrides(t_end=2.0).identity_initialized()
    tr = integrate(sc.models, sc.mode, sc.s0, sc.integration)
    for trace in (v_theta_trace, v_xi_trace):
        _, v = trace(tr, sc.models)
        assert np.max(np.abs(v)) <= 1e-9


def test_v_psi_scalar_closed_form(scalar_run):
    sc, tr = scalar_run
    _, v = v_psi_trace(tr, sc.models)
    assert np.allclose(v, 0.5 * tr.derived["psi"] ** 2, atol=1e-12)


def test_v_psi_zero_on_target():
    times = np.linspace(0, 3, 31)
    sc, tr = _hopf_on_circle(times)
    _, v = v_psi_trace(tr, sc.models)
    assert np.max(np.abs(v)) < 1e-15


def test_scalar_traces_monotone(scalar_run):
    sc, tr = scalar_run
    for trace in (v_theta_trace, v_xi_trace):
        _, v = trace(tr, sc.models)
        rise, _ = max_forward_increase(v)
        assert rise <= 1e-6 * (1 + v[0])
    _, vxi = v_xi_trace(tr, sc.models)
    gap = np.abs(tr.column("x") - tr.column("xi")).ravel()
    moving = gap[1:] > 1e-6
    assert np.all(np.diff(vxi)[moving] < 0)


def test_v_theta_truncation(scalar_run):
    sc, tr = scalar_run
    sc2 = sc.with_overrides(t_end=20.0)
    tr2 = integrate(sc2.models, sc2.mode, sc2.s0, sc2.integration)
    _, v1 = v_theta_trace(tr, sc.models)
    _, v2 = v_theta_trace(tr2, sc.models)
    k = 50
    assert tr.times[k] == tr2.times[k]
    e2 = np.einsum("ki,ki->k", tr2.derived["e"], tr2.derived["e"])
    g = 0.5 * (tr2.derived["kappa"] ** 2 + 1) * e2
    late = tr2.times >= tr.times[-1]
    tail_mass = np.trapezoid(g[late], tr2.times[late])
    assert abs(v2[k] - v1[k]) <= tail_mass + 1e-15


# finite form -----------------------------------------------------------------

def test_finite_form_static():
    sc = builtin("scalar-equilibrium")
    times = np.linspace(0, 1, 11)
    states = np.zeros((11, 8))
    tr = build_trajectory(sc.models, sc.mode, times, states)
    res, _, _ = finite_form_consistency(tr, sc.models, sc.mode)
    assert res == 0.0


def test_finite_form_second_order():
    sc = builtin("scalar-equilibrium").with_overrides(t_end=2.0, h=1e-3)
    res = []
    for stride in (20, 10):
        s = sc.with_overrides(log_stride=stride)
        tr = integrate(s.models, s.mode, s.s0, s.integration)
        res.append(finite_form_consistency(tr, s.models, s.mode)[0])
    assert 2.5 <= res[0] / res[1] <= 6.0


# assumptions ------------------------------------------------------------------

def test_halton_points_in_box():
    pts = halton_points([-1, 2], [1, 3], 64)
    assert pts.shape == (64, 2)
    assert np.all(pts >= [-1, 2]) and np.all(pts <= [1, 3])


def test_region_samples_respect_annulus():
    pts = region_samples(HOPF_REGION, 200)
    r = np.linalg.norm(pts, axis=1)
    assert len(pts) == 200 and r.min() >= 0.2 and r.max() <= 3.0


def test_projection_onto_circle():
    tgt = builtin("hopf-circle").models.target
    p = project_to_level_set(tgt, [2.0, 1.0])
    assert abs(np.linalg.norm(p) - 1.0) < 1e-12
    assert project_to_level_set(tgt, [0.0, 0.0]) is None


@pytest.mark.parametrize("name", ["scalar-equilibrium", "hopf-circle", "hopf-circle-drift",
                                  "hopf-circle-kappa-zero"])
def test_builtins_pass_assumptions(name):
    sc = builtin(name)
    v = verify_assumptions(sc.models, sc.diagnostics, sc.mode, sc.asserted_assumptions)
    assert v.ok, [c.to_dict() for c in v.hard_failures]
    assert [c.name for c in v.checks if c.status == "asserted"] == \
        [f"{a}_asserted" for a in sc.asserted_assumptions]


def test_rotation_drift_contraction_zero():
    sc = builtin("hopf-circle-drift")
    c = verify_assumptions(sc.models, sc.diagnostics)["drift_contraction"]
    assert c.passed and abs(c.measured) < 1e-15


def test_expanding_drift_measured_two():
    sc = builtin("scalar-equilibrium")
    drift = DriftModel(S=lambda th: th, JS=lambda th: np.eye(1), H=[[1.0]], theta_box=[[-10, 10]])
    models = Models(sc.models.plant, drift, sc.models.target)
    c = verify_assumptions(models, sc.diagnostics)["drift_contraction"]
    assert c.status == "fail" and c.measured == pytest.approx(2.0)


def _status(v):
    return {c.name: c.status for c in v.checks}


@pytest.mark.parametrize("check", ["H_positive_definite", "drift_contraction", "kappa_bound",
                                   "manifold_inequality"])
def test_designed_violation_flips_only_its_check(check):
    sc, cases = designed_violations()
    base = _status(verify_assumptions(sc.models, sc.diagnostics, sc.mode))
    models, cfg = cases[check]
    got = _status(verify_assumptions(models, cfg, sc.mode))
    flipped = {k for k in base if base[k] != got[k]}
    assert flipped == {check}
    assert got[check] == "fail"


def test_origin_violation_location():
    sc, cases = designed_violations()
    models, cfg = cases["manifold_inequality"]
    c = verify_assumptions(models, cfg)["manifold_inequality"]
    assert np.linalg.norm(c.location["x"]) < 0.5


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["tol_contraction", "tol_manifold", "tol_kappa", "tol_invariance", "tol_potential"]),
       st.floats(1.0, 1e6))
def test_verifier_monotone_in_tolerance(tol, factor):
    sc, cases = designed_violations()
    for models, cfg in [(sc.models, replace(sc.diagnostics, sample_count=64))] + \
            [(m, replace(c, sample_count=64)) for m, c in cases.values()]:
        before = _status(verify_assumptions(models, cfg))
        looser = replace(cfg, **{tol: getattr(cfg, tol) * factor})
        after = _status(verify_assumptions(models, looser))
        for k, s in before.items():
            if s == "pass":
                assert after[k] == "pass"


# report -----------------------------------------------------------------------

def test_report_scalar(scalar_run):
    sc, tr = scalar_run
    v = report(tr, sc.models, sc.mode, sc.diagnostics)
    assert v.names() == list(REPORT_CHECKS)
    assert v.ok
    again = report(tr, sc.models, sc.mode, sc.diagnostics)
    assert [c.to_dict() for c in again.checks] == [c.to_dict() for c in v.checks]


def test_report_failure_marks_not_evaluated():
    tr = _synthetic([0.0, 0.1], e=np.zeros((2, 1)))
    tr.failure = {"kind": "NonFiniteState", "t": 0.1, "message": "boom"}
    v = report(tr, None, None, DiagnosticsConfig())
    assert v["integration_finite"].status == "fail"
    assert v["integration_finite"].location == 0.1
    assert all(v[n].status == "not_evaluated" for n in REPORT_CHECKS[1:])
    assert not v.ok
