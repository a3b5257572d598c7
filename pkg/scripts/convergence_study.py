"""Step-size studies: RK4 global order on y' = -y and second-order decay of the
finite-form residual in the logging step.

    python scripts/convergence_study.py [--t-end 10]
"""
import argparse
import math

from adareg.diagnostics import finite_form_consistency
from adareg.integrate import IntegrationConfig, integrate, solve
from adareg.scenarios import builtin


def rk4_order():
    print("RK4 on y' = -y over [0, 1]")
    print(f"{'h':>8} {'error':>12} {'ratio':>8}")
    prev = None
    for h in (0.2, 0.1, 0.05, 0.025, 0.0125):
        _, s = solve(lambda t, y: -y, 0.0, [1.0], IntegrationConfig(t_end=1.0, h=h))
        err = abs(s[-1, 0] - math.exp(-1.0))
        ratio = "" if prev is None else f"{prev / err:8.3f}"
        print(f"{h:8.4f} {err:12.4e} {ratio}")
        prev = err


def finite_form(names, t_end):
    print("\nfinite-form residual |d/dt theta_hat - virtual algorithm|, h = 1e-3")
    print(f"{'scenario':<24} {'log step':>9} {'residual':>12} {'ratio':>8}")
    for name in names:
        sc = builtin(name).with_overrides(t_end=t_end, h=1e-3)
        prev = None
        for stride in (80, 40, 20, 10, 5):
            s = sc.with_overrides(log_stride=stride)
            tr = integrate(s.models, s.mode, s.s0, s.integration)
            res, _, step = finite_form_consistency(tr, s.models, s.mode)
            ratio = "" if prev is None else f"{prev / res:8.3f}"
            print(f"{name:<24} {step:9.4f} {res:12.4e} {ratio}")
            prev = res


if __name__ == "__main__":
    p = argparse.ArgumentParser(description="step-size studies")
    p.add_argument("--t-end", type=float, default=10.0)
    args = p.parse_args()
    rk4_order()
    finite_form(["scalar-equilibrium", "hopf-circle-drift", "hopf-circle-kappa-zero"], args.t_end)
