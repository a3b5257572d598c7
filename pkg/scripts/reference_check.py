"""Compare fixed-step RK4 runs with a tight-tolerance DOP853 reference.

    python scripts/reference_check.py

Settings match the regulation acceptance criterion: scalar benchmark at
h = 1e-3 to t = 10, hopf-circle at h = 5e-3 to t = 40.
"""
import time

import numpy as np
from scipy.integrate import solve_ivp

from adareg.dynamics import ClosedLoop
from adareg.integrate import integrate
from adareg.scenarios import builtin

CASES = (
    ("scalar-equilibrium", {}),
    ("hopf-circle", {"t_end": 40.0, "h": 5e-3, "log_stride": 1}),
)


def main():
    for name, kw in CASES:
        sc = builtin(name).with_overrides(**kw)
        t = time.perf_counter()
        tr = integrate(sc.models, sc.mode, sc.s0, sc.integration)
        secs = time.perf_counter() - t
        loop = ClosedLoop(sc.models, sc.mode)
        sol = solve_ivp(loop, (sc.integration.t0, sc.integration.t_end), sc.s0.to_vector(),
                        method="DOP853", rtol=1e-11, atol=1e-13, dense_output=True)
        ref = sol.sol(tr.times).T
        gap = np.max(np.abs(ref - tr.states), axis=0)
        span = tr.times[-1] - tr.times[0]
        tail = tr.times >= tr.times[-1] - 0.25 * span
        print(f"{name}: RK4 {secs:.2f}s, reference {sol.nfev} evaluations")
        print(f"  max state gap to reference: {gap.max():.3e}")
        print(f"  tail max distance to target: RK4 {tr.derived['dist'][tail].max():.4e}")


if __name__ == "__main__":
    main()
