"""Recompute the relaxed-iteration example x0 = (-0.4, 0.2, 0.1), c = 1/4, and freeze it.

The control is checked three independent ways before being written:
the sextic closed-form solver for exponents (0, 1, 3), the multi-start
infeasibility search at a 2% shorter horizon, and RK4 simulation of the
nonlinear system.

    python scripts/derive_case_b.py > tests/fixtures/case_b.json
"""

import json
import sys

from tocl.fixedpoint import iterate
from tocl.linearize import check_system
from tocl.model import ControlSystem
from tocl.moment import MomentProblem, solve_n3_gap, verify_minimality
from tocl.presets import preset
from tocl.sim import integrate

X0 = [-0.4, 0.2, 0.1]
C = 0.25

def main() -> int:
    spec = preset("gap013")
    system = ControlSystem.from_strings(spec["a"], spec["b"], t_radius=spec["t_radius"],
                                        x_radius=spec["x_radius"])
    df = check_system(system).driftless
    trace = iterate(df, X0, C, tol=1e-8)
    if not trace.converged:
        print(f"iteration did not converge: {trace.message}", file=sys.stderr)
        return 1
    ctrl = trace.final_control
    y = trace.limit
    sextic = solve_n3_gap(y)
    gap = max(abs(sextic.theta - ctrl.theta),
              *(abs(a - b) for a, b in zip(sextic.switches, ctrl.switches)))
    minimal = verify_minimality(ctrl, MomentProblem((0, 1, 3), tuple(y)))
    terminal = integrate(system, X0, ctrl).terminal_error
    json.dump({
        "x0": X0,
        "c": C,
        "iterations": trace.iterations,
        "limit": [float(v) for v in y],
        "sigma": ctrl.sigma,
        "switches": list(ctrl.switches),
        "theta": ctrl.theta,
        "sextic_disagreement": gap,
        "minimal": minimal,
        "terminal_error": terminal,
    }, sys.stdout, indent=2)
    print()
    return 0 if (minimal and gap < 1e-8 and terminal < 1e-3) else 1

if __name__ == "__main__":
    sys.exit(main())
