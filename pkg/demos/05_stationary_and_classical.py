"""Stationary Riccati equations and a noise-free regulator.

1. Newton-Kleinman on a scalar CARE (f = -1, g = r = 1, q = 3) gives pi = 1.
2. The stationary flow-cost equation has no Hermitian solution for X != 0:
   the trace of the commutator term vanishes, leaving tr(X^2) = 0.
3. With Phi = 0 the state is an ordinary vector ODE. The Riccati feedback
   cost is compared with a discretized quadratic program solved directly.
"""
import numpy as np

from qflowctl.control import classical_lqr_check
from qflowctl.flow import TimeGrid
from qflowctl.riccati import CostSpec, solve_care, solve_paper_are

r = solve_care(-np.eye(1), np.eye(1), np.eye(1), 3 * np.eye(1))
print("CARE pi =", r.Pi[0, 0].real, "after", len(r.residuals), "Newton steps;",
      "residuals", ", ".join(f"{x:.1e}" for x in r.residuals))

H = np.diag([1.0, -1.0]).astype(complex)
for X in (np.zeros((2, 2)), np.diag([1.0, 0.5])):
    res = solve_paper_are(H, X)
    print(f"flow-cost ARE, tr(X^2) = {np.trace(X @ X):.2f}: feasible={res.feasible}, "
          f"least-squares residual {res.residual:.3e}")

rng = np.random.default_rng(2)
d, k = 4, 2
c = lambda *s: (rng.standard_normal(s) + 1j * rng.standard_normal(s)) / np.sqrt(2)
Q = c(d, d)
cost = CostSpec(Q @ Q.conj().T / d, np.eye(k), 0.2 * np.eye(d), m=0.3 * c(1, d),
                eta=0.3 * c(1, k), mT=0.3 * c(1, d))
F, G, ell, x0 = 0.6 * c(d, d), c(d, k), 0.5 * c(d), c(d)
for steps in (500, 1000, 2000, 4000):
    cmp = classical_lqr_check(F, G, ell, cost, x0, TimeGrid(1.0, steps))
    print(f"steps {steps:4d}: feedback {cmp.feedback_cost:.10f}  QP {cmp.oracle_cost:.10f}  "
          f"no control {cmp.zero_control_cost:.4f}  rel gap {cmp.relative_gap:.1e}")
