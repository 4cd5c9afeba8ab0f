"""Riccati equation, optimal feedback and the cost it achieves.

The scalar instance F = 0, Phi = 0, X = 1, M = 0 on [0, 1] has
Pi(t) = tanh(1 - t). The gain K = -Pi drives the controlled flow, and the
cost of the controlled evolution equals <xi0, Pi(0) xi0>.
A random qutrit instance repeats the comparison and then solves the same
problem forward by Picard iteration.
"""
import numpy as np

from qflowctl.control import eval_cost_controlled, feedback_gain
from qflowctl.flow import ExpVectorState, HPModel, TimeGrid
from qflowctl.riccati import CostSpec, picard_iterate, solve_forward_riccati, solve_riccati_ode

grid = TimeGrid.default(1.0)
model = HPModel.controlled([[0.0]], [[0.0]], T=1.0)
cost = CostSpec.flow(np.eye(1), np.zeros((1, 1)))
traj = solve_riccati_ode(model, cost, grid)
print("Pi(0) =", traj.Pi[0, 0, 0].real, " tanh(1) =", np.tanh(1.0))

gains = feedback_gain(traj, cost, model)
rep = eval_cost_controlled(model, gains, np.eye(1), np.zeros((1, 1)),
                           ExpVectorState.vacuum([1.0]), grid)
print("cost under K = -Pi:", rep.j_tilde, " predicted:", rep.min_value_prediction)

rng = np.random.default_rng(3)
d = 3
F = 0.5 * (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
Phi = 0.4 * (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
X = rng.standard_normal((d, d))
X = X + X.T
model = HPModel.controlled(F, Phi)
cost = CostSpec.flow(X, 0.3 * np.eye(d))
traj = solve_riccati_ode(model, cost, grid)
xi0 = np.ones(d) / np.sqrt(d)
rep = eval_cost_controlled(model, feedback_gain(traj, cost, model), X, 0.3 * np.eye(d),
                           ExpVectorState.vacuum(xi0), grid)
print(f"qutrit: cost {rep.j_tilde:.10f}, predicted {rep.min_value_prediction:.10f}")

# Forward orientation: Pi(0) = M, iterate the linearized equation. The first
# step from Pi_1 = M may increase; from n = 2 on the iterates decrease. The
# distance floor is the O(h^2) trapezoid error of the iteration; with Pi of
# order 100 here it sits above 1e-6 even at 4000 steps.
for steps in (2000, 4000):
    fine = TimeGrid(1.0, steps)
    res = picard_iterate(model, cost, fine, n_iters=12)
    direct = solve_forward_riccati(model, cost, fine)
    print(f"Picard on {steps} steps")
    for n, m in enumerate(res.monotonicity, start=1):
        dist = np.linalg.norm(res.iterates[n] - direct, axis=(1, 2)).max()
        print(f"  n = {n:2d}: min eig(Pi_n - Pi_n+1) {m:+.2e}  |Pi_n+1 - ODE| {dist:.2e}")
