"""Is the Riccati feedback really optimal? Perturb it and watch the cost.

Random smooth perturbations Delta(t) with unit sup-norm are added to the
optimal gain with amplitude eps. Near a minimum the cost increase is
quadratic in eps, so the log-log slope of the gap is 2 and no gap is
negative.
"""
import numpy as np

from qflowctl.control import optimality_probe
from qflowctl.flow import ExpVectorState, HPModel, TimeGrid

rng = np.random.default_rng(11)
d = 4
c = lambda *s: (rng.standard_normal(s) + 1j * rng.standard_normal(s)) / np.sqrt(2)
model = HPModel.controlled(0.5 * c(d, d), 0.4 * c(d, d))
X = c(d, d)
X = 0.5 * (X + X.conj().T)
xi0 = c(d)
state = ExpVectorState.vacuum(xi0 / np.linalg.norm(xi0))

p = optimality_probe(model, X, np.zeros((d, d)), state, TimeGrid.default(1.0),
                     epsilons=(0.3, 0.1, 0.03, 0.01), trials=30, seed=0)
print(f"cost at the optimal gain {p.j_opt:.12f}")
print(f"<xi0, Pi(0) xi0>          {p.min_value_prediction:.12f}")
print("eps      mean gap     min gap")
for j, e in enumerate(p.epsilons):
    print(f"{e:<8g} {p.gaps[:, j].mean():.4e}  {p.gaps[:, j].min():.4e}")
print(f"fitted slope of the mean gap: {p.gap_slope:.4f}")
