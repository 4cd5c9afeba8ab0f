"""Qubit decay three ways: closed form, flow equation, collision model.

With H = 0 and L the lowering operator, the excited-state population
decays as exp(-t). The flow equation is integrated with RK4 on the
Heisenberg generator; the collision model applies one joint unitary per
step to the system and a fresh truncated bath mode. Its error is first
order in the step, so halving the step halves the deviation.
"""
import numpy as np

from qflowctl.flow import ExpVectorState, HPModel, TimeGrid, collision_oracle, \
    flow_expectations, oracle_deviation

lower = np.array([[0, 1], [0, 0]], dtype=complex)
model = HPModel(np.zeros((2, 2)), lower, T=1.0)
state = ExpVectorState.vacuum([0.0, 1.0])
excited = np.diag([0.0, 1.0]).astype(complex)

grid = TimeGrid(1.0, 400)
flow = flow_expectations(model, state, [excited], grid)
coll = collision_oracle(model, state, grid, [excited])
exact = np.exp(-grid.times)

print("t     exact      flow       collision")
for k in range(0, grid.steps + 1, 80):
    print(f"{grid.times[k]:.2f}  {exact[k]:.8f} {flow.values[k, 0].real:.8f} "
          f"{coll.values[k, 0].real:.8f}")
print("flow vs exact, max:", np.abs(flow.values[:, 0] - exact).max())

prev = None
for steps in (100, 200, 400, 800):
    dev = oracle_deviation(model, state, [excited], steps)
    ratio = "" if prev is None else f"  ratio {prev / dev:.3f}"
    print(f"steps {steps:4d}  collision deviation {dev:.3e}{ratio}")
    prev = dev

# A coherent input field drives the qubit from the ground state. Only one
# sign convention for the field terms agrees with the collision model.
sx = np.array([[0, 1], [1, 0]], dtype=complex)
sy = np.array([[0, -1j], [1j, 0]])
coh = ExpVectorState.coherent([1.0, 0.0], 0.6 + 0.5j)
col = collision_oracle(model, coh, grid, [sx, sy], n_max=6)
for conv in ("derived", "swapped"):
    v = flow_expectations(model, coh, [sx, sy], grid, convention=conv, check=False)
    print(f"coherent drive, convention {conv:8s}: max deviation "
          f"{np.abs(v.values - col.values).max():.2e}")
