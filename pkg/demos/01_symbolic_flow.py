"""Derive the Heisenberg-picture flow of a system observable symbolically.

The unitary is driven by annihilation and creation noise with the Boson
Ito rule dA dA^dagger = dt. Differentiating U* X U with the quantum Ito
product rule and collecting by differential gives three coefficients,
which are compared term by term with their closed forms.
"""
from qflowctl.ito import boson_fock_table, classical_table, gauge_table
from qflowctl.ito.derivations import derive_flow_generator, verify_theorem1_cancellation

table = boson_fock_table()
g = derive_flow_generator(table)

print("d j_t(X) = j_t(theta0) dt + j_t(c_A) dA + j_t(c_Adag) dA^dagger")
print("  theta0  =", g.theta0)
print("  c_A     =", g.coef_dA)
print("  c_Adag  =", g.coef_dAdag)
print("matches closed forms exactly:", g.ok)

# Optimal feedback makes the cross term between the optimal and deviating
# parts of the state vanish. The check is symbolic and exact per Ito table.
for t in (table, classical_table(), gauge_table()):
    for general in (False, True):
        res = verify_theorem1_cancellation(t, general_wz=general)
        print(f"cross-term residual, {t.name:>10s}, general w/z={general!s:5s}:",
              "0" if res.is_zero() else res)
