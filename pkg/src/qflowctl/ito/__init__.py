"""Symbolic quantum Ito calculus."""

from .calculus import (MalformedExpressionError, adjoint_expr, collect, extract_sandwich,
                       ito_product, mul, rho, substitute)
from .derivations import (compare_proposition1, derive_flow_generator, expand_proposition1,
                          levy_pair_reduction, printed_proposition1, verify_theorem1_cancellation)
from .expr import NCExpr, Sym
from .table import (ItoTable, NoiseBasis, UnknownLabelError, boson_fock_table, classical_table,
                    fermion_levy_table, gauge_table, generic_table, levy_pair_table,
                    poisson_pair_table, single_noise_table,
                    symbolic_levy_table)
