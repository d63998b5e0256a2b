"""Double-phase (p, q)-Laplacian problems on truncated lattice graphs."""
from .graph import (CapacityError, Graph, LatticeSpec, build_lattice, divergence, dump_graph,
                    from_edge_list, gradient, integrate_edges, integrate_vertices, load_graph,
                    shift)
from .norms import (CheckReport, DoublePhaseParams, NumericalError, check_interpolation,
                    check_modular_norm_laws, lp_norm, luxemburg_norm, luxemburg_norm_edge,
                    luxemburg_norm_vertex, modular_edge, modular_vertex)
from .operator import (apply_L, check_green, check_monotonicity, energy_gradient, energy_I,
                       flux, pairing)
from .solvers import (SolveReport, SolverConfig, brute_force_oracle, eigen_residual,
                      lagrange_multiplier, minimize_constrained, solve_monotone)

__version__ = "0.1.0"
