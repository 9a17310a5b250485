"""Function readout from amplitude-encoded states via MPS-compressed orthogonal expansions."""

from .circuit import (BlockCircuit, BlockGate, StateVector, apply_circuit, build_sliding_circuit,
                      build_vapp, build_vmps, build_vof, build_vof_controlled, circuit_state,
                      extract_mps, sliding_dof, vmps_skeleton, zero_state)
from .finance import (BSModel, PricerConfig, domain_bounds, grid_target, mc_estimate, mc_price,
                      sample_points, terminal_prices, worst_of_put_payoff)
from .fit import (FitConfig, FitReport, PauliString, assemble_fi_direct, assemble_fi_pauli,
                  environments, fidelity, function_mps, pauli_strings, run_fit, update_block)
from .mps import (MPS, canonicalize, check_right_canonical, dof_count, fidelity_dense, mps_eval,
                  mps_eval_many, read_mps, reconstruct_dense, write_mps)
from .numkernel import NumericalError
from .ortho import (GridTensor, OrthoBasis1D, check_discrete_orthogonality, coefficients_from_grid,
                    eval_basis, expansion_eval, expansion_eval_many, make_basis, make_cosine_basis,
                    normalization_constant, read_gridtensor, write_gridtensor)

__version__ = "0.1.0"
