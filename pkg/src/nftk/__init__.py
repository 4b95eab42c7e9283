"""First-order normal forms for near-integrable Hamiltonians on T^d x box."""

from .averaging import (OneFormField, PeriodicTorus, VectorFieldSample, differential, flat,
                        hamiltonian_vector_field, interior, is_periodic_torus, orbit_average,
                        sharp, vertical_average, vertical_average_oneform,
                        vertical_average_vector)
from .errors import (CertificationError, ConfigError, DegeneracyError, DimensionError,
                     DomainError, InvalidModeError, MathematicalRejection, NFTKError,
                     NonClosedInputError, NonSymplecticInputError, PreconditionError,
                     ResonanceError, SmallDivisorError, StiffnessError, SymmetryError)
from .geometry_decomp import (DecompositionResult, FlowFamilyDecomposition, closedness_check,
                              cycle_integrals, decompose_flow_family, decompose_symplectic_field,
                              exact_primitive)
from .homological import (HomologicalSolution, bracket_with_integrable, near_resonance_quotient,
                          nonresonance_test, orbit_average_criterion, residual_of_solution,
                          solve_first_order)
from .integrable_core import (IntegrableHamiltonian, frequency_vector, locate_resonance_set,
                              nondegeneracy_report, omega_k, small_divisor_constants,
                              certify_small_divisors)
from .torus_fourier import (ActionBox, SpectralField, decay_report, evaluate_field,
                            forward_transform, inverse_transform, multiply)
from .verify import ScalingReport, hamiltonian_flow, scaling_test

__version__ = "0.1.0"

__all__ = [
    "ActionBox",
    "CertificationError",
    "ConfigError",
    "DecompositionResult",
    "DegeneracyError",
    "DimensionError",
    "DomainError",
    "FlowFamilyDecomposition",
    "HomologicalSolution",
    "IntegrableHamiltonian",
    "InvalidModeError",
    "MathematicalRejection",
    "NFTKError",
    "NonClosedInputError",
    "NonSymplecticInputError",
    "OneFormField",
    "PeriodicTorus",
    "PreconditionError",
    "ResonanceError",
    "ScalingReport",
    "SmallDivisorError",
    "SpectralField",
    "StiffnessError",
    "SymmetryError",
    "VectorFieldSample",
    "bracket_with_integrable",
    "certify_small_divisors",
    "closedness_check",
    "cycle_integrals",
    "decay_report",
    "decompose_flow_family",
    "decompose_symplectic_field",
    "differential",
    "evaluate_field",
    "exact_primitive",
    "flat",
    "forward_transform",
    "frequency_vector",
    "hamiltonian_flow",
    "hamiltonian_vector_field",
    "interior",
    "inverse_transform",
    "is_periodic_torus",
    "locate_resonance_set",
    "multiply",
    "near_resonance_quotient",
    "nondegeneracy_report",
    "nonresonance_test",
    "omega_k",
    "orbit_average",
    "orbit_average_criterion",
    "residual_of_solution",
    "scaling_test",
    "sharp",
    "small_divisor_constants",
    "solve_first_order",
    "vertical_average",
    "vertical_average_oneform",
    "vertical_average_vector",
    "__version__",
]
