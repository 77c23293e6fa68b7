"""tqolab: a numerical laboratory for commuting-projector lattice models.

Core capabilities: exact stabilizer algebra over GF(2) with phase tracking,
topological-order condition checks (reduced-density and subgroup criteria),
low-lying spectra and perturbative band verification, flow-equation block
diagonalization with decay-class bookkeeping, and Lieb-Robinson /
quasi-adiabatic continuation experiments at desk scale.
"""

__version__ = "0.1.0"

from .pauli import (
    PauliOperator,
    StabilizerGroup,
    commutes,
    contains,
    generated_subgroup,
    group_leq,
    minimum_distance,
    multiply,
    supported_subgroup,
    symplectic_product,
)
from .lattice import Lattice, Square
from .models import (
    HamiltonianOperator,
    Model,
    build_ising_chain,
    build_toric_code,
    build_unstable_toric_code,
    load_model,
    parse_model,
    toric_logical_pair,
)
from .dense import ResourceCapError
from .tqo import (
    TqoReport,
    check_tqo1_exact_all,
    check_tqo1_stabilizer,
    check_tqo2_exact_all,
    check_tqo2_stabilizer,
    default_l_star,
    ground_projector,
)
from .spectral import (
    SpectralReport,
    fit_c1,
    low_spectrum,
    make_spectral_report,
    relative_bound,
    sector_gap_sweep,
    spectrum_containment_check,
    verify_bands,
)
from .decompositions import DecayClass, InteractionTerm, LocalDecomposition
from .flow import (
    FlowBreakdownError,
    FlowDivergenceError,
    FlowState,
    e_super,
    flow_step,
    initial_flow_state,
    scalar_flow,
    scalar_flow_closed_form,
    second_order_remainder,
    solve_linearized,
)
from .locality import (
    ContinuationPath,
    FilterFunction,
    GapClosedError,
    build_filter,
    continue_projector,
    dress_operator,
    dressed_locality_profile,
    front_arrival_time,
    lr_commutator_norm,
    lr_commutator_profile,
)
from .perturbations import PerturbationSpec, random_perturbation
from .cli import RunConfig

__all__ = [
    "PauliOperator",
    "StabilizerGroup",
    "commutes",
    "contains",
    "generated_subgroup",
    "group_leq",
    "minimum_distance",
    "multiply",
    "supported_subgroup",
    "symplectic_product",
    "Lattice",
    "Square",
    "HamiltonianOperator",
    "Model",
    "build_ising_chain",
    "build_toric_code",
    "build_unstable_toric_code",
    "load_model",
    "parse_model",
    "toric_logical_pair",
    "ResourceCapError",
    "TqoReport",
    "check_tqo1_exact_all",
    "check_tqo1_stabilizer",
    "check_tqo2_exact_all",
    "check_tqo2_stabilizer",
    "default_l_star",
    "ground_projector",
    "SpectralReport",
    "fit_c1",
    "low_spectrum",
    "make_spectral_report",
    "relative_bound",
    "sector_gap_sweep",
    "spectrum_containment_check",
    "verify_bands",
    "DecayClass",
    "InteractionTerm",
    "LocalDecomposition",
    "FlowBreakdownError",
    "FlowDivergenceError",
    "FlowState",
    "e_super",
    "flow_step",
    "initial_flow_state",
    "scalar_flow",
    "scalar_flow_closed_form",
    "second_order_remainder",
    "solve_linearized",
    "ContinuationPath",
    "FilterFunction",
    "GapClosedError",
    "build_filter",
    "continue_projector",
    "dress_operator",
    "dressed_locality_profile",
    "front_arrival_time",
    "lr_commutator_norm",
    "lr_commutator_profile",
    "PerturbationSpec",
    "random_perturbation",
    "RunConfig",
]
