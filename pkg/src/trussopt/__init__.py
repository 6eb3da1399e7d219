"""Robust truss topology optimization under uncertain loads.

The package finds minimum-compliance trusses on ground structures when
the load is only known to lie in an ellipsoid whose shape follows the
set of connected nodes.  Ingredients: a ground-structure model, exact
worst-case compliance oracles, a dense conic interior-point solver, a
penalty convex-concave procedure for the complementarity formulation,
and a branch-and-bound global solver for small instances.
"""

from .model import (
    GroundStructure,
    Member,
    Node,
    detect_overlaps,
    generate_ground_structure,
    ground_structure_from_lists,
    incidence_matrices,
)
from .mechanics import (
    DesignBounds,
    LoadUncertaintyModel,
    assemble_stiffness,
    compliance,
    robustness_lmi_block,
    uncertainty_matrix,
    worst_case_compliance,
    worst_case_compliance_bisection,
    worst_case_compliance_oracle,
)
from .conic import (
    ComplianceBlock,
    ConicProblem,
    ConicSolution,
    GenericPsdBlock,
    ToleranceSet,
    dump_problem,
    solve,
    solve_nominal,
)
from .robust_ccp import (
    CcpParams,
    CcpState,
    FeasibleSet,
    TrussSolution,
    ccp_solve,
    nodes_from_design,
    solve_fixed_s,
)

__all__ = [
    "GroundStructure",
    "Member",
    "Node",
    "detect_overlaps",
    "generate_ground_structure",
    "ground_structure_from_lists",
    "incidence_matrices",
    "DesignBounds",
    "LoadUncertaintyModel",
    "assemble_stiffness",
    "compliance",
    "robustness_lmi_block",
    "uncertainty_matrix",
    "worst_case_compliance",
    "worst_case_compliance_bisection",
    "worst_case_compliance_oracle",
    "ComplianceBlock",
    "ConicProblem",
    "ConicSolution",
    "GenericPsdBlock",
    "ToleranceSet",
    "dump_problem",
    "solve",
    "solve_nominal",
    "CcpParams",
    "CcpState",
    "FeasibleSet",
    "TrussSolution",
    "ccp_solve",
    "nodes_from_design",
    "solve_fixed_s",
]

__version__ = "0.1.0"
