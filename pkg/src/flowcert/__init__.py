"""Certified convex inner approximations of AC power-flow security regions."""

from .netio import (
    Bus,
    Branch,
    CaseError,
    EdgeAdmittanceStructure,
    PowerNetwork,
    build_edge_admittances,
    bus_admittance_matrix,
    load_case,
    parse_matpower,
)
from .powerflow import (
    FeasibilityReport,
    LimitSet,
    NoConvergence,
    OperatingPoint,
    check_point_feasible,
    default_limits,
    ray_boundary,
    solve_at_injection,
    solve_base,
)
from .model import FixedPointModel, InputSet, SingularJacobianError, build_model, split_pm
from .bounds import (
    BoundPair,
    CapExceededError,
    RelaxationCaps,
    delta2_bounds,
    linear_bounds,
    mccormick,
    product_bounds,
    sigma,
    tau,
    univariate_bounds,
)
from .certifier import (
    Certificate,
    InfeasibleCertificate,
    Objective,
    ZeroCertificate,
    certify_fixed_u,
    chance_score,
    injection_box,
    lp_relaxation_init,
    maximize,
    operational_holds,
    self_map_holds,
    verify_brouwer,
)
from .validator import (
    CrossSection,
    ValidationReport,
    covering_ratio,
    monte_carlo_soundness,
    tightness,
    trace_cross_section,
)

__version__ = "0.1.0"
