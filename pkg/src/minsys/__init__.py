"""Solver and geometric audits for the minimal surface system of graphs.

Submodules
----------
pointwise
    Geometry of a single Jacobian: SVD, norms, metric, frames, shape tensor.
grid
    Box domains, grid fields, boundary data, finite-difference jets, presets.
calculus
    Residuals, Laplace-Beltrami operator, volume and node geometry of a field.
solvers
    Mean curvature flow relaxation and damped Newton for the Dirichlet problem.
diagnostics
    Audits of the area-decreasing condition and the ``*Omega`` identities.
cli
    Batch front end.
"""
from .calculus import (
    divergence_residual,
    geometry_field,
    laplace_beltrami,
    mcf_velocity,
    residual_field,
    second_fundamental_form,
    volume,
)
from .diagnostics import (
    AuditReport,
    area_decreasing_audit,
    gauss_map_audit,
    gradient_bound_report,
    identity_check,
    min_principle_check,
    run_audits,
    superharmonicity_check,
)
from .errors import (
    BoundaryNodeError,
    ConfigError,
    DimensionError,
    DivergenceError,
    FieldFormatError,
    GridTooCoarseError,
    MinsysError,
    PreconditionError,
    SingularLinearizationError,
    StagnationError,
    UnknownPresetError,
)
from .grid import (
    BoundaryData,
    GridDomain,
    JetSample,
    VectorField,
    compute_jet,
    read_field_csv,
    sample_preset,
    write_field_csv,
)
from .pointwise import (
    adapted_frames,
    grassmann_forms,
    identity_rhs,
    metric,
    op_norm,
    shape_tensor,
    svd,
    wedge2_norm,
)
from .solvers import SolveConfig, SolveReport, harmonic_extension, mcf_solve, mcf_step, newton_solve, solve

__version__ = "0.1.0"

__all__ = [
    "adapted_frames",
    "area_decreasing_audit",
    "AuditReport",
    "BoundaryData",
    "BoundaryNodeError",
    "compute_jet",
    "ConfigError",
    "DimensionError",
    "divergence_residual",
    "DivergenceError",
    "FieldFormatError",
    "gauss_map_audit",
    "geometry_field",
    "gradient_bound_report",
    "grassmann_forms",
    "GridDomain",
    "GridTooCoarseError",
    "harmonic_extension",
    "identity_check",
    "identity_rhs",
    "JetSample",
    "laplace_beltrami",
    "mcf_solve",
    "mcf_step",
    "mcf_velocity",
    "metric",
    "min_principle_check",
    "MinsysError",
    "newton_solve",
    "op_norm",
    "PreconditionError",
    "read_field_csv",
    "residual_field",
    "run_audits",
    "sample_preset",
    "second_fundamental_form",
    "shape_tensor",
    "SingularLinearizationError",
    "solve",
    "SolveConfig",
    "SolveReport",
    "StagnationError",
    "superharmonicity_check",
    "svd",
    "UnknownPresetError",
    "VectorField",
    "volume",
    "wedge2_norm",
    "write_field_csv",
]
