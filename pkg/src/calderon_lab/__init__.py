"""Calderón Lab.

Finite element experiments on boundary determination of anisotropic
conductivities from local Dirichlet-to-Neumann and Neumann-to-Dirichlet maps.

Quick Start:
    calderon-lab recover --config recover.yaml --out results
    calderon-lab verify

    # Or run the bundled acceptance checks through pytest:
    pytest --pyargs calderon_lab

Programmatic Usage:
    from calderon_lab import GammaSpec, Shape, generate_mesh, maps

    mesh = generate_mesh(Shape.UNIT_DISK, 0.05, GammaSpec.arc(0.0, 3.14159))
    space = maps.build_trace_space(mesh, maps.SpaceKind.H_HALF_CO)
"""

from . import fem, maps, recovery, singular
from .conductivity import (
    Conductivity,
    ConductivityModel,
    Family,
    MatrixField,
    ScalarCoefficient,
    expression_coefficient,
    verify_class_H,
)
from .config import ExperimentConfig, load_config, validate_experiment
from .errors import ConfigError, NonMonotoneEstimates, NumericFailure
from .geometry import (
    GammaSpec,
    MeshDomain,
    Shape,
    augment_domain,
    compute_rho_sets,
    generate_mesh,
    place_singularity,
)
from .plugin import discover_check_suites, get_checks_dir
from .runner import CheckRunner
from .schema import CheckCase, CheckSuite, Expectation, validate_check_suite

__version__ = "0.1.0"

__all__ = [
    # Modules
    "fem",
    "maps",
    "recovery",
    "singular",
    # Geometry
    "GammaSpec",
    "MeshDomain",
    "Shape",
    "augment_domain",
    "compute_rho_sets",
    "generate_mesh",
    "place_singularity",
    # Conductivity
    "Conductivity",
    "ConductivityModel",
    "Family",
    "MatrixField",
    "ScalarCoefficient",
    "expression_coefficient",
    "verify_class_H",
    # Configuration
    "ExperimentConfig",
    "load_config",
    "validate_experiment",
    # Errors
    "ConfigError",
    "NumericFailure",
    "NonMonotoneEstimates",
    # Checks
    "CheckRunner",
    "CheckSuite",
    "CheckCase",
    "Expectation",
    "validate_check_suite",
    "discover_check_suites",
    "get_checks_dir",
]
