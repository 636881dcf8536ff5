"""pytest configuration for the calderon_lab unit tests.

The acceptance hooks (pytest_addoption, pytest_configure, pytest_generate_tests)
are registered through the package's pytest11 entry point; this file only
makes ``src/`` importable and shares meshes between test modules.
"""

import math
import sys
from pathlib import Path

import pytest

# Add src to path for development (when not installed)
src_path = Path(__file__).parent.parent / "src"
if src_path.exists():
    sys.path.insert(0, str(src_path))

from calderon_lab.geometry import (  # noqa: E402
    GammaSpec,
    MeshDomain,
    Shape,
    augment_domain,
    compute_rho_sets,
    generate_mesh,
)


@pytest.fixture(scope="session")
def disk_mesh() -> MeshDomain:
    """Coarse unit disk with Γ the whole circle."""
    return generate_mesh(Shape.UNIT_DISK, 0.1, GammaSpec.full_boundary())


@pytest.fixture(scope="session")
def upper_disk_mesh() -> MeshDomain:
    """Coarse unit disk with Γ the upper half circle."""
    return generate_mesh(Shape.UNIT_DISK, 0.1, GammaSpec.arc(0.0, math.pi))


@pytest.fixture(scope="session")
def square_mesh() -> MeshDomain:
    """Coarse unit square with Γ its top side."""
    return generate_mesh(Shape.UNIT_SQUARE, 0.1, GammaSpec.side("top"))


@pytest.fixture(scope="session")
def upper_disk_domain(upper_disk_mesh):
    """(mesh, rho_sets, augmented domain) for the upper arc with ρ = 1.2."""
    rho_sets = compute_rho_sets(upper_disk_mesh, 1.2)
    return upper_disk_mesh, rho_sets, augment_domain(upper_disk_mesh, rho_sets)
