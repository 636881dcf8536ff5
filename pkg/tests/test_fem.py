"""Tests for P1 assembly, the Dirichlet/Neumann solvers and point sources."""

import io
import math

import numpy as np
import pytest

from calderon_lab import fem
from calderon_lab.errors import (
    ConfigError,
    EvalAtSingularity,
    IncompatibleFlux,
    SingularSystem,
    SourceTooCloseToBoundary,
)

ANISOTROPIC = np.array([[2.0, 0.3], [0.3, 1.0]])


def _linear(points: np.ndarray) -> np.ndarray:
    return points[:, 0] + 2.0 * points[:, 1]


def test_global_matrices_reproduce_measures(disk_mesh) -> None:
    ones = np.ones(disk_mesh.vertex_count)
    area = disk_mesh.areas.sum()
    assert (fem.assemble_mass(disk_mesh) @ ones).sum() == pytest.approx(area)
    boundary_mass = fem.boundary_mass_matrix(disk_mesh)
    assert (boundary_mass @ ones).sum() == pytest.approx(disk_mesh.boundary_length)
    stiffness = fem.assemble_stiffness(disk_mesh, ANISOTROPIC)
    assert np.abs(stiffness @ ones).max() == pytest.approx(0.0, abs=1e-10)
    assert abs(stiffness - stiffness.T).max() == pytest.approx(0.0, abs=1e-12)


def test_boundary_load_of_unit_density(disk_mesh) -> None:
    load = fem.boundary_load(disk_mesh, lambda x: np.ones(x.shape[0]))
    assert load.sum() == pytest.approx(disk_mesh.boundary_length)
    interior = np.setdiff1d(np.arange(disk_mesh.vertex_count), disk_mesh.boundary_vertices)
    assert np.all(load[interior] == 0)


@pytest.mark.parametrize(
    "sigma",
    [
        pytest.param(np.eye(2), id="identity"),
        pytest.param(ANISOTROPIC, id="anisotropic"),
    ],
)
def test_dirichlet_reproduces_linear_solutions(disk_mesh, sigma: np.ndarray) -> None:
    field = fem.solve_dirichlet(disk_mesh, sigma, _linear)
    assert field.kind is fem.FieldKind.POTENTIAL
    assert field.nodal_values == pytest.approx(_linear(disk_mesh.vertices), abs=1e-10)
    assert field.stats is not None
    assert field.stats.solver is fem.SolverKind.DIRECT_LU
    assert field.stats.residual_norm < 1e-10


def test_energy_and_norms_of_linear_field(disk_mesh) -> None:
    field = fem.FemField(disk_mesh, disk_mesh.vertices[:, 0].copy())
    area = disk_mesh.areas.sum()
    assert fem.energy(field, np.eye(2)) == pytest.approx(area)
    assert fem.energy(field, ANISOTROPIC) == pytest.approx(2.0 * area)
    assert fem.l2_norm(field) == pytest.approx(math.sqrt(math.pi / 4.0), abs=0.01)
    assert fem.h1_norm(field) ** 2 == pytest.approx(fem.l2_norm(field) ** 2 + area)
    assert fem.l2_norm(field, np.empty(0, dtype=int)) == 0.0


def test_neumann_recovers_linear_potential(disk_mesh) -> None:
    field = fem.solve_neumann(disk_mesh, np.eye(2), lambda x: x[:, 0])
    assert np.abs(field.nodal_values - disk_mesh.vertices[:, 0]).max() < 0.05
    constraint = fem.boundary_mass_matrix(disk_mesh).sum(axis=1)
    assert float(np.asarray(constraint).ravel() @ field.nodal_values) == pytest.approx(
        0.0, abs=1e-10
    )


def test_neumann_rejects_incompatible_flux(disk_mesh) -> None:
    with pytest.raises(IncompatibleFlux, match="boundary flux integrates to"):
        fem.solve_neumann(disk_mesh, np.eye(2), lambda x: np.ones(x.shape[0]))
    with pytest.raises(ConfigError, match="Neumann load needs"):
        fem.solve_neumann(disk_mesh, np.eye(2), np.zeros(3))


def test_dirichlet_rejects_wrong_trace_shape(disk_mesh) -> None:
    with pytest.raises(ConfigError, match="boundary trace needs"):
        fem.solve_dirichlet(disk_mesh, np.eye(2), np.zeros(3))


def test_element_sigma_shape_check(disk_mesh) -> None:
    with pytest.raises(ConfigError, match=r"element sigma must have shape \(T, 2, 2\)"):
        fem.element_sigma(disk_mesh, np.ones((3, 2, 2)))


def test_field_validation(disk_mesh) -> None:
    with pytest.raises(ConfigError, match="nodal values"):
        fem.FemField(disk_mesh, np.zeros(3))
    values = np.zeros(disk_mesh.vertex_count)
    values[0] = np.nan
    with pytest.raises(SingularSystem, match="non-finite"):
        fem.FemField(disk_mesh, values, fem.FieldKind.CORRECTOR)


def test_field_text_round_trip(disk_mesh) -> None:
    field = fem.FemField(disk_mesh, _linear(disk_mesh.vertices))
    loaded = fem.load_field(fem.dump_field(field), disk_mesh, fem.FieldKind.CORRECTOR)
    assert loaded.kind is fem.FieldKind.CORRECTOR
    assert np.array_equal(loaded.nodal_values, field.nodal_values)
    with pytest.raises(ConfigError, match="'field N' header"):
        fem.load_field("1.0\n", disk_mesh)
    with pytest.raises(ConfigError, match="declares 5 values, found 1"):
        fem.load_field("field 5\n1.0\n", disk_mesh)


def test_write_field_csv(disk_mesh) -> None:
    handle = io.StringIO()
    fem.write_field_csv(fem.FemField(disk_mesh, _linear(disk_mesh.vertices)), handle)
    rows = handle.getvalue().splitlines()
    assert rows[0] == "node_id,x,y,value"
    assert len(rows) == disk_mesh.vertex_count + 1
    node, x, y, value = rows[1].split(",")
    assert node == "0"
    assert float(value) == pytest.approx(float(x) + 2.0 * float(y))


def test_integrate_adaptive_preserves_area(disk_mesh) -> None:
    triangles = np.arange(disk_mesh.triangle_count)
    pieces = fem.integrate_adaptive(
        disk_mesh,
        triangles,
        lambda points, parents: np.ones(points.shape[:2]),
        (0.05, 0.03),
        radius=0.5,
    )
    assert pieces == pytest.approx(disk_mesh.areas)


def test_p1_values_at_quadrature_points(disk_mesh) -> None:
    parents = np.arange(5)
    corners = disk_mesh.vertices[disk_mesh.triangles[parents]]
    points = corners.mean(axis=1)[:, None, :]
    values = fem.p1_values_at(disk_mesh, _linear(disk_mesh.vertices), points, parents)
    assert values[:, 0] == pytest.approx(_linear(points[:, 0]))


def test_point_source_vanishes_on_boundary(disk_mesh) -> None:
    total, remainder, term = fem.solve_point_source_dirichlet(disk_mesh, np.eye(2), (0.05, 0.03))
    boundary = disk_mesh.boundary_vertices
    assert total.nodal_values[boundary] == pytest.approx(0.0, abs=1e-12)
    assert remainder.kind is fem.FieldKind.GREEN_REMAINDER
    assert term.z == pytest.approx((0.05, 0.03))


@pytest.mark.parametrize(
    "z,error,match",
    [
        pytest.param((0.0, 0.0), EvalAtSingularity, "coincides with a mesh vertex", id="vertex"),
        pytest.param((1.5, 0.0), SourceTooCloseToBoundary, "outside the mesh", id="outside"),
        pytest.param((0.95, 0.0), SourceTooCloseToBoundary, "from the boundary", id="near"),
    ],
)
def test_point_source_placement_errors(disk_mesh, z, error, match) -> None:
    with pytest.raises(error, match=match):
        fem.solve_point_source_dirichlet(disk_mesh, np.eye(2), z)
