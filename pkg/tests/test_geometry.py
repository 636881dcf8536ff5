"""Tests for meshes, Γ_ρ collars, the augmented domain and singularity placement."""

import math

import numpy as np
import pytest

from calderon_lab.errors import ConfigError, EmptyGammaRho, MeshGenerationError, TauTooLarge
from calderon_lab.geometry import (
    GammaSpec,
    LipschitzDescriptor,
    Shape,
    augment_domain,
    boundary_param,
    compute_rho_sets,
    dump_mesh,
    generate_mesh,
    load_mesh,
    place_singularity,
    rho_collar_report,
)


def test_disk_mesh_area_and_perimeter(disk_mesh) -> None:
    assert np.all(disk_mesh.areas > 0)
    assert disk_mesh.areas.sum() == pytest.approx(math.pi, abs=0.01)
    assert disk_mesh.boundary_length == pytest.approx(2.0 * math.pi, abs=0.01)
    assert disk_mesh.gamma_closed
    assert np.all(np.isinf(disk_mesh.gamma_end_distance))
    assert disk_mesh.delta_vertices.size == 0


def test_upper_arc_gamma_chain(upper_disk_mesh) -> None:
    assert not upper_disk_mesh.gamma_closed
    assert upper_disk_mesh.gamma_length == pytest.approx(math.pi, abs=0.01)
    chain = upper_disk_mesh.gamma_closure_vertices
    ends = upper_disk_mesh.vertices[chain[[0, -1]]]
    assert ends[0] == pytest.approx([1.0, 0.0], abs=1e-12)
    assert ends[1] == pytest.approx([-1.0, 0.0], abs=1e-12)
    assert upper_disk_mesh.gamma_interior_vertices.size == chain.size - 2
    assert np.all(upper_disk_mesh.vertices[upper_disk_mesh.delta_vertices][:, 1] < 1e-12)


def test_square_top_side(square_mesh) -> None:
    assert square_mesh.gamma_length == pytest.approx(1.0)
    top = square_mesh.vertices[square_mesh.gamma_interior_vertices]
    assert top[:, 1] == pytest.approx(np.ones(top.shape[0]))
    for vertex in square_mesh.gamma_interior_vertices:
        assert square_mesh.vertex_normals[int(vertex)] == pytest.approx([0.0, 1.0])


def test_boundary_edges_have_outward_normals(disk_mesh) -> None:
    midpoints = 0.5 * (
        disk_mesh.vertices[disk_mesh.boundary_edges[:, 0]]
        + disk_mesh.vertices[disk_mesh.boundary_edges[:, 1]]
    )
    assert np.all(np.einsum("ij,ij->i", midpoints, disk_mesh.edge_normals) > 0)


@pytest.mark.parametrize(
    "point,expected",
    [
        pytest.param((0.5, 0.0), 0.5, id="bottom"),
        pytest.param((1.0, 0.5), 1.5, id="right"),
        pytest.param((0.5, 1.0), 2.5, id="top"),
        pytest.param((0.0, 0.5), 3.5, id="left"),
    ],
)
def test_square_boundary_param(point: tuple[float, float], expected: float) -> None:
    assert boundary_param(Shape.UNIT_SQUARE, np.array(point))[0] == pytest.approx(expected)


def test_gamma_arc_contains() -> None:
    gamma = GammaSpec.arc(0.0, math.pi)
    inside = gamma.contains(np.array([0.1, 1.5, 3.0, 3.5, 6.0]), 2.0 * math.pi)
    assert inside.tolist() == [True, True, True, False, False]
    assert GammaSpec.side("left") == GammaSpec.arc(3.0, 4.0)


def test_interpolation_reproduces_linear_functions(disk_mesh) -> None:
    values = disk_mesh.vertices[:, 0] + 2.0 * disk_mesh.vertices[:, 1]
    points = np.array([[0.1, 0.2], [-0.5, 0.3], [0.0, -0.8], [0.6, 0.6]])
    expected = points[:, 0] + 2.0 * points[:, 1]
    assert disk_mesh.interpolate(values, points) == pytest.approx(expected, abs=1e-12)
    assert np.isnan(disk_mesh.interpolate(values, np.array([[2.0, 0.0]]))[0])


@pytest.mark.parametrize(
    "shape,h_mesh,gamma,error,match",
    [
        pytest.param(
            Shape.UNIT_DISK, 0.0, GammaSpec.full_boundary(), ConfigError, "must be positive",
            id="zero-h",
        ),
        pytest.param(
            Shape.AUGMENTED, 0.1, GammaSpec.full_boundary(), ConfigError, "cannot generate",
            id="augmented",
        ),
        pytest.param(
            Shape.UNIT_DISK, 0.2, GammaSpec.arc(0.0, 0.3), MeshGenerationError,
            "exceeds half the arc length", id="short-arc",
        ),
        pytest.param(
            Shape.UNIT_SQUARE, 0.1, GammaSpec.arc(0.0, 4.0), ConfigError,
            "below the perimeter", id="arc-is-perimeter",
        ),
    ],
)
def test_generate_mesh_errors(shape, h_mesh, gamma, error, match) -> None:
    with pytest.raises(error, match=match):
        generate_mesh(shape, h_mesh, gamma)


def test_lipschitz_descriptor() -> None:
    assert LipschitzDescriptor(L=1.0, r=0.5, h=0.5).c_lower == pytest.approx(1.0 / math.sqrt(2.0))
    with pytest.raises(ConfigError, match="h >= L\\*r"):
        LipschitzDescriptor(L=2.0, r=0.5, h=0.5)


def test_rho_sets_on_upper_arc(upper_disk_domain) -> None:
    mesh, rho_sets, _ = upper_disk_domain
    assert rho_sets.rho0 == pytest.approx(0.5 * mesh.gamma_length)
    angles = np.arctan2(
        mesh.vertices[rho_sets.gamma_rho_vertices, 1],
        mesh.vertices[rho_sets.gamma_rho_vertices, 0],
    )
    assert np.all(angles > 1.2)
    assert np.all(angles < math.pi - 1.2)
    assert rho_sets.contains(np.array([[0.0, 1.1], [1.0, 0.0]])).tolist() == [True, False]
    assert rho_sets.u_rho.size > 0


def test_rho_sets_errors(upper_disk_mesh) -> None:
    with pytest.raises(EmptyGammaRho, match="is not below rho0"):
        compute_rho_sets(upper_disk_mesh, 2.0)
    with pytest.raises(ConfigError, match="rho must be positive"):
        compute_rho_sets(upper_disk_mesh, 0.0)


def test_rho_sets_on_closed_gamma(disk_mesh) -> None:
    rho_sets = compute_rho_sets(disk_mesh, 1.2)
    assert rho_sets.rho0 == pytest.approx(0.5 * disk_mesh.gamma_length)
    assert rho_sets.rho0 == pytest.approx(math.pi, abs=0.01)
    assert rho_sets.gamma_rho_vertices.size == disk_mesh.gamma_chain[0].size
    with pytest.raises(EmptyGammaRho, match="is not below rho0"):
        compute_rho_sets(disk_mesh, 3.2)


def test_augmented_domain_extends_omega(upper_disk_domain) -> None:
    mesh, rho_sets, aug = upper_disk_domain
    assert aug.thickness == 1.2
    assert aug.mesh.vertices[: mesh.vertex_count] == pytest.approx(mesh.vertices)
    assert aug.bump_triangles.size > 0
    assert np.all(aug.mesh.areas > 0)
    assert aug.mesh.areas[aug.omega_triangles].sum() == pytest.approx(mesh.areas.sum())
    assert aug.s_patch.size > 0
    report = rho_collar_report(aug, rho_sets)
    assert report.collar_ok
    assert report.patch_ok


def test_augment_domain_rejects_thin_bump(upper_disk_domain) -> None:
    mesh, rho_sets, _ = upper_disk_domain
    with pytest.raises(ConfigError, match="below rho/2"):
        augment_domain(mesh, rho_sets, thickness=0.5)


def test_place_singularity(upper_disk_domain) -> None:
    mesh, rho_sets, _ = upper_disk_domain
    placement = place_singularity(mesh, (0.0, 1.0), 0.1, rho_sets)
    assert placement.tau0 == pytest.approx(0.15)
    assert placement.z_tau == pytest.approx((0.0, 1.1), abs=1e-12)
    assert placement.nu_tilde == pytest.approx((0.0, 1.0), abs=1e-12)
    assert placement.boundary_distance == pytest.approx(0.1, abs=1e-9)
    assert placement.c_lower * placement.tau <= placement.boundary_distance


def test_place_singularity_errors(upper_disk_domain) -> None:
    mesh, rho_sets, _ = upper_disk_domain
    with pytest.raises(TauTooLarge, match="exceeds tau0"):
        place_singularity(mesh, (0.0, 1.0), 0.2, rho_sets)
    with pytest.raises(TauTooLarge, match="on the boundary"):
        place_singularity(mesh, (0.0, 1.0), 0.0, rho_sets)
    with pytest.raises(ConfigError, match="does not lie on the closure of Gamma_rho"):
        place_singularity(mesh, (0.0, -1.0), 0.1, rho_sets)


def test_mesh_text_round_trip(upper_disk_mesh) -> None:
    loaded = load_mesh(dump_mesh(upper_disk_mesh))
    assert loaded.shape is Shape.LOADED
    assert np.array_equal(loaded.triangles, upper_disk_mesh.triangles)
    assert np.array_equal(loaded.edge_is_gamma, upper_disk_mesh.edge_is_gamma)
    assert loaded.mesh_hash() == upper_disk_mesh.mesh_hash()


@pytest.mark.parametrize(
    "text,match",
    [
        pytest.param("v 0 0\n", "lacks the 'meshdomain' header", id="no-header"),
        pytest.param("meshdomain 2 1 0.5 0.5\n", "unsupported mesh format version 2",
                     id="version"),
        pytest.param("meshdomain 1 1 0.5 0.5\nq 1\n", "unknown mesh record 'q'", id="record"),
        pytest.param("meshdomain 1 1 0.5 0.5\nv 0\n", "malformed mesh record on line 2",
                     id="short-vertex"),
    ],
)
def test_load_mesh_errors(text: str, match: str) -> None:
    with pytest.raises(ConfigError, match=match):
        load_mesh(text)
