"""P1 finite elements for div(σ∇u) = 0 and its point-source variant."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Protocol, TextIO, Union

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .conductivity import (
    TRIANGLE_RULE_POINTS,
    TRIANGLE_RULE_WEIGHTS,
    Conductivity,
    triangle_quadrature_points,
)
from .errors import (
    ConfigError,
    EvalAtSingularity,
    IncompatibleFlux,
    SingularSystem,
    SourceTooCloseToBoundary,
)
from .geometry import AugmentedDomain, MeshDomain, SingularityPlacement

if TYPE_CHECKING:
    from .singular import LeadingTerm

logger = logging.getLogger(__name__)

DIRECT_DOF_LIMIT = 50_000
ITERATIVE_RTOL = 1e-12
_P1_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
_EDGE_GAUSS = (
    np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)]),
    np.array([5.0, 8.0, 5.0]) / 18.0,
)

SigmaLike = Union[Conductivity, Callable[[np.ndarray], np.ndarray], np.ndarray]
BoundaryData = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


class FieldKind(str, Enum):
    POTENTIAL = "potential"
    CORRECTOR = "corrector"
    GREEN_REMAINDER = "green_remainder"


class SolverKind(str, Enum):
    DIRECT_LU = "direct_lu"
    CONJUGATE_GRADIENT = "conjugate_gradient"
    MINRES = "minres"


@dataclass(frozen=True)
class LinearSystemStats:
    dof_count: int
    solver: SolverKind
    residual_norm: float  # max over right-hand sides of ‖Ax − b‖ / ‖b‖
    condition_estimate: float


@dataclass(frozen=True, eq=False)
class FemField:
    mesh: MeshDomain
    nodal_values: np.ndarray
    kind: FieldKind = FieldKind.POTENTIAL
    stats: LinearSystemStats | None = None

    def __post_init__(self) -> None:
        if self.nodal_values.shape != (self.mesh.vertex_count,):
            raise ConfigError(
                f"field needs {self.mesh.vertex_count} nodal values, "
                f"got shape {self.nodal_values.shape}"
            )
        if not np.all(np.isfinite(self.nodal_values)):
            raise SingularSystem(f"{self.kind.value} field has non-finite nodal values")

    def gradients(self) -> np.ndarray:
        """(T, 2) piecewise-constant gradient."""
        local = self.nodal_values[self.mesh.triangles]
        return np.einsum("tij,ti->tj", self.mesh.basis_gradients, local)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.mesh.interpolate(self.nodal_values, points)


class SingularTerm(Protocol):
    z: tuple[float, float]

    def value_and_gradient(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


def element_sigma(mesh: MeshDomain, sigma: SigmaLike) -> np.ndarray:
    """(T, 2, 2) element means of σ."""
    if isinstance(sigma, np.ndarray):
        if sigma.shape == (2, 2):
            return np.broadcast_to(sigma, (mesh.triangle_count, 2, 2)).copy()
        if sigma.shape != (mesh.triangle_count, 2, 2):
            raise ConfigError(f"element sigma must have shape (T, 2, 2), got {sigma.shape}")
        return sigma
    if isinstance(sigma, Conductivity):
        return sigma.element_average(mesh)
    points = triangle_quadrature_points(mesh).reshape(-1, 2)
    values = np.asarray(sigma(points)).reshape(mesh.triangle_count, -1, 2, 2)
    return np.einsum("q,tqij->tij", TRIANGLE_RULE_WEIGHTS, values)


def _scatter(mesh: MeshDomain, local: np.ndarray) -> sparse.csr_matrix:
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.vertex_count
    return sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(mesh: MeshDomain, sigma: SigmaLike) -> sparse.csr_matrix:
    sigma_bar = element_sigma(mesh, sigma)
    grads = mesh.basis_gradients
    local = mesh.areas[:, None, None] * np.einsum("tia,tab,tjb->tij", grads, sigma_bar, grads)
    return _scatter(mesh, local)


def assemble_mass(mesh: MeshDomain) -> sparse.csr_matrix:
    return _scatter(mesh, mesh.areas[:, None, None] * _P1_MASS[None, :, :])


def boundary_mass_matrix(mesh: MeshDomain, edges: np.ndarray | None = None) -> sparse.csr_matrix:
    """Exact P1 mass of the boundary edges, as an N×N matrix."""
    edges = np.arange(mesh.boundary_edges.shape[0]) if edges is None else edges
    ends = mesh.boundary_edges[edges]
    lengths = mesh.edge_lengths[edges]
    local = lengths[:, None, None] * (np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0)[None]
    rows = np.repeat(ends, 2, axis=1).ravel()
    cols = np.tile(ends, (1, 2)).ravel()
    n = mesh.vertex_count
    return sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def boundary_stiffness_matrix(mesh: MeshDomain) -> sparse.csr_matrix:
    """P1 stiffness of the tangential derivative along ∂Ω, as an N×N matrix."""
    ends = mesh.boundary_edges
    local = (1.0 / mesh.edge_lengths)[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])[None]
    rows = np.repeat(ends, 2, axis=1).ravel()
    cols = np.tile(ends, (1, 2)).ravel()
    n = mesh.vertex_count
    return sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def boundary_load(
    mesh: MeshDomain,
    density: Callable[[np.ndarray], np.ndarray],
    edges: np.ndarray | None = None,
) -> np.ndarray:
    """f_i = ∫ ψ φ_i over the chosen boundary edges, 3-point Gauss per edge."""
    edges = np.arange(mesh.boundary_edges.shape[0]) if edges is None else np.asarray(edges)
    nodes, weights = _EDGE_GAUSS
    a = mesh.vertices[mesh.boundary_edges[edges, 0]]
    b = mesh.vertices[mesh.boundary_edges[edges, 1]]
    points = a[:, None, :] + nodes[None, :, None] * (b - a)[:, None, :]
    values = np.asarray(density(points.reshape(-1, 2))).reshape(edges.size, nodes.size)
    scaled = values * weights[None, :] * mesh.edge_lengths[edges, None]
    load = np.zeros(mesh.vertex_count)
    np.add.at(load, mesh.boundary_edges[edges, 0], scaled @ (1.0 - nodes))
    np.add.at(load, mesh.boundary_edges[edges, 1], scaled @ nodes)
    return load


class LinearSolver:
    """Sparse LU up to DIRECT_DOF_LIMIT unknowns, Krylov iterations above."""

    def __init__(self, matrix: sparse.spmatrix, *, positive_definite: bool) -> None:
        self.matrix = sparse.csc_matrix(matrix)
        self.dof_count = int(self.matrix.shape[0])
        self.positive_definite = positive_definite
        self._lu = None
        if self.dof_count <= DIRECT_DOF_LIMIT:
            try:
                self._lu = spla.splu(self.matrix)
            except RuntimeError as exc:
                raise SingularSystem(
                    f"factorization of a {self.dof_count}-dof system failed: {exc}"
                ) from exc
            self.kind = SolverKind.DIRECT_LU
        else:
            self.kind = (
                SolverKind.CONJUGATE_GRADIENT if positive_definite else SolverKind.MINRES
            )
        self._condition: float | None = None

    def condition_estimate(self) -> float:
        if self._condition is None:
            if self._lu is None:
                self._condition = float("nan")
            else:
                lu = self._lu
                inverse = spla.LinearOperator(
                    self.matrix.shape,
                    matvec=lu.solve,
                    rmatvec=lambda v: lu.solve(v, trans="T"),
                    dtype=float,
                )
                self._condition = float(spla.onenormest(self.matrix) * spla.onenormest(inverse))
        return self._condition

    def solve(self, rhs: np.ndarray) -> tuple[np.ndarray, LinearSystemStats]:
        rhs = np.asarray(rhs, dtype=float)
        columns = rhs.reshape(self.dof_count, -1)
        if self._lu is not None:
            solution = self._lu.solve(columns)
        else:
            solution = np.column_stack(
                [self._iterate(columns[:, k]) for k in range(columns.shape[1])]
            )
        if not np.all(np.isfinite(solution)):
            raise SingularSystem(
                f"solve of a {self.dof_count}-dof system produced non-finite values"
            )
        residual = self.matrix @ solution - columns
        scale = np.maximum(np.linalg.norm(columns, axis=0), np.finfo(float).tiny)
        relative = float((np.linalg.norm(residual, axis=0) / scale).max()) if columns.size else 0.0
        if relative > 1e-6:
            raise SingularSystem(
                f"relative residual {relative:.3e} after a {self.kind.value} solve"
            )
        logger.debug(
            "%s solve dofs=%d rhs=%d residual=%.3e",
            self.kind.value,
            self.dof_count,
            columns.shape[1],
            relative,
        )
        stats = LinearSystemStats(
            self.dof_count,
            self.kind,
            relative,
            self.condition_estimate() if self._lu is not None else float("nan"),
        )
        return solution.reshape(rhs.shape), stats

    def _iterate(self, b: np.ndarray) -> np.ndarray:
        if not np.any(b):
            return np.zeros_like(b)
        if self.positive_definite:
            x, info = spla.cg(self.matrix, b, rtol=ITERATIVE_RTOL, maxiter=20 * self.dof_count)
        else:
            x, info = spla.minres(self.matrix, b, rtol=ITERATIVE_RTOL, maxiter=20 * self.dof_count)
        if info != 0:
            raise SingularSystem(f"{self.kind.value} did not converge (info={info})")
        return x


class DirichletProblem:
    """Stiffness system with Dirichlet data on a node set, factorized once."""

    def __init__(
        self, mesh: MeshDomain, sigma: SigmaLike, fixed: np.ndarray | None = None
    ) -> None:
        self.mesh = mesh
        self.stiffness = assemble_stiffness(mesh, sigma)
        self.fixed = mesh.boundary_vertices if fixed is None else np.asarray(fixed)
        self.free = np.setdiff1d(np.arange(mesh.vertex_count), self.fixed)
        stiffness = self.stiffness.tocsr()
        self._k_ff = stiffness[self.free][:, self.free]
        self._k_fb = stiffness[self.free][:, self.fixed]
        self.solver = LinearSolver(self._k_ff, positive_definite=True)

    def solve(
        self, fixed_values: np.ndarray, load: np.ndarray | None = None
    ) -> tuple[np.ndarray, LinearSystemStats]:
        """Nodal solution(s) for values on the fixed nodes and an optional nodal load."""
        fixed_values = np.asarray(fixed_values, dtype=float)
        columns = fixed_values.reshape(self.fixed.size, -1)
        rhs = -(self._k_fb @ columns)
        if load is not None:
            rhs = rhs + np.asarray(load, dtype=float).reshape(self.mesh.vertex_count, -1)[self.free]
        interior, stats = self.solver.solve(rhs)
        out = np.zeros((self.mesh.vertex_count, columns.shape[1]))
        out[self.fixed] = columns
        out[self.free] = interior.reshape(self.free.size, -1)
        return out.reshape((self.mesh.vertex_count,) + fixed_values.shape[1:]), stats


class NeumannProblem:
    """Stiffness system with the ∫_{∂Ω} u = 0 constraint as one Lagrange row."""

    def __init__(self, mesh: MeshDomain, sigma: SigmaLike) -> None:
        self.mesh = mesh
        self.stiffness = assemble_stiffness(mesh, sigma)
        self.constraint = np.asarray(boundary_mass_matrix(mesh).sum(axis=1)).ravel()
        c = sparse.csr_matrix(self.constraint[None, :])
        saddle = sparse.bmat([[self.stiffness, c.T], [c, None]], format="csc")
        self.solver = LinearSolver(saddle, positive_definite=False)

    def solve(self, loads: np.ndarray) -> tuple[np.ndarray, LinearSystemStats]:
        loads = np.asarray(loads, dtype=float)
        columns = loads.reshape(self.mesh.vertex_count, -1)
        totals = np.abs(columns.sum(axis=0))
        scale = np.abs(columns).sum(axis=0)
        bad = totals > 1e-10 * np.maximum(scale, np.finfo(float).tiny)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise IncompatibleFlux(
                f"boundary flux integrates to {columns[:, k].sum():.3e} "
                f"(total variation {scale[k]:.3e})"
            )
        rhs = np.vstack([columns, np.zeros((1, columns.shape[1]))])
        solution, stats = self.solver.solve(rhs)
        values = solution[: self.mesh.vertex_count]
        return values.reshape(loads.shape), stats


def _trace_values(mesh: MeshDomain, g: BoundaryData) -> np.ndarray:
    boundary = mesh.boundary_vertices
    if callable(g):
        return np.asarray(g(mesh.vertices[boundary]), dtype=float)
    g = np.asarray(g, dtype=float)
    if g.shape == (mesh.vertex_count,):
        return g[boundary]
    if g.shape == (boundary.size,):
        return g
    raise ConfigError(
        f"boundary trace needs {boundary.size} boundary or {mesh.vertex_count} nodal values, "
        f"got shape {g.shape}"
    )


def solve_dirichlet(mesh: MeshDomain, sigma: SigmaLike, g: BoundaryData) -> FemField:
    """Weak solution of div(σ∇u) = 0 with u = g on ∂Ω."""
    problem = DirichletProblem(mesh, sigma)
    values, stats = problem.solve(_trace_values(mesh, g))
    return FemField(mesh, values, FieldKind.POTENTIAL, stats)


def solve_neumann(mesh: MeshDomain, sigma: SigmaLike, psi: BoundaryData) -> FemField:
    """Weak solution with σ∇u·ν = ψ on ∂Ω and ∫_{∂Ω} u = 0.

    ``psi`` is either a density (callable) or an assembled nodal load vector.
    """
    load = boundary_load(mesh, psi) if callable(psi) else np.asarray(psi, dtype=float)
    if load.shape != (mesh.vertex_count,):
        raise ConfigError(f"Neumann load needs {mesh.vertex_count} entries, got {load.shape}")
    values, stats = NeumannProblem(mesh, sigma).solve(load)
    return FemField(mesh, values, FieldKind.POTENTIAL, stats)


def frozen_coefficient_load(
    mesh: MeshDomain, sigma: SigmaLike, sigma_center: np.ndarray, term: SingularTerm
) -> np.ndarray:
    """f_i = −∫ (σ − σ(z)) ∇Φ·∇φ_i with the degree-4 rule on every triangle."""
    points = triangle_quadrature_points(mesh)
    flat = points.reshape(-1, 2)
    _, grad = term.value_and_gradient(flat)
    grad = grad.reshape(mesh.triangle_count, -1, 2)
    if isinstance(sigma, np.ndarray):
        sigma_q = np.broadcast_to(element_sigma(mesh, sigma)[:, None], grad.shape + (2,))
    else:
        sigma_q = np.asarray(sigma(flat)).reshape(mesh.triangle_count, -1, 2, 2)
    flux = np.einsum("tqab,tqb->tqa", sigma_q - sigma_center[None, None], grad)
    integral = mesh.areas[:, None] * np.einsum("q,tqa->ta", TRIANGLE_RULE_WEIGHTS, flux)
    local = -np.einsum("tia,ta->ti", mesh.basis_gradients, integral)
    load = np.zeros(mesh.vertex_count)
    np.add.at(load, mesh.triangles.ravel(), local.ravel())
    return load


def solve_singular_split(
    mesh: MeshDomain, sigma: SigmaLike, term: SingularTerm, sigma_center: np.ndarray
) -> tuple[np.ndarray, LinearSystemStats]:
    """Nodal R with div(σ∇R) = −div((σ−σ(z))∇Φ) inside and R = −Φ on the boundary."""
    boundary = mesh.boundary_vertices
    values, _ = term.value_and_gradient(mesh.vertices[boundary])
    load = frozen_coefficient_load(mesh, sigma, sigma_center, term)
    return DirichletProblem(mesh, sigma).solve(-values, load)


def solve_point_source_dirichlet(
    domain: AugmentedDomain | MeshDomain,
    sigma: SigmaLike,
    z: tuple[float, float] | np.ndarray,
    *,
    placement: SingularityPlacement | None = None,
    rho: float | None = None,
) -> tuple[FemField, FemField, LeadingTerm]:
    """G = Φ_z + R with G = 0 on the boundary; no discrete delta is assembled."""
    from .singular import fundamental_solution

    mesh = domain.mesh if isinstance(domain, AugmentedDomain) else domain
    rho = domain.rho if isinstance(domain, AugmentedDomain) else rho
    point = np.asarray(z, dtype=float).reshape(1, 2)
    distance = float(mesh.boundary_distance(point)[0])
    if not mesh.contains(point)[0]:
        raise SourceTooCloseToBoundary(f"source {tuple(point[0])} lies outside the mesh")
    if rho is not None:
        minimum = rho / 8.0 if placement is not None else rho / 4.0
    else:
        minimum = 2.0 * mesh.mesh_size
    if distance < minimum:
        raise SourceTooCloseToBoundary(
            f"source at distance {distance:.6g} from the boundary; need >= {minimum:.6g}"
        )
    nearest = float(np.linalg.norm(mesh.vertices - point, axis=1).min())
    if nearest <= 1e-10:
        raise EvalAtSingularity(f"source {tuple(point[0])} coincides with a mesh vertex")
    sigma_center = _sigma_at(mesh, sigma, point)
    term = fundamental_solution(sigma_center, point[0])
    remainder, stats = solve_singular_split(mesh, sigma, term, sigma_center)
    leading, _ = term.value_and_gradient(mesh.vertices)
    total = FemField(mesh, leading + remainder, FieldKind.POTENTIAL, stats)
    return total, FemField(mesh, remainder, FieldKind.GREEN_REMAINDER, stats), term


def _sigma_at(mesh: MeshDomain, sigma: SigmaLike, point: np.ndarray) -> np.ndarray:
    if isinstance(sigma, np.ndarray):
        if sigma.shape == (2, 2):
            return sigma
        tri, _ = mesh.locate(point)
        return sigma[int(tri[0])]
    return np.asarray(sigma(point)).reshape(2, 2)


def _region(mesh: MeshDomain, region: np.ndarray | None) -> np.ndarray:
    return np.arange(mesh.triangle_count) if region is None else np.asarray(region, dtype=int)


def l2_norm(field: FemField, region: np.ndarray | None = None) -> float:
    tri = _region(field.mesh, region)
    if tri.size == 0:
        return 0.0
    local = field.nodal_values[field.mesh.triangles[tri]]
    energy = np.einsum("ti,ij,tj->t", local, _P1_MASS, local)
    return float(np.sqrt(np.sum(field.mesh.areas[tri] * energy)))


def h1_norm(field: FemField, region: np.ndarray | None = None) -> float:
    """√(∫u² + |∇u|²) over the region by exact P1 quadrature."""
    tri = _region(field.mesh, region)
    if tri.size == 0:
        return 0.0
    grads = field.gradients()[tri]
    seminorm = np.sum(field.mesh.areas[tri] * np.einsum("ti,ti->t", grads, grads))
    return float(np.sqrt(l2_norm(field, tri) ** 2 + seminorm))


def energy(field: FemField, sigma: SigmaLike, region: np.ndarray | None = None) -> float:
    """∫ σ∇u·∇u over the region with element-averaged σ."""
    tri = _region(field.mesh, region)
    sigma_bar = element_sigma(field.mesh, sigma)[tri]
    grads = field.gradients()[tri]
    return float(np.sum(field.mesh.areas[tri] * np.einsum("ta,tab,tb->t", grads, sigma_bar, grads)))


def caccioppoli_ratio(
    field: FemField,
    omega_triangles: np.ndarray,
    z: tuple[float, float],
    tau: float,
    c_lower: float,
) -> float:
    """Measured K in ‖G‖_{H¹(Ω)} ≤ (K/τ)‖G‖_{L²(Ω_ρ∖B_{Cτ/2}(z))}."""
    outside = np.flatnonzero(
        np.linalg.norm(field.mesh.centroids - np.asarray(z), axis=1) >= 0.5 * c_lower * tau
    )
    return tau * h1_norm(field, omega_triangles) / l2_norm(field, outside)


def dump_field(field: FemField) -> str:
    return f"field {field.nodal_values.size}\n" + "".join(
        f"{v:.17g}\n" for v in field.nodal_values
    )


def load_field(text: str, mesh: MeshDomain, kind: FieldKind = FieldKind.POTENTIAL) -> FemField:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith("field "):
        raise ConfigError("field text must start with a 'field N' header")
    count = int(lines[0].split()[1])
    values = np.array([float(v) for v in lines[1:]])
    if values.size != count:
        raise ConfigError(f"field declares {count} values, found {values.size}")
    return FemField(mesh, values, kind)


def write_field_csv(field: FemField, target: Path | TextIO) -> None:
    """Write ``node_id,x,y,value`` rows."""
    if isinstance(target, Path):
        with target.open("w", newline="") as handle:
            write_field_csv(field, handle)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(["node_id", "x", "y", "value"])
    for node, ((x, y), value) in enumerate(zip(field.mesh.vertices.tolist(), field.nodal_values)):
        writer.writerow([node, f"{x:.17g}", f"{y:.17g}", f"{value:.17g}"])


def _split_triangles(corners: np.ndarray) -> np.ndarray:
    p0, p1, p2 = corners[:, 0], corners[:, 1], corners[:, 2]
    m01, m12, m20 = 0.5 * (p0 + p1), 0.5 * (p1 + p2), 0.5 * (p2 + p0)
    children = np.stack(
        [
            np.stack([p0, m01, m20], axis=1),
            np.stack([m01, p1, m12], axis=1),
            np.stack([m20, m12, p2], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ],
        axis=1,
    )
    return children.reshape(-1, 3, 2)


def integrate_adaptive(
    mesh: MeshDomain,
    triangles: np.ndarray,
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
    center: tuple[float, float] | np.ndarray,
    *,
    radius: float | None = None,
    max_depth: int = 6,
    ratio: float = 3.0,
) -> np.ndarray:
    """Per-triangle integrals with recursive 4-way refinement near ``center``.

    ``integrand(points, parents)`` receives (K, Q, 2) quadrature points and the
    (K,) originating triangle indices and returns (K, Q, ...) values. Pieces
    closer to ``center`` than ``ratio`` diameters, or straddling the circle of
    the given ``radius``, are refined up to ``max_depth`` times.
    """
    triangles = np.asarray(triangles, dtype=int)
    c = np.asarray(center, dtype=float).reshape(2)
    corners = mesh.vertices[mesh.triangles[triangles]]
    owners = np.arange(triangles.size)
    result: np.ndarray | None = None
    for depth in range(max_depth + 1):
        if corners.shape[0] == 0:
            break
        diameter = np.linalg.norm(corners - np.roll(corners, -1, axis=1), axis=2).max(axis=1)
        distance = np.linalg.norm(corners.mean(axis=1) - c, axis=1)
        near = distance < ratio * diameter
        if radius is not None:
            near |= np.abs(distance - radius) < diameter
        if depth == max_depth:
            near[:] = False
        far = ~near
        if far.any():
            piece = corners[far]
            points = np.einsum("qi,kij->kqj", TRIANGLE_RULE_POINTS, piece)
            area = 0.5 * np.abs(
                (piece[:, 1, 0] - piece[:, 0, 0]) * (piece[:, 2, 1] - piece[:, 0, 1])
                - (piece[:, 1, 1] - piece[:, 0, 1]) * (piece[:, 2, 0] - piece[:, 0, 0])
            )
            values = np.asarray(integrand(points, triangles[owners[far]]))
            contribution = np.einsum("k,q,kq...->k...", area, TRIANGLE_RULE_WEIGHTS, values)
            if result is None:
                result = np.zeros((triangles.size,) + contribution.shape[1:])
            np.add.at(result, owners[far], contribution)
        if not near.any():
            break
        corners = _split_triangles(corners[near])
        owners = np.repeat(owners[near], 4)
    if result is None:
        return np.zeros(triangles.size)
    return result


def p1_values_at(
    mesh: MeshDomain, nodal: np.ndarray, points: np.ndarray, parents: np.ndarray
) -> np.ndarray:
    """P1 values of a nodal vector at (K, Q, 2) points lying in their parent triangles."""
    offset = points - mesh.centroids[parents][:, None, :]
    bary = 1.0 / 3.0 + np.einsum("kij,kqj->kqi", mesh.basis_gradients[parents], offset)
    return np.einsum("kqi,ki->kq", bary, nodal[mesh.triangles[parents]])
