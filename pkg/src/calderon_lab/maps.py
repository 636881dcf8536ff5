"""Discrete local Dirichlet-to-Neumann and Neumann-to-Dirichlet operators.

Trace spaces live on boundary vertices. H^{1/2}_co(Γ) uses the hat functions
of the Γ-interior vertices, zero-extended to ∂Ω; _0H^{−1/2}(Γ) uses weak
boundary fluxes (nodal loads) on Γ̄ vertices with zero sum, spanned by
dipoles across consecutive Γ̄ vertices. All pairings are L²(∂Ω) pairings.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import TextIO

import numpy as np
from scipy import linalg

from . import fem
from .conductivity import Conductivity, ConductivityModel, ScalarCoefficient, mollify
from .errors import DegenerateGamma, SpaceMismatch
from .geometry import MeshDomain, compute_rho_sets

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-10


class SpaceKind(str, Enum):
    H_HALF_CO = "H_half_co_Gamma"
    H_MINUS_HALF_ZERO = "H_minus_half_zero_Gamma"


class OperatorKind(str, Enum):
    DN = "DN"
    ND = "ND"


def _boundary_blocks(mesh: MeshDomain) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boundary vertices with the dense boundary mass B0 and tangential stiffness B1."""
    boundary = mesh.boundary_vertices
    b0 = fem.boundary_mass_matrix(mesh)[boundary][:, boundary].toarray()
    b1 = fem.boundary_stiffness_matrix(mesh)[boundary][:, boundary].toarray()
    return boundary, b0, b1


def _spd_power(matrix: np.ndarray, power: float) -> np.ndarray:
    eigenvalues, vectors = linalg.eigh(matrix)
    return (vectors * eigenvalues**power) @ vectors.T


def h_half_gram(mesh: MeshDomain) -> tuple[np.ndarray, np.ndarray]:
    """Boundary vertices and the H^{1/2}(∂Ω) gram.

    G = B0^{1/2}·W·B0^{1/2} with W = (I + B0^{−1/2}B1B0^{−1/2})^{1/2}.
    """
    boundary, b0, b1 = _boundary_blocks(mesh)
    root = _spd_power(b0, 0.5)
    inv_root = _spd_power(b0, -0.5)
    inner = inv_root @ b1 @ inv_root
    inner = 0.5 * (inner + inner.T) + np.eye(boundary.size)
    gram = root @ _spd_power(inner, 0.5) @ root
    return boundary, 0.5 * (gram + gram.T)


@dataclass(frozen=True, eq=False)
class BoundarySpace:
    """A trace or flux space on boundary vertices with its norm gram.

    ``basis`` has one column per basis element over ``boundary`` vertices:
    nodal trace values for H^{1/2}_co, nodal loads for _0H^{−1/2}.
    """

    kind: SpaceKind
    mesh: MeshDomain
    boundary: np.ndarray
    basis: np.ndarray
    gram: np.ndarray
    support: np.ndarray  # vertices the basis may touch

    @property
    def dimension(self) -> int:
        return int(self.basis.shape[1])

    @cached_property
    def mesh_hash(self) -> str:
        return self.mesh.mesh_hash()

    def nodal(self, coefficients: np.ndarray) -> np.ndarray:
        """Expand basis coefficients to a full nodal vector (or matrix)."""
        coefficients = np.asarray(coefficients, dtype=float)
        out = np.zeros((self.mesh.vertex_count,) + coefficients.shape[1:])
        out[self.boundary] = self.basis @ coefficients
        return out

    def coordinates(self, nodal: np.ndarray) -> np.ndarray:
        """Least-squares basis coordinates of a nodal trace or load."""
        values = np.asarray(nodal, dtype=float)[self.boundary]
        solution, *_ = np.linalg.lstsq(self.basis, values, rcond=None)
        return solution

    def same_as(self, other: BoundarySpace) -> bool:
        return (
            self.kind is other.kind
            and self.mesh is other.mesh
            and np.array_equal(self.support, other.support)
        )


def _dipoles(boundary: np.ndarray, chain: np.ndarray) -> np.ndarray:
    position = {int(v): k for k, v in enumerate(boundary)}
    pairs = list(zip(chain[:-1], chain[1:]))
    basis = np.zeros((boundary.size, len(pairs)))
    for column, (a, b) in enumerate(pairs):
        basis[position[int(a)], column] = 1.0
        basis[position[int(b)], column] = -1.0
    return basis


def build_trace_space(mesh: MeshDomain, kind: SpaceKind | str) -> BoundarySpace:
    """H^{1/2}_co(Γ) or _0H^{−1/2}(Γ) with its gram matrix."""
    kind = SpaceKind(kind)
    boundary, full_gram = h_half_gram(mesh)
    position = {int(v): k for k, v in enumerate(boundary)}
    if kind is SpaceKind.H_HALF_CO:
        support = mesh.gamma_interior_vertices
        if support.size < 3:
            raise DegenerateGamma(f"Gamma has {support.size} interior nodes; need at least 3")
        rows = np.array([position[int(v)] for v in support])
        basis = np.zeros((boundary.size, support.size))
        basis[rows, np.arange(support.size)] = 1.0
        gram = full_gram[np.ix_(rows, rows)]
        return BoundarySpace(kind, mesh, boundary, basis, gram, support)
    chain = mesh.gamma_closure_vertices
    if chain.size < 3:
        raise DegenerateGamma(f"Gamma has {chain.size} nodes; need at least 3")
    basis = _dipoles(boundary, chain)
    # Dipoles already lie in the zero-mean, Γ̄-supported subspace, so the induced
    # H^{−1/2}(∂Ω) norm is Bᵀ G⁻¹ B with G the full gram, not an inverse of a restricted G.
    gram = basis.T @ linalg.solve(full_gram, basis, assume_a="pos")
    return BoundarySpace(kind, mesh, boundary, basis, 0.5 * (gram + gram.T), chain)


def global_flux_space(mesh: MeshDomain) -> BoundarySpace:
    """_0H^{−1/2}(∂Ω): dipoles along the whole boundary."""
    boundary, full_gram = h_half_gram(mesh)
    chain = mesh.boundary_edges[:, 0]
    basis = _dipoles(boundary, chain)
    gram = basis.T @ linalg.solve(full_gram, basis, assume_a="pos")
    return BoundarySpace(
        SpaceKind.H_MINUS_HALF_ZERO, mesh, boundary, basis, 0.5 * (gram + gram.T), boundary
    )


@dataclass(frozen=True, eq=False)
class LocalOperator:
    matrix: np.ndarray
    domain_space: BoundarySpace
    codomain_space: BoundarySpace
    kind: OperatorKind
    sigma_tag: str = ""

    @property
    def asymmetry(self) -> float:
        scale = max(float(np.linalg.norm(self.matrix)), np.finfo(float).tiny)
        return float(np.linalg.norm(self.matrix - self.matrix.T)) / scale

    def form(self, left: np.ndarray, right: np.ndarray) -> float:
        """⟨op left, right⟩ on basis coordinates."""
        return float(np.asarray(right) @ self.matrix @ np.asarray(left))

    def __sub__(self, other: LocalOperator) -> LocalOperator:
        _check_compatible(self, other)
        tag = f"{self.sigma_tag}-{other.sigma_tag}"
        return LocalOperator(
            self.matrix - other.matrix, self.domain_space, self.codomain_space, self.kind, tag
        )

    def scaled(self, factor: float) -> LocalOperator:
        return LocalOperator(
            factor * self.matrix,
            self.domain_space,
            self.codomain_space,
            self.kind,
            self.sigma_tag,
        )


def _tag(sigma: fem.SigmaLike) -> str:
    return getattr(sigma, "tag", "") or ""


def harmonic_extensions(
    mesh: MeshDomain, sigma: fem.SigmaLike, traces: np.ndarray
) -> tuple[np.ndarray, fem.LinearSystemStats]:
    """Discrete σ-harmonic extensions of nodal boundary traces (one per column)."""
    problem = fem.DirichletProblem(mesh, sigma)
    traces = np.asarray(traces, dtype=float).reshape(mesh.vertex_count, -1)
    return problem.solve(traces[problem.fixed])


def assemble_local_dn(
    mesh: MeshDomain, sigma: fem.SigmaLike, space: BoundarySpace
) -> LocalOperator:
    """Λ^Γ_σ with entries ∫_Ω σ∇u_i·∇u_j over harmonic extensions of the basis."""
    if space.kind is not SpaceKind.H_HALF_CO or space.mesh is not mesh:
        raise SpaceMismatch("the local D-N map acts on H^{1/2}_co(Gamma) of the same mesh")
    logger.info("assembling local D-N map: %d basis traces", space.dimension)
    extensions, stats = harmonic_extensions(mesh, sigma, space.nodal(np.eye(space.dimension)))
    stiffness = fem.assemble_stiffness(mesh, sigma)
    matrix = extensions.T @ (stiffness @ extensions)
    logger.debug("local D-N residual %.3e", stats.residual_norm)
    return LocalOperator(matrix, space, space, OperatorKind.DN, _tag(sigma))


def _neumann_responses(
    mesh: MeshDomain, sigma: fem.SigmaLike, loads: np.ndarray
) -> np.ndarray:
    values, stats = fem.NeumannProblem(mesh, sigma).solve(loads)
    logger.debug("Neumann responses: %d loads, residual %.3e", loads.shape[1], stats.residual_norm)
    return values


def assemble_global_nd(mesh: MeshDomain, sigma: fem.SigmaLike) -> LocalOperator:
    """N_σ on _0H^{−1/2}(∂Ω) by mean-constrained Neumann solves."""
    space = global_flux_space(mesh)
    loads = space.nodal(np.eye(space.dimension))
    logger.info("assembling global N-D map: %d basis fluxes", space.dimension)
    matrix = loads.T @ _neumann_responses(mesh, sigma, loads)
    return LocalOperator(matrix, space, space, OperatorKind.ND, _tag(sigma))


def assemble_local_nd(
    mesh: MeshDomain, sigma: fem.SigmaLike, space: BoundarySpace
) -> LocalOperator:
    """N^Γ_σ: the N-D form restricted to fluxes supported on Γ̄."""
    if space.kind is not SpaceKind.H_MINUS_HALF_ZERO or space.mesh is not mesh:
        raise SpaceMismatch("the local N-D map acts on _0H^{-1/2}(Gamma) of the same mesh")
    loads = space.nodal(np.eye(space.dimension))
    logger.info("assembling local N-D map: %d basis fluxes", space.dimension)
    matrix = loads.T @ _neumann_responses(mesh, sigma, loads)
    return LocalOperator(matrix, space, space, OperatorKind.ND, _tag(sigma))


def _check_compatible(op_a: LocalOperator, op_b: LocalOperator) -> None:
    if op_a.kind is not op_b.kind:
        raise SpaceMismatch(f"cannot compare a {op_a.kind.value} map with a {op_b.kind.value} map")
    if not (
        op_a.domain_space.same_as(op_b.domain_space)
        and op_a.codomain_space.same_as(op_b.codomain_space)
    ):
        raise SpaceMismatch("operators are defined on different boundary spaces")


def op_norm(op_a: LocalOperator, op_b: LocalOperator) -> float:
    """‖op_a − op_b‖ from the domain space to the dual of the domain space.

    With G = LLᵀ the domain gram and G⁻¹ the dual gram, this is the largest
    singular value of L⁻¹(A − B)L⁻ᵀ.
    """
    _check_compatible(op_a, op_b)
    difference = op_a.matrix - op_b.matrix
    if not np.any(difference):
        return 0.0
    factor = linalg.cholesky(op_a.domain_space.gram, lower=True)
    left = linalg.solve_triangular(factor, difference, lower=True)
    whitened = linalg.solve_triangular(factor, left.T, lower=True).T
    return float(np.linalg.norm(whitened, 2))


def dirichlet_to_neumann_nodal(mesh: MeshDomain, sigma: fem.SigmaLike) -> np.ndarray:
    """Full Λ_σ on boundary vertices: boundary traces to weak nodal fluxes."""
    boundary = mesh.boundary_vertices
    traces = np.zeros((mesh.vertex_count, boundary.size))
    traces[boundary, np.arange(boundary.size)] = 1.0
    extensions, _ = harmonic_extensions(mesh, sigma, traces)
    return (fem.assemble_stiffness(mesh, sigma) @ extensions)[boundary]


def neumann_to_dirichlet_nodal(
    mesh: MeshDomain, sigma: fem.SigmaLike, fluxes: np.ndarray
) -> np.ndarray:
    """Boundary traces (zero boundary mean) of the Neumann problems for zero-sum fluxes."""
    boundary = mesh.boundary_vertices
    fluxes = np.asarray(fluxes, dtype=float).reshape(boundary.size, -1)
    loads = np.zeros((mesh.vertex_count, fluxes.shape[1]))
    loads[boundary] = fluxes
    return _neumann_responses(mesh, sigma, loads)[boundary]


def inverse_relation_defect(mesh: MeshDomain, sigma: fem.SigmaLike) -> float:
    """‖N_σΛ_σP − P‖_F / ‖P‖_F with P the projection onto zero-mean traces."""
    boundary = mesh.boundary_vertices
    weights = np.asarray(fem.boundary_mass_matrix(mesh).sum(axis=1)).ravel()[boundary]
    projection = np.eye(boundary.size) - np.outer(np.ones(boundary.size), weights) / weights.sum()
    fluxes = dirichlet_to_neumann_nodal(mesh, sigma) @ projection
    # Λ annihilates constants, so each column sums to zero up to round-off
    fluxes -= fluxes.mean(axis=0, keepdims=True)
    recovered = neumann_to_dirichlet_nodal(mesh, sigma, fluxes)
    return float(np.linalg.norm(recovered - projection) / np.linalg.norm(projection))


@dataclass(frozen=True)
class MollificationSplit:
    inner: float  # over U^i_{ρ/2}
    outer: float

    @property
    def total(self) -> float:
        return self.inner + self.outer


def mollification_split(
    mesh: MeshDomain,
    model: ConductivityModel,
    coeff: ScalarCoefficient,
    epsilon: float,
    rho: float,
    trace: np.ndarray | None = None,
) -> MollificationSplit:
    """|∫(σ_ε − σ)∇u·∇u| split over U^i_{ρ/2} and the rest of Ω.

    ``u`` is the σ-harmonic extension of ``trace`` (default: x₁ + x₂ on the
    Γ-interior vertices, zero elsewhere).
    """
    sigma = Conductivity(model, coeff)
    smoothed = Conductivity(model, mollify(coeff, epsilon, rho=rho))
    if trace is None:
        trace = np.zeros(mesh.vertex_count)
        support = mesh.gamma_interior_vertices
        trace[support] = mesh.vertices[support].sum(axis=1)
    field = fem.solve_dirichlet(mesh, sigma, trace)
    difference = fem.element_sigma(mesh, smoothed) - fem.element_sigma(mesh, sigma)
    grads = field.gradients()
    density = mesh.areas * np.einsum("ta,tab,tb->t", grads, difference, grads)
    inner = np.zeros(mesh.triangle_count, dtype=bool)
    inner[compute_rho_sets(mesh, 0.5 * rho).u_rho_interior] = True
    return MollificationSplit(
        float(abs(density[inner].sum())), float(abs(density[~inner].sum()))
    )


def meyers_ratio(field: fem.FemField, region: np.ndarray | None = None, q: float = 2.5) -> float:
    """‖∇u‖_{L^q(region)} / ‖u‖_{H¹(Ω)}."""
    tri = np.arange(field.mesh.triangle_count) if region is None else np.asarray(region)
    grads = np.linalg.norm(field.gradients()[tri], axis=1)
    lq = float(np.sum(field.mesh.areas[tri] * grads**q)) ** (1.0 / q)
    h1 = fem.h1_norm(field)
    return lq / h1 if h1 > 0 else math.nan


def write_operator_csv(
    op: LocalOperator, target: Path | TextIO, gamma_spec: str = ""
) -> None:
    """CSV matrix with a comment header naming σ, kind, Γ and the mesh hash."""
    if isinstance(target, Path):
        with target.open("w", newline="") as handle:
            write_operator_csv(op, handle, gamma_spec)
        return
    target.write(f"# sigma_tag={op.sigma_tag}\n")
    target.write(f"# kind={op.kind.value}\n")
    target.write(f"# gamma={gamma_spec}\n")
    target.write(f"# mesh_hash={op.domain_space.mesh_hash}\n")
    writer = csv.writer(target, lineterminator="\n")
    for row in op.matrix:
        writer.writerow([f"{value:.17g}" for value in row])
