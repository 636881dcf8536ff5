"""Meshes, boundary portions, ρ-sets, augmented domains and singularity placement.

All solves are two-dimensional. A :class:`MeshDomain` is an immutable P1
triangulation whose boundary edges are labelled as belonging to the accessible
portion Γ or to its complement Δ. The helpers here build the ρ-interior of Γ,
its ρ/4 collar U_ρ, the augmented domain Ω_ρ obtained by extruding a bump
across Γ, and the points z_τ = x⁰ + τν̃ where singular solutions are centred.

Mesh text format (one record per line, indices 0-based)::

    meshdomain 1 L r h
    v x y
    t i j k
    be i j G|D
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import ConfigError, EmptyGammaRho, MeshGenerationError, TauTooLarge

MESH_FORMAT_VERSION = 1
_DEGENERATE_AREA = 1e-14


class Shape(str, Enum):
    UNIT_DISK = "unit_disk"
    UNIT_SQUARE = "unit_square"
    AUGMENTED = "augmented"
    LOADED = "loaded"


class BoundaryPortion(str, Enum):
    GAMMA = "G"
    DELTA = "D"


SQUARE_SIDES = {
    "bottom": (0.0, 1.0),
    "right": (1.0, 2.0),
    "top": (2.0, 3.0),
    "left": (3.0, 4.0),
}


@dataclass(frozen=True)
class LipschitzDescriptor:
    """Local graph constants (L, r, h) of a Lipschitz boundary."""

    L: float  # Lipschitz constant of the local graphs
    r: float  # radius of the local charts
    h: float  # height of the local charts

    def __post_init__(self) -> None:
        if not (self.L > 0 and self.r > 0 and self.h > 0):
            raise ConfigError(
                f"Lipschitz descriptor needs positive L, r, h; got {self.L}, {self.r}, {self.h}"
            )
        if self.h < self.L * self.r:
            raise ConfigError(
                f"Lipschitz descriptor needs h >= L*r; got h={self.h}, L*r={self.L * self.r}"
            )

    @property
    def c_lower(self) -> float:
        return 1.0 / math.sqrt(1.0 + self.L**2)


DEFAULT_DESCRIPTORS = {
    Shape.UNIT_DISK: LipschitzDescriptor(L=1.0 / math.sqrt(3.0), r=0.5, h=0.5),
    Shape.UNIT_SQUARE: LipschitzDescriptor(L=1.0, r=0.5, h=0.5),
}


@dataclass(frozen=True)
class GammaSpec:
    """An open arc of the boundary in the shape's arc-length parameter.

    The unit disk is parametrised by the polar angle θ ∈ [0, 2π), the unit
    square counterclockwise from the origin with perimeter 4 (bottom side
    [0, 1], right [1, 2], top [2, 3], left [3, 4]).
    """

    start: float = 0.0
    end: float = 0.0
    full: bool = False

    @classmethod
    def full_boundary(cls) -> GammaSpec:
        return cls(full=True)

    @classmethod
    def arc(cls, start: float, end: float) -> GammaSpec:
        return cls(start=float(start), end=float(end))

    @classmethod
    def side(cls, name: str) -> GammaSpec:
        if name not in SQUARE_SIDES:
            raise ConfigError(f"unknown square side: {name}")
        start, end = SQUARE_SIDES[name]
        return cls(start=start, end=end)

    def length(self, perimeter: float) -> float:
        return perimeter if self.full else self.end - self.start

    def validate(self, perimeter: float) -> None:
        if self.full:
            return
        if not self.end > self.start:
            raise ConfigError(f"gamma arc needs end > start; got ({self.start}, {self.end})")
        if self.end - self.start >= perimeter:
            raise ConfigError(
                f"gamma arc length {self.end - self.start} must be below the perimeter "
                f"{perimeter}; use a full boundary instead"
            )

    def contains(self, param: np.ndarray, perimeter: float) -> np.ndarray:
        if self.full:
            return np.ones(np.shape(param), dtype=bool)
        offset = np.mod(np.asarray(param) - self.start, perimeter)
        return (offset > 0.0) & (offset < self.end - self.start)


def shape_perimeter(shape: Shape) -> float:
    if shape is Shape.UNIT_DISK:
        return 2.0 * math.pi
    if shape is Shape.UNIT_SQUARE:
        return 4.0
    raise ConfigError(f"shape {shape.value} has no analytic perimeter")


def boundary_param(shape: Shape, points: np.ndarray) -> np.ndarray:
    """Arc-length parameter of boundary points of an analytic shape."""
    points = np.atleast_2d(points)
    if shape is Shape.UNIT_DISK:
        return np.mod(np.arctan2(points[:, 1], points[:, 0]), 2.0 * math.pi)
    if shape is Shape.UNIT_SQUARE:
        x, y = points[:, 0], points[:, 1]
        tol = 1e-12
        param = np.where(
            np.abs(y) < tol,
            x,
            np.where(
                np.abs(x - 1.0) < tol,
                1.0 + y,
                np.where(np.abs(y - 1.0) < tol, 3.0 - x, 4.0 - y),
            ),
        )
        return np.mod(param, 4.0)
    raise ConfigError(f"shape {shape.value} has no analytic boundary parameter")


@dataclass(frozen=True, eq=False)
class MeshDomain:
    """P1 triangulation with Γ/Δ-labelled boundary edges.

    Triangles are counterclockwise; boundary edges are oriented so that the
    domain lies on their left.
    """

    vertices: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (T, 3), counterclockwise
    boundary_edges: np.ndarray  # (B, 2), domain on the left
    edge_is_gamma: np.ndarray  # (B,) bool
    descriptor: LipschitzDescriptor
    mesh_size: float
    shape: Shape = Shape.LOADED

    @property
    def vertex_count(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def triangle_count(self) -> int:
        return int(self.triangles.shape[0])

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """(T, 3, 2) gradients of the barycentric coordinates."""
        p = self.vertices[self.triangles]
        grads = np.empty((self.triangle_count, 3, 2))
        twice_area = 2.0 * self.areas
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            grads[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / twice_area
            grads[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / twice_area
        return grads

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        a = self.vertices[self.boundary_edges[:, 0]]
        b = self.vertices[self.boundary_edges[:, 1]]
        return np.linalg.norm(b - a, axis=1)

    @property
    def boundary_length(self) -> float:
        return float(self.edge_lengths.sum())

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Outward unit normals of the boundary edges."""
        a = self.vertices[self.boundary_edges[:, 0]]
        b = self.vertices[self.boundary_edges[:, 1]]
        d = b - a
        return np.column_stack([d[:, 1], -d[:, 0]]) / self.edge_lengths[:, None]

    @cached_property
    def gamma_chain(self) -> tuple[np.ndarray, np.ndarray, bool]:
        """Ordered Γ vertices, ordered Γ edge indices, and whether Γ is closed."""
        gamma = np.flatnonzero(self.edge_is_gamma)
        if gamma.size == 0:
            return np.empty(0, dtype=int), np.empty(0, dtype=int), False
        outgoing = {int(self.boundary_edges[e, 0]): int(e) for e in gamma}
        incoming = {int(self.boundary_edges[e, 1]) for e in gamma}
        starts = [v for v in outgoing if v not in incoming]
        closed = not starts
        start_vertex = min(outgoing) if closed else starts[0]
        verts = [start_vertex]
        edges: list[int] = []
        current = start_vertex
        while current in outgoing and len(edges) < gamma.size:
            edge = outgoing[current]
            edges.append(edge)
            current = int(self.boundary_edges[edge, 1])
            if closed and current == start_vertex:
                break
            verts.append(current)
        return np.asarray(verts, dtype=int), np.asarray(edges, dtype=int), closed

    @property
    def gamma_closed(self) -> bool:
        return self.gamma_chain[2]

    @cached_property
    def gamma_arclength(self) -> np.ndarray:
        """Cumulative polygonal arc length along the Γ chain vertices."""
        verts, edges, _ = self.gamma_chain
        if verts.size == 0:
            return np.empty(0)
        return np.concatenate([[0.0], np.cumsum(self.edge_lengths[edges])])[: verts.size]

    @property
    def gamma_length(self) -> float:
        _, edges, _ = self.gamma_chain
        return float(self.edge_lengths[edges].sum())

    @cached_property
    def gamma_end_distance(self) -> np.ndarray:
        """Boundary-geodesic distance from each Γ chain vertex to ∂Γ."""
        verts, _, closed = self.gamma_chain
        if closed:
            return np.full(verts.size, np.inf)
        s = self.gamma_arclength
        return np.minimum(s, self.gamma_length - s)

    @property
    def gamma_closure_vertices(self) -> np.ndarray:
        return self.gamma_chain[0]

    @property
    def gamma_interior_vertices(self) -> np.ndarray:
        """Vertices of Γ away from its end points (the support of H^{1/2}_co)."""
        verts, _, closed = self.gamma_chain
        return verts if closed else verts[1:-1]

    @cached_property
    def delta_vertices(self) -> np.ndarray:
        gamma_vertices = np.unique(self.boundary_edges[self.edge_is_gamma])
        return np.setdiff1d(self.boundary_vertices, gamma_vertices)

    @cached_property
    def vertex_normals(self) -> dict[int, np.ndarray]:
        """Outward unit field ν̃ at boundary vertices.

        Analytic normal on the disk, normalised mean of the adjacent edge
        normals elsewhere (which is the side normal on flat sides).
        """
        normals: dict[int, np.ndarray] = {}
        if self.shape is Shape.UNIT_DISK:
            for v in self.boundary_vertices:
                x = self.vertices[v]
                normals[int(v)] = x / np.linalg.norm(x)
            return normals
        accum = np.zeros((self.vertex_count, 2))
        for e, (a, b) in enumerate(self.boundary_edges):
            accum[a] += self.edge_normals[e]
            accum[b] += self.edge_normals[e]
        for v in self.boundary_vertices:
            normals[int(v)] = accum[v] / np.linalg.norm(accum[v])
        return normals

    @cached_property
    def _centroid_tree(self) -> cKDTree:
        return cKDTree(self.centroids)

    def locate(self, points: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
        """Containing triangle (or -1) and barycentric coordinates of each point."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(16, self.triangle_count)
        _, candidates = self._centroid_tree.query(points, k=k)
        candidates = np.asarray(candidates).reshape(points.shape[0], k)
        found = np.full(points.shape[0], -1, dtype=int)
        bary = np.zeros((points.shape[0], 3))
        for column in range(k):
            pending = found < 0
            if not pending.any():
                break
            tri = candidates[pending, column]
            offset = points[pending] - self.centroids[tri]
            lam = 1.0 / 3.0 + np.einsum("nij,nj->ni", self.basis_gradients[tri], offset)
            inside = np.all(lam >= -tol, axis=1)
            idx = np.flatnonzero(pending)[inside]
            found[idx] = tri[inside]
            bary[idx] = lam[inside]
        return found, bary

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.locate(points)[0] >= 0

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """P1 interpolation of nodal values; NaN outside the mesh."""
        tri, bary = self.locate(points)
        out = np.full(tri.shape[0], np.nan)
        ok = tri >= 0
        out[ok] = np.einsum("ni,ni->n", values[self.triangles[tri[ok]]], bary[ok])
        return out

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        a = self.vertices[self.boundary_edges[:, 0]]
        b = self.vertices[self.boundary_edges[:, 1]]
        return segment_distance(np.atleast_2d(points), a, b)

    def mesh_hash(self) -> str:
        return hashlib.sha256(dump_mesh(self).encode()).hexdigest()


def _cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to the union of segments [a_k, b_k]."""
    if a.shape[0] == 0:
        return np.full(points.shape[0], np.inf)
    out = np.empty(points.shape[0])
    d = b - a
    dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    for start in range(0, points.shape[0], 2048):
        chunk = points[start : start + 2048]
        rel = chunk[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("nkj,kj->nk", rel, d) / dd, 0.0, 1.0)
        gap = rel - t[..., None] * d[None, :, :]
        out[start : start + 2048] = np.sqrt(np.einsum("nkj,nkj->nk", gap, gap).min(axis=1))
    return out


def _orient_counterclockwise(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    triangles = np.array(triangles, dtype=int, copy=True)
    p = vertices[triangles]
    flip = _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]) < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def _extract_boundary(triangles: np.ndarray) -> np.ndarray:
    """Boundary edges of a triangulation, ordered loop by loop, domain on the left."""
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    keys = np.sort(edges, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if np.any(counts > 2):
        raise MeshGenerationError("triangulation is not a manifold: an edge has 3+ triangles")
    boundary = edges[counts[inverse] == 1]
    outgoing: dict[int, int] = {}
    for index, (a, _) in enumerate(boundary):
        if int(a) in outgoing:
            raise MeshGenerationError(f"boundary vertex {a} starts two boundary edges")
        outgoing[int(a)] = index
    ordered: list[int] = []
    remaining = set(range(len(boundary)))
    while remaining:
        first = min(remaining)
        current = first
        while True:
            ordered.append(current)
            remaining.discard(current)
            nxt = outgoing.get(int(boundary[current, 1]))
            if nxt is None:
                raise MeshGenerationError("boundary edges do not form closed loops")
            if nxt == first:
                break
            current = nxt
    return boundary[ordered]


def _max_edge_length(vertices: np.ndarray, triangles: np.ndarray) -> float:
    p = vertices[triangles]
    lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
    return float(lengths.max())


def _finalize_mesh(
    vertices: np.ndarray,
    triangles: np.ndarray,
    gamma_of_edges: Callable[[np.ndarray], np.ndarray],
    descriptor: LipschitzDescriptor,
    shape: Shape,
) -> MeshDomain:
    triangles = _orient_counterclockwise(vertices, triangles)
    boundary = _extract_boundary(triangles)
    mesh = MeshDomain(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=boundary,
        edge_is_gamma=np.asarray(gamma_of_edges(boundary), dtype=bool),
        descriptor=descriptor,
        mesh_size=_max_edge_length(vertices, triangles),
        shape=shape,
    )
    validate_mesh(mesh)
    return mesh


def validate_mesh(mesh: MeshDomain) -> None:
    """Check orientation, non-degeneracy, boundary consistency and Γ connectivity."""
    if np.any(mesh.areas <= _DEGENERATE_AREA * mesh.mesh_size**2):
        worst = int(np.argmin(mesh.areas))
        raise MeshGenerationError(
            f"triangle {worst} is degenerate or clockwise (area {mesh.areas[worst]:.3e})"
        )
    expected = {tuple(edge) for edge in _extract_boundary(mesh.triangles).tolist()}
    actual = {tuple(edge) for edge in mesh.boundary_edges.tolist()}
    if expected != actual:
        raise MeshGenerationError("boundary edges do not match the triangulation boundary")
    if mesh.edge_is_gamma.shape != (mesh.boundary_edges.shape[0],):
        raise MeshGenerationError("one Γ/Δ label is required per boundary edge")
    _, gamma_edges, _ = mesh.gamma_chain
    if gamma_edges.size != int(mesh.edge_is_gamma.sum()):
        raise MeshGenerationError("Gamma-labelled edges do not form one connected arc")


def _disk_points(h: float, gamma: GammaSpec) -> tuple[np.ndarray, int]:
    """Boundary nodes (Γ first) and interior ring nodes of the unit disk."""
    perimeter = 2.0 * math.pi
    if gamma.full:
        count = max(8, math.ceil(perimeter / h))
        count += count % 2
        theta = gamma.start + perimeter * np.arange(count) / count
        n_gamma = count
    else:
        length_g = gamma.end - gamma.start
        n_gamma = max(2, math.ceil(length_g / h))
        n_gamma += n_gamma % 2
        n_delta = max(2, math.ceil((perimeter - length_g) / h))
        theta = np.concatenate(
            [
                gamma.start + length_g * np.arange(n_gamma) / n_gamma,
                gamma.end + (perimeter - length_g) * np.arange(n_delta) / n_delta,
            ]
        )
    boundary = np.column_stack([np.cos(theta), np.sin(theta)])
    rings = [boundary]
    j = 1
    while 1.0 - j * h > 0.5 * h:
        radius = 1.0 - j * h
        count = max(6, round(2.0 * math.pi * radius / h))
        phase = (j % 2) * math.pi / count
        angles = phase + 2.0 * math.pi * np.arange(count) / count
        rings.append(radius * np.column_stack([np.cos(angles), np.sin(angles)]))
        j += 1
    rings.append(np.zeros((1, 2)))
    return np.concatenate(rings), n_gamma


def _unit_disk(h: float, gamma: GammaSpec) -> MeshDomain:
    points, n_gamma = _disk_points(h, gamma)
    triangulation = Delaunay(points)
    boundary_count = int(np.argmax(np.linalg.norm(points, axis=1) < 1.0 - 1e-12))

    def gamma_of_edges(edges: np.ndarray) -> np.ndarray:
        if gamma.full:
            return np.ones(edges.shape[0], dtype=bool)
        a, b = edges[:, 0], edges[:, 1]
        forward = (b == (a + 1) % boundary_count) & (a < boundary_count)
        return forward & (a < n_gamma)

    return _finalize_mesh(
        points,
        triangulation.simplices,
        gamma_of_edges,
        DEFAULT_DESCRIPTORS[Shape.UNIT_DISK],
        Shape.UNIT_DISK,
    )


def _unit_square(h: float, gamma: GammaSpec) -> MeshDomain:
    n = max(1, math.ceil(1.0 / h - 1e-12))
    grid = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(grid, grid)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])
    triangles = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            triangles.append((v00, v10, v11))
            triangles.append((v00, v11, v01))

    def gamma_of_edges(edges: np.ndarray) -> np.ndarray:
        mid = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
        return gamma.contains(boundary_param(Shape.UNIT_SQUARE, mid), 4.0)

    return _finalize_mesh(
        vertices,
        np.asarray(triangles, dtype=int),
        gamma_of_edges,
        DEFAULT_DESCRIPTORS[Shape.UNIT_SQUARE],
        Shape.UNIT_SQUARE,
    )


def generate_mesh(shape: Shape | str, h_mesh: float, gamma: GammaSpec) -> MeshDomain:
    """Mesh the unit disk or unit square with Γ labelled on the given arc."""
    shape = Shape(shape)
    if shape not in (Shape.UNIT_DISK, Shape.UNIT_SQUARE):
        raise ConfigError(f"cannot generate a mesh for shape {shape.value}")
    if not h_mesh > 0:
        raise ConfigError(f"h_mesh must be positive, got {h_mesh}")
    perimeter = shape_perimeter(shape)
    gamma.validate(perimeter)
    arc_length = gamma.length(perimeter)
    if h_mesh > 0.5 * arc_length:
        raise MeshGenerationError(
            f"h_mesh={h_mesh} exceeds half the arc length of Gamma ({0.5 * arc_length:.6g})"
        )
    if shape is Shape.UNIT_DISK:
        mesh = _unit_disk(h_mesh, gamma)
    else:
        mesh = _unit_square(h_mesh, gamma)
    if not mesh.edge_is_gamma.any():
        raise MeshGenerationError("Gamma is not resolved by any boundary edge at this h_mesh")
    return mesh


@dataclass(frozen=True, eq=False)
class RhoSets:
    """Γ_ρ, its ρ/4 collar U_ρ and the collar's trace on the mesh."""

    rho: float
    rho0: float
    gamma_rho_vertices: np.ndarray  # Γ vertices with geodesic distance > ρ from ∂Γ
    gamma_rho_edges: np.ndarray  # boundary-edge indices with both ends in Γ_ρ
    u_rho: np.ndarray  # triangles with all vertices in U_ρ
    u_rho_interior: np.ndarray  # triangles of Ω whose centroid lies in U_ρ
    segments: np.ndarray  # (k, 2, 2) Γ_ρ as segments (isolated vertices degenerate)

    def distance(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return segment_distance(points, self.segments[:, 0], self.segments[:, 1])

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.distance(points) < 0.25 * self.rho


def compute_rho_sets(mesh: MeshDomain, rho: float) -> RhoSets:
    """Γ_ρ = {x ∈ Γ : dist(x, ∂Γ) > ρ} and U_ρ = {x : dist(x, Γ_ρ) < ρ/4}."""
    if not rho > 0:
        raise ConfigError(f"rho must be positive, got {rho}")
    rho0 = 0.5 * mesh.gamma_length
    if rho >= rho0:
        raise EmptyGammaRho(f"rho={rho} is not below rho0={rho0:.6g} for this Gamma")
    verts, edges, closed = mesh.gamma_chain
    keep = mesh.gamma_end_distance > rho
    if not keep.any():
        raise EmptyGammaRho(f"Gamma_rho is empty at this mesh resolution (rho={rho})")
    kept_vertices = verts[keep]
    kept_set = set(kept_vertices.tolist())
    kept_edges = np.asarray(
        [
            e
            for e in edges
            if int(mesh.boundary_edges[e, 0]) in kept_set
            and int(mesh.boundary_edges[e, 1]) in kept_set
        ],
        dtype=int,
    )
    if kept_edges.size:
        segments = mesh.vertices[mesh.boundary_edges[kept_edges]]
    else:
        point = mesh.vertices[kept_vertices]
        segments = np.stack([point, point], axis=1)
    partial = RhoSets(
        rho=rho,
        rho0=rho0,
        gamma_rho_vertices=kept_vertices,
        gamma_rho_edges=kept_edges,
        u_rho=np.empty(0, dtype=int),
        u_rho_interior=np.empty(0, dtype=int),
        segments=segments,
    )
    inside_vertex = partial.contains(mesh.vertices)
    u_rho = np.flatnonzero(inside_vertex[mesh.triangles].all(axis=1))
    u_rho_interior = np.flatnonzero(partial.contains(mesh.centroids))
    return RhoSets(
        rho=rho,
        rho0=rho0,
        gamma_rho_vertices=kept_vertices,
        gamma_rho_edges=kept_edges,
        u_rho=u_rho,
        u_rho_interior=u_rho_interior,
        segments=segments,
    )


@dataclass(frozen=True, eq=False)
class AugmentedDomain:
    """Ω_ρ ⊃ Ω built by extruding a bump across Γ, with the flux patch S."""

    mesh: MeshDomain  # Ω_ρ; its first vertices and triangles are those of Ω
    original: MeshDomain
    rho: float
    thickness: float
    shared_interface: np.ndarray  # indices into original.boundary_edges
    s_patch: np.ndarray  # indices into mesh.boundary_edges, on the bump apex

    @property
    def omega_triangles(self) -> np.ndarray:
        return np.arange(self.original.triangle_count)

    @property
    def bump_triangles(self) -> np.ndarray:
        return np.arange(self.original.triangle_count, self.mesh.triangle_count)

    @property
    def patch_length(self) -> float:
        return float(self.mesh.edge_lengths[self.s_patch].sum())

    @property
    def patch_vertices(self) -> np.ndarray:
        return np.unique(self.mesh.boundary_edges[self.s_patch])


_LAYER_GRADING = 1.25


def augment_domain(
    mesh: MeshDomain,
    rho_sets: RhoSets,
    *,
    thickness: float | None = None,
    patch_fraction: float = 1.0 / 3.0,
    patch_offset: float = 0.0,
) -> AugmentedDomain:
    """Attach a layered bump of thickness ρ over {x ∈ Γ : dist(x, ∂Γ) > ρ/8}.

    The bump reuses the Γ vertices of Ω as its bottom layer, so the
    augmented mesh is conforming with Ω. Layers are graded towards Γ. When Γ
    is the whole boundary the bump is an annulus.
    """
    rho = rho_sets.rho
    thickness = rho if thickness is None else thickness
    if thickness < 0.5 * rho:
        raise ConfigError(f"bump thickness {thickness} is below rho/2={0.5 * rho}")
    if not 0.0 < patch_fraction <= 1.0 or abs(patch_offset) > 1.0:
        raise ConfigError("patch_fraction must be in (0, 1] and |patch_offset| <= 1")
    verts, chain_edges, closed = mesh.gamma_chain
    keep = mesh.gamma_end_distance > rho / 8.0
    arc = verts[keep]
    if arc.size < 2:
        raise MeshGenerationError("the extrusion arc of Gamma has fewer than two vertices")
    arc_set = set(arc.tolist())
    interface = np.asarray(
        [
            e
            for e in chain_edges
            if int(mesh.boundary_edges[e, 0]) in arc_set
            and int(mesh.boundary_edges[e, 1]) in arc_set
        ],
        dtype=int,
    )
    normals = np.asarray([mesh.vertex_normals[int(v)] for v in arc])
    layers = max(2, math.ceil(_LAYER_GRADING * thickness / mesh.mesh_size))
    offsets = thickness * (np.arange(layers + 1) / layers) ** _LAYER_GRADING

    count = arc.size
    index = np.empty((count, layers + 1), dtype=int)
    index[:, 0] = arc
    new_points = []
    next_id = mesh.vertex_count
    for level in range(1, layers + 1):
        layer = mesh.vertices[arc] + offsets[level] * normals
        new_points.append(layer)
        index[:, level] = np.arange(next_id, next_id + count)
        next_id += count
    added = np.concatenate(new_points)
    if mesh.contains(added).any():
        raise MeshGenerationError("the extruded bump self-intersects Omega")

    bump = []
    columns = count if closed else count - 1
    for k in range(columns):
        k1 = (k + 1) % count
        for level in range(layers):
            p0, p1 = index[k, level], index[k1, level]
            p2, p3 = index[k1, level + 1], index[k, level + 1]
            bump.append((p0, p2, p1))
            bump.append((p0, p3, p2))
    vertices = np.concatenate([mesh.vertices, added])
    bump_triangles = np.asarray(bump, dtype=int)
    signs = np.sign(
        _cross(
            vertices[bump_triangles[:, 1]] - vertices[bump_triangles[:, 0]],
            vertices[bump_triangles[:, 2]] - vertices[bump_triangles[:, 0]],
        )
    )
    if not (np.all(signs > 0) or np.all(signs < 0)):
        raise MeshGenerationError("the extruded bump folds over itself")
    triangles = np.concatenate([mesh.triangles, bump_triangles])
    augmented = _finalize_mesh(
        vertices,
        triangles,
        lambda edges: np.zeros(edges.shape[0], dtype=bool),
        mesh.descriptor,
        Shape.AUGMENTED,
    )

    apex_pairs = [
        (int(index[k, layers]), int(index[(k + 1) % count, layers])) for k in range(columns)
    ]
    width = max(1, round(patch_fraction * columns))
    centre = 0.5 * columns + patch_offset * 0.5 * (columns - width)
    first = int(min(max(round(centre - 0.5 * width), 0), columns - width))
    wanted = {frozenset(pair) for pair in apex_pairs[first : first + width]}
    s_patch = np.asarray(
        [
            e
            for e, (a, b) in enumerate(augmented.boundary_edges.tolist())
            if frozenset((a, b)) in wanted
        ],
        dtype=int,
    )
    return AugmentedDomain(
        mesh=augmented,
        original=mesh,
        rho=rho,
        thickness=thickness,
        shared_interface=interface,
        s_patch=s_patch,
    )


@dataclass(frozen=True)
class CollarReport:
    min_collar_distance: float  # min over U_ρ vertices of dist(x, ∂Ω_ρ)
    min_patch_distance: float  # min over S vertices of dist(x, ∂Ω)
    rho: float

    @property
    def collar_ok(self) -> bool:
        return self.min_collar_distance >= 0.5 * self.rho * (1.0 - 1e-9)

    @property
    def patch_ok(self) -> bool:
        return self.min_patch_distance >= 0.25 * self.rho * (1.0 - 1e-9)


def rho_collar_report(aug: AugmentedDomain, rho_sets: RhoSets) -> CollarReport:
    """Measured distances behind dist(U_ρ, ∂Ω_ρ) ≥ ρ/2 and dist(S, ∂Ω) ≥ ρ/4."""
    in_collar = rho_sets.contains(aug.mesh.vertices)
    collar_points = aug.mesh.vertices[in_collar]
    collar = float(aug.mesh.boundary_distance(collar_points).min()) if in_collar.any() else math.inf
    patch_points = aug.mesh.vertices[aug.patch_vertices]
    patch = float(aug.original.boundary_distance(patch_points).min())
    return CollarReport(min_collar_distance=collar, min_patch_distance=patch, rho=rho_sets.rho)


@dataclass(frozen=True)
class SingularityPlacement:
    x0: tuple[float, float]
    nu_tilde: tuple[float, float]
    tau: float
    z_tau: tuple[float, float]
    tau0: float
    c_lower: float
    boundary_distance: float  # dist(z_τ, ∂Ω)


def _nearest_boundary_point(mesh: MeshDomain, x0: np.ndarray) -> tuple[np.ndarray, int | None]:
    distances = np.linalg.norm(mesh.vertices[mesh.boundary_vertices] - x0, axis=1)
    nearest = int(np.argmin(distances))
    if distances[nearest] <= 1e-9:
        vertex = int(mesh.boundary_vertices[nearest])
        return mesh.vertices[vertex], vertex
    a = mesh.vertices[mesh.boundary_edges[:, 0]]
    b = mesh.vertices[mesh.boundary_edges[:, 1]]
    d = b - a
    t = np.clip(np.einsum("ij,ij->i", x0 - a, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
    candidates = a + t[:, None] * d
    edge = int(np.argmin(np.linalg.norm(candidates - x0, axis=1)))
    return candidates[edge], None


def place_singularity(
    mesh: MeshDomain, x0: tuple[float, float] | np.ndarray, tau: float, rho_sets: RhoSets
) -> SingularityPlacement:
    """z_τ = x⁰ + τν̃ with τ⁰ = ρ/8 and C = 1/√(1+L²)."""
    point, vertex = _nearest_boundary_point(mesh, np.asarray(x0, dtype=float))
    if rho_sets.distance(point)[0] > 1e-9 * max(1.0, mesh.mesh_size):
        where = tuple(np.round(point, 12))
        raise ConfigError(f"x0={where} does not lie on the closure of Gamma_rho")
    if vertex is not None:
        nu = mesh.vertex_normals[vertex]
    elif mesh.shape is Shape.UNIT_DISK:
        nu = point / np.linalg.norm(point)
    else:
        edge = int(np.argmin(mesh.boundary_distance(point[None, :])))
        nu = mesh.edge_normals[edge]
    tau0 = rho_sets.rho / 8.0
    c_lower = mesh.descriptor.c_lower
    if not tau > 0:
        raise TauTooLarge(f"tau={tau} puts z_tau on the boundary of Omega")
    if tau > tau0 * (1.0 + 1e-12):
        raise TauTooLarge(f"tau={tau} exceeds tau0={tau0:.6g}")
    z = point + tau * nu
    distance = float(mesh.boundary_distance(z[None, :])[0])
    if mesh.contains(z[None, :])[0] or distance <= 0.0:
        raise TauTooLarge(f"z_tau={tuple(z)} enters the closure of Omega")
    if not (c_lower * tau * (1.0 - 1e-9) <= distance <= tau * (1.0 + 1e-9)):
        raise TauTooLarge(
            f"z_tau violates C*tau <= dist <= tau: dist={distance:.6g}, tau={tau}, C={c_lower:.6g}"
        )
    if not rho_sets.contains(z[None, :])[0]:
        raise TauTooLarge(f"z_tau={tuple(z)} leaves U_rho")
    return SingularityPlacement(
        x0=(float(point[0]), float(point[1])),
        nu_tilde=(float(nu[0]), float(nu[1])),
        tau=float(tau),
        z_tau=(float(z[0]), float(z[1])),
        tau0=tau0,
        c_lower=c_lower,
        boundary_distance=distance,
    )


def dump_mesh(mesh: MeshDomain) -> str:
    d = mesh.descriptor
    lines = [f"meshdomain {MESH_FORMAT_VERSION} {d.L:.17g} {d.r:.17g} {d.h:.17g}"]
    lines.extend(f"v {x:.17g} {y:.17g}" for x, y in mesh.vertices.tolist())
    lines.extend(f"t {i} {j} {k}" for i, j, k in mesh.triangles.tolist())
    for (i, j), gamma in zip(mesh.boundary_edges.tolist(), mesh.edge_is_gamma.tolist()):
        label = BoundaryPortion.GAMMA.value if gamma else BoundaryPortion.DELTA.value
        lines.append(f"be {i} {j} {label}")
    return "\n".join(lines) + "\n"


def load_mesh(text: str) -> MeshDomain:
    vertices: list[tuple[float, float]] = []
    triangles: list[tuple[int, int, int]] = []
    edges: list[tuple[int, int]] = []
    labels: list[bool] = []
    descriptor: LipschitzDescriptor | None = None
    for number, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split()
        if not parts:
            continue
        tag = parts[0]
        try:
            if tag == "meshdomain":
                if int(parts[1]) != MESH_FORMAT_VERSION:
                    raise ConfigError(f"unsupported mesh format version {parts[1]}")
                descriptor = LipschitzDescriptor(*(float(p) for p in parts[2:5]))
            elif tag == "v":
                vertices.append((float(parts[1]), float(parts[2])))
            elif tag == "t":
                triangles.append((int(parts[1]), int(parts[2]), int(parts[3])))
            elif tag == "be":
                edges.append((int(parts[1]), int(parts[2])))
                labels.append(BoundaryPortion(parts[3]) is BoundaryPortion.GAMMA)
            else:
                raise ConfigError(f"unknown mesh record {tag!r}")
        except ConfigError:
            raise
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"malformed mesh record on line {number}: {raw!r}") from exc
    if descriptor is None:
        raise ConfigError("mesh text lacks the 'meshdomain' header")
    vertex_array = np.asarray(vertices, dtype=float)
    triangle_array = np.asarray(triangles, dtype=int)
    mesh = MeshDomain(
        vertices=vertex_array,
        triangles=triangle_array,
        boundary_edges=np.asarray(edges, dtype=int).reshape(-1, 2),
        edge_is_gamma=np.asarray(labels, dtype=bool),
        descriptor=descriptor,
        mesh_size=_max_edge_length(vertex_array, triangle_array),
        shape=Shape.LOADED,
    )
    validate_mesh(mesh)
    return mesh
