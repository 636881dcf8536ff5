"""Singular solutions: analytic leading terms plus FEM correctors.

Leading terms have the form

    u(x) = amplitude · |y|^{2−n−m} · S_m(y/|y|),   y = J(x − z),

with S_m(ω) = κ·Re(e^{iφ₀}(ω₁ + iω₂)^m), and amplitude · κ · log|y| in the
two-dimensional m = 0 case. Correctors are P1 fields on the augmented mesh
Ω_ρ built by singular splitting, so no discrete delta is ever assembled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np
import yaml

from . import fem
from .conductivity import Conductivity
from .errors import (
    ConfigError,
    EvalAtSingularity,
    IncompatibleFlux,
    InsufficientRadii,
    SourceTooCloseToBoundary,
)
from .geometry import AugmentedDomain, RhoSets, SingularityPlacement, place_singularity

logger = logging.getLogger(__name__)

_EDGE_GAUSS5 = np.polynomial.legendre.leggauss(5)


def dimension_constant(n: int) -> float:
    """c_n of the fundamental solution: −1/(2π) for n = 2, 1/((n−2)|S^{n−1}|) above."""
    if n < 2:
        raise ConfigError(f"dimension must be >= 2, got {n}")
    if n == 2:
        return -1.0 / (2.0 * math.pi)
    sphere = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    return 1.0 / ((n - 2) * sphere)


def inverse_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, vectors = np.linalg.eigh(matrix)
    if eigenvalues[0] <= 0:
        raise ConfigError(f"matrix is not positive definite (min eigenvalue {eigenvalues[0]:.3e})")
    return (vectors / np.sqrt(eigenvalues)) @ vectors.T


@dataclass(frozen=True, eq=False)
class LeadingTerm:
    n: int
    m: int
    z: tuple[float, ...]
    J: np.ndarray
    kappa: float = 2.0
    phi0: float = 0.0
    amplitude: float = 1.0
    c_n: float = 1.0
    r0: float = math.inf

    def __post_init__(self) -> None:
        if self.n < 2 or self.m < 0:
            raise ConfigError(f"leading term needs n >= 2 and m >= 0, got n={self.n}, m={self.m}")
        if len(self.z) != self.n or self.J.shape != (self.n, self.n):
            raise ConfigError(f"center and J must match dimension {self.n}")
        if not np.allclose(self.J, self.J.T, rtol=0, atol=1e-12 * np.abs(self.J).max()):
            raise ConfigError("J must be symmetric")
        if np.linalg.eigvalsh(self.J)[0] <= 0:
            raise ConfigError("J must be positive definite")

    @property
    def log_branch(self) -> bool:
        return self.n == 2 and self.m == 0

    @property
    def exponent(self) -> float:
        """Homogeneity degree 2 − n − m (0 for the logarithmic branch)."""
        return 0.0 if self.log_branch else float(2 - self.n - self.m)

    def harmonic(self, omega: np.ndarray) -> np.ndarray:
        """S_m on unit vectors."""
        omega = np.atleast_2d(omega)
        w = omega[:, 0] + 1j * omega[:, 1]
        return self.kappa * np.real(np.exp(1j * self.phi0) * w**self.m)

    def value_and_gradient(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        offset = points - np.asarray(self.z)
        if np.any(np.linalg.norm(offset, axis=1) <= 1e-12):
            raise EvalAtSingularity(f"leading term evaluated at its center {self.z}")
        y = offset @ self.J
        r = np.linalg.norm(y, axis=1)
        rotation = np.exp(1j * self.phi0)
        w = y[:, 0] + 1j * y[:, 1]
        dpoly = np.zeros_like(y)
        if self.m == 0:
            poly = np.full(r.shape, math.cos(self.phi0))
        else:
            poly = np.real(rotation * w**self.m)
            lower = rotation * self.m * w ** (self.m - 1)
            dpoly[:, 0] = np.real(lower)
            dpoly[:, 1] = np.real(1j * lower)
        scale = self.amplitude * self.kappa
        if self.log_branch:
            value = scale * poly * np.log(r)
            grad_y = scale * poly[:, None] * y / (r**2)[:, None]
        else:
            q = 2 - self.n - 2 * self.m
            value = scale * r**q * poly
            grad_y = scale * (
                q * (r ** (q - 2) * poly)[:, None] * y + (r**q)[:, None] * dpoly
            )
        return value, grad_y @ self.J


def eval_leading(term: LeadingTerm, x: np.ndarray) -> tuple[np.ndarray | float, np.ndarray]:
    """Closed-form value and gradient; a single point gives a scalar value."""
    x = np.asarray(x, dtype=float)
    value, gradient = term.value_and_gradient(x)
    if x.ndim == 1:
        return float(value[0]), gradient[0]
    return value, gradient


def leading_term(
    sigma_center: np.ndarray,
    z: Sequence[float],
    m: int = 0,
    *,
    kappa: float = 2.0,
    phi0: float = 0.0,
    r0: float = math.inf,
) -> LeadingTerm:
    """Leading term with J = σ(z)^{−1/2}."""
    sigma_center = np.asarray(sigma_center, dtype=float)
    n = sigma_center.shape[0]
    return LeadingTerm(
        n=n,
        m=m,
        z=tuple(float(v) for v in z),
        J=inverse_sqrt(sigma_center),
        kappa=kappa,
        phi0=phi0,
        c_n=dimension_constant(n),
        r0=r0,
    )


def fundamental_solution(
    sigma_center: np.ndarray, z: Sequence[float], *, r0: float = math.inf
) -> LeadingTerm:
    """Frozen-coefficient fundamental solution Φ_z with div(σ(z)∇Φ_z) = −δ_z."""
    sigma_center = np.asarray(sigma_center, dtype=float)
    n = sigma_center.shape[0]
    c_n = dimension_constant(n)
    return LeadingTerm(
        n=n,
        m=0,
        z=tuple(float(v) for v in z),
        J=inverse_sqrt(sigma_center),
        kappa=1.0,
        amplitude=c_n / math.sqrt(np.linalg.det(sigma_center)),
        c_n=c_n,
        r0=r0,
    )


@dataclass(frozen=True)
class GradientBoundReport:
    radii: tuple[float, ...]
    ratios: tuple[float, ...]  # min over the circle of |Du| / r^{1−n−m}
    skipped: tuple[float, ...] = ()

    @property
    def margins(self) -> tuple[float, ...]:
        return tuple(ratio - 1.0 for ratio in self.ratios)

    @property
    def min_margin(self) -> float:
        return min(self.margins) if self.margins else math.inf

    @property
    def strict(self) -> bool:
        return self.min_margin > 0


def check_gradient_lower_bound(
    term: LeadingTerm, radii: Sequence[float], samples: int = 64
) -> GradientBoundReport:
    """Measured |D u| against r^{1−(n+m)} on circles around the center."""
    kept, ratios, skipped = [], [], []
    theta = 2.0 * math.pi * np.arange(samples) / samples
    for radius in radii:
        if radius <= 0:
            raise ConfigError(f"radii must be positive, got {radius}")
        if radius > term.r0:
            skipped.append(float(radius))
            continue
        points = np.tile(np.asarray(term.z), (samples, 1))
        points[:, 0] += radius * np.cos(theta)
        points[:, 1] += radius * np.sin(theta)
        _, gradient = term.value_and_gradient(points)
        bound = radius ** (1 - term.n - term.m)
        kept.append(float(radius))
        ratios.append(float(np.linalg.norm(gradient, axis=1).min() / bound))
    return GradientBoundReport(tuple(kept), tuple(ratios), tuple(skipped))


class BoundaryCondition(str, Enum):
    DIRICHLET_ZERO = "dirichlet_zero_on_boundary"
    NEUMANN_UNIFORM = "neumann_uniform"
    NEUMANN_ZERO_OUTSIDE_S = "neumann_zero_outside_S"


@dataclass(frozen=True, eq=False)
class SingularSolution:
    """Leading term plus corrector on Ω_ρ."""

    leading: LeadingTerm
    corrector: fem.FemField
    bc_kind: BoundaryCondition
    domain: AugmentedDomain
    sigma: Conductivity
    placement: SingularityPlacement | None = None
    s_patch: np.ndarray | None = None
    diagnostics: dict[str, float] = field(default_factory=dict)

    @property
    def mesh(self):  # type: ignore[no-untyped-def]
        return self.domain.mesh

    @property
    def z(self) -> np.ndarray:
        return np.asarray(self.leading.z)

    def total(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        value, _ = self.leading.value_and_gradient(points)
        return value + self.corrector(points)

    def nodal_total(self) -> np.ndarray:
        value, _ = self.leading.value_and_gradient(self.mesh.vertices)
        return value + self.corrector.nodal_values

    def omega_h1_norm(self) -> float:
        """‖leading + corrector‖_{H¹(Ω)} with adaptive quadrature of the leading term."""
        mesh = self.mesh
        corrector = self.corrector.nodal_values
        corrector_grad = self.corrector.gradients()

        def integrand(points: np.ndarray, parents: np.ndarray) -> np.ndarray:
            value, grad = self.leading.value_and_gradient(points.reshape(-1, 2))
            value = value.reshape(points.shape[:2]) + fem.p1_values_at(
                mesh, corrector, points, parents
            )
            grad = grad.reshape(points.shape) + corrector_grad[parents][:, None, :]
            return value**2 + np.einsum("kqj,kqj->kq", grad, grad)

        pieces = fem.integrate_adaptive(mesh, self.domain.omega_triangles, integrand, self.z)
        return float(math.sqrt(pieces.sum()))


def _sigma_center(sigma: Conductivity, z: np.ndarray) -> np.ndarray:
    return sigma.at(z)


def _check_center(aug: AugmentedDomain, z: np.ndarray, minimum: float) -> None:
    point = z.reshape(1, 2)
    if not aug.mesh.contains(point)[0]:
        raise SourceTooCloseToBoundary(f"center {tuple(z)} lies outside the augmented domain")
    distance = float(aug.mesh.boundary_distance(point)[0])
    if distance < minimum:
        raise SourceTooCloseToBoundary(
            f"center at distance {distance:.6g} from the boundary of Omega_rho; "
            f"need >= {minimum:.6g}"
        )
    if float(np.linalg.norm(aug.mesh.vertices - point, axis=1).min()) <= 1e-10:
        raise EvalAtSingularity(f"center {tuple(z)} coincides with a mesh vertex")


def build_dirichlet_singular(
    aug: AugmentedDomain, sigma: Conductivity, term: LeadingTerm
) -> SingularSolution:
    """u_m + w₀ with w₀ = −u_m on ∂Ω_ρ and the frozen-coefficient source in Ω_ρ."""
    if term.n != 2:
        raise ConfigError(f"FEM correctors are two-dimensional; got n={term.n}")
    if term.m > 1:
        raise ConfigError(f"FEM correctors are built for m in {{0, 1}}; got m={term.m}")
    z = np.asarray(term.z)
    _check_center(aug, z, aug.rho / 8.0)
    center = _sigma_center(sigma, z)
    if not np.allclose(term.J @ term.J @ center, np.eye(2), atol=1e-8):
        raise ConfigError("leading term J does not satisfy J^2 sigma(z) = I")
    values, stats = fem.solve_singular_split(aug.mesh, sigma, term, center)
    corrector = fem.FemField(aug.mesh, values, fem.FieldKind.CORRECTOR, stats)
    return SingularSolution(
        term,
        corrector,
        BoundaryCondition.DIRICHLET_ZERO,
        aug,
        sigma,
        diagnostics={"residual": stats.residual_norm, "dofs": float(stats.dof_count)},
    )


def build_green(
    aug: AugmentedDomain, sigma: Conductivity, placement: SingularityPlacement
) -> SingularSolution:
    """G_σ(·, z_τ) = Φ_{z_τ} + R with G = 0 on ∂Ω_ρ."""
    total, remainder, term = fem.solve_point_source_dirichlet(
        aug, sigma, placement.z_tau, placement=placement
    )
    term = replace(term, r0=aug.rho / 8.0)
    z = np.asarray(placement.z_tau)
    solution = SingularSolution(
        term,
        remainder,
        BoundaryCondition.DIRICHLET_ZERO,
        aug,
        sigma,
        placement=placement,
    )
    h1 = solution.omega_h1_norm()
    near = np.linalg.norm(aug.mesh.vertices - z, axis=1) <= aug.rho / 8.0
    diagnostics = solution.diagnostics
    diagnostics["h1_omega"] = h1
    if placement.tau < 1.0:
        diagnostics["h1_squared_over_log"] = h1**2 / math.log(1.0 / placement.tau)
    diagnostics["remainder_near_max"] = float(np.abs(remainder.nodal_values[near]).max())
    diagnostics["caccioppoli"] = fem.caccioppoli_ratio(
        total, aug.omega_triangles, placement.z_tau, placement.tau, placement.c_lower
    )
    if remainder.stats is not None:
        diagnostics["residual"] = remainder.stats.residual_norm
    logger.debug("green tau=%g diagnostics=%s", placement.tau, diagnostics)
    return solution


def _normal_flux_load(
    aug: AugmentedDomain, term: LeadingTerm, sigma_center: np.ndarray
) -> np.ndarray:
    """∫_{∂Ω_ρ} σ(z)∇Φ·ν φ_i with 5-point Gauss per edge."""
    mesh = aug.mesh
    nodes, weights = _EDGE_GAUSS5
    s = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    a = mesh.vertices[mesh.boundary_edges[:, 0]]
    b = mesh.vertices[mesh.boundary_edges[:, 1]]
    points = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    _, grad = term.value_and_gradient(points.reshape(-1, 2))
    flux = np.einsum("kj,ij,kj->k", grad, sigma_center, np.repeat(mesh.edge_normals, s.size, 0))
    scaled = flux.reshape(-1, s.size) * w[None, :] * mesh.edge_lengths[:, None]
    load = np.zeros(mesh.vertex_count)
    np.add.at(load, mesh.boundary_edges[:, 0], scaled @ (1.0 - s))
    np.add.at(load, mesh.boundary_edges[:, 1], scaled @ s)
    return load


def _prescribed_fluxes(
    aug: AugmentedDomain, kind: BoundaryCondition, s_patch: np.ndarray | None
) -> np.ndarray:
    mesh = aug.mesh
    if kind is BoundaryCondition.NEUMANN_UNIFORM:
        weights = np.asarray(fem.boundary_mass_matrix(mesh).sum(axis=1)).ravel()
        return -weights / mesh.boundary_length
    assert s_patch is not None
    patch_length = float(mesh.edge_lengths[s_patch].sum())
    weights = np.asarray(fem.boundary_mass_matrix(mesh, s_patch).sum(axis=1)).ravel()
    return -weights / patch_length


def build_neumann_function(
    aug: AugmentedDomain,
    sigma: Conductivity,
    placement: SingularityPlacement,
    *,
    s_patch: np.ndarray | None = None,
) -> SingularSolution:
    """Neumann function N_σ(·, z_τ) of Ω_ρ: uniform flux −1/|∂Ω_ρ|, zero boundary mean.

    With ``s_patch`` the zero-flux correction of the patch is added, giving
    flux −1/|S| on S and 0 elsewhere.
    """
    mesh = aug.mesh
    z = np.asarray(placement.z_tau)
    _check_center(aug, z, aug.rho / 8.0)
    center = _sigma_center(sigma, z)
    term = fundamental_solution(center, z, r0=aug.rho / 8.0)
    problem = fem.NeumannProblem(mesh, sigma)
    constraint = problem.constraint
    base = (
        _prescribed_fluxes(aug, BoundaryCondition.NEUMANN_UNIFORM, None)
        - _normal_flux_load(aug, term, center)
        + fem.frozen_coefficient_load(mesh, sigma, center, term)
    )
    discrepancy = float(base.sum())
    logger.debug("neumann function quadrature discrepancy %.3e", discrepancy)
    base -= discrepancy * constraint / constraint.sum()
    loads = [base]
    kind = BoundaryCondition.NEUMANN_UNIFORM
    if s_patch is not None:
        if s_patch.size == 0 or float(mesh.edge_lengths[s_patch].sum()) <= 0:
            raise IncompatibleFlux("flux patch S has zero measure")
        kind = BoundaryCondition.NEUMANN_ZERO_OUTSIDE_S
        loads.append(
            _prescribed_fluxes(aug, kind, s_patch)
            - _prescribed_fluxes(aug, BoundaryCondition.NEUMANN_UNIFORM, None)
        )
    solved, stats = problem.solve(np.column_stack(loads))
    values = solved.sum(axis=1)
    phi_mean = fem.boundary_load(mesh, lambda p: term.value_and_gradient(p)[0]).sum()
    values = values - phi_mean / mesh.boundary_length
    corrector = fem.FemField(mesh, values, fem.FieldKind.CORRECTOR, stats)
    return SingularSolution(
        term,
        corrector,
        kind,
        aug,
        sigma,
        placement=placement,
        s_patch=s_patch,
        diagnostics={"flux_discrepancy": discrepancy, "residual": stats.residual_norm},
    )


def build_neumann_singular(
    aug: AugmentedDomain,
    sigma: Conductivity,
    placement: SingularityPlacement,
    s_patch: np.ndarray | None = None,
) -> SingularSolution:
    """N_σ + w: unit point source at z_τ, flux −1/|S| on S and zero on ∂Ω_ρ∖S."""
    patch = aug.s_patch if s_patch is None else np.asarray(s_patch, dtype=int)
    solution = build_neumann_function(aug, sigma, placement, s_patch=patch)
    solution.diagnostics["h1_omega"] = solution.omega_h1_norm()
    return solution


@dataclass(frozen=True)
class NeumannFluxReport:
    total_flux: float
    max_leak: float  # off S (or deviation from the uniform flux)
    patch_flux: float
    boundary_fluxes: np.ndarray = field(repr=False)


def neumann_flux_report(solution: SingularSolution) -> NeumannFluxReport:
    """Weak nodal fluxes ∫σ∇u·∇φ_i at the boundary vertices of Ω_ρ."""
    if solution.bc_kind is BoundaryCondition.DIRICHLET_ZERO:
        raise ConfigError("flux reports apply to Neumann singular solutions")
    aug, mesh = solution.domain, solution.domain.mesh
    center = _sigma_center(solution.sigma, solution.z)
    stiffness = fem.assemble_stiffness(mesh, solution.sigma)
    fluxes = (
        stiffness @ solution.corrector.nodal_values
        + _normal_flux_load(aug, solution.leading, center)
        - fem.frozen_coefficient_load(mesh, solution.sigma, center, solution.leading)
    )
    boundary = mesh.boundary_vertices
    expected = _prescribed_fluxes(aug, solution.bc_kind, solution.s_patch)
    if solution.s_patch is not None and solution.s_patch.size:
        patch_nodes = np.unique(mesh.boundary_edges[solution.s_patch])
        off = np.setdiff1d(boundary, patch_nodes)
        patch_flux = float(fluxes[patch_nodes].sum())
    else:
        off = boundary
        patch_flux = 0.0
    leak = float(np.abs(fluxes[off] - expected[off]).max()) if off.size else 0.0
    return NeumannFluxReport(float(fluxes[boundary].sum()), leak, patch_flux, fluxes[boundary])


@dataclass(frozen=True)
class TraceSupportReport:
    delta_max: float
    gamma_max: float

    @property
    def ratio(self) -> float:
        return self.delta_max / self.gamma_max if self.gamma_max > 0 else math.inf


def trace_support_report(solution: SingularSolution) -> TraceSupportReport:
    """Largest |u| on Δ nodes of Ω against the largest |u| on Γ̄ nodes."""
    omega = solution.domain.original
    values = solution.nodal_total()
    delta = omega.delta_vertices
    gamma = omega.gamma_closure_vertices
    delta_max = float(np.abs(values[delta]).max()) if delta.size else 0.0
    return TraceSupportReport(delta_max, float(np.abs(values[gamma]).max()))


@dataclass(frozen=True)
class RateFit:
    exponent: float
    intercept: float
    residual: float
    radii: tuple[float, ...]
    reference_exponent: float  # 2 − n − m, plus α for correctors


def fit_remainder_rate(
    solution: SingularSolution,
    radii: Sequence[float],
    *,
    fit_leading: bool = False,
    angles: int = 64,
) -> RateFit:
    """Least-squares slope of log max_{|x−z|=r} |v| against log r."""
    rho = solution.domain.rho
    z = solution.z
    theta = 2.0 * math.pi * np.arange(angles) / angles
    circle = np.column_stack([np.cos(theta), np.sin(theta)])
    used, maxima = [], []
    for radius in sorted(set(float(r) for r in radii)):
        if not 0 < radius <= 0.25 * rho:
            continue
        points = z + radius * circle
        if not solution.mesh.contains(points).all():
            continue
        if fit_leading:
            values = solution.leading.value_and_gradient(points)[0]
        else:
            values = solution.corrector(points)
        used.append(radius)
        maxima.append(float(np.abs(values).max()))
    if len(used) < 4:
        raise InsufficientRadii(
            f"{len(used)} radii fall inside B_(rho/4)(z) with rho={rho}; need at least 4"
        )
    x = np.log(np.asarray(used))
    y = np.log(np.maximum(np.asarray(maxima), np.finfo(float).tiny))
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.sqrt(np.mean((design @ np.array([slope, intercept]) - y) ** 2)))
    term = solution.leading
    alpha = solution.sigma.model.alpha
    reference = term.exponent if fit_leading else term.exponent + alpha
    return RateFit(float(slope), float(intercept), residual, tuple(used), reference)


RATE_SLACK = 0.2


def record_remainder_rate(
    solution: SingularSolution, radii: Sequence[float] | None = None
) -> RateFit | None:
    """Fit the corrector decay and store it in ``solution.diagnostics``.

    The fit is reported, not enforced: an exponent below the reference minus
    :data:`RATE_SLACK` only logs a warning. Returns None when too few radii fit
    inside B_(ρ/4)(z).
    """
    if radii is None:
        radii = np.geomspace(0.02, 0.25 * solution.domain.rho, 8)
    try:
        fit = fit_remainder_rate(solution, radii)
    except InsufficientRadii as exc:
        logger.warning("remainder rate not fitted: %s", exc)
        return None
    band = fit.reference_exponent - RATE_SLACK
    solution.diagnostics.update(
        {
            "remainder_exponent": fit.exponent,
            "remainder_reference": fit.reference_exponent,
            "remainder_band": band,
            "remainder_fit_residual": fit.residual,
        }
    )
    if fit.exponent < band:
        logger.warning(
            "corrector exponent %.3f below the band %.3f (m=%d)",
            fit.exponent,
            band,
            solution.leading.m,
        )
    return fit


@dataclass(frozen=True)
class BlowupRow:
    tau: float
    h1_squared: float
    ratio_to_log: float
    caccioppoli: float


def h1_blowup_series(
    aug: AugmentedDomain,
    sigma: Conductivity,
    rho_sets: RhoSets,
    x0: Sequence[float],
    taus: Sequence[float],
) -> list[BlowupRow]:
    """‖G(·, z_τ)‖²_{H¹(Ω)} and its ratio to log(1/τ) along a τ schedule."""
    rows = []
    for tau in taus:
        placement = place_singularity(aug.original, np.asarray(x0), tau, rho_sets)
        green = build_green(aug, sigma, placement)
        h1 = green.diagnostics["h1_omega"]
        rows.append(
            BlowupRow(
                tau=float(tau),
                h1_squared=h1**2,
                ratio_to_log=h1**2 / math.log(1.0 / tau),
                caccioppoli=green.diagnostics["caccioppoli"],
            )
        )
    return rows


def dump_leading_term(term: LeadingTerm) -> str:
    """Sidecar record of the leading-term parameters."""
    record = {
        "n": term.n,
        "m": term.m,
        "z": [float(v) for v in term.z],
        "J": [[float(v) for v in row] for row in term.J],
        "kappa": float(term.kappa),
        "phi0": float(term.phi0),
        "amplitude": float(term.amplitude),
        "c_n": float(term.c_n),
        "r0": float(term.r0) if math.isfinite(term.r0) else "inf",
    }
    return yaml.safe_dump(record, sort_keys=True, default_flow_style=True)
