"""Boundary recovery from local maps and stability sweeps.

For a pair of coefficients a, b the pairing of the map difference with two
singular solutions placed at z_τ = x⁰ + τν̃ is divided by the kernel integral
K(τ) of the frozen leading terms; the quotient tends to (a − b)(x⁰) as τ → 0
and is extrapolated along the τ schedule.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np
from scipy import integrate, sparse
from scipy.stats import qmc

from . import fem, maps
from .conductivity import (
    CoefficientKind,
    Conductivity,
    ConductivityModel,
    ScalarCoefficient,
    estimate_modulus,
    expression_coefficient,
    extend_coefficient,
    mollify,
    w1p_norm,
)
from .errors import ConfigError, DegenerateIntersection, NonMonotoneEstimates, SupportViolation
from .geometry import (
    AugmentedDomain,
    MeshDomain,
    RhoSets,
    SingularityPlacement,
    compute_rho_sets,
    place_singularity,
)
from .maps import LocalOperator, OperatorKind, SpaceKind
from .singular import (
    SingularSolution,
    build_green,
    build_neumann_singular,
    fundamental_solution,
)

logger = logging.getLogger(__name__)

SUPPORT_TOL = 1e-8
LEAK_TOL = 5e-2


class ExtrapolationVariable(str, Enum):
    INVERSE_LOG_TAU = "inverse_log_tau"
    INVERSE_NORMALIZER = "inverse_normalizer"


@dataclass(frozen=True, eq=False)
class RecoveryConfig:
    x0: tuple[float, float]
    tau_schedule: tuple[float, ...]
    map_kind: OperatorKind
    model: ConductivityModel
    coeff_a: ScalarCoefficient
    coeff_b: ScalarCoefficient
    r0: float
    domain: AugmentedDomain
    rho_sets: RhoSets
    extrapolation: ExtrapolationVariable = ExtrapolationVariable.INVERSE_LOG_TAU
    support_tol: float = SUPPORT_TOL
    leak_tol: float = LEAK_TOL
    target: float | None = None

    def __post_init__(self) -> None:
        schedule = self.tau_schedule
        if not schedule:
            raise ConfigError("tau_schedule must not be empty")
        if any(t <= 0 for t in schedule):
            raise ConfigError(f"tau_schedule entries must be positive: {list(schedule)}")
        if any(later >= earlier for earlier, later in zip(schedule, schedule[1:])):
            raise ConfigError(f"tau_schedule must be strictly decreasing: {list(schedule)}")
        limit = min(self.rho_sets.rho / 8.0, self.r0 / 2.0)
        if schedule[0] > limit * (1.0 + 1e-12):
            raise ConfigError(
                f"tau={schedule[0]} exceeds min(tau0, rho/8, r0/2)={limit:.6g}"
            )

    @property
    def omega(self) -> MeshDomain:
        return self.domain.original


@dataclass(frozen=True)
class TauEstimate:
    tau: float
    pairing: float
    normalizer: float
    delta_hat: float
    volume_pairing: float  # the pairing recomputed as a volume integral
    near_field: float  # contribution of B_{r0}(z_τ) ∩ Ω to delta_hat
    far_field: float

    @property
    def identity_defect(self) -> float:
        scale = max(abs(self.pairing), abs(self.volume_pairing), np.finfo(float).tiny)
        return abs(self.pairing - self.volume_pairing) / scale


@dataclass(frozen=True)
class RecoveryResult:
    per_tau: tuple[TauEstimate, ...]
    extrapolated: float
    target: float | None
    map_kind: OperatorKind
    tag_a: str = ""
    tag_b: str = ""
    fit_residual: float = 0.0

    @property
    def estimates(self) -> tuple[float, ...]:
        return tuple(row.delta_hat for row in self.per_tau)

    @property
    def max_identity_defect(self) -> float:
        return max(row.identity_defect for row in self.per_tau)

    @property
    def relative_error(self) -> float:
        if self.target is None or self.target == 0:
            return math.nan
        return abs(self.extrapolated - self.target) / abs(self.target)


def half_plane_normalizer(tau: float, r0: float) -> float:
    """Closed form of K(τ) for σ = I when Ω ∩ B_{r0}(z_τ) is a half-disk cap."""
    tail, _ = integrate.quad(lambda u: math.asin(u) / u, tau / r0, 1.0)
    return (math.pi * math.log(r0 / tau) - 2.0 * tail) / (4.0 * math.pi**2)


def _extended(
    model: ConductivityModel, coeff: ScalarCoefficient, aug: AugmentedDomain
) -> Conductivity:
    return Conductivity(model, extend_coefficient(coeff, aug))


def normalizer(
    model: ConductivityModel,
    coeff_a: ScalarCoefficient,
    coeff_b: ScalarCoefficient,
    placement: SingularityPlacement,
    r0: float,
    domain: AugmentedDomain,
) -> float:
    """K(τ) = ∫_{B_{r0}(z_τ)∩Ω} ∇Φ_a·M̄(x⁰)∇Φ_b with adaptive quadrature."""
    tau, z = placement.tau, np.asarray(placement.z_tau)
    if r0 <= 2.0 * tau:
        raise DegenerateIntersection(f"r0={r0} must exceed 2*tau={2.0 * tau}")
    omega = domain.original
    phi_a = fundamental_solution(_extended(model, coeff_a, domain).at(z), z)
    phi_b = fundamental_solution(_extended(model, coeff_b, domain).at(z), z)
    direction = model.d_t(np.asarray(placement.x0).reshape(1, 2))[0]
    corners = omega.vertices[omega.triangles]
    reach = np.linalg.norm(corners - corners.mean(axis=1, keepdims=True), axis=2).max(axis=1)
    candidates = np.flatnonzero(np.linalg.norm(omega.centroids - z, axis=1) < r0 + reach)
    if candidates.size == 0:
        raise DegenerateIntersection(f"B_r0(z_tau) misses Omega for r0={r0}")

    def integrand(points: np.ndarray, parents: np.ndarray) -> np.ndarray:
        flat = points.reshape(-1, 2)
        _, grad_a = phi_a.value_and_gradient(flat)
        _, grad_b = phi_b.value_and_gradient(flat)
        inside = (np.linalg.norm(flat - z, axis=1) < r0).astype(float)
        kernel = np.einsum("ni,ij,nj->n", grad_a, direction, grad_b) * inside
        return np.stack([kernel, inside], axis=1).reshape(points.shape[:2] + (2,))

    pieces = fem.integrate_adaptive(omega, candidates, integrand, z, radius=r0)
    value, measure = (float(v) for v in pieces.sum(axis=0))
    if measure < 1e-6:
        raise DegenerateIntersection(f"|B_r0(z_tau) ∩ Omega| = {measure:.3e} is below 1e-6")
    if not value > 0:
        raise DegenerateIntersection(f"normalizer K(tau={tau}) = {value:.3e} is not positive")
    return value


def dirichlet_trace(
    solution: SingularSolution, space: maps.BoundarySpace, tol: float = SUPPORT_TOL
) -> np.ndarray:
    """Coordinates of the solution's trace on ∂Ω; raises if it leaks off Γ."""
    omega = space.mesh
    values = solution.nodal_total()[: omega.vertex_count]
    outside = np.setdiff1d(omega.boundary_vertices, space.support)
    peak = float(np.abs(values[space.support]).max())
    leak = float(np.abs(values[outside]).max()) if outside.size else 0.0
    if leak > tol * peak:
        raise SupportViolation(
            f"trace reaches {leak:.3e} off Gamma; limit {tol:.1e} x {peak:.3e}"
        )
    nodal = np.zeros(omega.vertex_count)
    nodal[space.support] = values[space.support]
    return space.coordinates(nodal)


def _leading_flux_load(
    omega: MeshDomain, sigma: Conductivity, solution: SingularSolution
) -> np.ndarray:
    """∫_Ω σ∇Φ·∇φ_i, adaptively refined towards the source."""
    grads = omega.basis_gradients
    term = solution.leading

    def integrand(points: np.ndarray, parents: np.ndarray) -> np.ndarray:
        flat = points.reshape(-1, 2)
        _, grad = term.value_and_gradient(flat)
        current = np.einsum("nij,nj->ni", sigma(flat), grad).reshape(points.shape)
        return np.einsum("kqj,kij->kqi", current, grads[parents])

    pieces = fem.integrate_adaptive(
        omega, np.arange(omega.triangle_count), integrand, solution.z
    )
    load = np.zeros(omega.vertex_count)
    np.add.at(load, omega.triangles, pieces)
    return load


def neumann_flux(
    solution: SingularSolution,
    space: maps.BoundarySpace,
    sigma: Conductivity,
    stiffness: sparse.spmatrix,
    tol: float = LEAK_TOL,
) -> np.ndarray:
    """Coordinates of the weak flux of the solution through ∂Ω, supported on Γ̄."""
    omega = space.mesh
    corrector = solution.corrector.nodal_values[: omega.vertex_count]
    flux = stiffness @ corrector + _leading_flux_load(omega, sigma, solution)
    delta = omega.delta_vertices
    support = space.support
    peak = float(np.abs(flux[support]).max())
    leak = float(np.abs(flux[delta]).max()) if delta.size else 0.0
    if leak > tol * peak:
        raise SupportViolation(f"flux reaches {leak:.3e} on Delta; limit {tol:.1e} x {peak:.3e}")
    nodal = np.zeros(omega.vertex_count)
    nodal[support] = flux[support] - flux[support].mean()
    return space.coordinates(nodal)


def pairing(
    map_diff: LocalOperator,
    sol_a: SingularSolution,
    sol_b: SingularSolution,
    *,
    coordinates: tuple[np.ndarray, np.ndarray] | None = None,
    tol: float = SUPPORT_TOL,
) -> float:
    """⟨(map_a − map_b) data_a, data_b⟩ in the L²(∂Ω) pairing.

    D-N differences pair Dirichlet traces; N-D differences need the flux
    coordinates, passed through ``coordinates``.
    """
    if coordinates is None:
        if map_diff.kind is not OperatorKind.DN:
            raise ConfigError("N-D pairings need precomputed flux coordinates")
        space = map_diff.domain_space
        coordinates = (dirichlet_trace(sol_a, space, tol), dirichlet_trace(sol_b, space, tol))
    data_a, data_b = coordinates
    return float(data_b @ map_diff.matrix @ data_a)


@dataclass(eq=False)
class _PairContext:
    config: RecoveryConfig
    sigma_a: Conductivity
    sigma_b: Conductivity
    ext_a: Conductivity
    ext_b: Conductivity
    space: maps.BoundarySpace
    op_a: LocalOperator
    op_b: LocalOperator
    stiffness_a: sparse.spmatrix
    stiffness_b: sparse.spmatrix
    solve_a: fem.DirichletProblem | fem.NeumannProblem  # on Ω
    solve_b: fem.DirichletProblem | fem.NeumannProblem

    @classmethod
    def build(cls, config: RecoveryConfig) -> _PairContext:
        omega, aug, model = config.omega, config.domain, config.model
        same = config.coeff_a is config.coeff_b
        sigma_a = Conductivity(model, config.coeff_a)
        sigma_b = sigma_a if same else Conductivity(model, config.coeff_b)
        if config.map_kind is OperatorKind.DN:
            space = maps.build_trace_space(omega, SpaceKind.H_HALF_CO)
            assemble = maps.assemble_local_dn
            problem = fem.DirichletProblem
        else:
            space = maps.build_trace_space(omega, SpaceKind.H_MINUS_HALF_ZERO)
            assemble = maps.assemble_local_nd
            problem = fem.NeumannProblem
        op_a = assemble(omega, sigma_a, space)
        op_b = op_a if same else assemble(omega, sigma_b, space)
        solve_a = problem(omega, sigma_a)
        solve_b = solve_a if same else problem(omega, sigma_b)
        ext_a = _extended(model, config.coeff_a, aug)
        return cls(
            config,
            sigma_a,
            sigma_b,
            ext_a,
            ext_a if same else _extended(model, config.coeff_b, aug),
            space,
            op_a,
            op_b,
            solve_a.stiffness,
            solve_b.stiffness,
            solve_a,
            solve_b,
        )

    def estimate(self, tau: float) -> TauEstimate:
        config = self.config
        placement = place_singularity(config.omega, config.x0, tau, config.rho_sets)
        omega, space = config.omega, self.space
        difference = self.op_a - self.op_b
        if config.map_kind is OperatorKind.DN:
            sol_a = build_green(config.domain, self.ext_a, placement)
            sol_b = build_green(config.domain, self.ext_b, placement)
            data_a = dirichlet_trace(sol_a, space, config.support_tol)
            data_b = dirichlet_trace(sol_b, space, config.support_tol)
            assert isinstance(self.solve_a, fem.DirichletProblem)
            assert isinstance(self.solve_b, fem.DirichletProblem)
            field_a, _ = self.solve_a.solve(space.nodal(data_a)[self.solve_a.fixed])
            field_b, _ = self.solve_b.solve(space.nodal(data_b)[self.solve_b.fixed])
            sign = 1.0
        else:
            sol_a = build_neumann_singular(config.domain, self.ext_a, placement)
            sol_b = build_neumann_singular(config.domain, self.ext_b, placement)
            data_a = neumann_flux(sol_a, space, self.sigma_a, self.stiffness_a, config.leak_tol)
            data_b = neumann_flux(sol_b, space, self.sigma_b, self.stiffness_b, config.leak_tol)
            field_a, _ = self.solve_a.solve(space.nodal(data_a))
            field_b, _ = self.solve_b.solve(space.nodal(data_b))
            sign = -1.0
        value = pairing(difference, sol_a, sol_b, coordinates=(data_a, data_b))
        density = _volume_density(omega, self.sigma_a, self.sigma_b, field_a, field_b)
        near = np.linalg.norm(omega.centroids - np.asarray(placement.z_tau), axis=1) < config.r0
        k = normalizer(
            config.model, config.coeff_a, config.coeff_b, placement, config.r0, config.domain
        )
        logger.info("tau=%g pairing=%.6e normalizer=%.6e", tau, value, k)
        return TauEstimate(
            tau=float(tau),
            pairing=value,
            normalizer=k,
            delta_hat=sign * value / k,
            volume_pairing=sign * float(density.sum()),
            near_field=float(density[near].sum()) / k,
            far_field=float(density[~near].sum()) / k,
        )


def _volume_density(
    omega: MeshDomain,
    sigma_a: Conductivity,
    sigma_b: Conductivity,
    field_a: np.ndarray,
    field_b: np.ndarray,
) -> np.ndarray:
    """Per-triangle ∫(σ̄_a − σ̄_b)∇u_a·∇u_b for nodal P1 fields."""
    difference = fem.element_sigma(omega, sigma_a) - fem.element_sigma(omega, sigma_b)
    grads = omega.basis_gradients
    grad_a = np.einsum("tij,ti->tj", grads, field_a[omega.triangles])
    grad_b = np.einsum("tij,ti->tj", grads, field_b[omega.triangles])
    return omega.areas * np.einsum("ta,tab,tb->t", grad_a, difference, grad_b)


def extrapolate(
    taus: Sequence[float],
    estimates: Sequence[float],
    normalizers: Sequence[float],
    variable: ExtrapolationVariable = ExtrapolationVariable.INVERSE_LOG_TAU,
) -> tuple[float, float]:
    """Intercept of the linear least-squares fit of δ̂ in the correction variable."""
    values = np.asarray(estimates, dtype=float)
    if values.size == 1:
        return float(values[0]), 0.0
    if variable is ExtrapolationVariable.INVERSE_LOG_TAU:
        x = 1.0 / np.log(1.0 / np.asarray(taus, dtype=float))
    else:
        x = 1.0 / np.asarray(normalizers, dtype=float)
    design = np.column_stack([np.ones_like(x), x])
    coefficients, *_ = np.linalg.lstsq(design, values, rcond=None)
    residual = float(np.sqrt(np.mean((design @ coefficients - values) ** 2)))
    return float(coefficients[0]), residual


def _check_cauchy(estimates: Sequence[float]) -> None:
    steps = np.abs(np.diff(np.asarray(estimates, dtype=float)))
    scale = max(float(np.abs(estimates).max()), np.finfo(float).tiny)
    if np.any(steps[1:] > steps[:-1] + 1e-12 * scale):
        warnings.warn(
            NonMonotoneEstimates(
                f"boundary estimates are not contracting along the schedule: {list(estimates)}"
            ),
            stacklevel=3,
        )


def recover_boundary_difference(config: RecoveryConfig, *, threads: int = 1) -> RecoveryResult:
    """δ̂(τ) = P(τ)/K(τ) along the schedule, extrapolated to τ → 0."""
    context = _PairContext.build(config)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(context.estimate, config.tau_schedule))
    else:
        rows = [context.estimate(tau) for tau in config.tau_schedule]
    estimates = [row.delta_hat for row in rows]
    _check_cauchy(estimates)
    extrapolated, residual = extrapolate(
        config.tau_schedule, estimates, [row.normalizer for row in rows], config.extrapolation
    )
    return RecoveryResult(
        per_tau=tuple(rows),
        extrapolated=extrapolated,
        target=config.target,
        map_kind=config.map_kind,
        tag_a=config.coeff_a.tag,
        tag_b=config.coeff_b.tag,
        fit_residual=residual,
    )


@dataclass(frozen=True)
class StabilityRow:
    tag_a: str
    tag_b: str
    sup_diff: float
    map_norm: float

    @property
    def degenerate(self) -> bool:
        return self.sup_diff == 0.0 and self.map_norm == 0.0

    @property
    def ratio(self) -> float:
        if self.degenerate:
            return math.nan
        if self.map_norm == 0.0:
            return math.inf
        return self.sup_diff / self.map_norm


@dataclass(frozen=True)
class StabilityReport:
    rows: tuple[StabilityRow, ...]
    map_kind: OperatorKind
    metadata: dict[str, object] = field(default_factory=dict)

    @property
    def sup_ratio(self) -> float:
        ratios = [row.ratio for row in self.rows if not row.degenerate]
        return max(ratios) if ratios else math.nan

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(row.ratio for row in self.rows if not row.degenerate)


def sup_difference(
    model: ConductivityModel,
    coeff_a: ScalarCoefficient,
    coeff_b: ScalarCoefficient,
    mesh: MeshDomain,
    rho_sets: RhoSets,
) -> float:
    """max over Γ_ρ vertices of the spectral norm of A(x, a(x)) − A(x, b(x))."""
    points = mesh.vertices[rho_sets.gamma_rho_vertices]
    difference = model.A(points, coeff_a(points)) - model.A(points, coeff_b(points))
    return float(np.linalg.norm(difference, ord=2, axis=(1, 2)).max())


def _pair_tags(
    pairs: Sequence[tuple[ScalarCoefficient, ScalarCoefficient]],
) -> list[tuple[str, str]]:
    tags = []
    for index, (a, b) in enumerate(pairs):
        tags.append((a.tag or f"pair{index}a", b.tag or f"pair{index}b"))
    return tags


def stability_sweep(
    pairs: Sequence[tuple[ScalarCoefficient, ScalarCoefficient]],
    map_kind: OperatorKind | str,
    mesh: MeshDomain,
    rho: float,
    model: ConductivityModel,
    *,
    threads: int = 1,
) -> StabilityReport:
    """sup_{Γ_ρ}|A(·,a) − A(·,b)| against ‖map_a − map_b‖ for every pair."""
    map_kind = OperatorKind(map_kind)
    rho_sets = compute_rho_sets(mesh, rho)
    if map_kind is OperatorKind.DN:
        space = maps.build_trace_space(mesh, SpaceKind.H_HALF_CO)
        assemble = maps.assemble_local_dn
    else:
        space = maps.build_trace_space(mesh, SpaceKind.H_MINUS_HALF_ZERO)
        assemble = maps.assemble_local_nd
    unique: dict[int, ScalarCoefficient] = {}
    for a, b in pairs:
        unique.setdefault(id(a), a)
        unique.setdefault(id(b), b)

    def build(coeff: ScalarCoefficient) -> LocalOperator:
        return assemble(mesh, Conductivity(model, coeff), space)

    logger.info("stability sweep: %d pairs, %d operators", len(pairs), len(unique))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        operators = dict(zip(unique, pool.map(build, unique.values())))
    rows = []
    for (a, b), (tag_a, tag_b) in zip(pairs, _pair_tags(pairs)):
        rows.append(
            StabilityRow(
                tag_a,
                tag_b,
                sup_difference(model, a, b, mesh, rho_sets),
                maps.op_norm(operators[id(a)], operators[id(b)]),
            )
        )
    rows.sort(key=lambda row: (row.tag_a, row.tag_b))
    e_values = {
        tag: w1p_norm(coeff, mesh, model.p)
        for tag, coeff in sorted(
            {c.tag: c for pair in pairs for c in pair if c.tag}.items()
        )
    }
    metadata: dict[str, object] = {
        "mesh_hash": mesh.mesh_hash(),
        "rho": rho,
        "h_mesh": mesh.mesh_size,
        "E": e_values,
    }
    return StabilityReport(tuple(rows), map_kind, metadata)


def e_escalation_pairs(
    a: ScalarCoefficient,
    b: ScalarCoefficient,
    ks: Iterable[float],
    amplitude: float,
    rho_sets: RhoSets,
) -> list[tuple[ScalarCoefficient, ScalarCoefficient]]:
    """(a + η_k, b + η_k) with η_k = amplitude·sin(k x₁)·χ and χ = 0 on U_ρ."""
    quarter = 0.25 * rho_sets.rho
    pairs = []
    for k in ks:

        def bump(points: np.ndarray, k: float = float(k)) -> np.ndarray:
            cutoff = np.clip((rho_sets.distance(points) - quarter) / quarter, 0.0, 1.0)
            return amplitude * np.sin(k * points[:, 0]) * cutoff

        suffix = f"osc{k:g}"
        pairs.append(
            (a.plus(bump, tag=f"{a.tag}+{suffix}"), b.plus(bump, tag=f"{b.tag}+{suffix}"))
        )
    return pairs


def random_continuous_pairs(
    count: int,
    seed: int,
    *,
    lambda_: float,
    x0: tuple[float, float],
) -> list[tuple[ScalarCoefficient, ScalarCoefficient]]:
    """Affine pairs from scrambled Sobol' samples with |(a − b)(x⁰)| ∈ [0.1, 0.2].

    Signs alternate with the sample index, so the sign of (a − b)(x⁰) is
    known for every pair.
    """
    if count < 1:
        raise ConfigError(f"count must be positive, got {count}")
    sampler = qmc.Sobol(d=6, scramble=True, seed=seed)
    samples = sampler.random_base2(max(0, math.ceil(math.log2(count))))[:count]
    lows = np.array([1.0, -0.1, -0.1, 0.1, -0.02, -0.02])
    highs = np.array([1.2, 0.1, 0.1, 0.2, 0.02, 0.02])
    scaled = qmc.scale(samples, lows, highs)
    pairs = []
    for index, (c0, c1, c2, g0, g1, g2) in enumerate(scaled):
        sign = 1.0 if index % 2 == 0 else -1.0
        base = f"{c0:.6f} + ({c1:.6f})*x1 + ({c2:.6f})*x2"
        gap = (
            f"{sign * g0:.6f} + ({sign * g1:.6f})*(x1 - ({x0[0]:.6f}))"
            f" + ({sign * g2:.6f})*(x2 - ({x0[1]:.6f}))"
        )
        a = expression_coefficient(f"{base} + {gap}", lambda_=lambda_, tag=f"rand{index}a")
        b = expression_coefficient(base, lambda_=lambda_, tag=f"rand{index}b")
        pairs.append((a, b))
    return pairs


@dataclass(frozen=True)
class MollifiedRow:
    epsilon: float
    delta_hat: float
    deviation: float  # |δ̂_ε − δ̂|
    two_omega: float  # 2ω(ε)
    map_perturbation: float  # ‖map_{a_ε} − map_a‖ + ‖map_{b_ε} − map_b‖


def _modulus_at(coeff: ScalarCoefficient, mesh: MeshDomain, epsilon: float) -> float:
    modulus = coeff.modulus or estimate_modulus(coeff, mesh.vertices)
    return modulus(epsilon)


def _unbounded(coeff: ScalarCoefficient, aug: AugmentedDomain) -> ScalarCoefficient:
    if coeff.domain is None and coeff.kind is CoefficientKind.EXPRESSION:
        return coeff
    return replace(extend_coefficient(coeff, aug), domain=None)


def mollified_recovery(
    config: RecoveryConfig, epsilons: Sequence[float], *, threads: int = 1
) -> tuple[RecoveryResult, list[MollifiedRow]]:
    """Recovery on (a_ε, b_ε) against the unmollified pair, for each ε."""
    base = recover_boundary_difference(config, threads=threads)
    rho, omega = config.rho_sets.rho, config.omega
    context = _PairContext.build(config)
    rows = []
    for epsilon in epsilons:
        a_eps = mollify(_unbounded(config.coeff_a, config.domain), epsilon, rho=rho)
        b_eps = mollify(_unbounded(config.coeff_b, config.domain), epsilon, rho=rho)
        smoothed = replace(config, coeff_a=a_eps, coeff_b=b_eps)
        result = recover_boundary_difference(smoothed, threads=threads)
        smoothed_context = _PairContext.build(smoothed)
        perturbation = maps.op_norm(smoothed_context.op_a, context.op_a) + maps.op_norm(
            smoothed_context.op_b, context.op_b
        )
        omega_eps = max(
            _modulus_at(config.coeff_a, omega, epsilon),
            _modulus_at(config.coeff_b, omega, epsilon),
        )
        rows.append(
            MollifiedRow(
                epsilon=float(epsilon),
                delta_hat=result.extrapolated,
                deviation=abs(result.extrapolated - base.extrapolated),
                two_omega=2.0 * omega_eps,
                map_perturbation=perturbation,
            )
        )
    return base, rows


def _write_header(target: TextIO, header: dict[str, str] | None) -> None:
    for key, value in (header or {}).items():
        target.write(f"# {key}={value}\n")


def write_recovery_csv(
    result: RecoveryResult, target: Path | TextIO, header: dict[str, str] | None = None
) -> None:
    if isinstance(target, Path):
        with target.open("w", newline="") as handle:
            write_recovery_csv(result, handle, header)
        return
    _write_header(target, header)
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(["pair_a", "pair_b", "tau", "P", "K", "delta_hat"])
    for row in result.per_tau:
        writer.writerow(
            [
                result.tag_a,
                result.tag_b,
                f"{row.tau:.12g}",
                f"{row.pairing:.12e}",
                f"{row.normalizer:.12e}",
                f"{row.delta_hat:.12e}",
            ]
        )


def write_stability_csv(
    report: StabilityReport, target: Path | TextIO, header: dict[str, str] | None = None
) -> None:
    if isinstance(target, Path):
        with target.open("w", newline="") as handle:
            write_stability_csv(report, handle, header)
        return
    _write_header(target, header)
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(["pair_a", "pair_b", "sup_diff", "map_norm", "ratio"])
    for row in report.rows:
        writer.writerow(
            [
                row.tag_a,
                row.tag_b,
                f"{row.sup_diff:.12e}",
                f"{row.map_norm:.12e}",
                "degenerate" if row.degenerate else f"{row.ratio:.12e}",
            ]
        )


def format_recovery_summary(result: RecoveryResult) -> str:
    lines = [
        f"map_kind: {result.map_kind.value}",
        f"pair: {result.tag_a} / {result.tag_b}",
    ]
    for row in result.per_tau:
        lines.append(
            f"tau={row.tau:.6g} delta_hat={row.delta_hat:.12g} "
            f"near={row.near_field:.6g} far={row.far_field:.6g}"
        )
    lines.append(f"extrapolated: {result.extrapolated:.12g}")
    if result.target is not None:
        lines.append(f"target: {result.target:.12g}")
    return "\n".join(lines) + "\n"
