"""Registered acceptance oracles.

An oracle is a function of keyword parameters (taken from a check case) that
returns named float quantities. Check suites under ``_checks/`` bind oracles
to expectations; :func:`run_oracle` validates the parameters against the
oracle's signature first.

Meshes, augmented domains and the more expensive operators are cached per
parameter set, so suites that sweep one parameter reuse the rest.
"""

from __future__ import annotations

import inspect
import logging
import math
from functools import lru_cache
from typing import Any, Callable

import numpy as np

from . import fem, maps
from .conductivity import (
    TRIANGLE_RULE_WEIGHTS,
    Conductivity,
    ConductivityModel,
    Family,
    MatrixField,
    Modulus,
    ScalarCoefficient,
    expression_coefficient,
    inverse_monotonicity_margin,
    mollify,
    triangle_quadrature_points,
    verify_class_H,
)
from .errors import ConfigError, NumericFailure
from .geometry import (
    AugmentedDomain,
    GammaSpec,
    MeshDomain,
    RhoSets,
    Shape,
    augment_domain,
    compute_rho_sets,
    generate_mesh,
    place_singularity,
    rho_collar_report,
)
from .maps import OperatorKind, SpaceKind
from .recovery import (
    RecoveryConfig,
    RecoveryResult,
    e_escalation_pairs,
    half_plane_normalizer,
    normalizer,
    random_continuous_pairs,
    recover_boundary_difference,
    stability_sweep,
)
from .singular import (
    build_dirichlet_singular,
    build_green,
    build_neumann_singular,
    check_gradient_lower_bound,
    fit_remainder_rate,
    fundamental_solution,
    h1_blowup_series,
    leading_term,
    neumann_flux_report,
    record_remainder_rate,
    trace_support_report,
)

logger = logging.getLogger(__name__)

Measurement = dict[str, float]
Oracle = Callable[..., Measurement]

ORACLES: dict[str, Oracle] = {}

LAMBDA = 3.0
UPPER_ARC = (0.0, math.pi)


def oracle(name: str) -> Callable[[Oracle], Oracle]:
    def register(function: Oracle) -> Oracle:
        if name in ORACLES:
            raise ValueError(f"oracle {name!r} is already registered")
        ORACLES[name] = function
        return function

    return register


def run_oracle(name: str, params: dict[str, Any]) -> Measurement:
    """Call a registered oracle; unknown names or parameters are config errors."""
    if name not in ORACLES:
        raise ConfigError(f"Unknown oracle: {name}")
    function = ORACLES[name]
    logger.debug("oracle %s params=%s", name, params)
    try:
        inspect.signature(function).bind(**params)
    except TypeError as exc:
        raise ConfigError(f"oracle {name}: {exc}") from exc
    return function(**_hashable(params))


def _hashable(params: dict[str, Any]) -> dict[str, Any]:
    def freeze(value: Any) -> Any:
        if isinstance(value, list):
            return tuple(freeze(item) for item in value)
        return value

    return {key: freeze(value) for key, value in params.items()}


def _gamma(spec: str | tuple[float, float]) -> GammaSpec:
    if spec == "full":
        return GammaSpec.full_boundary()
    if spec == "upper":
        return GammaSpec.arc(*UPPER_ARC)
    if isinstance(spec, str):
        return GammaSpec.side(spec)
    return GammaSpec.arc(float(spec[0]), float(spec[1]))


@lru_cache(maxsize=32)
def _mesh(shape: str, h_mesh: float, gamma: str | tuple[float, float]) -> MeshDomain:
    return generate_mesh(Shape(shape), float(h_mesh), _gamma(gamma))


@lru_cache(maxsize=32)
def _domain(
    shape: str, h_mesh: float, gamma: str | tuple[float, float], rho: float
) -> tuple[MeshDomain, RhoSets, AugmentedDomain]:
    mesh = _mesh(shape, h_mesh, gamma)
    rho_sets = compute_rho_sets(mesh, float(rho))
    return mesh, rho_sets, augment_domain(mesh, rho_sets)


def _model(name: str) -> ConductivityModel:
    if name == "isotropic":
        return ConductivityModel.isotropic(lambda_=LAMBDA)
    if name == "scalar_multiple":
        return ConductivityModel(
            Family.SCALAR_MULTIPLE,
            lambda_=LAMBDA,
            calE=LAMBDA,
            calF=0.5,
            M=MatrixField.constant([[1.5, 0.3], [0.3, 1.0]]),
        )
    if name == "affine":
        return ConductivityModel(
            Family.AFFINE,
            lambda_=LAMBDA,
            calE=LAMBDA,
            calF=0.5,
            M0=MatrixField.from_spec([["0.5", "0.1*x1"], ["0.1*x1", "0.4"]]),
            M1=MatrixField.constant([[0.5, 0.0], [0.0, 0.5]]),
        )
    raise ConfigError(f"unknown model {name!r}; use isotropic, scalar_multiple or affine")


_NAMED = {
    "identity": ("isotropic", "1.0"),
    "isotropic_linear": ("isotropic", "1 + 0.2*x1"),
    "scalar_multiple": ("scalar_multiple", "1 + 0.1*x2"),
    "affine": ("affine", "1 + 0.2*x1"),
}


def _coefficient(source: str | float, tag: str = "") -> ScalarCoefficient:
    return expression_coefficient(str(source), lambda_=LAMBDA, tag=tag or str(source))


def _conductivity(name: str) -> Conductivity:
    if name not in _NAMED:
        raise ConfigError(f"unknown conductivity {name!r}; use one of {', '.join(_NAMED)}")
    model, source = _NAMED[name]
    return Conductivity(_model(model), _coefficient(source, tag=name))


def _identity() -> Conductivity:
    return _conductivity("identity")


@lru_cache(maxsize=8)
def _identity_dn(h_mesh: float) -> maps.LocalOperator:
    mesh = _mesh(Shape.UNIT_DISK.value, h_mesh, "full")
    space = maps.build_trace_space(mesh, SpaceKind.H_HALF_CO)
    return maps.assemble_local_dn(mesh, _identity(), space)


@oracle("dn_disk_symbol")
def dn_disk_symbol(h_mesh: float = 0.05, k: int = 1) -> Measurement:
    """⟨Λ g, g⟩ / ‖g‖² for g = cos(kθ) with σ = I on the disk; the symbol is |k|."""
    op = _identity_dn(h_mesh)
    mesh = op.domain_space.mesh
    boundary = mesh.boundary_vertices
    theta = np.arctan2(mesh.vertices[boundary, 1], mesh.vertices[boundary, 0])
    nodal = np.zeros(mesh.vertex_count)
    nodal[boundary] = np.cos(k * theta)
    coords = op.domain_space.coordinates(nodal)
    value = op.form(coords, coords) / float(nodal @ (fem.boundary_mass_matrix(mesh) @ nodal))
    return {"value": value, "relative_error": abs(value - abs(k)) / abs(k)}


@oracle("inverse_relation")
def inverse_relation(h_mesh: float = 0.1, conductivity: str = "identity") -> Measurement:
    mesh = _mesh(Shape.UNIT_DISK.value, h_mesh, "full")
    return {"value": maps.inverse_relation_defect(mesh, _conductivity(conductivity))}


@oracle("self_adjoint")
def self_adjoint(
    shape: str = "unit_disk",
    gamma: str | tuple[float, float] = "upper",
    kind: str = "DN",
    conductivity: str = "identity",
    h_mesh: float = 0.1,
) -> Measurement:
    mesh = _mesh(shape, h_mesh, gamma)
    sigma = _conductivity(conductivity)
    if OperatorKind(kind) is OperatorKind.DN:
        op = maps.assemble_local_dn(mesh, sigma, maps.build_trace_space(mesh, SpaceKind.H_HALF_CO))
    else:
        space = maps.build_trace_space(mesh, SpaceKind.H_MINUS_HALF_ZERO)
        op = maps.assemble_local_nd(mesh, sigma, space)
    return {"value": op.asymmetry}


@oracle("green_disk_images")
def green_disk_images(
    h_mesh: float = 0.02, z: tuple[float, float] = (0.5, 0.0), exclude: float = 0.1
) -> Measurement:
    """Relative L² error of the discrete Green function against the image formula."""
    mesh = _mesh(Shape.UNIT_DISK.value, h_mesh, "full")
    source = np.asarray(z, dtype=float)
    _, remainder, term = fem.solve_point_source_dirichlet(mesh, _identity(), source)
    keep = np.flatnonzero(np.linalg.norm(mesh.centroids - source, axis=1) >= exclude)
    points = triangle_quadrature_points(mesh, keep)
    flat = points.reshape(-1, 2)
    phi = term.value_and_gradient(flat)[0].reshape(points.shape[:2])
    discrete = phi + fem.p1_values_at(mesh, remainder.nodal_values, points, keep)
    radius = float(np.linalg.norm(source))
    if radius > 0:
        image = source / radius**2
        exact_remainder = np.log(radius * np.linalg.norm(flat - image, axis=1)) / (2.0 * math.pi)
    else:
        exact_remainder = np.zeros(flat.shape[0])
    exact = phi + exact_remainder.reshape(points.shape[:2])
    weights = mesh.areas[keep][:, None] * TRIANGLE_RULE_WEIGHTS[None, :]
    error = math.sqrt(float(np.sum(weights * (discrete - exact) ** 2)))
    scale = math.sqrt(float(np.sum(weights * exact**2)))
    return {"value": error / scale}


@oracle("remainder_rate_selftest")
def remainder_rate_selftest(
    h_mesh: float = 0.1, m: int = 1, tau: float = 0.1, rho: float = 1.2
) -> Measurement:
    """Fitted decay of a homogeneous leading term against its exact exponent."""
    mesh, rho_sets, aug = _domain(Shape.UNIT_DISK.value, h_mesh, "upper", rho)
    sigma = _identity()
    placement = place_singularity(mesh, (0.0, 1.0), tau, rho_sets)
    term = leading_term(np.eye(2), placement.z_tau, m, r0=rho / 8.0)
    solution = build_dirichlet_singular(aug, sigma, term)
    radii = np.geomspace(0.02, 0.25 * rho, 8)
    fit = fit_remainder_rate(solution, radii, fit_leading=True)
    return {
        "value": fit.exponent,
        "relative_error": abs(fit.exponent - fit.reference_exponent) / abs(fit.reference_exponent),
    }


@oracle("remainder_rate_identity")
def remainder_rate_identity(
    h_mesh: float = 0.1, m: int = 0, tau: float = 0.1, rho: float = 1.2
) -> Measurement:
    """Fitted decay of the σ = I corrector; a bounded remainder has exponent ≥ 0."""
    mesh, rho_sets, aug = _domain(Shape.UNIT_DISK.value, h_mesh, "upper", rho)
    placement = place_singularity(mesh, (0.0, 1.0), tau, rho_sets)
    term = leading_term(np.eye(2), placement.z_tau, m, r0=rho / 8.0)
    solution = build_dirichlet_singular(aug, _identity(), term)
    fit = record_remainder_rate(solution)
    if fit is None:
        raise NumericFailure(f"too few radii for the corrector fit at tau={tau}, rho={rho}")
    return {
        "value": fit.exponent,
        "above_reference": fit.exponent - fit.reference_exponent,
        "residual": fit.residual,
    }


@oracle("h1_blowup")
def h1_blowup(
    h_mesh: float = 0.1,
    rho: float = 1.6,
    taus: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025),
) -> Measurement:
    """Band of ‖G‖²_{H¹(Ω)}/log(1/τ) along the schedule (max over min)."""
    mesh, rho_sets, aug = _domain(Shape.UNIT_DISK.value, h_mesh, "full", rho)
    rows = h1_blowup_series(aug, _identity(), rho_sets, (1.0, 0.0), taus)
    ratios = [row.ratio_to_log for row in rows]
    return {
        "value": max(ratios) / min(ratios),
        "caccioppoli_max": max(row.caccioppoli for row in rows),
    }


@oracle("trace_support")
def trace_support(h_mesh: float = 0.1, tau: float = 0.1, rho: float = 1.2) -> Measurement:
    mesh, rho_sets, aug = _domain(Shape.UNIT_DISK.value, h_mesh, "upper", rho)
    placement = place_singularity(mesh, (0.0, 1.0), tau, rho_sets)
    return {"value": trace_support_report(build_green(aug, _identity(), placement)).ratio}


@oracle("neumann_flux")
def neumann_flux(
    h_mesh: float = 0.1, tau: float = 0.1, rho: float = 1.2, conductivity: str = "identity"
) -> Measurement:
    mesh, rho_sets, aug = _domain(Shape.UNIT_DISK.value, h_mesh, "upper", rho)
    placement = place_singularity(mesh, (0.0, 1.0), tau, rho_sets)
    solution = build_neumann_singular(aug, _conductivity(conductivity), placement)
    report = neumann_flux_report(solution)
    return {
        "total_flux": report.total_flux,
        "max_leak": report.max_leak,
        "patch_flux": report.patch_flux,
    }


@oracle("collar")
def collar(
    shape: str = "unit_disk",
    gamma: str | tuple[float, float] = "upper",
    rho: float = 1.2,
    h_mesh: float = 0.1,
) -> Measurement:
    _, rho_sets, aug = _domain(shape, h_mesh, gamma, rho)
    report = rho_collar_report(aug, rho_sets)
    return {
        "collar_over_rho": report.min_collar_distance / rho,
        "patch_over_rho": report.min_patch_distance / rho,
    }


@oracle("gradient_lower_bound")
def gradient_lower_bound(m: int = 1, anisotropy: float = 1.0) -> Measurement:
    sigma = np.diag([anisotropy, 1.0 / anisotropy])
    term = leading_term(sigma, (0.0, 0.0), m, r0=1.0)
    report = check_gradient_lower_bound(term, np.geomspace(1e-3, 1.0, 12))
    return {"value": report.min_margin}


@oracle("class_h")
def class_h(
    model: str = "affine",
    samples: int = 512,
    seed: int = 0,
    t_range: tuple[float, float] | None = None,
) -> Measurement:
    """Sampled class-𝓗 margins, plus the inverse-monotonicity margin at one point."""
    built = _model(model)
    low, high = t_range if t_range is not None else (1.0 / LAMBDA, LAMBDA)
    report = verify_class_H(built, samples, seed=seed, t_range=(low, high))
    inverse = inverse_monotonicity_margin(built, (0.3, -0.2), low, high)
    return {
        "ellipticity_margin": report.ellipticity_margin,
        "monotonicity_margin": report.monotonicity_margin,
        "inverse_margin": inverse.margin,
    }


@oracle("normalizer_half_plane")
def normalizer_half_plane(
    tau: float = 0.05, r0: float = 0.4, rho: float = 0.4, h_mesh: float = 0.05
) -> Measurement:
    """K(τ) on the unit square's top side against the half-plane closed form."""
    mesh, rho_sets, aug = _domain(Shape.UNIT_SQUARE.value, h_mesh, "top", rho)
    placement = place_singularity(mesh, (0.5, 1.0), tau, rho_sets)
    one = _coefficient("1.0")
    computed = normalizer(_model("isotropic"), one, one, placement, r0, aug)
    exact = half_plane_normalizer(tau, r0)
    return {"value": computed, "relative_error": abs(computed - exact) / exact}


@lru_cache(maxsize=16)
def _recovery(
    map_kind: str,
    h_mesh: float,
    a: str,
    b: str,
    taus: tuple[float, ...],
    r0: float,
    rho: float,
    x0: tuple[float, float],
) -> RecoveryResult:
    mesh, rho_sets, aug = _domain(Shape.UNIT_DISK.value, h_mesh, "upper", rho)
    coeff_a, coeff_b = _coefficient(a, "a"), _coefficient(b, "b")
    point = np.asarray(x0, dtype=float).reshape(1, 2)
    config = RecoveryConfig(
        x0=x0,
        tau_schedule=tuple(float(t) for t in taus),
        map_kind=OperatorKind(map_kind),
        model=_model("isotropic"),
        coeff_a=coeff_a,
        coeff_b=coeff_b,
        r0=r0,
        domain=aug,
        rho_sets=rho_sets,
        target=float(coeff_a(point)[0] - coeff_b(point)[0]),
    )
    return recover_boundary_difference(config)


@oracle("recovery")
def recovery(
    map_kind: str = "DN",
    h_mesh: float = 0.02,
    a: str | float = "1.0",
    b: str | float = "1.1",
    taus: tuple[float, ...] = (0.1, 0.05, 0.025),
    r0: float = 1.0,
    rho: float = 1.2,
    x0: tuple[float, float] = (0.0, 1.0),
) -> Measurement:
    """Extrapolated (a − b)(x⁰) from the local map difference."""
    result = _recovery(map_kind, h_mesh, str(a), str(b), tuple(taus), r0, rho, tuple(x0))
    target = result.target if result.target is not None else math.nan
    return {
        "value": result.extrapolated,
        "relative_error": result.relative_error,
        "identity_defect": result.max_identity_defect,
        "sign_correct": float(np.sign(result.extrapolated) == np.sign(target)),
        "last_estimate": result.estimates[-1],
    }


@oracle("dn_nd_agreement")
def dn_nd_agreement(
    h_mesh: float = 0.02,
    a: str | float = "1.0",
    b: str | float = "1.1",
    taus: tuple[float, ...] = (0.1, 0.05, 0.025),
    r0: float = 1.0,
    rho: float = 1.2,
) -> Measurement:
    args = (h_mesh, str(a), str(b), tuple(taus), r0, rho, (0.0, 1.0))
    dn = _recovery("DN", *args).extrapolated
    nd = _recovery("ND", *args).extrapolated
    return {"value": abs(dn - nd) / max(abs(dn), abs(nd))}


@oracle("sign_recovery")
def sign_recovery(
    count: int = 5,
    seed: int = 7,
    h_mesh: float = 0.1,
    taus: tuple[float, ...] = (0.15, 0.1),
    r0: float = 1.0,
    rho: float = 1.2,
) -> Measurement:
    """Number of random continuous pairs whose recovered sign of (a − b)(x⁰) is right."""
    x0 = (0.0, 1.0)
    correct = 0
    for a, b in random_continuous_pairs(count, seed, lambda_=LAMBDA, x0=x0):
        assert a.expression is not None and b.expression is not None
        result = _recovery(
            "DN", h_mesh, a.expression.source, b.expression.source, tuple(taus), r0, rho, x0
        )
        target = result.target if result.target is not None else 0.0
        correct += int(np.sign(result.extrapolated) == np.sign(target))
    return {"value": float(correct), "fraction": correct / count}


_SMOOTH = "1 + 0.3*sin(2*x1)"


@oracle("mollification_modulus")
def mollification_modulus(
    epsilon: float = 0.1, h_mesh: float = 0.1, rho: float = 1.2
) -> Measurement:
    """max over U_{ρ/2} nodes of |a_ε − a| / ω(ε) for a Lipschitz coefficient."""
    mesh, _, _ = _domain(Shape.UNIT_DISK.value, h_mesh, "upper", rho)
    coeff = expression_coefficient(
        _SMOOTH, lambda_=LAMBDA, tag="smooth", modulus=Modulus.lipschitz(0.6)
    )
    nodes = mesh.vertices[compute_rho_sets(mesh, 0.5 * rho).contains(mesh.vertices)]
    smoothed = mollify(coeff, epsilon, rho=rho)
    assert coeff.modulus is not None
    deviation = float(np.abs(smoothed(nodes) - coeff(nodes)).max())
    return {"value": deviation / coeff.modulus(epsilon), "deviation": deviation}


@oracle("mollification_maps")
def mollification_maps(
    epsilons: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025, 0.0125),
    h_mesh: float = 0.1,
    rho: float = 1.2,
) -> Measurement:
    """‖Λ_{a_ε} − Λ_a‖ along ε halvings: worst relative increase and final size."""
    mesh = _mesh(Shape.UNIT_DISK.value, h_mesh, "upper")
    model = _model("isotropic")
    coeff = _coefficient(_SMOOTH, tag="smooth")
    space = maps.build_trace_space(mesh, SpaceKind.H_HALF_CO)
    base = maps.assemble_local_dn(mesh, Conductivity(model, coeff), space)
    norms = []
    for epsilon in epsilons:
        smoothed = Conductivity(model, mollify(coeff, epsilon, rho=rho))
        norms.append(maps.op_norm(maps.assemble_local_dn(mesh, smoothed, space), base))
    increases = [later / earlier - 1.0 for earlier, later in zip(norms, norms[1:]) if earlier > 0]
    return {
        "max_increase": max(increases, default=0.0),
        "final_relative": norms[-1] / maps.op_norm(base, base.scaled(0.0)),
    }


@oracle("stability_escalation")
def stability_escalation(
    ks: tuple[float, ...] = (2.0, 4.0, 8.0),
    amplitude: float = 0.05,
    h_mesh: float = 0.1,
    rho: float = 0.6,
) -> Measurement:
    """Spread (max over min) of the stability ratio under interior oscillation."""
    mesh, rho_sets, _ = _domain(Shape.UNIT_DISK.value, h_mesh, "upper", rho)
    pairs = e_escalation_pairs(
        _coefficient("1.0", "a"), _coefficient("1.1", "b"), ks, amplitude, rho_sets
    )
    report = stability_sweep(pairs, OperatorKind.DN, mesh, rho, _model("isotropic"))
    ratios = report.ratios
    return {"value": max(ratios) / min(ratios)}


@oracle("stability_refinement")
def stability_refinement(h_mesh: float = 0.1, rho: float = 0.6) -> Measurement:
    """Relative change of the sweep supremum under one uniform refinement."""
    sources = [("1.0", "1.1"), ("1.0", "1.2"), ("1 + 0.1*x1", "1.1")]
    sups = []
    for h in (h_mesh, 0.5 * h_mesh):
        mesh = _mesh(Shape.UNIT_DISK.value, h, "upper")
        pairs = [(_coefficient(a), _coefficient(b)) for a, b in sources]
        report = stability_sweep(pairs, OperatorKind.DN, mesh, rho, _model("isotropic"))
        sups.append(report.sup_ratio)
    return {"value": abs(sups[1] - sups[0]) / sups[0], "coarse": sups[0], "fine": sups[1]}


@oracle("fundamental_flux")
def fundamental_flux(anisotropy: float = 2.0, radius: float = 0.5) -> Measurement:
    """Outward flux of σ∇Φ through a circle; equals −1 for the unit source."""
    sigma = np.array([[anisotropy, 0.3], [0.3, 1.0]])
    term = fundamental_solution(sigma, (0.1, -0.2))
    nodes, weights = np.polynomial.legendre.leggauss(64)
    theta = math.pi * (nodes + 1.0)
    normal = np.column_stack([np.cos(theta), np.sin(theta)])
    points = np.asarray(term.z) + radius * normal
    _, grad = term.value_and_gradient(points)
    flux = np.einsum("ni,ij,nj->n", grad, sigma, normal)
    return {"value": float(np.sum(flux * weights) * math.pi * radius)}
