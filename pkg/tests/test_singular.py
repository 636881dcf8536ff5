"""Tests for leading terms and Dirichlet singular solutions on the augmented domain."""

import math

import numpy as np
import pytest
import yaml

from calderon_lab.conductivity import (
    Conductivity,
    ConductivityModel,
    constant_coefficient,
    expression_coefficient,
)
from calderon_lab.errors import ConfigError, EvalAtSingularity, InsufficientRadii
from calderon_lab.singular import (
    BoundaryCondition,
    LeadingTerm,
    build_dirichlet_singular,
    check_gradient_lower_bound,
    dimension_constant,
    dump_leading_term,
    eval_leading,
    fit_remainder_rate,
    fundamental_solution,
    inverse_sqrt,
    leading_term,
    neumann_flux_report,
    record_remainder_rate,
    trace_support_report,
)

ANISOTROPIC = np.array([[2.0, 0.3], [0.3, 1.0]])
BUMP_CENTER = (0.01, 1.3)


@pytest.fixture(scope="module")
def unit_sigma() -> Conductivity:
    return Conductivity(ConductivityModel.isotropic(), constant_coefficient(1.0, lambda_=2.0))


@pytest.fixture(scope="module")
def dipole(upper_disk_domain, unit_sigma):
    """Dirichlet singular solution with m = 1 centred inside the bump."""
    _, _, aug = upper_disk_domain
    term = leading_term(unit_sigma.at(BUMP_CENTER), BUMP_CENTER, 1)
    return build_dirichlet_singular(aug, unit_sigma, term)


def test_dimension_constant() -> None:
    assert dimension_constant(2) == pytest.approx(-1.0 / (2.0 * math.pi))
    assert dimension_constant(3) == pytest.approx(1.0 / (4.0 * math.pi))
    with pytest.raises(ConfigError, match="dimension must be >= 2"):
        dimension_constant(1)


def test_inverse_sqrt() -> None:
    assert inverse_sqrt(np.diag([4.0, 9.0])) == pytest.approx(np.diag([0.5, 1.0 / 3.0]))
    root = inverse_sqrt(ANISOTROPIC)
    assert root @ root @ ANISOTROPIC == pytest.approx(np.eye(2), abs=1e-12)
    with pytest.raises(ConfigError, match="not positive definite"):
        inverse_sqrt(np.diag([1.0, -1.0]))


def test_fundamental_solution_has_unit_flux() -> None:
    z = np.array([0.2, -0.1])
    term = fundamental_solution(ANISOTROPIC, z)
    count, radius = 2000, 0.3
    theta = 2.0 * math.pi * np.arange(count) / count
    normals = np.column_stack([np.cos(theta), np.sin(theta)])
    _, gradient = term.value_and_gradient(z + radius * normals)
    flux = np.einsum("kj,ij,ki->k", gradient, ANISOTROPIC, normals)
    assert flux.sum() * 2.0 * math.pi * radius / count == pytest.approx(-1.0, rel=1e-8)


def test_leading_term_is_homogeneous() -> None:
    term = leading_term(ANISOTROPIC, (0.0, 0.0), 1)
    direction = np.array([0.3, 0.4])
    near, _ = term.value_and_gradient(direction)
    far, _ = term.value_and_gradient(2.0 * direction)
    assert far[0] == pytest.approx(0.5 * near[0])
    assert term.exponent == -1.0
    assert leading_term(ANISOTROPIC, (0.0, 0.0)).log_branch


@pytest.mark.parametrize("m", [0, 1, 2])
def test_leading_gradient_matches_finite_differences(m: int) -> None:
    term = leading_term(ANISOTROPIC, (0.1, 0.2), m, phi0=0.4)
    point = np.array([0.45, -0.15])
    _, gradient = eval_leading(term, point)
    step = 1e-6
    numeric = [
        (eval_leading(term, point + step * e)[0] - eval_leading(term, point - step * e)[0])
        / (2.0 * step)
        for e in np.eye(2)
    ]
    assert gradient == pytest.approx(numeric, rel=1e-6, abs=1e-7)


def test_leading_term_rejects_its_center() -> None:
    term = leading_term(np.eye(2), (0.1, 0.2))
    with pytest.raises(EvalAtSingularity, match="evaluated at its center"):
        term.value_and_gradient(np.array([[0.1, 0.2]]))


@pytest.mark.parametrize(
    "fields,match",
    [
        pytest.param({"m": -1}, "m >= 0", id="negative-m"),
        pytest.param({"z": (0.0, 0.0, 0.0)}, "must match dimension 2", id="center"),
        pytest.param({"J": np.array([[1.0, 0.5], [0.0, 1.0]])}, "symmetric", id="asymmetric"),
        pytest.param({"J": np.diag([1.0, -1.0])}, "positive definite", id="indefinite"),
    ],
)
def test_leading_term_validation(fields: dict, match: str) -> None:
    arguments = {"n": 2, "m": 0, "z": (0.0, 0.0), "J": np.eye(2), **fields}
    with pytest.raises(ConfigError, match=match):
        LeadingTerm(**arguments)


def test_gradient_lower_bound() -> None:
    term = leading_term(np.eye(2), (0.0, 0.0), r0=0.5)
    report = check_gradient_lower_bound(term, [0.1, 0.2, 1.0])
    assert report.radii == (0.1, 0.2)
    assert report.skipped == (1.0,)
    assert report.ratios == pytest.approx((2.0, 2.0))
    assert report.strict
    with pytest.raises(ConfigError, match="radii must be positive"):
        check_gradient_lower_bound(term, [0.0])


def test_dump_leading_term() -> None:
    record = yaml.safe_load(dump_leading_term(leading_term(np.eye(2), (0.0, 1.0), 1)))
    assert record["m"] == 1
    assert record["z"] == [0.0, 1.0]
    assert record["r0"] == "inf"
    assert record["J"] == [[1.0, 0.0], [0.0, 1.0]]


def test_dirichlet_singular_vanishes_on_outer_boundary(dipole) -> None:
    assert dipole.bc_kind is BoundaryCondition.DIRICHLET_ZERO
    boundary = dipole.mesh.boundary_vertices
    assert dipole.nodal_total()[boundary] == pytest.approx(0.0, abs=1e-10)
    assert dipole.diagnostics["dofs"] > 0
    assert dipole.diagnostics["residual"] < 1e-8


def test_dirichlet_singular_trace_lives_on_gamma(dipole) -> None:
    report = trace_support_report(dipole)
    assert report.gamma_max > 0
    assert report.ratio == pytest.approx(0.0, abs=1e-10)


def test_leading_rate_fit(dipole) -> None:
    fit = fit_remainder_rate(dipole, [0.05, 0.1, 0.15, 0.2, 0.25], fit_leading=True)
    assert fit.exponent == pytest.approx(-1.0, abs=1e-9)
    assert fit.reference_exponent == -1.0
    assert len(fit.radii) == 5
    with pytest.raises(InsufficientRadii, match="need at least 4"):
        fit_remainder_rate(dipole, [0.05, 0.1, 0.5], fit_leading=True)


def test_identity_corrector_stays_bounded(dipole, unit_sigma) -> None:
    fit = fit_remainder_rate(dipole, [0.05, 0.1, 0.15, 0.2, 0.25])
    assert fit.reference_exponent == pytest.approx(-1.0 + unit_sigma.model.alpha)
    assert fit.exponent > -0.05
    assert fit.exponent > fit.reference_exponent + 0.5


def test_record_remainder_rate_on_rough_coefficient(upper_disk_domain, caplog) -> None:
    _, _, aug = upper_disk_domain
    rough = Conductivity(
        ConductivityModel.isotropic(),
        expression_coefficient("1 + 0.2*(x1^2)^0.25", lambda_=2.0, tag="rough"),
    )
    term = leading_term(rough.at(BUMP_CENTER), BUMP_CENTER, 0)
    solution = build_dirichlet_singular(aug, rough, term)

    assert record_remainder_rate(solution, [0.05]) is None
    assert "remainder_exponent" not in solution.diagnostics
    assert "remainder rate not fitted" in caplog.text

    fit = record_remainder_rate(solution, [0.05, 0.1, 0.15, 0.2, 0.25])
    assert fit is not None
    assert fit.reference_exponent == pytest.approx(rough.model.alpha)
    assert solution.diagnostics["remainder_exponent"] == fit.exponent
    assert solution.diagnostics["remainder_band"] == pytest.approx(fit.reference_exponent - 0.2)
    assert solution.diagnostics["remainder_fit_residual"] >= 0


def test_flux_report_needs_a_neumann_solution(dipole) -> None:
    with pytest.raises(ConfigError, match="apply to Neumann singular solutions"):
        neumann_flux_report(dipole)


def test_dirichlet_singular_preconditions(upper_disk_domain, unit_sigma) -> None:
    _, _, aug = upper_disk_domain
    with pytest.raises(ConfigError, match="m in \\{0, 1\\}"):
        build_dirichlet_singular(aug, unit_sigma, leading_term(np.eye(2), BUMP_CENTER, 2))
    with pytest.raises(ConfigError, match="J\\^2 sigma\\(z\\) = I"):
        build_dirichlet_singular(aug, unit_sigma, leading_term(4.0 * np.eye(2), BUMP_CENTER))
