"""Tests for the recovery normalizer, extrapolation, pair generators and sweeps."""

import io
import math

import numpy as np
import pytest

from calderon_lab.conductivity import (
    ConductivityModel,
    constant_coefficient,
    expression_coefficient,
)
from calderon_lab.errors import ConfigError, DegenerateIntersection
from calderon_lab.geometry import place_singularity
from calderon_lab.maps import OperatorKind
from calderon_lab.recovery import (
    ExtrapolationVariable,
    RecoveryConfig,
    RecoveryResult,
    StabilityReport,
    StabilityRow,
    TauEstimate,
    e_escalation_pairs,
    extrapolate,
    format_recovery_summary,
    half_plane_normalizer,
    normalizer,
    random_continuous_pairs,
    stability_sweep,
    sup_difference,
    write_recovery_csv,
    write_stability_csv,
)

MODEL = ConductivityModel.isotropic(lambda_=2.0)


def _config_builder(upper_disk_domain, **changes) -> RecoveryConfig:
    mesh, rho_sets, aug = upper_disk_domain
    fields = {
        "x0": (0.0, 1.0),
        "tau_schedule": (0.15, 0.1, 0.075, 0.05),
        "map_kind": OperatorKind.DN,
        "model": MODEL,
        "coeff_a": constant_coefficient(1.2, lambda_=2.0, tag="a"),
        "coeff_b": constant_coefficient(1.0, lambda_=2.0, tag="b"),
        "r0": 1.0,
        "domain": aug,
        "rho_sets": rho_sets,
    }
    fields.update(changes)
    return RecoveryConfig(**fields)


def _result(target: float | None = 0.2) -> RecoveryResult:
    rows = tuple(
        TauEstimate(
            tau=tau,
            pairing=0.2 * k,
            normalizer=k,
            delta_hat=0.2 + 0.01 * tau,
            volume_pairing=0.2 * k,
            near_field=0.19,
            far_field=0.01,
        )
        for tau, k in [(0.1, 0.3), (0.05, 0.4)]
    )
    return RecoveryResult(rows, 0.2005, target, OperatorKind.DN, "a", "b", 1e-4)


def test_half_plane_normalizer_asymptotics() -> None:
    tau, r0 = 1e-3, 1.0
    expected = (math.log(r0 / tau) - math.log(2.0)) / (4.0 * math.pi)
    assert half_plane_normalizer(tau, r0) == pytest.approx(expected, abs=1e-4)
    assert half_plane_normalizer(0.01, 1.0) > half_plane_normalizer(0.1, 1.0) > 0


def test_recovery_config_accepts_valid_schedule(upper_disk_domain) -> None:
    config = _config_builder(upper_disk_domain)
    assert config.omega is upper_disk_domain[0]
    assert config.extrapolation is ExtrapolationVariable.INVERSE_LOG_TAU


@pytest.mark.parametrize(
    "schedule,match",
    [
        pytest.param((), "must not be empty", id="empty"),
        pytest.param((0.1, 0.0), "must be positive", id="zero"),
        pytest.param((0.05, 0.1), "strictly decreasing", id="increasing"),
        pytest.param((0.1, 0.1), "strictly decreasing", id="repeated"),
        pytest.param((0.2, 0.1), "exceeds min\\(tau0, rho/8, r0/2\\)", id="too-large"),
    ],
)
def test_recovery_config_schedule_errors(upper_disk_domain, schedule, match: str) -> None:
    with pytest.raises(ConfigError, match=match):
        _config_builder(upper_disk_domain, tau_schedule=schedule)


def test_recovery_config_small_r0(upper_disk_domain) -> None:
    with pytest.raises(ConfigError, match="exceeds"):
        _config_builder(upper_disk_domain, r0=0.2)


def test_normalizer_needs_r0_above_two_tau(upper_disk_domain) -> None:
    mesh, rho_sets, aug = upper_disk_domain
    placement = place_singularity(mesh, (0.0, 1.0), 0.1, rho_sets)
    a = constant_coefficient(1.0, lambda_=2.0)
    with pytest.raises(DegenerateIntersection, match="must exceed 2\\*tau"):
        normalizer(MODEL, a, a, placement, 0.15, aug)


def test_extrapolate_recovers_linear_intercept() -> None:
    taus = [0.1, 0.05, 0.025]
    x = 1.0 / np.log(1.0 / np.array(taus))
    value, residual = extrapolate(taus, 0.3 + 0.5 * x, [1.0, 1.0, 1.0])
    assert value == pytest.approx(0.3)
    assert residual == pytest.approx(0.0, abs=1e-12)


def test_extrapolate_in_inverse_normalizer() -> None:
    normalizers = [0.2, 0.4, 0.8]
    estimates = [0.3 + 0.1 / k for k in normalizers]
    value, _ = extrapolate(
        [0.1, 0.05, 0.025], estimates, normalizers, ExtrapolationVariable.INVERSE_NORMALIZER
    )
    assert value == pytest.approx(0.3)


def test_extrapolate_single_estimate() -> None:
    assert extrapolate([0.1], [0.25], [1.0]) == (0.25, 0.0)


def test_result_properties() -> None:
    result = _result()
    assert result.estimates == pytest.approx((0.201, 0.2005))
    assert result.max_identity_defect == 0.0
    assert result.relative_error == pytest.approx(0.0025)
    assert math.isnan(_result(target=None).relative_error)


def test_identity_defect() -> None:
    row = TauEstimate(0.1, 1.0, 1.0, 1.0, 0.9, 0.0, 0.0)
    assert row.identity_defect == pytest.approx(0.1)


def test_random_pairs_have_known_signs() -> None:
    x0 = np.array([[0.0, 1.0]])
    pairs = random_continuous_pairs(5, 7, lambda_=2.0, x0=(0.0, 1.0))
    assert len(pairs) == 5
    for index, (a, b) in enumerate(pairs):
        gap = float(a(x0)[0] - b(x0)[0])
        assert 0.1 - 1e-6 <= abs(gap) <= 0.2 + 1e-6
        assert (gap > 0) == (index % 2 == 0)
        assert a.tag == f"rand{index}a"
    with pytest.raises(ConfigError, match="count must be positive"):
        random_continuous_pairs(0, 7, lambda_=2.0, x0=(0.0, 1.0))


def test_random_pairs_are_reproducible() -> None:
    first = random_continuous_pairs(3, 11, lambda_=2.0, x0=(0.0, 1.0))
    second = random_continuous_pairs(3, 11, lambda_=2.0, x0=(0.0, 1.0))
    assert [a.expression.source for a, _ in first] == [a.expression.source for a, _ in second]


def test_escalation_pairs_keep_the_difference(upper_disk_domain) -> None:
    _, rho_sets, _ = upper_disk_domain
    a = expression_coefficient("1 + 0.1*x2", lambda_=2.0, tag="a")
    b = constant_coefficient(1.0, lambda_=2.0, tag="b")
    pairs = e_escalation_pairs(a, b, [2.0, 8.0], 0.1, rho_sets)
    points = np.array([[0.0, 1.0], [0.3, -0.6], [-0.5, 0.1]])
    assert [pair[0].tag for pair in pairs] == ["a+osc2", "a+osc8"]
    for a_k, b_k in pairs:
        assert a_k(points) - b_k(points) == pytest.approx(a(points) - b(points))
    near_gamma = np.array([[0.0, 1.0]])
    assert pairs[1][0](near_gamma) == pytest.approx(a(near_gamma))


def test_sup_difference(upper_disk_domain) -> None:
    mesh, rho_sets, _ = upper_disk_domain
    a = constant_coefficient(1.2, lambda_=2.0)
    b = constant_coefficient(1.0, lambda_=2.0)
    assert sup_difference(MODEL, a, b, mesh, rho_sets) == pytest.approx(0.2)


@pytest.mark.parametrize(
    "row,expected",
    [
        pytest.param(StabilityRow("a", "b", 0.2, 0.1), 2.0, id="finite"),
        pytest.param(StabilityRow("a", "b", 0.2, 0.0), math.inf, id="zero-map"),
    ],
)
def test_stability_row_ratio(row: StabilityRow, expected: float) -> None:
    assert row.ratio == expected


def test_stability_report_skips_degenerate_rows() -> None:
    report = StabilityReport(
        (StabilityRow("a", "a", 0.0, 0.0), StabilityRow("a", "b", 0.2, 0.1)), OperatorKind.DN
    )
    assert report.rows[0].degenerate
    assert math.isnan(report.rows[0].ratio)
    assert report.ratios == (2.0,)
    assert report.sup_ratio == 2.0
    assert math.isnan(StabilityReport((), OperatorKind.ND).sup_ratio)


def test_stability_sweep_on_constants(upper_disk_mesh) -> None:
    a = constant_coefficient(1.2, lambda_=2.0, tag="a")
    b = constant_coefficient(1.0, lambda_=2.0, tag="b")
    report = stability_sweep([(b, a), (a, a)], "DN", upper_disk_mesh, 1.2, MODEL)
    assert [(row.tag_a, row.tag_b) for row in report.rows] == [("a", "a"), ("b", "a")]
    same, different = report.rows
    assert same.degenerate
    assert different.sup_diff == pytest.approx(0.2)
    assert different.map_norm > 0
    assert report.metadata["rho"] == 1.2
    assert report.metadata["mesh_hash"] == upper_disk_mesh.mesh_hash()
    assert set(report.metadata["E"]) == {"a", "b"}


def test_write_recovery_csv() -> None:
    handle = io.StringIO()
    write_recovery_csv(_result(), handle, {"command": "recover"})
    lines = handle.getvalue().splitlines()
    assert lines[0] == "# command=recover"
    assert lines[1] == "pair_a,pair_b,tau,P,K,delta_hat"
    assert len(lines) == 4
    assert lines[2].startswith("a,b,0.1,")
    assert float(lines[2].split(",")[-1]) == pytest.approx(0.201)


def test_write_stability_csv_marks_degenerate_rows() -> None:
    report = StabilityReport(
        (StabilityRow("a", "a", 0.0, 0.0), StabilityRow("a", "b", 0.2, 0.1)), OperatorKind.ND
    )
    handle = io.StringIO()
    write_stability_csv(report, handle)
    lines = handle.getvalue().splitlines()
    assert lines[0] == "pair_a,pair_b,sup_diff,map_norm,ratio"
    assert lines[1].endswith(",degenerate")
    assert float(lines[2].split(",")[-1]) == pytest.approx(2.0)


def test_format_recovery_summary() -> None:
    summary = format_recovery_summary(_result())
    assert summary.startswith("map_kind: DN\npair: a / b\n")
    assert "extrapolated: 0.2005\n" in summary
    assert summary.endswith("target: 0.2\n")
    assert "target" not in format_recovery_summary(_result(target=None))
