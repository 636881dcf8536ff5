import pytest

from calderon_lab import oracles
from calderon_lab.errors import ConfigError
from calderon_lab.runner import CheckFailure, CheckRunner, format_outcomes, verify_expectation
from calderon_lab.schema import CheckCase, CheckSuite, Expectation


class CountingOracle:
    def __init__(self, measurement: dict[str, float]) -> None:
        self.measurement = measurement
        self.calls: list[dict] = []

    def __call__(self, h_mesh: float = 0.1, k: int = 1) -> dict[str, float]:
        self.calls.append({"h_mesh": h_mesh, "k": k})
        return dict(self.measurement)


@pytest.fixture
def counting_oracle(monkeypatch: pytest.MonkeyPatch) -> CountingOracle:
    fake = CountingOracle({"value": 1.01, "relative_error": 0.01})
    monkeypatch.setitem(oracles.ORACLES, "fake", fake)
    return fake


def _case(name: str = "fake_case", **overrides) -> CheckCase:
    fields = {
        "name": name,
        "oracle": "fake",
        "params": {"h_mesh": 0.1, "k": 2},
        "expect": Expectation(value=1.0, rtol=0.05),
    }
    fields.update(overrides)
    return CheckCase(**fields)


@pytest.mark.parametrize(
    ("expectation", "value", "message"),
    [
        pytest.param(Expectation(value=1.0, tol=0.01), 1.1, "expected 1 ± 0.01", id="tol"),
        pytest.param(Expectation(value=2.0, rtol=0.01), 2.1, "off by 0.1", id="rtol"),
        pytest.param(Expectation(max=1.0), 1.5, "expected value <= 1.0", id="max"),
        pytest.param(Expectation(min=1.0), 0.5, "expected value >= 1.0", id="min"),
        pytest.param(Expectation(range=(0.0, 1.0)), 2.0, r"in range \[0.0, 1.0\]", id="range"),
        pytest.param(Expectation(max=1.0), float("nan"), "produced NaN", id="nan"),
    ],
)
def test_verify_expectation_failures(expectation: Expectation, value: float, message: str) -> None:
    with pytest.raises(CheckFailure, match=message):
        verify_expectation(expectation, value, "case")


@pytest.mark.parametrize(
    ("expectation", "value"),
    [
        pytest.param(Expectation(value=1.0, tol=0.01), 1.005, id="tol"),
        pytest.param(Expectation(value=-0.1, rtol=0.35), -0.07, id="negative-rtol"),
        pytest.param(Expectation(min=0.0, max=1.0), 1.0, id="inclusive"),
        pytest.param(Expectation(range=(0.0, 1.0)), 0.0, id="range-edge"),
    ],
)
def test_verify_expectation_passes(expectation: Expectation, value: float) -> None:
    verify_expectation(expectation, value, "case")


def test_check_failure_is_an_assertion_error() -> None:
    assert issubclass(CheckFailure, AssertionError)


def test_runner_caches_oracle_results_per_parameters(counting_oracle: CountingOracle) -> None:
    runner = CheckRunner()
    runner.run_case(_case("first"))
    runner.run_case(_case("second", measure="relative_error", expect=Expectation(max=0.02)))
    runner.run_case(_case("third", params={"h_mesh": 0.1, "k": 3}))
    assert counting_oracle.calls == [{"h_mesh": 0.1, "k": 2}, {"h_mesh": 0.1, "k": 3}]
    assert [outcome.passed for outcome in runner.outcomes] == [True, True, True]


def test_overrides_only_touch_parameters_the_case_sets(counting_oracle: CountingOracle) -> None:
    runner = CheckRunner({"h_mesh": 0.05})
    runner.run_case(_case(params={"k": 2}))
    runner.run_case(_case("with_mesh"))
    assert counting_oracle.calls == [{"h_mesh": 0.1, "k": 2}, {"h_mesh": 0.05, "k": 2}]


def test_failed_case_is_recorded_and_raised(counting_oracle: CountingOracle) -> None:
    runner = CheckRunner()
    with pytest.raises(CheckFailure, match="Check 'strict'"):
        runner.run_case(_case("strict", expect=Expectation(max=1.0)))
    [outcome] = runner.outcomes
    assert not outcome.passed
    assert outcome.value == pytest.approx(1.01)
    assert "strict" in outcome.message


def test_missing_measure_is_a_config_error(counting_oracle: CountingOracle) -> None:
    with pytest.raises(ConfigError, match="reports relative_error, value"):
        CheckRunner().run_case(_case(measure="band"))


def test_unknown_oracle_parameters_are_config_errors(counting_oracle: CountingOracle) -> None:
    with pytest.raises(ConfigError, match="oracle fake"):
        CheckRunner().run_case(_case(params={"k": 1, "tau": 0.1}))


def test_unknown_oracle_is_a_config_error() -> None:
    with pytest.raises(ConfigError, match="Unknown oracle: missing"):
        oracles.run_oracle("missing", {})


def test_run_suite_collects_failures_and_skips(counting_oracle: CountingOracle) -> None:
    suite = CheckSuite(
        name="fake_suite",
        cases=[
            _case("passes"),
            _case("fails", expect=Expectation(max=1.0)),
            _case("skipped", skip="not today"),
        ],
    )
    outcomes = CheckRunner().run_suite(suite)
    assert [(o.case, o.passed) for o in outcomes] == [("passes", True), ("fails", False)]
    assert all(o.suite == "fake_suite" for o in outcomes)


def test_format_outcomes_table(counting_oracle: CountingOracle) -> None:
    runner = CheckRunner()
    cases = [_case("a"), _case("b", expect=Expectation(max=1))]
    runner.run_suite(CheckSuite(name="s", cases=cases))
    table = format_outcomes(runner.outcomes)
    lines = table.splitlines()
    header = ["status", "suite", "case", "measure", "value", "expected", "seconds"]
    assert lines[0].split() == header
    assert lines[1].startswith("PASS")
    assert lines[2].startswith("FAIL")
    assert lines[-1] == "1 passed, 1 failed"


def test_format_outcomes_empty() -> None:
    assert format_outcomes([]) == "no checks ran"


def test_every_bundled_oracle_is_registered() -> None:
    expected = {
        "dn_disk_symbol", "inverse_relation", "self_adjoint", "green_disk_images",
        "remainder_rate_selftest", "remainder_rate_identity", "h1_blowup", "trace_support",
        "neumann_flux", "collar",
        "gradient_lower_bound", "class_h", "normalizer_half_plane", "recovery",
        "dn_nd_agreement", "sign_recovery", "mollification_modulus", "mollification_maps",
        "stability_escalation", "stability_refinement", "fundamental_flux",
    }
    assert expected <= set(oracles.ORACLES)


def test_registering_a_name_twice_fails() -> None:
    with pytest.raises(ValueError, match="already registered"):
        oracles.oracle("recovery")(lambda: {})
