"""Coverage for check-suite discovery, case IDs and declared skips."""

from pathlib import Path

import pytest
import yaml

from calderon_lab import plugin
from calderon_lab.oracles import ORACLES
from calderon_lab.schema import CheckCase, validate_check_suite


def _write_suite(path: Path, suite_name: str, case_name: str, *, skip: str | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    skip_line = f"    skip: {skip!r}\n" if skip is not None else ""
    path.write_text(
        f"""name: {suite_name}
cases:
  - name: {case_name}
{skip_line}    oracle: dn_disk_symbol
    params:
      k: 1
    expect:
      value: 1.0
      rtol: 0.03
""",
        encoding="utf-8",
    )


def test_exact_yaml_file_does_not_collect_another(tmp_path: Path) -> None:
    checks_dir = tmp_path / "_checks"
    _write_suite(checks_dir / "maps" / "one.yaml", "one", "only_one")
    _write_suite(checks_dir / "maps" / "two.yaml", "two", "not_selected")

    discovered = plugin.discover_check_suites(checks_dir, ["maps/one.yaml"])

    assert [(path.name, case.name) for path, _suite, case in discovered] == [
        ("one.yaml", "only_one")
    ]


def test_directory_collects_every_and_only_descendant_suite(tmp_path: Path) -> None:
    checks_dir = tmp_path / "_checks"
    _write_suite(checks_dir / "selected" / "one.yaml", "one", "first")
    _write_suite(checks_dir / "selected" / "nested" / "two.yaml", "two", "second")
    _write_suite(checks_dir / "other" / "three.yaml", "three", "outside")

    discovered = plugin.discover_check_suites(checks_dir, ["selected"])

    assert {(path.name, case.name) for path, _suite, case in discovered} == {
        ("one.yaml", "first"),
        ("two.yaml", "second"),
    }


def test_missing_check_dir_discovers_nothing(tmp_path: Path) -> None:
    assert plugin.discover_check_suites(tmp_path / "absent") == []


@pytest.mark.parametrize(
    "selector,message",
    [
        pytest.param("../outside.yaml", "escapes the check root", id="escape"),
        pytest.param("missing.yaml", "Check suite path not found", id="missing"),
    ],
)
def test_bad_selectors_are_usage_errors(tmp_path: Path, selector: str, message: str) -> None:
    checks_dir = tmp_path / "_checks"
    _write_suite(checks_dir / "one.yaml", "one", "first")
    _write_suite(tmp_path / "outside.yaml", "outside", "never")

    with pytest.raises(pytest.UsageError, match=message):
        plugin.discover_check_suites(checks_dir, [selector])


def test_invalid_suite_is_a_usage_error(tmp_path: Path) -> None:
    checks_dir = tmp_path / "_checks"
    checks_dir.mkdir()
    (checks_dir / "empty.yaml").write_text("", encoding="utf-8")

    with pytest.raises(pytest.UsageError, match="Failed to load check suite .*empty"):
        plugin.discover_check_suites(checks_dir)


def test_case_id_is_relative_to_check_dir(tmp_path: Path) -> None:
    checks_dir = tmp_path / "_checks"
    _write_suite(checks_dir / "maps" / "one.yaml", "one", "first")
    [(path, _suite, case)] = plugin.discover_check_suites(checks_dir)

    assert plugin.check_case_id(path, case, checks_dir) == "maps/one.yaml::first"
    with pytest.raises(pytest.UsageError, match="outside the configured check directory"):
        plugin.check_case_id(path, case, tmp_path / "elsewhere")


def test_declared_skip_prefers_case_reason(tmp_path: Path) -> None:
    checks_dir = tmp_path / "_checks"
    _write_suite(checks_dir / "one.yaml", "one", "first", skip="slow on this mesh")
    [(_path, suite, case)] = plugin.discover_check_suites(checks_dir)

    with pytest.raises(pytest.skip.Exception, match="slow on this mesh"):
        plugin.skip_declared_case(suite, case)


def test_unskipped_case_runs(tmp_path: Path) -> None:
    checks_dir = tmp_path / "_checks"
    _write_suite(checks_dir / "one.yaml", "one", "first")
    [(_path, suite, case)] = plugin.discover_check_suites(checks_dir)

    plugin.skip_declared_case(suite, case)


def test_bundled_suites_validate() -> None:
    checks_dir = plugin.get_checks_dir()
    discovered = plugin.discover_check_suites(checks_dir)

    assert {path.name for path, _suite, _case in discovered} == {
        "boundary_maps.yaml",
        "conductivity.yaml",
        "recovery.yaml",
        "singular.yaml",
        "stability.yaml",
    }
    ids = [plugin.check_case_id(path, case, checks_dir) for path, _suite, case in discovered]
    assert len(ids) == len(set(ids))


def test_bundled_suites_name_registered_oracles() -> None:
    for path in sorted(plugin.get_checks_dir().glob("*.yaml")):
        suite = validate_check_suite(yaml.safe_load(path.read_text(encoding="utf-8")))
        assert {case.oracle for case in suite.cases} <= set(ORACLES), path.name


def _bundled_cases(suite_file: str) -> dict[str, CheckCase]:
    path = plugin.get_checks_dir() / suite_file
    suite = validate_check_suite(yaml.safe_load(path.read_text(encoding="utf-8")))
    return {case.name: case for case in suite.cases}


def test_accuracy_cases_run_at_reference_resolution() -> None:
    maps_cases = _bundled_cases("boundary_maps.yaml")
    for k in range(1, 6):
        case = maps_cases[f"disk_symbol_k{k}"]
        assert case.params["h_mesh"] == 0.02
        assert case.expect.max == 0.02

    green = _bundled_cases("singular.yaml")["green_disk_images"]
    assert green.params["h_mesh"] == 0.02
    assert list(green.params["z"]) == [0.5, 0.0]

    recovery_cases = _bundled_cases("recovery.yaml")
    for kind in ("DN", "ND"):
        case = recovery_cases[f"recovery_{kind}_value"]
        assert case.params["h_mesh"] == 0.02
        assert list(case.params["taus"]) == [0.1, 0.05, 0.025]
        assert case.expect.rtol == 0.15
    agreement = recovery_cases["dn_nd_agreement"]
    assert agreement.params["h_mesh"] == 0.02
    assert agreement.expect.max == 0.10


def test_identity_remainder_gate_is_bundled() -> None:
    cases = _bundled_cases("singular.yaml")
    for m in (0, 1):
        case = cases[f"remainder_rate_identity_m{m}"]
        assert case.oracle == "remainder_rate_identity"
        assert case.expect.min == 0.0
