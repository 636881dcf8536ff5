"""pytest plugin for the bundled acceptance check suites.

Provides:
- Command line options (--calderon-suite-path, --calderon-suite-root, --calderon-h-mesh)
- A session-scoped :class:`CheckRunner` fixture
- YAML check discovery and parametrization

Usage from command line:
    pytest --pyargs calderon_lab
    pytest --pyargs calderon_lab --calderon-suite-path=dn_map.yaml
"""

from __future__ import annotations

import importlib.resources
from pathlib import Path
from typing import Any

import pytest
import yaml

from .runner import CheckRunner, format_outcomes
from .schema import CheckCase, CheckSuite, validate_check_suite


def get_checks_dir() -> Path:
    """Path to the bundled ``_checks`` directory."""
    try:
        checks_path = importlib.resources.files("calderon_lab") / "_checks"
        if hasattr(checks_path, "_path"):
            return Path(checks_path._path)
        return Path(str(checks_path))
    except (TypeError, AttributeError):
        return Path(__file__).parent / "_checks"


def pytest_addoption(parser: Any) -> None:
    group = parser.getgroup("calderon-lab")
    group.addoption(
        "--calderon-suite-path",
        action="append",
        default=[],
        help="Suite file or directory relative to the check root (repeatable).",
    )
    group.addoption(
        "--calderon-suite-root",
        default=None,
        help="Directory of check suites to use instead of the bundled ones.",
    )
    group.addoption(
        "--calderon-h-mesh",
        default=None,
        type=float,
        help="Override h_mesh in every case that sets it.",
    )


def discover_check_suites(
    check_dir: Path | None = None,
    selected_paths: list[str] | None = None,
) -> list[tuple[Path, CheckSuite, CheckCase]]:
    """Discover YAML check suites and their cases.

    Args:
        check_dir: Directory containing suites. If None, uses the bundled suites.
        selected_paths: Paths relative to check_dir. If empty, discovers everything.

    Returns:
        List of (yaml_path, suite, case) tuples
    """
    if check_dir is None:
        check_dir = get_checks_dir()
    cases: list[tuple[Path, CheckSuite, CheckCase]] = []
    if not check_dir.exists():
        return cases

    yaml_files: set[Path] = set()
    for selected_path in selected_paths or ["."]:
        candidate = (check_dir / selected_path).resolve()
        try:
            candidate.relative_to(check_dir.resolve())
        except ValueError as exc:
            raise pytest.UsageError(f"Suite path escapes the check root: {selected_path}") from exc
        if candidate.is_file() and candidate.suffix == ".yaml":
            yaml_files.add(candidate)
        elif candidate.is_dir():
            yaml_files.update(candidate.rglob("*.yaml"))
        else:
            raise pytest.UsageError(f"Check suite path not found: {selected_path}")

    for yaml_file in sorted(yaml_files):
        try:
            with open(yaml_file, encoding="utf-8") as f:
                data = yaml.safe_load(f)
            if data is None:
                raise ValueError("YAML document is empty")
            suite = validate_check_suite(data)
        except Exception as exc:
            raise pytest.UsageError(f"Failed to load check suite {yaml_file}: {exc}") from exc
        for case in suite.cases:
            cases.append((yaml_file, suite, case))
    return cases


def check_case_id(yaml_path: Path, case: CheckCase, check_dir: Path | None = None) -> str:
    """Stable case ID from the suite path and expanded case name."""
    if check_dir is None:
        check_dir = get_checks_dir()
    try:
        relative_path = yaml_path.resolve().relative_to(check_dir.resolve())
    except ValueError as exc:
        raise pytest.UsageError(
            f"Check suite is outside the configured check directory: {yaml_path}"
        ) from exc
    return f"{relative_path.as_posix()}::{case.name}"


def _checks_root(config: Any) -> Path:
    configured = config.getoption("--calderon-suite-root")
    return Path(configured).resolve() if configured is not None else get_checks_dir()


def pytest_generate_tests(metafunc: Any) -> None:
    if "check_case" in metafunc.fixturenames:
        check_dir = _checks_root(metafunc.config)
        if not check_dir.is_dir():
            raise pytest.UsageError(f"Check suite root not found: {check_dir}")
        discovered = discover_check_suites(
            check_dir, metafunc.config.getoption("--calderon-suite-path")
        )
        ids = [check_case_id(path, case, check_dir) for path, _, case in discovered]
        params = [(suite, case) for _, suite, case in discovered]
        metafunc.parametrize("check_case", params, ids=ids)


@pytest.fixture
def check_case() -> None:
    """Placeholder fixture; values come from pytest_generate_tests."""


@pytest.fixture(scope="session")
def check_runner(request: Any) -> CheckRunner:
    h_mesh = request.config.getoption("--calderon-h-mesh")
    overrides = {"h_mesh": h_mesh} if h_mesh is not None else {}
    return CheckRunner(overrides)


def skip_declared_case(suite: CheckSuite, case: CheckCase) -> None:
    """Skip a declared case or suite, preferring the case's own reason."""
    for declared in (case.skip, suite.skip):
        if declared:
            pytest.skip(declared if isinstance(declared, str) else "skipped by suite declaration")


def pytest_configure(config: Any) -> None:
    config.addinivalue_line("markers", "acceptance: bundled numerical acceptance check")


def pytest_terminal_summary(terminalreporter: Any) -> None:
    runner = getattr(terminalreporter.config, "_calderon_check_runner", None)
    if runner is not None and runner.outcomes:
        terminalreporter.write_sep("-", "acceptance checks")
        terminalreporter.write_line(format_outcomes(runner.outcomes))
