"""Execution engine for acceptance check suites.

Runs the oracle named by each case and verifies the selected quantity
against the case's expectation.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Any

from .errors import ConfigError
from .oracles import Measurement, run_oracle
from .schema import CheckCase, CheckSuite, Expectation

logger = logging.getLogger(__name__)


class CheckFailure(AssertionError):
    """A measured quantity missed its expectation."""


@dataclass(frozen=True)
class CheckOutcome:
    suite: str
    case: str
    measure: str
    value: float
    expectation: str
    passed: bool
    seconds: float
    message: str = ""


def _freeze(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(item) for item in value)
    if isinstance(value, dict):
        return tuple(sorted((key, _freeze(item)) for key, item in value.items()))
    return value


class CheckRunner:
    """Executes check cases, caching oracle results per parameter set."""

    def __init__(self, overrides: dict[str, Any] | None = None):
        self.overrides = dict(overrides or {})
        self._cache: dict[tuple[str, Any], Measurement] = {}
        self.outcomes: list[CheckOutcome] = []

    def measure(self, case: CheckCase) -> Measurement:
        params = {**case.params, **self._applicable_overrides(case)}
        key = (case.oracle, _freeze(params))
        if key not in self._cache:
            started = time.perf_counter()
            self._cache[key] = run_oracle(case.oracle, params)
            logger.info("oracle %s took %.2fs", case.oracle, time.perf_counter() - started)
        return self._cache[key]

    def _applicable_overrides(self, case: CheckCase) -> dict[str, Any]:
        # only parameters the case already sets are overridden
        return {key: value for key, value in self.overrides.items() if key in case.params}

    def run_case(self, case: CheckCase, suite: CheckSuite | None = None) -> float:
        """Run one case and return the measured value.

        Raises:
            CheckFailure: if the value misses the expectation
            ConfigError: if the oracle does not report the requested measure
        """
        started = time.perf_counter()
        measurement = self.measure(case)
        if case.measure not in measurement:
            available = ", ".join(sorted(measurement))
            raise ConfigError(
                f"Check '{case.name}' measures {case.measure!r}; oracle {case.oracle} "
                f"reports {available}"
            )
        value = float(measurement[case.measure])
        message = ""
        try:
            verify_expectation(case.expect, value, case.name)
        except CheckFailure as exc:
            message = str(exc)
            raise
        finally:
            self.outcomes.append(
                CheckOutcome(
                    suite=suite.name if suite is not None else "",
                    case=case.name,
                    measure=case.measure,
                    value=value,
                    expectation=case.expect.describe(),
                    passed=not message,
                    seconds=time.perf_counter() - started,
                    message=message,
                )
            )
        return value

    def run_suite(self, suite: CheckSuite) -> list[CheckOutcome]:
        """Run every non-skipped case of a suite, collecting failures instead of raising."""
        start = len(self.outcomes)
        for case in suite.cases:
            if case.skip or suite.skip:
                continue
            try:
                self.run_case(case, suite)
            except CheckFailure:
                pass
        return self.outcomes[start:]


def verify_expectation(expect: Expectation, value: float, name: str) -> None:
    """Raise :class:`CheckFailure` unless ``value`` satisfies every bound of ``expect``."""
    if math.isnan(value):
        raise CheckFailure(f"Check '{name}' produced NaN")
    if expect.value is not None:
        if expect.rtol is not None:
            allowed = expect.rtol * abs(expect.value)
        else:
            allowed = expect.tol or 0.0
        if abs(value - expect.value) > allowed:
            raise CheckFailure(
                f"Check '{name}' expected {expect.describe()}, but got {value:.12g} "
                f"(off by {abs(value - expect.value):.3g})"
            )
    if expect.min is not None and value < expect.min:
        raise CheckFailure(f"Check '{name}' expected value >= {expect.min}, but got {value:.12g}")
    if expect.max is not None and value > expect.max:
        raise CheckFailure(f"Check '{name}' expected value <= {expect.max}, but got {value:.12g}")
    if expect.range is not None:
        low, high = expect.range
        if not low <= value <= high:
            raise CheckFailure(
                f"Check '{name}' expected value in range [{low}, {high}], but got {value:.12g}"
            )


def format_outcomes(outcomes: list[CheckOutcome]) -> str:
    """Plain-text pass/fail table."""
    if not outcomes:
        return "no checks ran"
    header = ("status", "suite", "case", "measure", "value", "expected", "seconds")
    rows = [
        (
            "PASS" if outcome.passed else "FAIL",
            outcome.suite,
            outcome.case,
            outcome.measure,
            f"{outcome.value:.6g}",
            outcome.expectation,
            f"{outcome.seconds:.2f}",
        )
        for outcome in outcomes
    ]
    widths = [max(len(row[i]) for row in (header, *rows)) for i in range(len(header))]
    lines = [
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths))
        for row in (header, *rows)
    ]
    failed = sum(not outcome.passed for outcome in outcomes)
    lines.append(f"{len(outcomes) - failed} passed, {failed} failed")
    return "\n".join(line.rstrip() for line in lines)
