"""YAML schema for acceptance check suites.

A suite names a set of cases. Each case calls a registered oracle with a
parameter mapping and checks one measured quantity against an expectation.

Basic Example:
-------------
```yaml
name: dn_disk
description: Local D-N map of the unit disk against its Fourier symbol
defaults:
  h_mesh: 0.05
cases:
  - name: symbol_k1
    oracle: dn_disk_symbol
    params:
      k: 1
    expect:
      value: 1.0
      rtol: 0.03
```

An oracle returns several named quantities; ``measure`` selects the one the
expectation applies to (``value`` when omitted). Oracle results are cached
per parameter set within a run, so cases that inspect different quantities
of the same computation are cheap.

Table-Driven Example:
---------------------
```yaml
cases:
  - name: symbol_k{k}
    table:
      columns: [k]
      rows:
        - [1]
        - [2]
        - [3]
    oracle: dn_disk_symbol
    params:
      k: "{k}"
    expect:
      value: "{k}"
      rtol: 0.03
```

Table rows may also be mappings. For larger matrices, use ``product``
instead of ``rows``; each product entry is a row axis and the case expands
over the cartesian product of all axes. A placeholder that is the whole
string (``"{k}"``) keeps the row value's type.

Expectations:
-------------
- ``value`` with ``tol`` (absolute) or ``rtol`` (relative to ``value``)
- ``max`` and/or ``min`` (inclusive bounds)
- ``range: [low, high]``
"""

from __future__ import annotations

import math
from copy import deepcopy
from dataclasses import dataclass, field
from itertools import product
from typing import Any

from .errors import ConfigError

SUITE_FIELDS = frozenset({"name", "description", "skip", "defaults", "cases"})
CASE_FIELDS = frozenset({
    "name", "description", "skip", "oracle", "params", "measure", "expect", "table",
})
EXPECTATION_FIELDS = frozenset({"value", "tol", "rtol", "max", "min", "range"})
TABLE_FIELDS = frozenset({"rows", "product", "columns"})
TABLE_PRODUCT_AXIS_FIELDS = frozenset({"rows", "columns"})


def require_mapping(data: Any, context: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{context} must be a mapping")
    return data


def reject_unknown_fields(data: dict, allowed: frozenset[str], context: str) -> None:
    unknown = sorted((key for key in data if key not in allowed), key=repr)
    if not unknown:
        return
    noun = "field" if len(unknown) == 1 else "fields"
    names = ", ".join(str(key) for key in unknown)
    raise ConfigError(f"Unknown {noun} in {context}: {names}")


def _require_number(value: Any, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{context} must be a number, got {value!r}")
    if math.isnan(value):
        raise ConfigError(f"{context} must not be NaN")
    return float(value)


@dataclass(frozen=True)
class Expectation:
    """Bounds on one measured quantity."""

    value: float | None = None
    tol: float | None = None
    rtol: float | None = None
    max: float | None = None
    min: float | None = None
    range: tuple[float, float] | None = None

    def describe(self) -> str:
        parts = []
        if self.value is not None:
            if self.rtol is not None:
                parts.append(f"{self.value:.6g} ± {100 * self.rtol:.3g}%")
            else:
                parts.append(f"{self.value:.6g} ± {self.tol:.3g}")
        if self.min is not None:
            parts.append(f">= {self.min:.6g}")
        if self.max is not None:
            parts.append(f"<= {self.max:.6g}")
        if self.range is not None:
            parts.append(f"in [{self.range[0]:.6g}, {self.range[1]:.6g}]")
        return ", ".join(parts)


@dataclass(frozen=True)
class CheckCase:
    name: str
    oracle: str
    params: dict[str, Any] = field(default_factory=dict)
    measure: str = "value"
    expect: Expectation = field(default_factory=Expectation)
    description: str = ""
    skip: bool | str = False


@dataclass(frozen=True)
class CheckSuite:
    name: str
    description: str = ""
    skip: bool | str = False
    cases: list[CheckCase] = field(default_factory=list)


def validate_check_suite(data: Any) -> CheckSuite:
    """Validate raw YAML data and expand table cases into a :class:`CheckSuite`.

    Raises:
        ConfigError: on missing or unknown fields and malformed expectations
    """
    data = require_mapping(data, "Check suite")
    reject_unknown_fields(data, SUITE_FIELDS, "check suite")
    if "name" not in data:
        raise ConfigError("Check suite must have a 'name' field")
    if "cases" not in data:
        raise ConfigError("Check suite must have a 'cases' field")
    cases_data = data["cases"]
    if not isinstance(cases_data, list):
        raise ConfigError("Check suite 'cases' field must be a list")
    defaults = require_mapping(data.get("defaults", {}), "Check suite defaults")

    cases: list[CheckCase] = []
    for case_index, case_data in enumerate(cases_data):
        context = f"case #{case_index + 1}"
        case_data = require_mapping(case_data, context)
        reject_unknown_fields(case_data, CASE_FIELDS, context)
        for expanded in _expand_table_case(case_data, context):
            cases.append(_parse_check_case(expanded, defaults, context))

    names = [case.name for case in cases]
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise ConfigError(f"Check suite has duplicate case names: {', '.join(duplicates)}")

    return CheckSuite(
        name=str(data["name"]),
        description=data.get("description", ""),
        skip=data.get("skip", False),
        cases=cases,
    )


def _parse_check_case(data: dict, defaults: dict, context: str) -> CheckCase:
    reject_unknown_fields(data, CASE_FIELDS - {"table"}, context)
    for required in ("name", "oracle", "expect"):
        if required not in data:
            raise ConfigError(f"Check case must have a '{required}' field ({context})")
    params = dict(defaults)
    params.update(require_mapping(data.get("params", {}), f"{context} params"))
    return CheckCase(
        name=str(data["name"]),
        oracle=str(data["oracle"]),
        params=params,
        measure=str(data.get("measure", "value")),
        expect=_parse_expectation(data["expect"], f"{context} expectation"),
        description=data.get("description", ""),
        skip=data.get("skip", False),
    )


def _parse_expectation(data: Any, context: str) -> Expectation:
    data = require_mapping(data, context)
    reject_unknown_fields(data, EXPECTATION_FIELDS, context)
    if not any(key in data for key in ("value", "max", "min", "range")):
        raise ConfigError(f"{context} needs one of value, max, min or range")
    value = tol = rtol = None
    if "value" in data:
        value = _require_number(data["value"], f"{context} value")
        if ("tol" in data) == ("rtol" in data):
            raise ConfigError(f"{context} value needs exactly one of tol or rtol")
        if "tol" in data:
            tol = _require_number(data["tol"], f"{context} tol")
        else:
            rtol = _require_number(data["rtol"], f"{context} rtol")
        if min(t for t in (tol, rtol) if t is not None) < 0:
            raise ConfigError(f"{context} tolerance must be non-negative")
    elif "tol" in data or "rtol" in data:
        raise ConfigError(f"{context} tol/rtol require a value")
    bounds_range = None
    if "range" in data:
        raw = data["range"]
        if not isinstance(raw, list) or len(raw) != 2:
            raise ConfigError(f"{context} range must be a [low, high] list")
        low = _require_number(raw[0], f"{context} range low")
        high = _require_number(raw[1], f"{context} range high")
        if low > high:
            raise ConfigError(f"{context} range low {low} exceeds high {high}")
        bounds_range = (low, high)
    return Expectation(
        value=value,
        tol=tol,
        rtol=rtol,
        max=_require_number(data["max"], f"{context} max") if "max" in data else None,
        min=_require_number(data["min"], f"{context} min") if "min" in data else None,
        range=bounds_range,
    )


def _expand_table_case(data: dict, context: str) -> list[dict]:
    """Expand a table-driven case template into concrete case dictionaries."""
    table = data.get("table")
    if table is None:
        return [data]
    table = require_mapping(table, f"{context} table")
    reject_unknown_fields(table, TABLE_FIELDS, f"{context} table")

    rows, columns = _table_rows(table, context)
    expanded: list[dict] = []
    for index, row in enumerate(rows):
        variables = _table_row_variables(row, columns, index)
        template = deepcopy({key: value for key, value in data.items() if key != "table"})
        expanded.append(_substitute_table_values(template, variables))
    return expanded


def _table_rows(table: dict, context: str) -> tuple[list[Any], Any]:
    has_rows = "rows" in table
    has_product = "product" in table
    if has_rows == has_product:
        raise ConfigError("Case table must include exactly one of rows or product")

    if has_rows:
        rows = table.get("rows")
        if not isinstance(rows, list):
            raise ConfigError("Case table rows must be a list")
        return rows, table.get("columns")

    return _table_product_rows(table.get("product"), context), None


def _table_product_rows(table_product: Any, context: str) -> list[dict[str, Any]]:
    if not isinstance(table_product, list) or not table_product:
        raise ConfigError("Case table product must be a non-empty list")

    axes: list[list[dict[str, Any]]] = []
    for axis_index, axis in enumerate(table_product):
        axis_context = f"{context} table product axis #{axis_index + 1}"
        axis = require_mapping(axis, axis_context)
        reject_unknown_fields(axis, TABLE_PRODUCT_AXIS_FIELDS, axis_context)
        rows = axis.get("rows")
        if not isinstance(rows, list) or not rows:
            raise ConfigError("Case table product axes must include a non-empty rows list")
        columns = axis.get("columns")
        axes.append([
            _table_row_variables(row, columns, index, include_index=False)
            for index, row in enumerate(rows)
        ])

    expanded: list[dict[str, Any]] = []
    for combination in product(*axes):
        variables: dict[str, Any] = {}
        for axis_variables in combination:
            overlap = set(variables).intersection(axis_variables)
            if overlap:
                names = ", ".join(sorted(overlap))
                raise ConfigError(f"Product table variables must be unique: {names}")
            variables.update(axis_variables)
        expanded.append(variables)
    return expanded


def _table_row_variables(
    row: Any,
    columns: Any,
    index: int,
    *,
    include_index: bool = True,
) -> dict[str, Any]:
    if isinstance(row, dict):
        variables = dict(row)
    else:
        if not isinstance(columns, list) or not all(isinstance(item, str) for item in columns):
            raise ConfigError("List table rows require string columns")
        if not isinstance(row, list):
            raise ConfigError("Table row must be a mapping or list")
        if len(row) != len(columns):
            raise ConfigError("Table row length must match columns length")
        variables = dict(zip(columns, row))
    if include_index:
        variables.setdefault("index", index)
    return variables


def _substitute_table_values(value: Any, variables: dict[str, Any]) -> Any:
    if isinstance(value, str):
        return _substitute_table_string(value, variables)
    if isinstance(value, list):
        return [_substitute_table_values(item, variables) for item in value]
    if isinstance(value, dict):
        return {
            key: _substitute_table_values(item, variables)
            for key, item in value.items()
        }
    return value


def _substitute_table_string(value: str, variables: dict[str, Any]) -> Any:
    if value.startswith("{") and value.endswith("}") and value.count("{") == 1:
        key = value[1:-1]
        if key in variables:
            return variables[key]

    result = value
    for key, replacement in variables.items():
        result = result.replace("{" + key + "}", str(replacement))
    return result
