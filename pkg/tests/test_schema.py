from copy import deepcopy

import pytest

from calderon_lab.errors import ConfigError
from calderon_lab.schema import Expectation, validate_check_suite


def _minimal_suite() -> dict:
    return {
        "name": "strict_schema",
        "cases": [
            {
                "name": "one",
                "oracle": "dn_disk_symbol",
                "params": {"k": 1},
                "expect": {"value": 1.0, "rtol": 0.03},
            }
        ],
    }


def _mapping_at(data: dict, path: tuple[str | int, ...]) -> dict:
    current = data
    for part in path:
        current = current[part]
    return current


@pytest.mark.parametrize(
    "path",
    [
        pytest.param((), id="suite"),
        pytest.param(("cases", 0), id="case"),
        pytest.param(("cases", 0, "expect"), id="expectation"),
    ],
)
def test_unknown_fields_are_rejected(path: tuple[str | int, ...]) -> None:
    data = _minimal_suite()
    _mapping_at(data, path)["surprise"] = True
    with pytest.raises(ConfigError, match="Unknown field in .*: surprise"):
        validate_check_suite(data)


def test_unknown_table_fields_are_rejected() -> None:
    data = _minimal_suite()
    data["cases"][0]["table"] = {"rows": [{"k": 1}], "extra": 1}
    with pytest.raises(ConfigError, match="Unknown field in case #1 table: extra"):
        validate_check_suite(data)


def test_minimal_suite_parses() -> None:
    suite = validate_check_suite(_minimal_suite())
    assert suite.name == "strict_schema"
    [case] = suite.cases
    assert case.oracle == "dn_disk_symbol"
    assert case.measure == "value"
    assert case.params == {"k": 1}
    assert case.expect == Expectation(value=1.0, rtol=0.03)


def test_defaults_merge_under_case_params() -> None:
    data = _minimal_suite()
    data["defaults"] = {"h_mesh": 0.1, "k": 7}
    [case] = validate_check_suite(data).cases
    assert case.params == {"h_mesh": 0.1, "k": 1}


@pytest.mark.parametrize("field", ["name", "oracle", "expect"])
def test_case_required_fields(field: str) -> None:
    data = _minimal_suite()
    del data["cases"][0][field]
    with pytest.raises(ConfigError, match=f"must have a '{field}' field"):
        validate_check_suite(data)


@pytest.mark.parametrize(
    ("expect", "message"),
    [
        pytest.param({}, "needs one of value, max, min or range", id="empty"),
        pytest.param({"value": 1.0}, "exactly one of tol or rtol", id="no-tolerance"),
        pytest.param({"value": 1.0, "tol": 0.1, "rtol": 0.1}, "exactly one", id="two-tolerances"),
        pytest.param({"value": 1.0, "tol": -0.1}, "non-negative", id="negative-tolerance"),
        pytest.param({"max": 1.0, "tol": 0.1}, "require a value", id="orphan-tolerance"),
        pytest.param({"range": [2.0, 1.0]}, "exceeds high", id="inverted-range"),
        pytest.param({"range": [1.0]}, r"\[low, high\]", id="short-range"),
        pytest.param({"max": "small"}, "must be a number", id="string-bound"),
        pytest.param({"max": True}, "must be a number", id="boolean-bound"),
        pytest.param({"min": float("nan")}, "must not be NaN", id="nan-bound"),
    ],
)
def test_malformed_expectations(expect: dict, message: str) -> None:
    data = _minimal_suite()
    data["cases"][0]["expect"] = expect
    with pytest.raises(ConfigError, match=message):
        validate_check_suite(data)


def test_table_rows_expand_with_typed_substitution() -> None:
    data = _minimal_suite()
    data["cases"][0].update(
        {
            "name": "symbol_k{k}",
            "table": {"columns": ["k", "bound"], "rows": [[1, 0.01], [2, 0.02]]},
            "params": {"k": "{k}", "label": "k={k}"},
            "expect": {"max": "{bound}"},
        }
    )
    cases = validate_check_suite(data).cases
    assert [case.name for case in cases] == ["symbol_k1", "symbol_k2"]
    assert cases[1].params == {"k": 2, "label": "k=2"}
    assert cases[1].expect.max == 0.02


def test_table_product_expands_cartesian() -> None:
    data = _minimal_suite()
    data["cases"][0].update(
        {
            "name": "{kind}_{shape}",
            "table": {
                "product": [
                    {"columns": ["kind"], "rows": [["DN"], ["ND"]]},
                    {"rows": [{"shape": "disk"}, {"shape": "square"}, {"shape": "ring"}]},
                ]
            },
        }
    )
    names = [case.name for case in validate_check_suite(data).cases]
    assert names == [
        "DN_disk", "DN_square", "DN_ring", "ND_disk", "ND_square", "ND_ring",
    ]


def test_product_axes_must_not_share_variables() -> None:
    data = _minimal_suite()
    data["cases"][0]["table"] = {
        "product": [{"rows": [{"k": 1}]}, {"rows": [{"k": 2}]}],
    }
    with pytest.raises(ConfigError, match="must be unique: k"):
        validate_check_suite(data)


def test_table_needs_exactly_one_row_source() -> None:
    data = _minimal_suite()
    data["cases"][0]["table"] = {"columns": ["k"]}
    with pytest.raises(ConfigError, match="exactly one of rows or product"):
        validate_check_suite(data)


def test_list_rows_need_matching_columns() -> None:
    data = _minimal_suite()
    data["cases"][0]["table"] = {"columns": ["k"], "rows": [[1, 2]]}
    with pytest.raises(ConfigError, match="length must match"):
        validate_check_suite(data)


def test_duplicate_case_names_are_rejected() -> None:
    data = _minimal_suite()
    data["cases"].append(deepcopy(data["cases"][0]))
    with pytest.raises(ConfigError, match="duplicate case names: one"):
        validate_check_suite(data)


def test_expectation_describe() -> None:
    assert Expectation(value=1.0, rtol=0.03).describe() == "1 ± 3%"
    assert Expectation(min=0.0, max=2.0).describe() == ">= 0, <= 2"
    assert Expectation(range=(1.0, 2.5)).describe() == "in [1, 2.5]"
