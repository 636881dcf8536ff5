"""Bundled acceptance checks.

Discovers and runs every YAML check suite shipped with the package.

Run with:
    pytest --pyargs calderon_lab
"""

import pytest

from .plugin import skip_declared_case


@pytest.mark.acceptance
def test_acceptance_check(request, check_runner, check_case):
    suite, case = check_case
    skip_declared_case(suite, case)
    request.config._calderon_check_runner = check_runner
    check_runner.run_case(case, suite)
