import os

import pytest

# Populated by the acceptance tests; one (number, label, passed) entry each.
ACCEPTANCE_LINES = []


def record_criterion(num, label, passed):
    ACCEPTANCE_LINES.append((num, label, passed))


@pytest.fixture(scope="session", autouse=True)
def cache_env(tmp_path_factory):
    """Point the preconditioner cache at a fresh directory for the session.

    Starting cold keeps the acceptance timings honest: the one-time
    diagonal precompute is paid inside the measured run, not hidden in a
    warm cache from an earlier session.
    """
    path = tmp_path_factory.mktemp("precond-cache")
    old = os.environ.get("FRACWAVE_CACHE")
    os.environ["FRACWAVE_CACHE"] = str(path)
    yield path
    if old is None:
        os.environ.pop("FRACWAVE_CACHE", None)
    else:
        os.environ["FRACWAVE_CACHE"] = old


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, label, passed in sorted(ACCEPTANCE_LINES):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {verdict} - {label}")
