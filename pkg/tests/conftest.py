import pytest

# criterion number -> (title, passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def record_criterion():
    def record(number: int, title: str, passed: bool, detail: str) -> None:
        ACCEPTANCE_RESULTS[number] = (title, bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number} ({title}): {detail}")
