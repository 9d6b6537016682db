import contextlib
import time

import pytest

# number -> (title, [(passed, seconds, failure detail)])
_CRITERIA: dict[int, tuple[str, list]] = {}


def _line(number: int) -> str:
    title, runs = _CRITERIA[number]
    failed = [detail for ok, _, detail in runs if not ok]
    seconds = sum(s for _, s, _ in runs)
    status = "FAIL" if failed else "PASS"
    tail = f" [{failed[0]}]" if failed else ""
    return f"criterion {number}: {status}  {title} ({seconds:.1f}s){tail}"


@pytest.fixture
def criterion():
    """Record a numbered acceptance criterion; parametrized parts are merged into one line."""

    @contextlib.contextmanager
    def record(number: int, title: str):
        runs = _CRITERIA.setdefault(number, (title, []))[1]
        start = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            detail = f"{type(exc).__name__}: {exc}".splitlines()[0]
            runs.append((False, time.perf_counter() - start, detail))
            print(_line(number))
            raise
        runs.append((True, time.perf_counter() - start, ""))
        print(_line(number))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_line(number))
