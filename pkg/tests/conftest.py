import pytest
from hypothesis import settings

# fixed example streams keep the suite reproducible; first calls may be slow (numpy warm-up)
settings.register_profile("repo", deadline=None, derandomize=True, max_examples=100)
settings.load_profile("repo")

CRITERIA = 11
_records: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance check: ``criterion(number, label, passed, detail)``."""

    def record(number: int, label: str, passed: bool, detail: str = "") -> bool:
        _records.setdefault(number, []).append((label, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _records:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, CRITERIA + 1):
        parts = _records.get(n)
        if not parts:
            terminalreporter.write_line(f"criterion {n:2d}: FAIL  (not run)")
            continue
        ok = all(p for _, p, _ in parts)
        detail = "; ".join(f"{label}: {'ok' if p else 'FAILED'}{' ' + d if d else ''}" for label, p, d in parts)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
