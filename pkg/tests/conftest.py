import pytest

ACCEPTANCE_LINES: list[str] = []


class AcceptanceRecorder:
    def __call__(self, number: int, ok: bool, detail: str):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}")
        print(ACCEPTANCE_LINES[-1])
        assert ok, detail


@pytest.fixture(scope="session")
def record():
    return AcceptanceRecorder()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
