import pytest

_CRITERIA: dict[str, tuple[bool, str]] = {}


class CriterionLog:
    def record(self, key: str, ok: bool, detail: str) -> bool:
        _CRITERIA[key] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
        return bool(ok)


@pytest.fixture(scope="session")
def criterion():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (int(k.rstrip("abcdefgh")), k)):
        ok, detail = _CRITERIA[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key:>4}  {detail}")
