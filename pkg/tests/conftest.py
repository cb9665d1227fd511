import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; call with (number, text) then set .passed."""

    class Record:
        def __init__(self):
            self.number = None
            self.text = ""
            self.detail = ""
            self.passed = False

        def __call__(self, number, text):
            self.number, self.text = number, text
            return self

    rec = Record()
    yield rec
    if rec.number is not None:
        _ACCEPTANCE.append(rec)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for rec in sorted(_ACCEPTANCE, key=lambda r: r.number):
        status = "PASS" if rec.passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {rec.number}. {rec.text} {rec.detail}".rstrip())
