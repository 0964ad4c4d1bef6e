import pytest

from nvdecouple.model import reference_model


@pytest.fixture(scope="session")
def ref_model():
    return reference_model()


@pytest.fixture(scope="session")
def pairs(ref_model):
    return {p.label: p for p in ref_model.pairs}


@pytest.fixture(scope="session")
def carbons(ref_model):
    return {c.label: c for c in ref_model.carbons}


# acceptance criteria report one line each; collected here and echoed at the end
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
