import pytest

from specbench.ot import syncmodel, testgen
from specbench.mck import explore


@pytest.fixture(scope="session")
def ot_graph():
    return explore(syncmodel.model(syncmodel.SyncParams()))


@pytest.fixture(scope="session")
def ot_cases(ot_graph):
    return testgen.generate(ot_graph)


ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome; it is printed in the summary."""

    def record(name: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE.append((name, bool(ok), detail))
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
