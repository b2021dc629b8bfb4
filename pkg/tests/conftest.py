import pytest

from qcascade.pipeline import Experiment, ExperimentConfig

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def experiment():
    """Desk-scale experiment with the default config; stages are computed on first use."""
    return Experiment(ExperimentConfig())


@pytest.fixture
def report():
    def _report(n: int, ok: bool, detail: str):
        _CRITERIA[n] = (ok, detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    return _report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
