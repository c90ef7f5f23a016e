import numpy as np
import pytest

from softs.data import write_csv

_acceptance_lines: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def synthetic_csv(tmp_path):
    """200 rows, 3 channels: two noisy periodic channels and a trend."""
    r = np.random.default_rng(7)
    t = np.arange(200)
    values = np.stack(
        [np.sin(t / 5) + 0.1 * r.normal(size=200), np.cos(t / 7), 0.01 * t],
        axis=1,
    )
    path = tmp_path / "syn.csv"
    write_csv(path, values, ["a", "b", "c"])
    return path


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid or report.when != "call" and not report.failed:
        return
    if report.when == "setup" and not report.failed:
        return
    status = "PASS" if report.passed else "FAIL"
    _acceptance_lines.append(f"[{status}] {report.nodeid.split('::')[-1]}")


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
