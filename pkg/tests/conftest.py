import pytest

from tocl.linearize import check_system
from tocl.model import ControlSystem
from tocl.presets import preset

CASE_A = (-0.4, -0.2, 0.1)
CASE_B = (-0.4, 0.2, 0.1)

_acceptance: dict[str, list[str]] = {}


def system_from_preset(name: str) -> ControlSystem:
    spec = preset(name)
    return ControlSystem.from_strings(spec["a"], spec["b"], t_radius=spec["t_radius"],
                                      x_radius=spec["x_radius"], name=name)


@pytest.fixture(scope="session")
def gap_system():
    return system_from_preset("gap013")


@pytest.fixture(scope="session")
def gap_report(gap_system):
    return check_system(gap_system)


@pytest.fixture(scope="session")
def gap_driftless(gap_report):
    return gap_report.driftless


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): a release acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _acceptance.setdefault(name, []).append("PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, results in _acceptance.items():
        verdict = "PASS" if all(r == "PASS" for r in results) else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")
