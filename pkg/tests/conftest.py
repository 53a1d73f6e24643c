import pytest

from qlbe.physcore import GasSpec, GaussianPotential, ParticleSpec, UnitSystem

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(item.user_properties).get("detail", "")
        _ACCEPTANCE.append((marker.args[0], marker.args[1], report.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, detail in sorted(_ACCEPTANCE):
        flag = "PASS" if outcome == "passed" else "FAIL"
        line = f"[{flag}] criterion {number:2d}: {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def units():
    return UnitSystem()


@pytest.fixture
def gas():
    return GasSpec(mass=1.0, beta=1.0, density=1.0)


@pytest.fixture
def gauss():
    return GaussianPotential(g=1.0, r=1.0)


@pytest.fixture
def light():
    """Particle twice as heavy as a gas atom."""
    return ParticleSpec(mass=2.0)
