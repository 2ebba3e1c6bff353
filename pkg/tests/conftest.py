import pytest
from hypothesis import HealthCheck, settings

from dsfas.scenario import ScenarioConfig

settings.register_profile(
    "repo", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture
def normalized_cfg():
    return ScenarioConfig(model="normalized", gamma=2.0)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, merged over its parts."""
    from helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    merged = {}
    for number, ok, detail in ACCEPTANCE:
        prev = merged.get(number, (True, []))
        merged[number] = (prev[0] and ok, prev[1] + [detail])
    terminalreporter.section("acceptance criteria")
    for number in sorted(merged):
        ok, details = merged[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  " + "; ".join(details))
