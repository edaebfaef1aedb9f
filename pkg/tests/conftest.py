import pytest
from hypothesis import settings

from medmarg.simulation import SimConfig, generate_dataset

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def sim_data():
    return generate_dataset(SimConfig(n=2000), 12345)


@pytest.fixture(scope="session")
def big_data():
    return generate_dataset(SimConfig(n=5000), 777)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record a PASS/FAIL line for an acceptance criterion and assert it."""

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
