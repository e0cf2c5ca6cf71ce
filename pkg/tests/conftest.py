import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from geolgp.domain import Circle, Ellipse
from geolgp.weights import ConstantWeight, RadialBumpWeight

settings.register_profile("geolgp", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("geolgp")

# gentle weights: exit fans stay monotone on the disk and on the test ellipse
BUMP = dict(a=1.0, b=0.5, center=(0.2, 0.1), width=0.4)
VALLEY = dict(a=1.0, b=-0.5, center=(0.1, -0.1), width=0.3)


@pytest.fixture
def disk():
    return Circle(1.0)


@pytest.fixture
def ellipse():
    return Ellipse(1.25, 0.8)


@pytest.fixture
def unit():
    return ConstantWeight(1.0)


@pytest.fixture
def bump():
    return RadialBumpWeight(**BUMP)


@pytest.fixture
def valley():
    return RadialBumpWeight(**VALLEY)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the test session
CRITERIA = []


@pytest.fixture
def criterion():
    def record(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip()
        CRITERIA.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
