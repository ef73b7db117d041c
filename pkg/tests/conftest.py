import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from srblab.fields import Roof, benchmark_field, benchmark_observable
from srblab.flow_core import CatSuspension

settings.register_profile("srblab", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("srblab")


@pytest.fixture(scope="session")
def roof():
    return Roof.default()


@pytest.fixture(scope="session")
def cat(roof):
    return CatSuspension(roof)


@pytest.fixture(scope="session")
def cat_unit():
    return CatSuspension(Roof.constant(1.0))


@pytest.fixture(scope="session")
def bench(roof):
    return benchmark_field(roof), benchmark_observable(roof)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)



def pytest_terminal_summary(terminalreporter):
    import sys
    mod = next((m for n, m in list(sys.modules.items()) if n.endswith("test_acceptance")), None)
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
