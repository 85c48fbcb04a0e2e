import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fr3sounder.core import default_config
from fr3sounder.waveform import build_sounding_frame

settings.register_profile(
    "repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def cfg():
    return default_config(14.5)


@pytest.fixture(scope="session")
def cfg7():
    return default_config(7.0)


@pytest.fixture(scope="session")
def frame(cfg):
    return build_sounding_frame(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_RESULTS = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_RESULTS


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {name}: {detail}")
