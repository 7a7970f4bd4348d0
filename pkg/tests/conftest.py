import numpy as np
import pytest
from hypothesis import settings

from teleshare.encoding import SecretSpec

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_secrets(count, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
        out.append(SecretSpec(a, b))
    return out


@pytest.fixture
def secret():
    return SecretSpec(0.6, 0.8j)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
