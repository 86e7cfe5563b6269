import numpy as np
import pytest

from wavemgt.basis import DomainSpec, build_basis
from wavemgt.params import ModelParams


@pytest.fixture(scope="session")
def dom16():
    return DomainSpec(np.pi, 16)


@pytest.fixture(scope="session")
def basis16(dom16):
    return build_basis(dom16)


@pytest.fixture(scope="session")
def params16(dom16):
    return ModelParams(tau=1.0, b=2.0, alpha=0.5, gamma=2.5, domain=dom16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = []


@pytest.fixture
def criterion(capsys):
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""

    def record(label, ok, detail=""):
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _CRITERIA.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
