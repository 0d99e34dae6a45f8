import math

import pytest

from bosonic_twin.dynamics import DeviceModel
from bosonic_twin.hilbert import HilbertDims

_ACCEPTANCE = []


@pytest.fixture
def dims():
    return HilbertDims()


@pytest.fixture
def small_dims():
    return HilbertDims(n_cav=10)


@pytest.fixture
def ideal_model():
    """Sapphire/6061-scale cavity, no thermal population, no dephasing."""
    return DeviceModel(chi_over_2pi=500e3, cavity_T1=1.4e-3, cavity_Tphi=math.inf, nbar_th=0.0, transmon_Pe_th=0.0)


@pytest.fixture
def acceptance_log():
    def record(number, passed, detail):
        _ACCEPTANCE.append((number, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
