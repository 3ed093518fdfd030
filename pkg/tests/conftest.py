import numpy as np
import pytest

from corofin import finray
from corofin.model import Member, Node, StructureModel, clamp

# 20 x 1 mm strip, E = 20 MPa
E_TAB = 2e7
B_TAB, H_TAB = 20e-3, 1e-3
A_TAB = B_TAB * H_TAB
I_TAB = B_TAB * H_TAB ** 3 / 12


def straight_member(x0, y0, x1, y1, E=E_TAB, A=A_TAB, I=I_TAB, offset=0.0):
    """Two-node model holding one member between the given points."""
    L = float(np.hypot(x1 - x0, y1 - y0))
    beta0 = float(np.arctan2(y1 - y0, x1 - x0))
    nodes = (Node(0, x0, y0), Node(1, x1, y1))
    m = Member(0, 0, 1, E, A, I, L - offset, beta0, offset)
    return StructureModel(nodes, (m,), clamp([0]))


@pytest.fixture(scope="session")
def dense():
    return finray.generate(finray.FinRayParams())


@pytest.fixture(scope="session")
def sparse():
    return finray.generate(finray.TABLE1_SPARSE)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
