import numpy as np
import pytest

from riccilab.flow import StepPolicy, run_flow
from riccilab.fixtures import get_fixture
from riccilab.geometry import GridSpec, RadialState

ACCEPTANCE_LINES = []


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def flat_plane():
    g = GridSpec.radial(400, 40.0)
    return RadialState(np.zeros(400), g)


@pytest.fixture(scope="session")
def cone_trace():
    st = get_fixture("cone").state()
    return run_flow(st, 6.0, StepPolicy(save_every=0.05))


@pytest.fixture(scope="session")
def expander():
    from riccilab.soliton import solve_expander_profile

    return solve_expander_profile(1.0, 1.0)


@pytest.fixture(scope="session")
def expander_blowdown(expander):
    from riccilab.blowdown import build_blowdown_sequence
    from riccilab.soliton import expander_family

    # t_fixture = sigma: the family is exactly self-similar about t = 0
    fam = expander_family(expander, t_fixture=1.0)
    trace = fam.trace(0.5, 96.0, 41)
    return build_blowdown_sequence(trace, (0.0, 0.0))


@pytest.fixture(scope="session")
def hyperbolic_blowdown():
    from riccilab.blowdown import build_blowdown_sequence
    from riccilab.soliton import einstein_homothety_family

    fam = einstein_homothety_family(2, -1.0, 1.0, GridSpec.radial(600, 14.0))
    # tau_0 = horizon / 96 = 32, see the ledger on finite-tau increments
    trace = fam.trace(0.0, 96.0 * 32.0, 41)
    return build_blowdown_sequence(trace, (0.0, 0.0))
