import warnings

import numpy as np
import pytest

from gamekit import benchmark as bm
from gamekit.behavior import behavior_basis, partition, predictors
from gamekit.fne_dd import solve_finite_fne
from gamekit.lti import generate_offline_data

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def ref_sys():
    return bm.reference_system()


@pytest.fixture(scope="session")
def ref_spec():
    return bm.reference_game()


@pytest.fixture(scope="session")
def ref_window(ref_sys):
    return bm.reference_window(ref_sys)


@pytest.fixture(scope="session")
def ref_data(ref_sys):
    return generate_offline_data(ref_sys, bm.DATA_LENGTH, bm.AMPLITUDE, seed=0, x1=np.zeros(3))


@pytest.fixture(scope="session")
def ref_blocks(ref_data):
    return partition(ref_data, bm.T_INI, bm.HORIZON + 1, n_hint=3, player_partition=(1, 1))


@pytest.fixture(scope="session")
def ref_preds(ref_blocks):
    return predictors(ref_blocks)


@pytest.fixture(scope="session")
def ref_basis(ref_data):
    return behavior_basis(ref_data, bm.T_INI, 3)


@pytest.fixture(scope="session")
def ref_sol50(ref_blocks, ref_preds, ref_spec):
    return solve_finite_fne(ref_blocks, ref_preds, ref_spec, bm.HORIZON, keep_values=True)


@pytest.fixture(scope="session")
def ref_oracle(ref_sys, ref_spec):
    from gamekit.fne_known import infinite_horizon_known
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return infinite_horizon_known(ref_sys, ref_spec)
