import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gamekit import benchmark as bm
from gamekit.errors import InconsistentInitialData, InvalidInput, NotObservable
from gamekit.lti import (LtiSystem, Trajectory, backfill_initial_window, generate_offline_data,
                         is_controllable, lag, match_initial_state, observability_matrix,
                         read_trajectory_csv, sample_initial_window, simulate,
                         write_trajectory_csv)


def scalar(a=1.0, b=1.0, c=1.0, d=0.0):
    return LtiSystem([[a]], [[b]], [[c]], [[d]])


def test_zero_input_zero_state_stays_zero(ref_sys):
    states, traj = simulate(ref_sys, np.zeros(3), np.zeros((5, 2)))
    assert not states.any() and not traj.outputs.any()


def test_scalar_hand_recursion():
    states, traj = simulate(scalar(), [0.0], [1.0, 1.0])
    np.testing.assert_array_equal(states.ravel(), [0.0, 1.0, 2.0])
    np.testing.assert_array_equal(traj.outputs.ravel(), [0.0, 1.0])


def test_regenerated_reference_data_is_a_system_trajectory(ref_sys, ref_data):
    _, traj = simulate(ref_sys, np.zeros(3), ref_data.inputs)
    np.testing.assert_array_equal(traj.outputs, ref_data.outputs)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_superposition(seed):
    rng = np.random.default_rng(seed)
    sys = bm.reference_system()
    x, x2 = rng.standard_normal((2, 3))
    u, u2 = rng.standard_normal((2, 8, 2))
    _, a = simulate(sys, x, u)
    _, b = simulate(sys, x2, u2)
    _, ab = simulate(sys, x + x2, u + u2)
    scale = max(np.abs(ab.outputs).max(), 1.0)
    np.testing.assert_allclose(ab.outputs, a.outputs + b.outputs, atol=1e-12 * scale)


@pytest.mark.parametrize("bad", [
    dict(A=np.eye(2), B=np.ones((3, 1)), C=np.ones((1, 2)), D=np.zeros((1, 1))),
    dict(A=np.ones((2, 3)), B=np.ones((2, 1)), C=np.ones((1, 2)), D=np.zeros((1, 1))),
    dict(A=np.eye(2), B=np.ones((2, 1)), C=np.ones((1, 2)), D=np.zeros((2, 1))),
])
def test_dimension_mismatch_rejected(bad):
    with pytest.raises(InvalidInput):
        LtiSystem(**bad)


def test_partition_must_split_inputs():
    with pytest.raises(InvalidInput):
        LtiSystem(np.eye(2), np.ones((2, 3)), np.ones((1, 2)), np.zeros((1, 3)), partition=(1, 1))


def test_caller_arrays_stay_writable():
    A = np.eye(2)
    LtiSystem(A, np.ones((2, 1)), np.ones((1, 2)), np.zeros((1, 1)))
    A[0, 0] = 3.0


def test_trajectory_rejects_length_mismatch():
    with pytest.raises(InvalidInput):
        Trajectory(np.zeros((3, 1)), np.zeros((2, 1)))


@pytest.mark.parametrize("sys, expected", [
    (LtiSystem(np.diag([0.5, 0.2]), np.ones((2, 1)), np.eye(2), np.zeros((2, 1))), 1),
    (bm.reference_system(), 2),
])
def test_lag(sys, expected):
    assert lag(sys) == expected


def test_lag_unobservable():
    with pytest.raises(NotObservable):
        lag(LtiSystem(np.eye(2), np.ones((2, 1)), np.zeros((1, 2)), np.zeros((1, 1))))


def test_controllability():
    assert is_controllable(scalar(a=-3.7))
    assert not is_controllable(LtiSystem(np.eye(2), np.zeros((2, 1)), np.eye(2), np.zeros((2, 1))))
    assert is_controllable(bm.reference_system())


def test_offline_data_determinism_and_range(ref_sys):
    a = generate_offline_data(ref_sys, 50, 5.0, seed=3)
    b = generate_offline_data(ref_sys, 50, 5.0, seed=3)
    c = generate_offline_data(ref_sys, 50, 5.0, seed=4)
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.outputs, b.outputs)
    assert not np.array_equal(a.inputs, c.inputs)
    assert np.abs(a.inputs).max() <= 5.0


def test_zero_amplitude_gives_zero_inputs(ref_sys):
    assert not generate_offline_data(ref_sys, 20, 0.0).inputs.any()


def test_match_zero_window(ref_sys):
    np.testing.assert_array_equal(match_initial_state(ref_sys, np.zeros(4), np.zeros(4)), 0.0)


def test_match_reference_window(ref_sys):
    w = bm.reference_window(ref_sys)
    np.testing.assert_allclose(match_initial_state(ref_sys, w.u_ini, w.y_ini), bm.X1, atol=1e-12)


def test_printed_window_matches_to_rounding(ref_sys):
    # the printed outputs carry three decimals, so only a loose tolerance applies
    x1 = match_initial_state(ref_sys, bm.U_INI, bm.Y_INI_PRINTED, tol=1e-3)
    np.testing.assert_allclose(x1, bm.X1, atol=5e-3)
    np.testing.assert_allclose(backfill_initial_window(ref_sys, bm.X1, bm.U_INI),
                               bm.Y_INI_PRINTED, atol=1e-3)


def test_printed_window_is_inconsistent_with_printed_feedthrough():
    sys = bm.reference_system(bm.D_AS_PRINTED)
    with pytest.raises(InconsistentInitialData):
        match_initial_state(sys, bm.U_INI, bm.Y_INI_PRINTED, tol=1e-3)


def test_infeasible_output_perturbation_detected(ref_sys):
    w = bm.reference_window(ref_sys)
    O = observability_matrix(ref_sys, 2)
    # a direction orthogonal to every free response: last left singular vector of O
    U, s, _ = np.linalg.svd(O)
    assert s.size == 3 and U.shape == (4, 4)
    v = U[:, -1]
    with pytest.raises(InconsistentInitialData):
        match_initial_state(ref_sys, w.u_ini, w.y_ini + 1e-3 * v)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_match_inverts_simulation(seed):
    sys = bm.reference_system()
    u, y, x1 = sample_initial_window(sys, 2, np.random.default_rng(seed))
    assert np.max(np.abs(match_initial_state(sys, u, y) - x1)) <= 1e-10 * max(1.0, np.abs(x1).max())


def test_csv_roundtrip(tmp_path, ref_sys):
    traj = generate_offline_data(ref_sys, 7, seed=1)
    path = tmp_path / "d.csv"
    write_trajectory_csv(traj, path)
    assert path.read_text().splitlines()[0] == "t,u_1,u_2,y_1,y_2"
    back = read_trajectory_csv(path)
    np.testing.assert_array_equal(back.inputs, traj.inputs)
    np.testing.assert_array_equal(back.outputs, traj.outputs)


def test_csv_rejects_garbage(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,u_1,y_1\n1,abc,2\n")
    with pytest.raises(InvalidInput):
        read_trajectory_csv(path)
