import warnings

import numpy as np
import pytest

from gamekit import benchmark as bm
from gamekit.errors import InvalidInput, NoConvergence
from gamekit.fne_dd import rollout_fne, solve_finite_fne, value_function
from gamekit.fne_known import cross_check_theorem1, infinite_horizon_known, solve_finite_fne_known
from gamekit.game import make_spec
from gamekit.lti import LtiSystem, sample_initial_window, simulate

from gamefactory import build_random_game, random_system


def riccati_tracking(sys, Q, R, delta, l, T):
    """Textbook backward recursion for one-player discounted output tracking.

    Stage cost ``0.5[(Cx+Du-l)'Q(Cx+Du-l) + u'Ru]``, value ``0.5x'Px + s'x + c``.
    Returns ``[(K_1, k_1), ..., (K_T, k_T)]`` with ``u_t = K_t x_t + k_t``.
    """
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    P = np.zeros((sys.n, sys.n))
    s = np.zeros(sys.n)
    out = []
    for _ in range(T):
        H = D.T @ Q @ D + R + delta * B.T @ P @ B
        K = -np.linalg.solve(H, D.T @ Q @ C + delta * B.T @ P @ A)
        k = -np.linalg.solve(H, -D.T @ Q @ l + delta * B.T @ s)
        Acl, Ccl = A + B @ K, C + D @ K
        s = Ccl.T @ Q @ (D @ k - l) + K.T @ R @ k + delta * Acl.T @ (P @ B @ k + s)
        P = Ccl.T @ Q @ Ccl + K.T @ R @ K + delta * Acl.T @ P @ Acl
        out.append((K, k))
    return out[::-1]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_single_player_matches_riccati(seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, 2, (1,), 2)
    M = rng.standard_normal((2, 2))
    Q, R, delta, l = M @ M.T + np.eye(2), np.array([[0.7]]), 0.85, rng.standard_normal(2)
    spec = make_spec((1,), [Q], [[R]], [delta], [l])
    known = solve_finite_fne_known(sys, spec, 8)
    for t, (K, k) in enumerate(riccati_tracking(sys, Q, R, delta, l, 8), start=1):
        np.testing.assert_allclose(known.stage(t).Kbar[0], K, atol=1e-10)
        np.testing.assert_allclose(known.stage(t).Lbar[0], k, atol=1e-10)


def test_zero_output_weights_give_zero_strategies(ref_sys):
    spec = make_spec((1, 1), [np.zeros((2, 2))] * 2, [[[[1.0]], [[0.2]]], [[[0.2]], [[1.0]]]],
                     [0.9, 0.9], [[1.0, 1.0], [2.0, 0.0]])
    known = solve_finite_fne_known(ref_sys, spec, 5)
    for st in known.stages:
        assert not np.any(st.K_stacked) and not np.any(st.L_stacked)


def test_value_matrices_are_symmetric(ref_sys, ref_spec):
    for st in solve_finite_fne_known(ref_sys, ref_spec, 20).stages:
        for P in st.Pbar:
            assert np.max(np.abs(P - P.T)) <= 1e-10 * max(1.0, np.abs(P).max())


def test_reference_first_action_agrees(ref_sys, ref_spec, ref_sol50, ref_window):
    known = solve_finite_fne_known(ref_sys, ref_spec, 50)
    st = ref_sol50.stage(1)
    dd_action = st.K_stacked @ ref_window.stacked + st.L_stacked
    np.testing.assert_allclose(known.action(1, bm.X1), dd_action, atol=1e-6)


def test_cross_check_reference(ref_sys, ref_spec, ref_preds, ref_basis):
    dd = solve_finite_fne(None, ref_preds, ref_spec, 10)
    rep = cross_check_theorem1(dd, solve_finite_fne_known(ref_sys, ref_spec, 10), ref_sys, ref_basis)
    assert rep.passed, rep.to_dict()


def test_cross_check_single_stage_has_no_input_blocks(ref_sys, ref_spec, ref_preds, ref_basis):
    dd = solve_finite_fne(None, ref_preds, ref_spec, 1)
    rep = cross_check_theorem1(dd, solve_finite_fne_known(ref_sys, ref_spec, 1), ref_sys, ref_basis)
    assert rep.u_blocks == 0.0 and rep.passed


@pytest.mark.parametrize("seed", range(4))
def test_cross_check_scalar_two_player(seed):
    g = build_random_game(100 + seed, n=1, partition_=(1, 1), p=1, T=4)
    dd = solve_finite_fne(g.blocks, g.preds, g.spec)
    rep = cross_check_theorem1(dd, solve_finite_fne_known(g.sys, g.spec, 4), g.sys, g.basis, tol=1e-8)
    assert rep.passed, rep.to_dict()


def test_cross_check_horizon_mismatch(ref_sys, ref_spec, ref_preds, ref_basis):
    dd = solve_finite_fne(None, ref_preds, ref_spec, 3)
    with pytest.raises(InvalidInput):
        cross_check_theorem1(dd, solve_finite_fne_known(ref_sys, ref_spec, 4), ref_sys, ref_basis)


def test_equilibrium_paths_agree_from_random_states(ref_sys, ref_spec, ref_preds):
    T = 12
    dd = solve_finite_fne(None, ref_preds, ref_spec, T, keep_values=True)
    known = solve_finite_fne_known(ref_sys, ref_spec, T)
    rng = np.random.default_rng(4)
    for _ in range(5):
        u_ini, y_ini, x1 = sample_initial_window(ref_sys, 2, rng, scale=2.0)
        ro = rollout_fne(dd, ref_sys, u_ini, y_ini, ref_spec)
        x = x1
        for t in range(1, T + 1):
            u = known.action(t, x)
            np.testing.assert_allclose(ro.trajectory.inputs[t - 1], u, atol=1e-6)
            x = ref_sys.A @ x + ref_sys.B @ u
        np.testing.assert_allclose(known.value(x1), value_function(dd, np.concatenate([u_ini, y_ini])),
                                   rtol=1e-6)


def test_stationary_limit_reference(ref_oracle):
    assert ref_oracle.T_converged <= 200
    assert ref_oracle.diffs[-1] <= 1e-10
    assert ref_oracle.spectral_radius() < 1.0


def test_stationary_limit_warns_for_tracking(ref_sys, ref_spec):
    with pytest.warns(UserWarning):
        infinite_horizon_known(ref_sys, ref_spec, eps=1e-6)


def test_stationary_limit_rejects_time_varying_references(ref_sys, ref_spec):
    spec = ref_spec.with_references([np.zeros((3, 2)) + np.arange(3)[:, None], None])
    with pytest.raises(InvalidInput):
        infinite_horizon_known(ref_sys, spec)


def test_no_convergence(ref_sys, ref_spec):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(NoConvergence) as info:
            infinite_horizon_known(ref_sys, ref_spec, eps=0.0, T_max=3)
    assert info.value.T_max == 3


def test_no_control_authority_gives_zero_gain_and_autonomous_cost():
    A = np.array([[0.5, 0.2], [-0.1, 0.7]])
    sys = LtiSystem(A, np.zeros((2, 1)), np.eye(2), np.zeros((2, 1)))
    Q = np.diag([1.0, 2.0])
    spec = make_spec((1,), [Q], [[[[1.0]]]], [0.9])
    inf = infinite_horizon_known(sys, spec)
    assert not inf.K_stacked.any()
    x1 = np.array([1.0, -2.0])
    states, _ = simulate(sys, x1, np.zeros((400, 1)))
    series = sum(0.5 * 0.9 ** k * x @ Q @ x for k, x in enumerate(states[:-1]))
    assert inf.cost(x1)[0] == pytest.approx(series, rel=1e-12)


def test_lyapunov_cost_matches_long_simulation(ref_oracle, ref_window):
    assert all(ref_oracle.lyapunov_trusted(i) for i in range(2))
    np.testing.assert_allclose(ref_oracle.cost(ref_window.x1), ref_oracle.simulated_cost(ref_window.x1),
                               rtol=1e-8)


def test_cost_falls_back_to_simulation_when_undiscounted(ref_sys):
    spec = make_spec((1, 1), [np.eye(2)] * 2, [[[[1.0]], [[0.0]]], [[[0.0]], [[1.0]]]], [1.0, 1.0])
    inf = infinite_horizon_known(ref_sys, spec, eps=1e-12)
    assert not inf.lyapunov_trusted(0)
    np.testing.assert_allclose(inf.cost(bm.X1, steps=300), inf.simulated_cost(bm.X1, 300))
