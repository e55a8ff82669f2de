import numpy as np
import pytest

from gamekit import benchmark as bm
from gamekit.behavior import partition, predictors
from gamekit.errors import Diverged, InvalidInput
from gamekit.fne_dd import solve_finite_fne
from gamekit.fne_known import solve_finite_fne_known
from gamekit.game import make_spec
from gamekit.lti import LtiSystem, generate_offline_data
from gamekit.receding import (
    FirstStageGain, convergence_report, evaluate_costs, first_stage_gain, run_receding_horizon,
    sweep_horizons,
)


@pytest.fixture(scope="module")
def sweep(ref_preds, ref_spec):
    return sweep_horizons(None, ref_preds, ref_spec, range(1, 51))


def myopic_action(sys, spec, x):
    """Static Nash point of the one-stage game, solved as one stacked linear system."""
    rows, rhs = [], []
    for i in range(spec.N):
        sl = spec.input_slice(i)
        Di, Q, l = sys.D[:, sl], spec.Q[i], spec.reference(i, 1)
        E = np.zeros((Di.shape[1], sys.m))
        E[:, sl] = spec.R[i][i]
        rows.append(Di.T @ Q @ sys.D + E)
        rhs.append(-Di.T @ Q @ (sys.C @ x - l))
    return np.linalg.solve(np.vstack(rows), np.concatenate(rhs))


def test_one_stage_gain_is_myopic(ref_sys, ref_spec, ref_preds, ref_window):
    g = first_stage_gain(None, ref_preds, ref_spec, 1)
    u = np.concatenate([K @ ref_window.stacked + L for K, L in g.pairs()])
    np.testing.assert_allclose(u, myopic_action(ref_sys, ref_spec, ref_window.x1), atol=1e-8)


def test_sweep_gains_are_first_stages(sweep, ref_preds, ref_spec):
    sol = solve_finite_fne(None, ref_preds, ref_spec, 7)
    for i in range(2):
        np.testing.assert_array_equal(sweep.gains[7].K[i], sol.K(i, 1))
        np.testing.assert_array_equal(sweep.gains[7].L[i], sol.L(i, 1))


def test_gains_ignore_the_data_seed_only_through_the_behavior(ref_sys, ref_spec, sweep):
    # gains are a property of the system; another data set yields the same ones
    data = generate_offline_data(ref_sys, 400, 5.0, seed=11, x1=np.zeros(3))
    preds = predictors(partition(data, bm.T_INI, 21, n_hint=3, player_partition=(1, 1)))
    other = first_stage_gain(None, preds, ref_spec, 20)
    for a, b in zip(other.pairs(), sweep.gains[20].pairs()):
        np.testing.assert_allclose(a[0], b[0], atol=1e-7)
        np.testing.assert_allclose(a[1], b[1], atol=1e-7)


def test_sweep_converges_and_settles(sweep):
    assert sweep.converged and sweep.settled_at is not None
    assert sweep.converged_at <= sweep.settled_at <= 50
    assert np.all(sweep.gain_diff[sweep.horizons.index(sweep.settled_at):] <= 0.01)
    assert np.isfinite(sweep.gain_diff).all()  # T=51 is certified


def test_zero_eps_never_converges(ref_preds, ref_spec):
    s = sweep_horizons(None, ref_preds, ref_spec, range(1, 11), eps=0.0)
    assert s.converged_at is None and s.settled_at is None


def test_parallel_sweep_matches_serial(ref_preds, ref_spec):
    a = sweep_horizons(None, ref_preds, ref_spec, range(1, 8))
    b = sweep_horizons(None, ref_preds, ref_spec, range(1, 8), jobs=3)
    np.testing.assert_array_equal(a.gain_diff, b.gain_diff)


def test_sweep_range_checks(ref_preds, ref_spec):
    with pytest.raises(InvalidInput):
        sweep_horizons(None, ref_preds, ref_spec, [])
    with pytest.raises(InvalidInput):
        sweep_horizons(None, ref_preds, ref_spec, [60])


def test_last_difference_undefined_at_data_depth(ref_preds, ref_spec):
    s = sweep_horizons(None, ref_preds, ref_spec, [ref_preds.T])
    assert np.isnan(s.gain_diff[0]) and s.converged_at is None


def test_gain_differences_decay_geometrically_for_scalar_plant():
    sys = LtiSystem([[0.8]], [[1.0]], [[1.0]], [[0.0]])
    spec = make_spec((1,), [[[1.0]]], [[[[0.5]]]], [0.95])
    data = generate_offline_data(sys, 200, 1.0, seed=3, x1=np.zeros(1))
    preds = predictors(partition(data, 1, 31, n_hint=1))
    d = sweep_horizons(None, preds, spec, range(1, 31), eps=0.0).gain_diff
    ratios = d[1:10] / d[:9]  # before roundoff takes over
    assert ratios.max() < 0.1
    assert np.ptp(ratios[2:]) < 0.01  # a steady geometric rate
    assert d[20:].max() < 1e-14


def test_cauchy_differences_shrink(sweep):
    def gap(a, b):
        return max(np.abs(x - y).max() for x, y in zip(sweep.gains[a].K, sweep.gains[b].K))
    assert gap(50, 40) <= gap(20, 10)


def test_data_loop_matches_system_loop(sweep, ref_sys, ref_preds, ref_spec, ref_window):
    g = sweep.gains[50]
    a = run_receding_horizon(g, ref_sys, ref_window.u_ini, ref_window.y_ini, ref_spec, M=200)
    b = run_receding_horizon(g, ref_preds, ref_window.u_ini, ref_window.y_ini, ref_spec, M=200)
    np.testing.assert_allclose(a.trajectory.inputs, b.trajectory.inputs, atol=1e-8)
    np.testing.assert_allclose(a.costs, b.costs, rtol=1e-8)
    assert b.max_window_distance < 1e-8
    np.testing.assert_allclose(a.x1, ref_window.x1, atol=1e-8)


def test_receding_actions_follow_known_first_stage(sweep, ref_sys, ref_spec, ref_window):
    known = solve_finite_fne_known(ref_sys, ref_spec, 10)
    res = run_receding_horizon(sweep.gains[10], ref_sys, ref_window.u_ini, ref_window.y_ini,
                               ref_spec, M=40)
    x = ref_window.x1
    for t in range(40):
        u = known.action(1, x)
        np.testing.assert_allclose(res.trajectory.inputs[t], u, atol=1e-6 * max(1, np.abs(u).max()))
        x = ref_sys.A @ x + ref_sys.B @ u


def test_zero_window_without_references_costs_nothing(ref_sys, ref_preds):
    spec = bm.reference_game(references=False)
    g = first_stage_gain(None, ref_preds, spec, 20)
    res = run_receding_horizon(g, ref_sys, np.zeros(4), np.zeros(4), spec, M=50)
    assert not res.costs.any() and not res.tail_bound.any()


def test_tail_bound_decreases_with_M(ref_sys, ref_preds, ref_window):
    spec = bm.reference_game(references=False)
    g = first_stage_gain(None, ref_preds, spec, 30)
    tails = [run_receding_horizon(g, ref_sys, ref_window.u_ini, ref_window.y_ini, spec, M=M)
             .tail_bound.max() for M in (20, 40, 80)]
    assert tails[0] > tails[1] > tails[2] > 0


def test_costs_match_direct_summation(sweep, ref_sys, ref_spec, ref_window):
    res = run_receding_horizon(sweep.gains[30], ref_sys, ref_window.u_ini, ref_window.y_ini,
                               ref_spec, M=60)
    u, y = res.trajectory.inputs, res.trajectory.outputs
    for i in range(2):
        l = ref_spec.reference(i, 1)
        total = 0.0
        for t in range(60):
            e = y[t] - l
            quad = e @ ref_spec.Q[i] @ e + sum(
                u[t, ref_spec.input_slice(j)] @ ref_spec.R[i][j] @ u[t, ref_spec.input_slice(j)]
                for j in range(2))
            total += 0.5 * ref_spec.deltas[i] ** t * quad
        assert res.costs[i] == pytest.approx(total, rel=1e-12)


def test_divergence_is_reported(ref_sys, ref_spec, ref_window):
    K = np.zeros((1, 8))
    K[0, 2] = 50.0  # feed back player 1's newest input with a huge gain
    with pytest.raises(Diverged) as info:
        run_receding_horizon([(K, np.zeros(1)), (np.zeros((1, 8)), np.zeros(1))], ref_sys,
                             ref_window.u_ini, ref_window.y_ini, ref_spec, M=100)
    assert info.value.t < 100


def test_heterogeneous_horizons(sweep, ref_sys, ref_spec, ref_window):
    mixed = [sweep.gains[5].pairs()[0], sweep.gains[50].pairs()[1]]
    res = run_receding_horizon(mixed, ref_sys, ref_window.u_ini, ref_window.y_ini, ref_spec, M=200)
    same = run_receding_horizon(sweep.gains[50], ref_sys, ref_window.u_ini, ref_window.y_ini,
                                ref_spec, M=200)
    assert np.isfinite(res.costs).all()
    assert not np.allclose(res.costs, same.costs)


def test_bad_inputs(sweep, ref_sys, ref_spec, ref_window):
    with pytest.raises(InvalidInput):
        run_receding_horizon(sweep.gains[5].pairs()[:1], ref_sys, ref_window.u_ini,
                             ref_window.y_ini, ref_spec)
    with pytest.raises(InvalidInput):
        run_receding_horizon(sweep.gains[5], ref_sys, ref_window.u_ini, ref_window.y_ini,
                             ref_spec, M=0)
    with pytest.raises(InvalidInput):
        run_receding_horizon(sweep.gains[5], "plant", ref_window.u_ini, ref_window.y_ini, ref_spec)


@pytest.fixture(scope="module")
def costed(ref_sys, ref_preds, ref_spec, ref_window, ref_oracle):
    s = sweep_horizons(None, ref_preds, ref_spec, [1, 5, 10, 20, 50])
    return evaluate_costs(s, ref_sys, ref_window.u_ini, ref_window.y_ini, ref_spec, M=1000,
                          oracle_costs=ref_oracle.cost(ref_window.x1))


def test_one_stage_loop_diverges_and_is_recorded(costed):
    assert [T for T, _ in costed.extras["diverged"]] == [1]
    assert np.isnan(costed.costs[0]).all() and np.isfinite(costed.costs[1:]).all()


def test_cost_gap_shrinks_with_horizon(costed):
    rep = convergence_report(costed)
    k5, k50 = costed.horizons.index(5), costed.horizons.index(50)
    assert np.all(rep.cost_gap[k50] < rep.cost_gap[k5])
    np.testing.assert_allclose(costed.costs[k50], costed.oracle_costs, rtol=0.01)
    assert rep.gain_gap[k50] == 0.0 and rep.offset_gap[k50] == 0.0
    assert len(rep.rows()) == 2 * len(costed.horizons)


def test_identical_gains_give_identical_gaps(costed):
    g = costed.gains[20]
    gains = dict(costed.gains)
    gains[50] = FirstStageGain(50, g.K, g.L)
    same = type(costed)(**{**costed.__dict__, "gains": gains})
    rep = convergence_report(same)
    k = costed.horizons.index(20)
    assert rep.gain_gap[k] == 0.0 and rep.offset_gap[k] == 0.0
    assert np.isnan(rep.ratio[k]).all()


def test_report_needs_costs(sweep):
    with pytest.raises(InvalidInput):
        convergence_report(sweep)
