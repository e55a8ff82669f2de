"""Receding-horizon play: apply the first-stage gain of a ``T``-stage game at every step.

Windows are kept in the canonical oldest-first order
``col(u_{t-T_ini}, ..., u_{t-1}, y_{t-T_ini}, ..., y_{t-1})`` so that the
first-stage gains returned by the solver apply without reordering;
:func:`gamekit.numerics.newest_first_permutation` converts for reporting.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .behavior import HankelBlocks, PredictorFamily
from .errors import Diverged, InconsistentInitialData, InvalidInput
from .fne_dd import solve_finite_fne
from .game import GameSpec, stage_cost
from .lti import LtiSystem, Trajectory, match_initial_state
from .numerics import spectral_norm, window_layout

DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class FirstStageGain:
    """Per-player ``(K^i_1(T), L^i_1(T))`` acting on the canonical window."""

    T: int
    K: tuple[np.ndarray, ...]
    L: tuple[np.ndarray, ...]

    def pairs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.K, self.L))


def first_stage_gain(blocks: HankelBlocks | None, predictors: PredictorFamily,
                     spec: GameSpec, T: int) -> FirstStageGain:
    """Stage-1 strategy of the ``T``-stage equilibrium; never reads initial data."""
    sol = solve_finite_fne(blocks, predictors, spec, T, keep_values=False)
    st = sol.stage(1)
    return FirstStageGain(T, st.K, st.L)


@dataclass(frozen=True)
class SweepResult:
    """First-stage gains over a horizon range with convergence diagnostics.

    ``gain_diff[k]`` is ``max_i ||K^i_1(T_k) - K^i_1(T_k + 1)||_2`` (``nan``
    when ``T_k + 1`` exceeds the certified data depth). ``costs`` and
    ``oracle_costs`` are filled by :func:`evaluate_costs`.
    ``converged_at`` is the first ``T`` meeting the stopping rule;
    ``settled_at`` is the first ``T`` after which every defined difference
    stays within ``eps`` (a dip below ``eps`` can be transient).
    """

    horizons: tuple[int, ...]
    gains: dict[int, FirstStageGain]
    gain_diff: np.ndarray
    eps: float
    converged_at: int | None
    settled_at: int | None = None
    costs: np.ndarray | None = None
    oracle_costs: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.converged_at is not None


def _max_gain_gap(a: FirstStageGain, b: FirstStageGain) -> float:
    return max(spectral_norm(x - y) for x, y in zip(a.K, b.K))


def sweep_horizons(blocks: HankelBlocks | None, predictors: PredictorFamily, spec: GameSpec,
                   T_range: Sequence[int], eps: float = 0.01, jobs: int = 1) -> SweepResult:
    """First-stage gains for every ``T`` in ``T_range`` and the stopping rule of the sweep.

    The predictors of the deepest certified horizon serve every smaller
    ``T``. ``T + 1`` is solved as well when the data allow it, so the last
    difference is defined whenever possible.
    """
    horizons = tuple(sorted({int(T) for T in T_range}))
    if not horizons:
        raise InvalidInput("empty horizon range")
    if horizons[0] < 1 or horizons[-1] > predictors.T:
        raise InvalidInput(f"horizons must lie in 1..{predictors.T}")
    needed = sorted(set(horizons) | {T + 1 for T in horizons if T + 1 <= predictors.T})

    def solve(T):
        return first_stage_gain(blocks, predictors, spec, T)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            gains = dict(zip(needed, pool.map(solve, needed)))
    else:
        gains = {T: solve(T) for T in needed}
    diff = np.array([_max_gain_gap(gains[T], gains[T + 1]) if T + 1 in gains else np.nan
                     for T in horizons])
    converged_at = next((T for T, d in zip(horizons, diff) if d <= eps), None)
    settled_at = None
    for T, d in reversed(list(zip(horizons, diff))):
        if np.isnan(d):
            continue
        if d > eps:
            break
        settled_at = T
    return SweepResult(horizons, gains, diff, eps, converged_at, settled_at)


# --------------------------------------------------------------------------- closed loop


@dataclass(frozen=True)
class RecedingResult:
    """Closed-loop trajectory, per-player discounted costs and a truncation tail estimate."""

    trajectory: Trajectory
    costs: np.ndarray
    tail_bound: np.ndarray
    max_window_distance: float
    x1: np.ndarray | None = None


def _tail_bound(stage: np.ndarray, lookback: int = 10) -> float:
    """Geometric extrapolation of the remaining cost from the last stage costs."""
    last = abs(stage[-1])
    if last == 0.0:
        return 0.0
    k = min(lookback, len(stage) - 1)
    if k < 1 or stage[-1 - k] == 0.0:
        return float("inf")
    r = (last / abs(stage[-1 - k])) ** (1.0 / k)
    return last * r / (1.0 - r) if r < 1.0 else float("inf")


def run_receding_horizon(gains: Sequence[tuple[np.ndarray, np.ndarray]] | FirstStageGain,
                         closure: LtiSystem | PredictorFamily, u_ini, y_ini, spec: GameSpec,
                         M: int = 1000, feas_tol: float = 1e-8) -> RecedingResult:
    """Play ``u^i_t = K^i W_t + L^i`` for ``M`` steps on the sliding window ``W_t``.

    Players may use gains from different horizons. The loop is closed by
    the true system or, in data mode, by ``y_t = G_1 col(W_t, u_t)``; in
    data mode the window's relative distance from the feasible-window
    subspace is tracked, not corrected.

    Raises:
        InconsistentInitialData: infeasible initial window.
        Diverged: window norm above ``1e12``.
    """
    if isinstance(gains, FirstStageGain):
        gains = gains.pairs()
    if len(gains) != spec.N:
        raise InvalidInput(f"need one gain pair per player, got {len(gains)}")
    if M < 1:
        raise InvalidInput(f"M must be >= 1, got {M}")
    Ks = [np.atleast_2d(np.asarray(K, dtype=float)) for K, _ in gains]
    Ls = [np.asarray(L, dtype=float).reshape(-1) for _, L in gains]
    u_ini = np.asarray(u_ini, dtype=float).reshape(-1)
    y_ini = np.asarray(y_ini, dtype=float).reshape(-1)
    m, p = spec.m, spec.p
    T_ini = u_ini.size // m
    lay = window_layout(T_ini, m, p)
    if u_ini.size != T_ini * m or y_ini.size != T_ini * p or any(K.shape[1] != lay.total for K in Ks):
        raise InvalidInput("gain width and initial window do not match")
    u_part = lay.indices([f"u[{k}]" for k in range(-T_ini + 1, 1)])
    y_part = lay.indices([f"y[{k}]" for k in range(-T_ini + 1, 1)])
    W = np.concatenate([u_ini, y_ini])

    x = x1 = None
    G1 = None
    if isinstance(closure, LtiSystem):
        x = match_initial_state(closure, u_ini, y_ini, tol=feas_tol)
        x1 = x.copy()
    elif isinstance(closure, PredictorFamily):
        G1 = closure.G[0]
        if closure.T_ini != T_ini:
            raise InvalidInput("predictors use a different window length")
    else:
        raise InvalidInput("closure must be an LtiSystem or a PredictorFamily")

    def distance(w):
        return closure.window_distance(w) / max(float(np.linalg.norm(w)), 1.0)

    max_dist = 0.0
    if G1 is not None:
        max_dist = distance(W)
        if max_dist > feas_tol:
            raise InconsistentInitialData("initial window is outside the data's behavior", max_dist)
    us = np.empty((M, m))
    ys = np.empty((M, p))
    stage = np.zeros((spec.N, M))
    for t in range(1, M + 1):
        u = np.concatenate([K @ W + L for K, L in zip(Ks, Ls)])
        if x is not None:
            y = closure.C @ x + closure.D @ u
            x = closure.A @ x + closure.B @ u
        else:
            y = G1 @ np.concatenate([W, u])
        us[t - 1], ys[t - 1] = u, y
        for i in range(spec.N):
            stage[i, t - 1] = stage_cost(spec, i, y, u, t)
        W_u = np.concatenate([W[u_part][m:], u])
        W_y = np.concatenate([W[y_part][p:], y])
        W = np.concatenate([W_u, W_y])
        norm = float(np.linalg.norm(W))
        if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
            raise Diverged(t, norm)
        if G1 is not None:
            max_dist = max(max_dist, distance(W))
    tail = np.array([_tail_bound(stage[i]) for i in range(spec.N)])
    return RecedingResult(Trajectory(us, ys), stage.sum(axis=1), tail, max_dist, x1)


def evaluate_costs(sweep: SweepResult, closure, u_ini, y_ini, spec: GameSpec, M: int = 1000,
                   oracle_costs=None, jobs: int = 1) -> SweepResult:
    """Receding-horizon cost of every swept ``T``; returns an updated copy.

    Horizons whose closed loop diverges get ``nan`` costs and are listed
    under ``extras["diverged"]``.
    """
    diverged = []

    def run(T):
        try:
            return run_receding_horizon(sweep.gains[T], closure, u_ini, y_ini, spec, M).costs
        except Diverged as exc:
            diverged.append((T, exc.t))
            return np.full(spec.N, np.nan)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            costs = list(pool.map(run, sweep.horizons))
    else:
        costs = [run(T) for T in sweep.horizons]
    oracle = None if oracle_costs is None else np.asarray(oracle_costs, dtype=float)
    extras = dict(sweep.extras, diverged=sorted(diverged))
    return replace(sweep, costs=np.array(costs), oracle_costs=oracle, extras=extras)


@dataclass(frozen=True)
class ConvergenceReport:
    """Cost gaps against gain gaps, with the largest swept ``T`` standing in for the limit gain.

    ``gain_gap`` measures the feedback matrices only; ``offset_gap`` the
    affine terms, which dominate the cost gap under nonzero references.
    ``ratio`` divides the cost gap by the larger of the two.
    """

    horizons: tuple[int, ...]
    gain_gap: np.ndarray
    offset_gap: np.ndarray
    cost_gap: np.ndarray
    ratio: np.ndarray

    def rows(self) -> list[dict]:
        out = []
        for k, T in enumerate(self.horizons):
            for i in range(self.cost_gap.shape[1]):
                out.append({"T": T, "player": i + 1, "gain_gap": float(self.gain_gap[k]),
                            "offset_gap": float(self.offset_gap[k]),
                            "cost_gap": float(self.cost_gap[k, i]),
                            "ratio": float(self.ratio[k, i])})
        return out


def convergence_report(sweep: SweepResult, oracle_costs=None) -> ConvergenceReport:
    """Tabulate ``|J~^i(T) - J^i|`` next to ``max_i ||K^i_1(T) - K^i_1(T_max)||_2``.

    Diagnostics only; nothing is judged.
    """
    if sweep.costs is None:
        raise InvalidInput("sweep has no receding-horizon costs; run evaluate_costs first")
    oracle = sweep.oracle_costs if oracle_costs is None else np.asarray(oracle_costs, dtype=float)
    if oracle is None:
        raise InvalidInput("oracle costs are required")
    ref = sweep.gains[sweep.horizons[-1]]
    gain_gap = np.array([_max_gain_gap(sweep.gains[T], ref) for T in sweep.horizons])
    offset_gap = np.array([max(float(np.linalg.norm(a - b)) for a, b in zip(sweep.gains[T].L, ref.L))
                           for T in sweep.horizons])
    cost_gap = np.abs(sweep.costs - oracle[None, :])
    gap = np.maximum(gain_gap, offset_gap)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(gap > 0, cost_gap / gap, np.nan)
    return ConvergenceReport(sweep.horizons, gain_gap, offset_gap, cost_gap, ratio)
