"""Finite-horizon feedback Nash equilibrium from offline input/output data.

Strategies are affine in the stacked history
``U_{t-1} = col(u_ini, y_ini, u_1, ..., u_{t-1})``:
``u^i_t = K^i_t U_{t-1} + L^i_t``, and player ``i``'s cost-to-go from
stage ``t`` is ``0.5 U' P^i_t U + (S^i_t)' U + w^i_t``.

The stage machinery below is written for a generic coordinate vector
``z = col(h, u_t)`` (history ``h`` followed by the current input) with an
output map ``y = G z``. The data-driven solver uses ``z = U_t`` and
``G = G_t``; the known-dynamics oracle in :mod:`gamekit.fne_known` uses
``z = col(x_t, u_t)`` and ``G = [C D]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .behavior import BehaviorBasis, HankelBlocks, PredictorFamily
from .errors import (InconsistentInitialData, InvalidInput, SingularMatrix,
                     SingularStageMatrix)
from .game import GameSpec, total_cost
from .lti import LtiSystem, Trajectory, match_initial_state
from .numerics import (DEFAULT_RCOND, BlockLayout, player_layout, solve_square,
                       symmetrize)


@dataclass(frozen=True)
class StageSystem:
    """Stacked first-order conditions ``Htilde K = gtilde``, ``Htilde L = gtilde_prime``."""

    Htilde: np.ndarray
    gtilde: np.ndarray
    gtilde_prime: np.ndarray
    partition: tuple[int, ...]

    def solve(self, rcond_min: float = DEFAULT_RCOND):
        """Return ``(K, L, rcond)`` for the stacked gains."""
        rhs = np.hstack([self.gtilde, self.gtilde_prime[:, None]])
        X, rc = solve_square(self.Htilde, rhs, rcond_min)
        return X[:, :-1], X[:, -1], rc


def stage_layout(z_dim: int, m: int) -> BlockLayout:
    """``z = col(history, u_t)`` with the current input in the last ``m`` slots."""
    return BlockLayout.of(("history", z_dim - m), ("u_t", m))


def _player_rows(layout: BlockLayout, partition) -> list[np.ndarray]:
    start = layout.span("u_t")[0]
    players = player_layout(partition)
    return [start + np.arange(*players.span(f"player{i}")) for i in range(len(partition))]


def _zero_or(x, shape):
    return np.zeros(shape) if x is None else x


def assemble_stage(G_t, P_next, S_next, spec: GameSpec, t: int) -> StageSystem:
    """Build ``Htilde_t``, ``gtilde_t`` and ``gtilde'_t``.

    Args:
        G_t: ``p x dim(z)`` output map; the current input is the last ``m`` columns of ``z``.
        P_next, S_next: per-player continuation values in ``z`` coordinates
            (``None`` or a ``None`` entry means zero, e.g. at the final stage).
        spec: cost data; ``l^i_t`` enters ``gtilde'``.
        t: 1-based stage, used for the references.
    """
    G = np.asarray(G_t, dtype=float)
    m = spec.m
    if G.ndim != 2 or G.shape[0] != spec.p or G.shape[1] <= m:
        raise InvalidInput(f"G_t must be {spec.p} x (history + {m}), got {G.shape}")
    nz = G.shape[1]
    lay = stage_layout(nz, m)
    hist = lay.indices(["history"])
    cur = lay.indices(["u_t"])
    rows = _player_rows(lay, spec.partition)
    P_next = P_next if P_next is not None else [None] * spec.N
    S_next = S_next if S_next is not None else [None] * spec.N

    H = np.zeros((m, m))
    g = np.zeros((m, hist.size))
    gp = np.zeros(m)
    players = player_layout(spec.partition)
    for i in range(spec.N):
        r = rows[i]
        out = players.slice(f"player{i}")
        P = _zero_or(P_next[i], (nz, nz))
        S = _zero_or(S_next[i], (nz,))
        if P.shape != (nz, nz) or S.shape != (nz,):
            raise InvalidInput(f"continuation values of player {i + 1} do not match dim(z)={nz}")
        W = G.T @ spec.Q[i] @ G + spec.deltas[i] * P
        H[out] = W[np.ix_(r, cur)]
        H[out, out] += spec.R[i][i]
        g[out] = -W[np.ix_(r, hist)]
        gp[out] = (G.T @ spec.Q[i])[r] @ spec.reference(i, t) - spec.deltas[i] * S[r]
    return StageSystem(H, g, gp, spec.partition)


def propagate_values(G_t, K, L, P_next, S_next, w_next, spec: GameSpec, t: int):
    """Backward value update for every player given the stage-``t`` gains.

    Returns lists ``(P, S, w)`` over the history coordinates; ``P`` is symmetrized.
    """
    G = np.asarray(G_t, dtype=float)
    nz = G.shape[1]
    nh = nz - spec.m
    KK = np.vstack([np.eye(nh), K])
    LL = np.concatenate([np.zeros(nh), L])
    GK = G @ KK
    GL = G @ LL
    players = player_layout(spec.partition)
    Ks = [K[players.slice(f"player{j}")] for j in range(spec.N)]
    Ls = [L[players.slice(f"player{j}")] for j in range(spec.N)]
    P_next = P_next if P_next is not None else [None] * spec.N
    S_next = S_next if S_next is not None else [None] * spec.N
    w_next = w_next if w_next is not None else [0.0] * spec.N
    Ps, Ss, ws = [], [], []
    for i in range(spec.N):
        d = spec.deltas[i]
        Q = spec.Q[i]
        e = GL - spec.reference(i, t)
        P = GK.T @ Q @ GK
        S = GK.T @ Q @ e
        w = 0.5 * e @ Q @ e
        for j in range(spec.N):
            Rij = spec.R[i][j]
            P = P + Ks[j].T @ Rij @ Ks[j]
            S = S + Ks[j].T @ Rij @ Ls[j]
            w = w + 0.5 * Ls[j] @ Rij @ Ls[j]
        if P_next[i] is not None:
            Pn = P_next[i]
            P = P + d * KK.T @ Pn @ KK
            S = S + d * KK.T @ Pn @ LL
            w = w + 0.5 * d * LL @ Pn @ LL
        if S_next[i] is not None:
            S = S + d * KK.T @ S_next[i]
            w = w + d * LL @ S_next[i]
        w = w + d * w_next[i]
        Ps.append(symmetrize(P))
        Ss.append(S)
        ws.append(float(w))
    return Ps, Ss, ws


@dataclass(frozen=True)
class StageSolution:
    """Equilibrium data of one stage; value fields may be dropped to save memory."""

    t: int
    K: tuple[np.ndarray, ...]
    L: tuple[np.ndarray, ...]
    rcond: float
    layout: BlockLayout
    P: tuple[np.ndarray, ...] | None = None
    S: tuple[np.ndarray, ...] | None = None
    w: tuple[float, ...] | None = None

    @property
    def K_stacked(self) -> np.ndarray:
        return np.vstack(self.K)

    @property
    def L_stacked(self) -> np.ndarray:
        return np.concatenate(self.L)


@dataclass(frozen=True)
class FneSolution:
    """Stage-indexed equilibrium ``{K^i_t, L^i_t, P^i_t, S^i_t, w^i_t}``; ``stages[0]`` is ``t = 1``."""

    stages: tuple[StageSolution, ...]
    T_ini: int
    m: int
    p: int
    partition: tuple[int, ...]

    @property
    def T(self) -> int:
        return len(self.stages)

    @property
    def N(self) -> int:
        return len(self.partition)

    def stage(self, t: int) -> StageSolution:
        if not 1 <= t <= self.T:
            raise IndexError(f"stage {t} outside 1..{self.T}")
        return self.stages[t - 1]

    def K(self, i: int, t: int) -> np.ndarray:
        return self.stage(t).K[i]

    def L(self, i: int, t: int) -> np.ndarray:
        return self.stage(t).L[i]

    def has_values(self, t: int) -> bool:
        return self.stage(t).P is not None

    @property
    def rconds(self) -> np.ndarray:
        return np.array([st.rcond for st in self.stages])

    def window_dim(self) -> int:
        return self.T_ini * (self.m + self.p)


def solve_finite_fne(blocks: HankelBlocks | None, predictors: PredictorFamily, spec: GameSpec,
                     T: int | None = None, *, keep_values: bool = False,
                     rcond_min: float = DEFAULT_RCOND) -> FneSolution:
    """Backward recursion for the ``T``-stage equilibrium from data predictors.

    ``T`` may be smaller than the predictor family's horizon: ``G_1..G_T``
    do not depend on which certified depth produced them.

    With ``keep_values=False`` only stage 1 keeps ``P, S, w``.

    Raises:
        SingularStageMatrix: when ``Htilde_t`` has reciprocal condition below
            ``rcond_min``; ``partial`` carries the stages already solved.
    """
    T = predictors.T if T is None else T
    if not 1 <= T <= predictors.T:
        raise InvalidInput(f"T={T} outside the predictor horizon 1..{predictors.T}")
    if spec.p != predictors.p or spec.m != predictors.m:
        raise InvalidInput("game dimensions do not match the data")
    if tuple(spec.partition) != tuple(predictors.partition) and len(predictors.partition) > 1:
        raise InvalidInput("player partition differs from the data's partition")
    if blocks is not None and (blocks.T_ini != predictors.T_ini or blocks.T < T):
        raise InvalidInput("Hankel blocks and predictors disagree")

    P_next = S_next = w_next = None
    solved: list[StageSolution] = []
    for t in range(T, 0, -1):
        G = predictors.G[t - 1]
        system = assemble_stage(G, P_next, S_next, spec, t)
        try:
            K, L, rc = system.solve(rcond_min)
        except SingularMatrix as exc:
            raise SingularStageMatrix(t, exc.rcond, partial=reversed(solved)) from None
        Ps, Ss, ws = propagate_values(G, K, L, P_next, S_next, w_next, spec, t)
        players = player_layout(spec.partition)
        keep = keep_values or t == 1
        solved.append(StageSolution(
            t=t,
            K=tuple(K[players.slice(f"player{i}")] for i in range(spec.N)),
            L=tuple(L[players.slice(f"player{i}")] for i in range(spec.N)),
            rcond=rc,
            layout=BlockLayout(predictors.layouts[t - 1].segments[:-1]),
            P=tuple(Ps) if keep else None,
            S=tuple(Ss) if keep else None,
            w=tuple(ws) if keep else None,
        ))
        P_next, S_next, w_next = Ps, Ss, ws
    return FneSolution(stages=tuple(reversed(solved)), T_ini=predictors.T_ini,
                       m=predictors.m, p=predictors.p, partition=tuple(spec.partition))


def value_function(sol: FneSolution, U0) -> np.ndarray:
    """Per-player ``0.5 U0' P_1 U0 + S_1' U0 + w_1``."""
    st = sol.stage(1)
    if st.P is None:
        raise InvalidInput("solution was computed without stage-1 values")
    U0 = np.asarray(U0, dtype=float).reshape(-1)
    if U0.shape != (sol.window_dim(),):
        raise InvalidInput(f"U0 must have length {sol.window_dim()}, got {U0.shape}")
    return np.array([0.5 * U0 @ P @ U0 + S @ U0 + w for P, S, w in zip(st.P, st.S, st.w)])


# --------------------------------------------------------------------------- verification


@dataclass
class ResidualReport:
    """Scaled max-norm residuals per equation family; ``entries`` has one row per check."""

    tol: float
    entries: list[dict] = field(default_factory=list)

    def add(self, kind: str, t: int, i: int, value: float, j: int | None = None):
        self.entries.append({"kind": kind, "t": t, "player": i + 1, "j": j, "value": float(value)})

    def max_by_kind(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for e in self.entries:
            out[e["kind"]] = max(out.get(e["kind"], 0.0), e["value"])
        return out

    @property
    def worst(self) -> float:
        return max((e["value"] for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


def _maxabs(M) -> float:
    M = np.asarray(M)
    return float(np.max(np.abs(M))) if M.size else 0.0


def _scaled(resid, *terms) -> float:
    scale = sum(_maxabs(x) for x in terms)
    r = _maxabs(resid)
    return r / scale if scale > 0 else r


def verify_solution_residuals(sol: FneSolution, predictors: PredictorFamily,
                              basis: BehaviorBasis, spec: GameSpec,
                              tol: float = 1e-8) -> ResidualReport:
    """Residuals of the coupled equilibrium equations for a stored solution.

    Checks the stationarity conditions on the initial-window block
    (restricted to the behavior basis), on every ``u_j`` block with
    ``j < t``, the offset condition, and the recomputation of ``P, S, w``.
    """
    if spec.p != sol.p or spec.m != sol.m:
        raise InvalidInput("solution and game dimensions differ")
    report = ResidualReport(tol)
    Bcols = basis.columns
    for t in range(sol.T, 0, -1):
        st = sol.stage(t)
        if st.P is None:
            raise InvalidInput(f"stage {t} has no stored values; solve with keep_values=True")
        G = predictors.G[t - 1]
        nz = G.shape[1]
        lay_h = st.layout
        rows = _player_rows(stage_layout(nz, spec.m), spec.partition)
        K = st.K_stacked
        L = st.L_stacked
        KK = np.vstack([np.eye(nz - spec.m), K])
        LL = np.concatenate([np.zeros(nz - spec.m), L])
        nxt = sol.stage(t + 1) if t < sol.T else None
        ini = lay_h.indices(["u_ini", "y_ini"])
        for i in range(spec.N):
            d = spec.deltas[i]
            Gi = G[:, rows[i]]
            Pn = nxt.P[i] if nxt is not None else np.zeros((nz, nz))
            Sn = nxt.S[i] if nxt is not None else np.zeros(nz)
            a = Gi.T @ spec.Q[i] @ G @ KK
            b = spec.R[i][i] @ st.K[i]
            c = d * Pn[rows[i]] @ KK
            E = a + b + c
            report.add("1-1a", t, i, _scaled(E[:, ini] @ Bcols, a[:, ini] @ Bcols,
                                             b[:, ini] @ Bcols, c[:, ini] @ Bcols))
            for j in range(1, t):
                cols = lay_h.indices([f"u_{j}"])
                report.add("1-1b", t, i, _scaled(E[:, cols], a[:, cols], b[:, cols], c[:, cols]), j=j)
            lt = spec.reference(i, t)
            a2 = Gi.T @ spec.Q[i] @ (G @ LL - lt)
            b2 = spec.R[i][i] @ st.L[i]
            c2 = d * Pn[rows[i]] @ LL
            d2 = d * Sn[rows[i]]
            report.add("1-2", t, i, _scaled(a2 + b2 + c2 + d2, a2, b2, c2, d2))
        Pn_all = nxt.P if nxt is not None else None
        Sn_all = nxt.S if nxt is not None else None
        wn_all = nxt.w if nxt is not None else None
        Ps, Ss, ws = propagate_values(G, K, L, Pn_all, Sn_all, wn_all, spec, t)
        for i in range(spec.N):
            report.add("1-3", t, i, _scaled(st.P[i] - Ps[i], Ps[i]))
            report.add("1-4", t, i, _scaled(st.S[i] - Ss[i], Ss[i]))
            report.add("1-5", t, i, _scaled(st.w[i] - ws[i], ws[i]))
    return report


# --------------------------------------------------------------------------- closed loop


@dataclass(frozen=True)
class Rollout:
    trajectory: Trajectory
    costs: np.ndarray
    x1: np.ndarray | None = None


def _check_window(predictors: PredictorFamily, window, tol):
    dist = predictors.window_distance(window)
    rel = dist / max(float(np.linalg.norm(window)), 1.0)
    if rel > tol:
        raise InconsistentInitialData("initial window is outside the data's behavior", rel)


def play(policy, closure, u_ini, y_ini, T: int, m: int, p: int,
         x1_tol: float = 1e-8):
    """Generic closed loop: ``policy(t, U_{t-1}) -> u_t`` for ``t = 1..T``.

    ``closure`` is an :class:`LtiSystem` (outputs simulated from the matched
    state) or a :class:`PredictorFamily` (``y_t = G_t U_t``).
    Returns ``(trajectory, x1 or None)``.
    """
    u_ini = np.asarray(u_ini, dtype=float).reshape(-1)
    y_ini = np.asarray(y_ini, dtype=float).reshape(-1)
    window = np.concatenate([u_ini, y_ini])
    if isinstance(closure, LtiSystem):
        x = match_initial_state(closure, u_ini, y_ini, tol=x1_tol)
        x1 = x.copy()
    elif isinstance(closure, PredictorFamily):
        if T > closure.T:
            raise InvalidInput(f"predictors cover {closure.T} stages, asked for {T}")
        _check_window(closure, window, x1_tol)
        x = x1 = None
    else:
        raise InvalidInput("closure must be an LtiSystem or a PredictorFamily")
    U = window
    us = np.empty((T, m))
    ys = np.empty((T, p))
    for t in range(1, T + 1):
        u = np.asarray(policy(t, U), dtype=float).reshape(-1)
        U_next = np.concatenate([U, u])
        if x is not None:
            ys[t - 1] = closure.C @ x + closure.D @ u
            x = closure.A @ x + closure.B @ u
        else:
            ys[t - 1] = closure.G[t - 1] @ U_next
        us[t - 1] = u
        U = U_next
    return Trajectory(us, ys), x1


def equilibrium_policy(sol: FneSolution):
    def policy(t, U):
        st = sol.stage(t)
        return st.K_stacked @ U + st.L_stacked
    return policy


def rollout_fne(sol: FneSolution, closure, u_ini, y_ini, spec: GameSpec,
                T: int | None = None) -> Rollout:
    """Play the affine equilibrium strategies and report each player's cost."""
    T = sol.T if T is None else T
    traj, x1 = play(equilibrium_policy(sol), closure, u_ini, y_ini, T, sol.m, sol.p)
    costs = np.array([total_cost(spec, i, traj, T) for i in range(spec.N)])
    return Rollout(traj, costs, x1)


@dataclass(frozen=True)
class BestResponseReport:
    margins: np.ndarray
    players: np.ndarray
    stages: np.ndarray
    scales: np.ndarray
    tol: float

    @property
    def worst_margin(self) -> float:
        return float(self.margins.min()) if self.margins.size else 0.0

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tol

    @property
    def improving_trials(self) -> int:
        return int(np.sum(self.margins < -self.tol))


def best_response_check(sol: FneSolution, sys: LtiSystem, spec: GameSpec, u_ini, y_ini,
                        trials: int = 100, seed: int = 0,
                        scales: Sequence[float] = (1e-2, 1e-1, 1.0),
                        player: int | None = None, tol: float = 1e-9) -> BestResponseReport:
    """Random unilateral deviations evaluated on the true system.

    Each trial picks a player (or uses ``player``), a stage ``s`` and a
    scale; stages before ``s`` are played with random inputs shared by
    both runs, and from ``s`` on the deviator adds a random affine term to
    its equilibrium strategy. The margin is deviator cost minus
    equilibrium cost over the full horizon.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    players = player_layout(spec.partition)
    margins, who, when, how = [], [], [], []
    for _ in range(trials):
        i = int(rng.integers(spec.N)) if player is None else player
        s = int(rng.integers(1, sol.T + 1))
        scale = float(scales[int(rng.integers(len(scales)))])
        prefix = rng.standard_normal((s - 1, sol.m))
        sl = players.slice(f"player{i}")
        dK = {t: scale * rng.standard_normal(sol.K(i, t).shape) for t in range(s, sol.T + 1)}
        dL = {t: scale * rng.standard_normal(sol.L(i, t).shape) for t in range(s, sol.T + 1)}
        eq = equilibrium_policy(sol)

        def base(t, U, _prefix=prefix, _s=s, _eq=eq):
            return _prefix[t - 1] if t < _s else _eq(t, U)

        def deviant(t, U, _base=base, _s=s, _sl=sl, _dK=dK, _dL=dL):
            u = np.array(_base(t, U), dtype=float)
            if t >= _s:
                u[_sl] = u[_sl] + _dK[t] @ U + _dL[t]
            return u

        tr_eq, _ = play(base, sys, u_ini, y_ini, sol.T, sol.m, sol.p)
        tr_dev, _ = play(deviant, sys, u_ini, y_ini, sol.T, sol.m, sol.p)
        margins.append(total_cost(spec, i, tr_dev) - total_cost(spec, i, tr_eq))
        who.append(i)
        when.append(s)
        how.append(scale)
    return BestResponseReport(np.array(margins), np.array(who), np.array(when),
                              np.array(how), tol)
