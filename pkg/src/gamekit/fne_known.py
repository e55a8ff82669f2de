"""Known-dynamics oracle: state-feedback equilibrium, equivalence checks and stationary limits.

The state-space stage solve reuses :func:`gamekit.fne_dd.assemble_stage`
on ``z = col(x_t, u_t)`` with ``y_t = [C D] z`` and pulls the next-stage
value back through ``x_{t+1} = [A B] z``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .behavior import BehaviorBasis
from .errors import InvalidInput, NoConvergence, SingularMatrix, SingularStageMatrix
from .fne_dd import FneSolution, assemble_stage, propagate_values
from .game import GameSpec, stage_cost
from .lti import LtiSystem, match_initial_state
from .numerics import DEFAULT_RCOND, player_layout, spectral_norm


@dataclass(frozen=True)
class KnownStage:
    """Stage-``t`` gains ``u^i = Kbar^i x + Lbar^i`` and value ``0.5 x'Pbar x + sbar'x + cbar``."""

    t: int
    Kbar: tuple[np.ndarray, ...]
    Lbar: tuple[np.ndarray, ...]
    Pbar: tuple[np.ndarray, ...]
    sbar: tuple[np.ndarray, ...]
    cbar: tuple[float, ...]
    rcond: float

    @property
    def K_stacked(self) -> np.ndarray:
        return np.vstack(self.Kbar)

    @property
    def L_stacked(self) -> np.ndarray:
        return np.concatenate(self.Lbar)


@dataclass(frozen=True)
class KnownFneSolution:
    stages: tuple[KnownStage, ...]
    partition: tuple[int, ...]

    @property
    def T(self) -> int:
        return len(self.stages)

    def stage(self, t: int) -> KnownStage:
        if not 1 <= t <= self.T:
            raise IndexError(f"stage {t} outside 1..{self.T}")
        return self.stages[t - 1]

    def action(self, t: int, x) -> np.ndarray:
        st = self.stage(t)
        return st.K_stacked @ np.asarray(x, dtype=float) + st.L_stacked

    def value(self, x1) -> np.ndarray:
        st = self.stage(1)
        x1 = np.asarray(x1, dtype=float)
        return np.array([0.5 * x1 @ P @ x1 + s @ x1 + c
                         for P, s, c in zip(st.Pbar, st.sbar, st.cbar)])


def _check_dims(sys: LtiSystem, spec: GameSpec):
    if sys.m != spec.m or sys.p != spec.p:
        raise InvalidInput(f"system (m={sys.m}, p={sys.p}) and game (m={spec.m}, p={spec.p}) differ")
    if sys.partition and tuple(sys.partition) != tuple(spec.partition):
        raise InvalidInput("system and game use different player partitions")


def _known_stage(sys: LtiSystem, spec: GameSpec, t: int, nxt, rcond_min: float):
    """One backward step; ``nxt`` is ``(Pbar, sbar, cbar)`` lists or ``None``."""
    G = np.hstack([sys.C, sys.D])
    Phi = np.hstack([sys.A, sys.B])
    if nxt is None:
        P_hat = S_hat = w_hat = None
    else:
        P_hat = [Phi.T @ P @ Phi for P in nxt[0]]
        S_hat = [Phi.T @ s for s in nxt[1]]
        w_hat = list(nxt[2])
    system = assemble_stage(G, P_hat, S_hat, spec, t)
    K, L, rc = system.solve(rcond_min)
    vals = propagate_values(G, K, L, P_hat, S_hat, w_hat, spec, t)
    return K, L, rc, vals


def _split(spec: GameSpec, K, L):
    players = player_layout(spec.partition)
    sl = [players.slice(f"player{i}") for i in range(spec.N)]
    return tuple(K[s] for s in sl), tuple(L[s] for s in sl)


def solve_finite_fne_known(sys: LtiSystem, spec: GameSpec, T: int,
                           rcond_min: float = DEFAULT_RCOND) -> KnownFneSolution:
    """Backward dynamic programming for the ``T``-stage state-feedback equilibrium.

    Raises:
        SingularStageMatrix: when the stacked best-response matrix is singular.
    """
    _check_dims(sys, spec)
    if T < 1:
        raise InvalidInput(f"T must be >= 1, got {T}")
    nxt = None
    out: list[KnownStage] = []
    for t in range(T, 0, -1):
        try:
            K, L, rc, (Ps, Ss, ws) = _known_stage(sys, spec, t, nxt, rcond_min)
        except SingularMatrix as exc:
            raise SingularStageMatrix(t, exc.rcond, partial=reversed(out)) from None
        Ks, Ls = _split(spec, K, L)
        out.append(KnownStage(t, Ks, Ls, tuple(Ps), tuple(Ss), tuple(ws), rc))
        nxt = (Ps, Ss, ws)
    return KnownFneSolution(tuple(reversed(out)), tuple(spec.partition))


# --------------------------------------------------------------------------- equivalence


@dataclass(frozen=True)
class CrossCheckReport:
    """Maximum deviations of the data-driven gains from their state-space images."""

    u_blocks: float
    offsets: float
    initial_window: float
    tol: float

    @property
    def worst(self) -> float:
        return max(self.u_blocks, self.offsets, self.initial_window)

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol

    def to_dict(self) -> dict:
        return {"u_blocks": self.u_blocks, "offsets": self.offsets,
                "initial_window": self.initial_window, "tol": self.tol, "pass": self.passed}


def cross_check_theorem1(dd: FneSolution, known: KnownFneSolution, sys: LtiSystem,
                         basis: BehaviorBasis, tol: float = 1e-6) -> CrossCheckReport:
    """Compare data-driven gains with the state-feedback solution.

    For every stage ``t`` and player ``i``:
    ``(K^i_t)_{:,u_k} = Kbar^i_t A^{t-k-1} B`` for ``k < t``,
    ``L^i_t = Lbar^i_t``, and on each behavior-basis column ``b``
    ``(K^i_t)_{:,ini} b = Kbar^i_t A^{t-1} x_1(b)``.
    """
    if dd.T != known.T:
        raise InvalidInput(f"horizons differ: {dd.T} vs {known.T}")
    x1s = np.column_stack([match_initial_state(sys, *basis.split(k)) for k in range(basis.dim)])
    Apow = [np.eye(sys.n)]
    for _ in range(dd.T):
        Apow.append(sys.A @ Apow[-1])
    dev_u = dev_l = dev_ini = 0.0
    for t in range(1, dd.T + 1):
        st = dd.stage(t)
        ks = known.stage(t)
        lay = st.layout
        ini = lay.indices(["u_ini", "y_ini"])
        for i in range(len(dd.partition)):
            K = st.K[i]
            Kb = ks.Kbar[i]
            for k in range(1, t):
                dev_u = max(dev_u, float(np.max(np.abs(
                    K[:, lay.slice(f"u_{k}")] - Kb @ Apow[t - k - 1] @ sys.B))))
            dev_l = max(dev_l, float(np.max(np.abs(st.L[i] - ks.Lbar[i]))))
            dev_ini = max(dev_ini, float(np.max(np.abs(
                K[:, ini] @ basis.columns - Kb @ Apow[t - 1] @ x1s))))
    return CrossCheckReport(dev_u, dev_l, dev_ini, tol)


# --------------------------------------------------------------------------- stationary limit


@dataclass(frozen=True)
class InfiniteHorizonSolution:
    """Stationary gains ``u = Kbar x + Lbar`` and their discounted costs."""

    sys: LtiSystem
    spec: GameSpec
    K: tuple[np.ndarray, ...]
    L: tuple[np.ndarray, ...]
    T_converged: int
    diffs: np.ndarray

    @property
    def K_stacked(self) -> np.ndarray:
        return np.vstack(self.K)

    @property
    def L_stacked(self) -> np.ndarray:
        return np.concatenate(self.L)

    @property
    def A_cl(self) -> np.ndarray:
        return self.sys.A + self.sys.B @ self.K_stacked

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A_cl))))

    def _augmented(self, i: int):
        """Closed loop on ``z = (x, 1)`` and the stage-cost kernel ``M_i`` with cost ``0.5 z'M z``."""
        sys, spec = self.sys, self.spec
        K, L = self.K_stacked, self.L_stacked
        n = sys.n
        F = np.zeros((n + 1, n + 1))
        F[:n, :n] = self.A_cl
        F[:n, n] = sys.B @ L
        F[n, n] = 1.0
        Cy = np.hstack([sys.C + sys.D @ K, (sys.D @ L - spec.reference(i, 1))[:, None]])
        M = Cy.T @ spec.Q[i] @ Cy
        for j in range(spec.N):
            Cu = np.hstack([self.K[j], self.L[j][:, None]])
            M = M + Cu.T @ spec.R[i][j] @ Cu
        return F, M

    def lyapunov_trusted(self, i: int) -> bool:
        """Whether the discounted closed loop contracts, so the Lyapunov value is finite."""
        d = self.spec.deltas[i]
        return d * max(self.spectral_radius(), 1.0) ** 2 < 1.0

    def cost(self, x1, steps: int = 5000) -> np.ndarray:
        """Per-player infinite-horizon cost from ``x1``.

        Solves ``P = M_i + delta_i F' P F`` on the augmented state; falls
        back to a ``steps``-long simulation when the contraction check
        fails or the solve is inaccurate.
        """
        from scipy.linalg import solve_discrete_lyapunov

        z = np.append(np.asarray(x1, dtype=float).reshape(-1), 1.0)
        out = np.empty(self.spec.N)
        sim = None
        for i in range(self.spec.N):
            F, M = self._augmented(i)
            d = self.spec.deltas[i]
            ok = self.lyapunov_trusted(i)
            if ok:
                P = solve_discrete_lyapunov(np.sqrt(d) * F.T, M)
                resid = P - M - d * F.T @ P @ F
                ok = np.all(np.isfinite(P)) and np.max(np.abs(resid)) <= 1e-9 * max(np.max(np.abs(P)), 1.0)
            if ok:
                out[i] = 0.5 * z @ P @ z
            else:
                if sim is None:
                    sim = self.simulated_cost(x1, steps)
                out[i] = sim[i]
        return out

    def simulated_cost(self, x1, steps: int = 5000) -> np.ndarray:
        """Truncated closed-loop cost over ``steps`` stages."""
        sys, spec = self.sys, self.spec
        x = np.asarray(x1, dtype=float).reshape(-1).copy()
        K, L = self.K_stacked, self.L_stacked
        total = np.zeros(spec.N)
        for t in range(1, steps + 1):
            u = K @ x + L
            y = sys.C @ x + sys.D @ u
            for i in range(spec.N):
                total[i] += stage_cost(spec, i, y, u, t)
            x = sys.A @ x + sys.B @ u
        return total


def infinite_horizon_known(sys: LtiSystem, spec: GameSpec, eps: float = 1e-10,
                           T_max: int = 1000,
                           rcond_min: float = DEFAULT_RCOND) -> InfiniteHorizonSolution:
    """Limit of the first-stage state-feedback gains as the horizon grows.

    With constant references the backward map is the same at every stage,
    so the first-stage gain of the ``T``-stage game is its ``T``-th iterate.
    Stops at the first ``T`` with ``max_i ||Kbar^i_1(T) - Kbar^i_1(T+1)||_2 <= eps``.

    Raises:
        NoConvergence: when ``T_max`` is reached first.
    """
    _check_dims(sys, spec)
    if not spec.references_constant():
        raise InvalidInput("stationary limit needs constant references")
    if not spec.references_zero():
        warnings.warn("nonzero references: the stationary limit is computed but not "
                      "covered by the convergence theory", stacklevel=2)
    if not eps >= 0:
        raise InvalidInput(f"eps must be non-negative, got {eps}")
    K, L, _, vals = _known_stage(sys, spec, 1, None, rcond_min)
    diffs = []
    for T in range(1, T_max + 1):
        K_next, L_next, _, vals = _known_stage(sys, spec, 1, vals, rcond_min)
        Ks, _ = _split(spec, K, L)
        Kn, Ln = _split(spec, K_next, L_next)
        d = max(spectral_norm(a - b) for a, b in zip(Ks, Kn))
        diffs.append(d)
        K, L = K_next, L_next
        if d <= eps:
            return InfiniteHorizonSolution(sys, spec, Kn, Ln, T, np.array(diffs))
    raise NoConvergence(T_max, diffs[-1] if diffs else float("nan"))
