"""Players' quadratic costs: weights, discounts and output references."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInput
from .lti import Trajectory
from .numerics import BlockLayout, as_matrix, player_layout

PSD_TOL = -1e-10
PD_TOL = 1e-12


def _symmetric(M: np.ndarray, what: str) -> None:
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > 1e-10 * scale:
        raise InvalidInput(f"{what} must be symmetric")


def _normalize_reference(ref, p: int, what: str) -> np.ndarray:
    if ref is None:
        return np.zeros((1, p))
    arr = np.asarray(ref, dtype=float)
    if arr.ndim == 0:
        arr = np.full((1, p), float(arr))
    elif arr.ndim == 1:
        if arr.shape[0] != p:
            raise InvalidInput(f"{what} must have length p={p}, got {arr.shape[0]}")
        arr = arr.reshape(1, p)
    if arr.ndim != 2 or arr.shape[1] != p or arr.shape[0] < 1:
        raise InvalidInput(f"{what} must be a p-vector or a (T, p) array, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{what} has non-finite entries")
    return arr


@dataclass(frozen=True)
class GameSpec:
    """Cost data of an N-player linear-quadratic game.

    Player ``i`` pays, at stage ``t``,
    ``0.5 * [(y_t - l^i_t)' Q^i (y_t - l^i_t) + sum_j (u^j_t)' R^{ij} u^j_t] * delta_i**(t-1)``.

    Args:
        partition: input widths ``(m_1, ..., m_N)``.
        Q: per-player ``p x p`` output weights (symmetric PSD).
        R: nested ``R[i][j]`` of ``m_j x m_j`` input weights; ``R[i][i]`` positive definite.
        deltas: discount factors in ``(0, 1]``.
        references: per player ``None`` (zero), a ``p``-vector (constant) or a ``(T, p)``
            array of per-stage references.
        horizon: optional default horizon ``T``.
    """

    partition: tuple[int, ...]
    Q: tuple[np.ndarray, ...]
    R: tuple[tuple[np.ndarray, ...], ...]
    deltas: tuple[float, ...]
    references: tuple[np.ndarray, ...] | None = None
    horizon: int | None = None

    def __post_init__(self):
        part = tuple(int(w) for w in self.partition)
        if not part or any(w < 1 for w in part):
            raise InvalidInput(f"partition {part} must have positive widths")
        N = len(part)
        if len(self.Q) != N or len(self.R) != N or len(self.deltas) != N:
            raise InvalidInput(f"Q, R and deltas need one entry per player (N={N})")
        Q = tuple(as_matrix(q, f"Q^{i + 1}") for i, q in enumerate(self.Q))
        p = Q[0].shape[0]
        for i, q in enumerate(Q):
            if q.shape != (p, p):
                raise InvalidInput(f"Q^{i + 1} must be {p}x{p}, got {q.shape}")
            _symmetric(q, f"Q^{i + 1}")
            if np.linalg.eigvalsh(q).min() < PSD_TOL:
                raise InvalidInput(f"Q^{i + 1} must be positive semidefinite")
        R = []
        for i, row in enumerate(self.R):
            if len(row) != N:
                raise InvalidInput(f"R[{i}] needs {N} entries")
            mats = []
            for j, r in enumerate(row):
                r = as_matrix(r, f"R^{i + 1}{j + 1}")
                if r.shape != (part[j], part[j]):
                    raise InvalidInput(f"R^{i + 1}{j + 1} must be {part[j]}x{part[j]}, got {r.shape}")
                _symmetric(r, f"R^{i + 1}{j + 1}")
                mats.append(r)
            if np.linalg.eigvalsh(mats[i]).min() <= PD_TOL:
                raise InvalidInput(f"R^{i + 1}{i + 1} must be positive definite")
            R.append(tuple(mats))
        deltas = tuple(float(d) for d in self.deltas)
        if any(not (0.0 < d <= 1.0) for d in deltas):
            raise InvalidInput(f"discounts must lie in (0, 1], got {deltas}")
        refs = self.references
        if refs is None:
            refs = (None,) * N
        if len(refs) != N:
            raise InvalidInput(f"references need one entry per player (N={N})")
        refs = tuple(_normalize_reference(r, p, f"reference of player {i + 1}")
                     for i, r in enumerate(refs))
        for arr in Q + tuple(refs) + tuple(r for row in R for r in row):
            arr.setflags(write=False)
        object.__setattr__(self, "partition", part)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", tuple(R))
        object.__setattr__(self, "deltas", deltas)
        object.__setattr__(self, "references", refs)

    @property
    def N(self) -> int:
        return len(self.partition)

    @property
    def m(self) -> int:
        return sum(self.partition)

    @property
    def p(self) -> int:
        return self.Q[0].shape[0]

    @property
    def players(self) -> BlockLayout:
        return player_layout(self.partition)

    def input_slice(self, i: int) -> slice:
        return self.players.slice(f"player{i}")

    def reference(self, i: int, t: int) -> np.ndarray:
        """``l^i_t`` for 1-based stage ``t``; a constant reference repeats."""
        ref = self.references[i]
        if len(ref) == 1:
            return ref[0]
        if not 1 <= t <= len(ref):
            raise InvalidInput(f"player {i + 1} has references for t=1..{len(ref)}, asked t={t}")
        return ref[t - 1]

    def references_constant(self) -> bool:
        return all(len(r) == 1 or np.all(r == r[0]) for r in self.references)

    def references_zero(self) -> bool:
        return all(not np.any(r) for r in self.references)

    def with_references(self, references) -> "GameSpec":
        return GameSpec(self.partition, self.Q, self.R, self.deltas, references, self.horizon)

    def cost_kernel(self, i: int) -> np.ndarray:
        """Block-diagonal ``blkdiag(R^{i1}, ..., R^{iN})`` acting on the stacked input."""
        from scipy.linalg import block_diag
        return block_diag(*self.R[i])


def stage_cost(spec: GameSpec, i: int, y, u, t: int) -> float:
    """Discounted stage cost of player ``i`` (0-based) at 1-based stage ``t``."""
    if t < 1:
        raise InvalidInput(f"stages start at 1, got t={t}")
    y = np.asarray(y, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if y.shape != (spec.p,) or u.shape != (spec.m,):
        raise InvalidInput(f"expected y in R^{spec.p}, u in R^{spec.m}; got {y.shape}, {u.shape}")
    e = y - spec.reference(i, t)
    val = e @ spec.Q[i] @ e
    for j in range(spec.N):
        uj = u[spec.input_slice(j)]
        val += uj @ spec.R[i][j] @ uj
    return 0.5 * float(val) * spec.deltas[i] ** (t - 1)


def stage_costs(spec: GameSpec, i: int, traj: Trajectory, horizon: int | None = None) -> np.ndarray:
    """Vector of discounted stage costs for ``t = 1..horizon``."""
    horizon = len(traj) if horizon is None else horizon
    if horizon > len(traj):
        raise InvalidInput(f"trajectory has {len(traj)} stages, horizon is {horizon}")
    return np.array([stage_cost(spec, i, traj.outputs[k], traj.inputs[k], k + 1)
                     for k in range(horizon)])


def total_cost(spec: GameSpec, i: int, traj: Trajectory, horizon: int | None = None) -> float:
    return float(np.sum(stage_costs(spec, i, traj, horizon)))


def make_spec(partition: Sequence[int], Q, R, deltas, references=None, horizon=None) -> GameSpec:
    """Build a :class:`GameSpec`, accepting scalars for 1x1 weights."""
    return GameSpec(tuple(partition), tuple(Q), tuple(tuple(row) for row in R),
                    tuple(deltas), None if references is None else tuple(references), horizon)
