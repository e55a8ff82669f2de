"""Hankel matrices, rank certification and data-built output predictors."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInput, PreconditionError, RankShortfall
from .lti import Trajectory
from .numerics import (BlockLayout, default_tol, history_layout, numerical_rank,
                       orthonormal_range, pinv)


def _as_series(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InvalidInput(f"time series must be 1-D or 2-D, got shape {arr.shape}")
    return arr


def hankel(series, L: int) -> np.ndarray:
    """Block Hankel matrix with ``L`` block rows.

    ``series`` is one time series or a list of them (rows are samples).
    Several series are concatenated horizontally; each contributes
    ``len - L + 1`` columns.

    >>> hankel([1, 2, 3, 4, 5], 2)
    array([[1., 2., 3., 4.],
           [2., 3., 4., 5.]])
    """
    if L < 1:
        raise InvalidInput(f"L must be >= 1, got {L}")
    if isinstance(series, np.ndarray) or (series and np.isscalar(series[0])):
        series = [series]
    parts = []
    width = None
    for v in series:
        arr = _as_series(v)
        if width is None:
            width = arr.shape[1]
        elif arr.shape[1] != width:
            raise InvalidInput("all series must share the sample dimension")
        if len(arr) < L:
            raise InvalidInput(f"series of length {len(arr)} is shorter than L={L}")
        cols = len(arr) - L + 1
        idx = np.arange(L)[:, None] + np.arange(cols)[None, :]
        # (L, cols, r) -> (L*r, cols) with sample components stacked inside each block row
        parts.append(arr[idx].transpose(0, 2, 1).reshape(L * width, cols))
    if not parts:
        raise InvalidInput("no series given")
    return np.hstack(parts)


def _trajectories(data) -> list[Trajectory]:
    if isinstance(data, Trajectory):
        return [data]
    data = list(data)
    if not data or not all(isinstance(tr, Trajectory) for tr in data):
        raise InvalidInput("data must be a Trajectory or a non-empty list of them")
    m, p = data[0].m, data[0].p
    if any(tr.m != m or tr.p != p for tr in data):
        raise InvalidInput("trajectories disagree on input/output dimensions")
    return data


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the rank certification at window length ``L``."""

    L: int
    rank: int
    required: int
    tol: float
    passed: bool
    columns: int
    rejected: tuple[tuple[int, str], ...] = ()

    def to_dict(self) -> dict:
        return {"L": self.L, "rank": self.rank, "required": self.required,
                "tol": self.tol, "pass": self.passed, "columns": self.columns,
                "rejected": [list(r) for r in self.rejected]}

    def as_text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"L={self.L} rank={self.rank} required={self.required} "
                f"tol={self.tol:.1e} columns={self.columns} pass={status}")


def check_assumption1(data, T_ini: int, T: int, n_hint: int,
                      tol: float | None = None) -> AssumptionReport:
    """Check ``rank H_L(W_d) = m L + n`` for ``L = T_ini + T``.

    Trajectories shorter than ``L`` are skipped and listed in ``rejected``.
    Failures are reported, never raised.
    """
    trajs = _trajectories(data)
    tol = default_tol() if tol is None else tol
    L = T_ini + T
    m = trajs[0].m
    required = m * L + n_hint
    usable = []
    rejected = []
    for k, tr in enumerate(trajs):
        if len(tr) < L:
            rejected.append((k, f"length {len(tr)} < L={L}"))
        else:
            usable.append(tr)
    if not usable:
        return AssumptionReport(L, 0, required, tol, False, 0, tuple(rejected))
    H = hankel([np.hstack([tr.inputs, tr.outputs]) for tr in usable], L)
    rank = numerical_rank(H, tol)
    return AssumptionReport(L, rank, required, tol, rank == required, H.shape[1],
                            tuple(rejected))


@dataclass(frozen=True)
class HankelBlocks:
    """Past/future partition of the input and output Hankel matrices."""

    Up: np.ndarray
    Yp: np.ndarray
    Uf: np.ndarray
    Yf: np.ndarray
    m: int
    p: int
    T_ini: int
    T: int
    partition: tuple[int, ...]

    def __post_init__(self):
        cols = {self.Up.shape[1], self.Yp.shape[1], self.Uf.shape[1], self.Yf.shape[1]}
        if len(cols) != 1 or self.Up.shape[1] < 1:
            raise InvalidInput("all four blocks need one common, positive column count")
        expected = [(self.Up, self.T_ini * self.m), (self.Yp, self.T_ini * self.p),
                    (self.Uf, self.T * self.m), (self.Yf, self.T * self.p)]
        for block, rows in expected:
            if block.shape[0] != rows:
                raise InvalidInput(f"block has {block.shape[0]} rows, expected {rows}")
        if sum(self.partition) != self.m:
            raise InvalidInput(f"partition {self.partition} does not split m={self.m}")

    @property
    def columns(self) -> int:
        return self.Up.shape[1]

    def future_inputs(self, t: int) -> np.ndarray:
        """``(U_f)_{1:t}``, the first ``t`` block rows of ``U_f``."""
        return self.Uf[: t * self.m]

    def future_output(self, t: int) -> np.ndarray:
        """``Y_{ft}``, the ``t``-th block row of ``Y_f``."""
        return self.Yf[(t - 1) * self.p: t * self.p]


def partition(data, T_ini: int, T: int, *, n_hint: int | None = None,
              player_partition: Sequence[int] | None = None, tol: float | None = None,
              unsafe: bool = False) -> HankelBlocks:
    """Split the depth-``T_ini + T`` Hankel matrices into ``U_p, Y_p, U_f, Y_f``.

    The rank certificate is enforced unless ``unsafe=True``; enforcing it
    needs the state dimension ``n_hint``.
    """
    trajs = _trajectories(data)
    if T_ini < 1 or T < 1:
        raise InvalidInput(f"T_ini and T must be >= 1, got {T_ini}, {T}")
    if not unsafe:
        if n_hint is None:
            raise PreconditionError("n_hint is required to certify the data (or pass unsafe=True)")
        report = check_assumption1(trajs, T_ini, T, n_hint, tol)
        if not report.passed:
            raise PreconditionError(f"rank certificate failed: {report.as_text()}")
    L = T_ini + T
    usable = [tr for tr in trajs if len(tr) >= L]
    if not usable:
        raise PreconditionError(f"no trajectory reaches length L={L}")
    m, p = usable[0].m, usable[0].p
    Hu = hankel([tr.inputs for tr in usable], L)
    Hy = hankel([tr.outputs for tr in usable], L)
    part = tuple(player_partition) if player_partition is not None else (m,)
    return HankelBlocks(Up=Hu[: T_ini * m], Yp=Hy[: T_ini * p],
                        Uf=Hu[T_ini * m:], Yf=Hy[T_ini * p:],
                        m=m, p=p, T_ini=T_ini, T=T, partition=part)


@dataclass(frozen=True)
class PredictorFamily:
    """Output predictors ``y_t = G_t col(u_ini, y_ini, u_1, ..., u_t)``.

    ``window_basis`` is an orthonormal basis of the column space of
    ``col(U_p, Y_p)``; it is used to measure how far a window sits from
    the set of feasible initial windows.
    """

    G: tuple[np.ndarray, ...]
    layouts: tuple[BlockLayout, ...]
    m: int
    p: int
    T_ini: int
    partition: tuple[int, ...]
    window_basis: np.ndarray = field(repr=False)

    @property
    def T(self) -> int:
        return len(self.G)

    def window_distance(self, window) -> float:
        """Euclidean distance from ``col(u_ini, y_ini)`` to the feasible-window subspace."""
        w = np.asarray(window, dtype=float).reshape(-1)
        Bw = self.window_basis
        return float(np.linalg.norm(w - Bw @ (Bw.T @ w)))

    def predict(self, t: int, U_t) -> np.ndarray:
        return self.G[t - 1] @ np.asarray(U_t, dtype=float).reshape(-1)


def predictors(blocks: HankelBlocks, tol: float | None = None) -> PredictorFamily:
    """``G_t = Y_{ft} pinv(col(U_p, Y_p, (U_f)_{1:t}))`` for ``t = 1..T``."""
    G = []
    layouts = []
    past = np.vstack([blocks.Up, blocks.Yp])
    for t in range(1, blocks.T + 1):
        M_t = np.vstack([past, blocks.future_inputs(t)])
        G.append(blocks.future_output(t) @ pinv(M_t, tol))
        layouts.append(history_layout(blocks.T_ini, blocks.m, blocks.p, t))
    return PredictorFamily(G=tuple(G), layouts=tuple(layouts), m=blocks.m, p=blocks.p,
                           T_ini=blocks.T_ini, partition=blocks.partition,
                           window_basis=orthonormal_range(past, tol))


@dataclass(frozen=True)
class BehaviorBasis:
    """Orthonormal basis of the length-``T_ini`` restricted behavior, inputs on top."""

    columns: np.ndarray
    m: int
    p: int
    T_ini: int

    @property
    def dim(self) -> int:
        return self.columns.shape[1]

    def split(self, k: int):
        """Column ``k`` as ``(u_ini, y_ini)``."""
        b = self.columns[:, k]
        cut = self.T_ini * self.m
        return b[:cut], b[cut:]


def behavior_basis(data, T_ini: int, n_hint: int, *, lag: int | None = None,
                   tol: float | None = None) -> BehaviorBasis:
    """Orthonormal basis of the column space of ``H_{T_ini}(W_d)``.

    Rows are permuted to ``col(u_ini, y_ini)`` before a column-pivoted QR
    factorization; the leading ``m T_ini + n`` columns of ``Q`` are kept.

    Raises:
        RankShortfall: when the data rank differs from ``m T_ini + n_hint``.
    """
    from scipy.linalg import qr

    trajs = _trajectories(data)
    m, p = trajs[0].m, trajs[0].p
    if lag is not None and T_ini <= lag:
        warnings.warn(
            f"T_ini={T_ini} does not exceed the lag {lag}; the basis is taken from "
            "H_T_ini directly and only its dimension is verified", stacklevel=2)
    Hu = hankel([tr.inputs for tr in trajs if len(tr) >= T_ini], T_ini)
    Hy = hankel([tr.outputs for tr in trajs if len(tr) >= T_ini], T_ini)
    H = np.vstack([Hu, Hy])
    required = m * T_ini + n_hint
    rank = numerical_rank(H, tol)
    if rank != required:
        raise RankShortfall(f"rank H_{T_ini} = {rank}, expected m*T_ini + n = {required}")
    Q, _, _ = qr(H, mode="economic", pivoting=True)
    return BehaviorBasis(columns=Q[:, :rank], m=m, p=p, T_ini=T_ini)
