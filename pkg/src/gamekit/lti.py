"""Known input/output/state dynamics: simulation, structure checks, data generation.

Conventions: time series are arrays with one row per stage. Stacked
initial windows ``u_ini``/``y_ini`` are flat vectors ordered oldest-first,
``col(u_{-T_ini+1}, ..., u_0)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InconsistentInitialData, InvalidInput, NotObservable
from .numerics import as_matrix, numerical_rank, player_layout, solve_square


@dataclass(frozen=True)
class LtiSystem:
    """``x_{t+1} = A x_t + B u_t``, ``y_t = C x_t + D u_t`` with player-partitioned inputs."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    partition: tuple[int, ...] = field(default=())

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        D = as_matrix(self.D, "D")
        n = A.shape[0]
        if A.shape != (n, n):
            raise InvalidInput(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise InvalidInput(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise InvalidInput(f"C has {C.shape[1]} columns, expected {n}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise InvalidInput(f"D must be {(C.shape[0], B.shape[1])}, got {D.shape}")
        part = tuple(int(w) for w in self.partition) or (B.shape[1],)
        if any(w < 1 for w in part) or sum(part) != B.shape[1]:
            raise InvalidInput(f"partition {part} does not split m={B.shape[1]}")
        for name, val in zip("ABCD", (A, B, C, D)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "partition", part)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def N(self) -> int:
        return len(self.partition)

    def B_player(self, i: int) -> np.ndarray:
        return self.B[:, player_layout(self.partition).slice(f"player{i}")]

    def D_player(self, i: int) -> np.ndarray:
        return self.D[:, player_layout(self.partition).slice(f"player{i}")]


@dataclass(frozen=True)
class Trajectory:
    """Input/output samples, ``inputs`` is ``(len, m)`` and ``outputs`` is ``(len, p)``."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.outputs, dtype=float)
        if u.ndim == 1:
            u = u.reshape(-1, 1)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if u.ndim != 2 or y.ndim != 2:
            raise InvalidInput("inputs and outputs must be 2-D time series")
        if len(u) != len(y) or len(u) < 1:
            raise InvalidInput(f"inputs ({len(u)}) and outputs ({len(y)}) must have equal length >= 1")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise InvalidInput("trajectory has non-finite entries")
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "outputs", y)

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def p(self) -> int:
        return self.outputs.shape[1]


def simulate(sys: LtiSystem, x1, u_seq):
    """Roll the system forward from ``x1``.

    Returns:
        ``(states, trajectory)`` where ``states`` has ``len(u_seq) + 1`` rows.
    """
    x = np.asarray(x1, dtype=float).reshape(-1)
    if x.shape != (sys.n,):
        raise InvalidInput(f"x1 must have length {sys.n}, got {x.shape}")
    u = np.asarray(u_seq, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, sys.m) if sys.m > 1 else u.reshape(-1, 1)
    if u.ndim != 2 or u.shape[1] != sys.m:
        raise InvalidInput(f"inputs must be (len, {sys.m}), got {u.shape}")
    states = np.empty((len(u) + 1, sys.n))
    outputs = np.empty((len(u), sys.p))
    states[0] = x
    for k, uk in enumerate(u):
        outputs[k] = sys.C @ states[k] + sys.D @ uk
        states[k + 1] = sys.A @ states[k] + sys.B @ uk
    return states, Trajectory(u, outputs)


def observability_matrix(sys: LtiSystem, steps: int) -> np.ndarray:
    blocks = []
    Ak = np.eye(sys.n)
    for _ in range(steps):
        blocks.append(sys.C @ Ak)
        Ak = sys.A @ Ak
    return np.vstack(blocks)


def forced_response_matrix(sys: LtiSystem, steps: int) -> np.ndarray:
    """Block Toeplitz map from stacked inputs to stacked outputs at zero state."""
    m, p = sys.m, sys.p
    T = np.zeros((steps * p, steps * m))
    markov = [sys.D]
    Ak = np.eye(sys.n)
    for _ in range(1, steps):
        markov.append(sys.C @ Ak @ sys.B)
        Ak = sys.A @ Ak
    for r in range(steps):
        for c in range(r + 1):
            T[r * p:(r + 1) * p, c * m:(c + 1) * m] = markov[r - c]
    return T


def controllability_matrix(sys: LtiSystem) -> np.ndarray:
    blocks = []
    AkB = sys.B
    for _ in range(sys.n):
        blocks.append(AkB)
        AkB = sys.A @ AkB
    return np.hstack(blocks)


def lag(sys: LtiSystem, tol: float | None = None) -> int:
    """Smallest ``l`` with ``col(C, CA, ..., CA^{l-1})`` of full column rank."""
    for l in range(1, sys.n + 1):
        if numerical_rank(observability_matrix(sys, l), tol) == sys.n:
            return l
    raise NotObservable(f"(A, C) is not observable: rank stays below n={sys.n}")


def is_controllable(sys: LtiSystem, tol: float | None = None) -> bool:
    return numerical_rank(controllability_matrix(sys), tol) == sys.n


def generate_offline_data(sys: LtiSystem, length: int, amplitude: float = 5.0,
                          seed: int = 0, x1=None) -> Trajectory:
    """Excite the system with i.i.d. uniform inputs on ``[-amplitude, amplitude]``.

    The generator is numpy's PCG64 seeded with ``seed``, so the same seed
    yields bit-identical data on every platform.
    """
    if length < 1:
        raise InvalidInput(f"length must be >= 1, got {length}")
    if amplitude < 0:
        raise InvalidInput(f"amplitude must be >= 0, got {amplitude}")
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.uniform(-1.0, 1.0, size=(length, sys.m)) * amplitude
    x1 = np.zeros(sys.n) if x1 is None else x1
    _, traj = simulate(sys, x1, u)
    return traj


def _split_window(sys, u_ini, y_ini):
    u = np.asarray(u_ini, dtype=float).reshape(-1)
    y = np.asarray(y_ini, dtype=float).reshape(-1)
    if u.size % sys.m or y.size % sys.p or u.size // sys.m != y.size // sys.p:
        raise InvalidInput(f"window sizes {u.size}, {y.size} do not match m={sys.m}, p={sys.p}")
    T_ini = u.size // sys.m
    if T_ini < 1:
        raise InvalidInput("empty initial window")
    return u, y, T_ini


def _advance(sys, x, u_flat, steps):
    for k in range(steps):
        x = sys.A @ x + sys.B @ u_flat[k * sys.m:(k + 1) * sys.m]
    return x


def match_initial_state(sys: LtiSystem, u_ini, y_ini, tol: float = 1e-8) -> np.ndarray:
    """Recover the state ``x_1`` reached at the end of an initial window.

    Least squares over the window's starting state using the observability
    stack and the forced response, then propagated through the window.

    Raises:
        InconsistentInitialData: when the window is not reproduced to
            relative accuracy ``tol``.
    """
    u, y, T_ini = _split_window(sys, u_ini, y_ini)
    O = observability_matrix(sys, T_ini)
    F = forced_response_matrix(sys, T_ini)
    rhs = y - F @ u
    x_start, *_ = np.linalg.lstsq(O, rhs, rcond=None)
    resid = O @ x_start - rhs
    scale = max(np.linalg.norm(y), np.linalg.norm(F @ u), np.linalg.norm(O @ x_start), 1.0)
    rel = float(np.linalg.norm(resid) / scale)
    if rel > tol:
        raise InconsistentInitialData("initial window is not a system trajectory", rel)
    return _advance(sys, x_start, u, T_ini)


def backfill_initial_window(sys: LtiSystem, x1, u_ini) -> np.ndarray:
    """Outputs ``y_ini`` of the unique window that ends in state ``x1`` under ``u_ini``.

    Needs ``A^{T_ini}`` invertible.
    """
    u = np.asarray(u_ini, dtype=float).reshape(-1)
    if u.size % sys.m:
        raise InvalidInput(f"u_ini size {u.size} is not a multiple of m={sys.m}")
    T_ini = u.size // sys.m
    x1 = np.asarray(x1, dtype=float).reshape(-1)
    forced = _advance(sys, np.zeros(sys.n), u, T_ini)
    x_start, _ = solve_square(np.linalg.matrix_power(sys.A, T_ini), x1 - forced)
    _, traj = simulate(sys, x_start, u.reshape(T_ini, sys.m))
    return traj.outputs.reshape(-1)


def sample_initial_window(sys: LtiSystem, T_ini: int, rng: np.random.Generator,
                          scale: float = 1.0):
    """Random feasible ``(u_ini, y_ini, x1)`` built by simulating forward.

    The starting state and inputs are standard normal times ``scale``; the
    realized state after the window is returned as the matched ``x1``.
    """
    x_start = scale * rng.standard_normal(sys.n)
    u = scale * rng.standard_normal((T_ini, sys.m))
    states, traj = simulate(sys, x_start, u)
    return traj.inputs.reshape(-1), traj.outputs.reshape(-1), states[-1]


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write ``t,u_1..u_m,y_1..y_p`` with one row per stage (17 significant digits)."""
    path = Path(path)
    header = ["t"] + [f"u_{k + 1}" for k in range(traj.m)] + [f"y_{k + 1}" for k in range(traj.p)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t, (uk, yk) in enumerate(zip(traj.inputs, traj.outputs), start=1):
            writer.writerow([t] + [f"{v:.17g}" for v in uk] + [f"{v:.17g}" for v in yk])


def read_trajectory_csv(path) -> Trajectory:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInput(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t":
        raise InvalidInput(f"{path}: first column must be 't'")
    u_cols = [k for k, h in enumerate(header) if h.startswith("u_")]
    y_cols = [k for k, h in enumerate(header) if h.startswith("y_")]
    if not u_cols or not y_cols:
        raise InvalidInput(f"{path}: need u_* and y_* columns")
    body = [r for r in rows[1:] if r]
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise InvalidInput(f"{path}: {exc}") from exc
    if data.size == 0:
        raise InvalidInput(f"{path}: no data rows")
    return Trajectory(data[:, u_cols], data[:, y_cols])
