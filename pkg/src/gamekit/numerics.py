"""Dense linear-algebra primitives and block-index bookkeeping.

Every extraction of a named sub-block (``u_ini``, ``y_ini``, ``u_3``, a
player's slice of ``u_t`` ...) goes through :class:`BlockLayout`; the
solvers never do raw offset arithmetic.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInput, SingularMatrix

DEFAULT_TOL = 1e-10
DEFAULT_RCOND = 1e-12


def default_tol() -> float:
    """Relative singular-value cutoff; ``GAMEKIT_TOL`` overrides it."""
    raw = os.environ.get("GAMEKIT_TOL")
    if raw is None or raw.strip() == "":
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError as exc:
        raise InvalidInput(f"GAMEKIT_TOL is not a number: {raw!r}") from exc
    if not tol > 0:
        raise InvalidInput(f"GAMEKIT_TOL must be positive, got {tol}")
    return tol


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-D float array or raise :class:`InvalidInput`."""
    arr = np.array(M, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} has non-finite entries")
    return arr


def _svd_cutoff(s: np.ndarray, tol: float | None) -> float:
    tol = default_tol() if tol is None else tol
    if not tol > 0:
        raise InvalidInput(f"tol must be positive, got {tol}")
    smax = s[0] if s.size else 0.0
    return tol * smax


def pinv(M, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse by SVD.

    Singular values at or below ``tol * sigma_max`` are treated as zero.
    """
    A = as_matrix(M, "M")
    if A.size == 0:
        return np.zeros((A.shape[1], A.shape[0]))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    cutoff = _svd_cutoff(s, tol)
    keep = s > cutoff
    if not np.any(keep):
        return np.zeros((A.shape[1], A.shape[0]))
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def numerical_rank(M, tol: float | None = None) -> int:
    """Number of singular values strictly above ``tol * sigma_max``."""
    A = as_matrix(M, "M")
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > _svd_cutoff(s, tol)))


def orthonormal_range(M, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis of the column space of ``M`` (left singular vectors)."""
    A = as_matrix(M, "M")
    if A.size == 0:
        return np.zeros((A.shape[0], 0))
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((A.shape[0], 0))
    return U[:, s > _svd_cutoff(s, tol)]


def rcond(A) -> float:
    """Reciprocal 2-norm condition number, ``sigma_min / sigma_max``."""
    A = as_matrix(A, "A")
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0.0
    return float(s[-1] / s[0])


def solve_square(A, B, rcond_min: float = DEFAULT_RCOND):
    """Solve ``A X = B`` for square ``A``.

    Returns:
        ``(X, rc)`` where ``rc`` is the reciprocal condition number of ``A``.
        ``X`` keeps the dimensionality of ``B`` (vector in, vector out).

    Raises:
        SingularMatrix: when ``rc < rcond_min``.
    """
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise InvalidInput(f"A must be square, got {A.shape}")
    B = np.asarray(B, dtype=float)
    if B.shape[0] != A.shape[0]:
        raise InvalidInput(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
    if not np.all(np.isfinite(B)):
        raise InvalidInput("B has non-finite entries")
    rc = rcond(A)
    if rc < rcond_min:
        raise SingularMatrix("matrix is singular to tolerance", rc)
    return np.linalg.solve(A, B), rc


def spectral_norm(M) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class BlockLayout:
    """Ordered named segments tiling ``[0, total)``.

    >>> lay = BlockLayout.of(("u_ini", 4), ("y_ini", 4), ("u_1", 2))
    >>> lay.slice("u_1")
    slice(8, 10, None)
    """

    segments: tuple[tuple[str, int], ...]

    def __post_init__(self):
        segs = tuple((str(name), int(width)) for name, width in self.segments)
        names = [name for name, _ in segs]
        if len(set(names)) != len(names):
            raise InvalidInput(f"duplicate segment names in {names}")
        for name, width in segs:
            if width < 1:
                raise InvalidInput(f"segment {name!r} has width {width} < 1")
        object.__setattr__(self, "segments", segs)
        offsets = {}
        start = 0
        for name, width in segs:
            offsets[name] = (start, start + width)
            start += width
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_total", start)

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> "BlockLayout":
        return cls(tuple(pairs))

    @property
    def total(self) -> int:
        return self._total

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.segments)

    def __contains__(self, name) -> bool:
        return name in self._offsets

    def __len__(self) -> int:
        return len(self.segments)

    def width(self, name: str) -> int:
        start, stop = self.span(name)
        return stop - start

    def span(self, name: str) -> tuple[int, int]:
        """Half-open ``(start, stop)`` index range of a segment."""
        try:
            return self._offsets[name]
        except KeyError:
            raise KeyError(f"no segment {name!r} in layout {self.names}") from None

    def slice(self, name: str) -> slice:
        start, stop = self.span(name)
        return slice(start, stop)

    def indices(self, names: Iterable[str]) -> np.ndarray:
        """Concatenated indices of several segments, in the order given."""
        parts = [np.arange(*self.span(name)) for name in names]
        if not parts:
            return np.zeros(0, dtype=int)
        return np.concatenate(parts)

    def complement(self, names: Iterable[str]) -> np.ndarray:
        """Indices of every coordinate outside the named segments, in order."""
        drop = set(names)
        return self.indices(name for name in self.names if name not in drop)

    def extend(self, *pairs: tuple[str, int]) -> "BlockLayout":
        return BlockLayout(self.segments + tuple(pairs))

    def permutation(self, order: Sequence[str]) -> np.ndarray:
        """Index vector ``idx`` with ``v_reordered = v[idx]``.

        ``order`` must name every segment exactly once.
        """
        if sorted(order) != sorted(self.names):
            raise InvalidInput(f"order {list(order)} is not a permutation of {self.names}")
        return self.indices(order)


def player_layout(partition: Sequence[int]) -> BlockLayout:
    """Layout of one stacked input ``u_t = col(u^1_t, ..., u^N_t)``."""
    return BlockLayout(tuple((f"player{i}", w) for i, w in enumerate(partition)))


def history_layout(T_ini: int, m: int, p: int, t: int) -> BlockLayout:
    """Layout of ``col(u_ini, y_ini, u_1, ..., u_t)``, oldest-first."""
    pairs = [("u_ini", T_ini * m), ("y_ini", T_ini * p)]
    pairs += [(f"u_{k}", m) for k in range(1, t + 1)]
    return BlockLayout(tuple(pairs))


def window_layout(T_ini: int, m: int, p: int) -> BlockLayout:
    """Time-resolved layout of ``col(u_ini, y_ini)`` in canonical order.

    Segment ``u[-k]`` holds ``u_{-k}``; the oldest sample comes first.
    """
    lags = range(-T_ini + 1, 1)
    pairs = [(f"u[{k}]", m) for k in lags] + [(f"y[{k}]", p) for k in lags]
    return BlockLayout(tuple(pairs))


def newest_first_permutation(T_ini: int, m: int, p: int) -> np.ndarray:
    """Reorder a canonical window into ``col(u_{t-1}, ..., u_{t-T_ini}, y_{t-1}, ...)``.

    Applying it to gain columns converts canonical gains to the
    newest-first convention: ``K_newest = K[:, idx]``.
    """
    lay = window_layout(T_ini, m, p)
    lags = range(0, -T_ini, -1)
    order = [f"u[{k}]" for k in lags] + [f"y[{k}]" for k in lags]
    return lay.permutation(order)
