"""Embedded two-player reference game: a 3-state, 2-input, 2-output system.

The printed feedthrough entry ``D[1, 1] = 0.1`` is inconsistent with the
printed initial window and the printed gains; ``1.0`` reproduces both, so
``D_REFERENCE`` uses ``1.0`` and ``D_AS_PRINTED`` keeps the original for
comparison.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game import GameSpec, make_spec
from .lti import LtiSystem, backfill_initial_window

A_REFERENCE = np.array([[0.9, 0.2, -0.6], [-0.4, 0.8, 0.2], [0.5, 0.3, 0.1]])
B_REFERENCE = np.array([[1.0, -0.3], [-2.0, 0.5], [-0.3, 0.3]])
C_REFERENCE = np.array([[-1.0, 0.3, -0.2], [-0.1, 0.5, 1.0]])
D_REFERENCE = np.array([[0.1, 0.5], [-0.4, 1.0]])
D_AS_PRINTED = np.array([[0.1, 0.5], [-0.4, 0.1]])

T_INI = 2
HORIZON = 50
DATA_LENGTH = 500
AMPLITUDE = 5.0

X1 = np.array([1.885, -3.208, -0.922])
U_INI = np.array([-0.640, -4.741, 0.497, -0.647])
Y_INI_PRINTED = np.array([-1.534, -5.884, -0.637, -3.849])

# first-stage gains at T = 50, canonical oldest-first window ordering
K_PRINTED = (
    np.array([[0.079, 0.090, -0.335, 0.167, -0.129, 0.039, 0.067, 0.018]]),
    np.array([[0.182, 0.069, 1.217, 0.168, -0.108, -0.032, -0.231, -0.509]]),
)
L_PRINTED = (np.array([0.146]), np.array([0.064]))
GAIN_TOL = 5e-3


def reference_system(D: np.ndarray | None = None) -> LtiSystem:
    return LtiSystem(A_REFERENCE, B_REFERENCE, C_REFERENCE,
                     D_REFERENCE if D is None else D, partition=(1, 1))


def reference_game(references: bool = True, horizon: int | None = HORIZON) -> GameSpec:
    """Costs of the reference game; ``references=False`` zeroes both tracking targets."""
    refs = ([-1.0, 0.3], [0.4, -0.3]) if references else None
    return make_spec(
        (1, 1),
        Q=([[2.0, 0.2], [0.2, 2.0]], [[3.0, 0.5], [0.5, 3.0]]),
        R=(([[0.5]], [[-0.1]]), ([[-0.3]], [[1.0]])),
        deltas=(0.8, 0.9),
        references=refs,
        horizon=horizon,
    )


@dataclass(frozen=True)
class InitialWindow:
    u_ini: np.ndarray
    y_ini: np.ndarray
    x1: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u_ini, self.y_ini])


def reference_window(sys: LtiSystem | None = None) -> InitialWindow:
    """The printed ``u_ini`` with ``y_ini`` recomputed so the window ends exactly in ``X1``."""
    sys = reference_system() if sys is None else sys
    return InitialWindow(U_INI.copy(), backfill_initial_window(sys, X1, U_INI), X1.copy())
