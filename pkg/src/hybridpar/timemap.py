"""Piecewise-affine reparameterization of time.

Pseudo-time ``s`` runs over ``[0, 2]``; ``pi(s, tau)`` maps ``[0, 1]`` onto
``[0, tau]`` and ``[1, 2]`` onto ``[tau, T]`` so the switch always sits at
``s = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import OutOfRange

__all__ = ["TimeMap", "PseudoTimeGrid", "MapValues", "evaluate"]


class MapValues(NamedTuple):
    pi: float
    pi_dot: float
    pi_tau: float
    pi_dot_tau: float


@dataclass(frozen=True)
class TimeMap:
    tau: float
    T: float

    def __post_init__(self):
        if not 0.0 < self.tau < self.T:
            raise OutOfRange(f"switching time {self.tau} outside (0, {self.T})")

    def pi(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= 1.0, self.tau * s, (self.T - self.tau) * s - self.T + 2 * self.tau)

    def pi_tau(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= 1.0, s, 2.0 - s)

    def pi_dot(self, phase: int) -> float:
        return self.tau if phase == 1 else self.T - self.tau

    @staticmethod
    def pi_dot_tau(phase: int) -> float:
        return 1.0 if phase == 1 else -1.0

    def inverse(self, t):
        """Pseudo-time of physical time ``t``."""
        t = np.asarray(t, dtype=float)
        return np.where(t <= self.tau, t / self.tau, 1.0 + (t - self.tau) / (self.T - self.tau))


def evaluate(tmap: TimeMap, s: float, phase: int | None = None) -> MapValues:
    """Return ``(pi, pi_dot, pi_tau, pi_dot_tau)`` at pseudo-time ``s``.

    At ``s = 1`` the derivatives take their left limits unless ``phase=2``
    is passed.
    """
    if not 0.0 <= s <= 2.0:
        raise OutOfRange(f"pseudo-time {s} outside [0, 2]")
    if phase is None:
        phase = 1 if s <= 1.0 else 2
    return MapValues(float(tmap.pi(s)), tmap.pi_dot(phase),
                     float(tmap.pi_tau(s)), tmap.pi_dot_tau(phase))


@dataclass(frozen=True)
class PseudoTimeGrid:
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 2 or self.n_steps % 2:
            raise ValueError(f"n_steps must be an even number >= 2, got {self.n_steps}")

    @property
    def ds(self) -> float:
        return 2.0 / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return 2.0 * np.arange(self.n_steps + 1) / self.n_steps

    @property
    def midpoints(self) -> np.ndarray:
        return (2.0 * np.arange(self.n_steps) + 1.0) / self.n_steps

    @property
    def switch_index(self) -> int:
        return self.n_steps // 2

    @property
    def phases(self) -> np.ndarray:
        """Phase (1 or 2) of each interval, decided by its midpoint."""
        return np.where(self.midpoints < 1.0, 1, 2)
