"""Local-time ledgers and the inverse clock.

A ledger records the cumulative boundary local time ``L`` against wall-clock
time ``t``.  The inverse clock ``sigma(level)`` is the first time the local
time reaches a level; between recorded entries the ledger is interpolated
linearly, and inside an interval where ``L`` is flat the infimum convention
returns the left endpoint of the first interval achieving the level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LocalTimeLedger:
    """Monotone record of ``(t, L)`` pairs, starting at ``(0, 0)``.

    Optionally carries the per-ball split ``LX``/``LY`` alongside the total;
    ``L`` is then their sum.
    """

    t: np.ndarray
    L: np.ndarray
    LX: np.ndarray | None = field(default=None)
    LY: np.ndarray | None = field(default=None)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        L = np.asarray(self.L, dtype=np.float64)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "L", L)
        if t.ndim != 1 or t.shape != L.shape or t.size == 0:
            raise ValueError("ledger needs matching 1-d t and L arrays")
        if t[0] != 0.0 or L[0] != 0.0:
            raise ValueError("ledger must start at (0, 0)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("ledger times must be strictly increasing")
        if np.any(np.diff(L) < 0):
            raise ValueError("local time must be nondecreasing")

    @property
    def final_time(self) -> float:
        return float(self.t[-1])

    @property
    def final_local_time(self) -> float:
        return float(self.L[-1])

    @classmethod
    def from_split(cls, t, LX, LY) -> "LocalTimeLedger":
        LX = np.asarray(LX, dtype=np.float64)
        LY = np.asarray(LY, dtype=np.float64)
        return cls(t=np.asarray(t, dtype=np.float64), L=LX + LY, LX=LX, LY=LY)


def sigma(ledger: LocalTimeLedger, level: float) -> float:
    """First (interpolated) time at which the ledger's ``L`` reaches ``level``.

    Raises when the level exceeds the final recorded local time.
    """
    if level < 0:
        raise ValueError("local-time level must be nonnegative")
    L = ledger.L
    t = ledger.t
    if level > L[-1]:
        raise ValueError(
            f"local time exhausted: level {level} beyond final {L[-1]}"
        )
    i = int(np.searchsorted(L, level, side="left"))
    if i == 0:
        return float(t[0])
    # side='left' guarantees L[i-1] < level <= L[i], so the slope is nonzero
    frac = (level - L[i - 1]) / (L[i] - L[i - 1])
    return float(t[i - 1] + frac * (t[i] - t[i - 1]))


def sigma_grid(ledger: LocalTimeLedger, levels) -> np.ndarray:
    """Vectorised :func:`sigma` over an array of levels."""
    return np.array([sigma(ledger, lv) for lv in np.asarray(levels, dtype=np.float64)])


def sample_on_local_clock(series_t, series_values, ledger: LocalTimeLedger, levels) -> np.ndarray:
    """Evaluate a recorded series at inverse-local-time instants.

    ``series_t`` are the snapshot times of ``series_values`` (first axis).
    Each requested level is mapped through :func:`sigma` and the snapshot
    nearest in time is returned -- positions are cadlag samples, so nearest
    lookup is used rather than interpolation.
    """
    series_t = np.asarray(series_t, dtype=np.float64)
    series_values = np.asarray(series_values)
    levels = np.asarray(levels, dtype=np.float64)
    if series_t.ndim != 1 or series_values.shape[0] != series_t.size:
        raise ValueError("series times and values must align on the first axis")
    if levels.size == 0:
        return series_values[:0]
    times = sigma_grid(ledger, levels)
    idx = np.searchsorted(series_t, times)
    idx = np.clip(idx, 0, series_t.size - 1)
    left = np.clip(idx - 1, 0, series_t.size - 1)
    pick_left = np.abs(series_t[left] - times) <= np.abs(series_t[idx] - times)
    nearest = np.where(pick_left, left, idx)
    return series_values[nearest]
