"""Piecewise-constant control parameterization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class ControlGrid:
    """Controls held constant on ``N`` consecutive intervals.

    Attributes
    ----------
    breakpoints : ndarray, shape (N + 1,)
        Strictly increasing interval boundaries in seconds.
    values : ndarray, shape (N, n_u)
        Control value on each interval.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        if bp.ndim != 1 or bp.size < 2:
            raise DimensionError("breakpoints must be a 1-D array with at least two entries")
        if vals.ndim != 2 or vals.shape[0] != bp.size - 1:
            raise DimensionError(
                f"values must have shape (N, n_u) with N={bp.size - 1}, got {vals.shape}"
            )
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def uniform(cls, t0, t1, values) -> "ControlGrid":
        vals = np.asarray(values, dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        return cls(np.linspace(t0, t1, vals.shape[0] + 1), vals)

    @classmethod
    def constant(cls, t0, t1, value, n_intervals=1) -> "ControlGrid":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls.uniform(t0, t1, np.tile(value, (n_intervals, 1)))

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def n_u(self) -> int:
        return self.values.shape[1]

    @property
    def span(self):
        return self.breakpoints[0], self.breakpoints[-1]

    def interval_index(self, t) -> int:
        """Index of the interval containing ``t`` (right end belongs to the last one)."""
        i = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return min(max(i, 0), self.N - 1)

    def value_at(self, t) -> np.ndarray:
        return self.values[self.interval_index(t)]

    def with_values(self, values) -> "ControlGrid":
        return ControlGrid(self.breakpoints, np.asarray(values, dtype=float).reshape(self.values.shape))

    def shifted(self) -> "ControlGrid":
        """Drop the first interval's value and duplicate the last one."""
        vals = np.vstack([self.values[1:], self.values[-1:]])
        return ControlGrid(self.breakpoints, vals)
