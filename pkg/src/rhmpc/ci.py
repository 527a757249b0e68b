"""Conditional-integral reference shaping."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError


class CiCompensator:
    """Reference shaper ``r_mpc = r_d + K_I * accum``.

    Channel ``j`` adds its tracking error ``e_j = r_d_j - y_j`` to the running
    sum only while ``|e_j| < e_th_j``, so large transient errors never wind
    the compensator up.

    Parameters
    ----------
    K_I : array_like
        Diagonal gain, given as a vector or a diagonal matrix.
    e_th : array_like
        Non-negative per-channel thresholds.
    """

    def __init__(self, K_I, e_th):
        K = np.asarray(K_I, dtype=float)
        if K.ndim == 2:
            if K.shape[0] != K.shape[1] or np.any(K - np.diag(np.diag(K))):
                raise ValueError("K_I must be diagonal")
            K = np.diag(K).copy()
        e_th = np.asarray(e_th, dtype=float).ravel()
        if K.shape != e_th.shape:
            raise DimensionError(f"K_I has {K.size} channels, e_th has {e_th.size}")
        if np.any(K < 0) or np.any(e_th < 0) or not np.all(np.isfinite(K)) or not np.all(np.isfinite(e_th)):
            raise ValueError("K_I and e_th must be finite and non-negative")
        self.K_I = np.diag(K)
        self.e_th = e_th
        self.accum = np.zeros(K.size)

    @property
    def n_y(self) -> int:
        return self.e_th.size

    def shape_reference(self, r_d, y) -> np.ndarray:
        r_d = np.asarray(r_d, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if r_d.shape != (self.n_y,) or y.shape != (self.n_y,):
            raise DimensionError(f"r_d and y must have {self.n_y} entries")
        e = r_d - y
        gate = np.abs(e) < self.e_th
        self.accum = self.accum + np.where(gate, e, 0.0)
        return r_d + self.K_I @ self.accum

    def reset(self) -> None:
        self.accum = np.zeros(self.n_y)


def shape_reference(ci: CiCompensator, r_d, y) -> np.ndarray:
    return ci.shape_reference(r_d, y)


def reset(ci: CiCompensator) -> None:
    ci.reset()
