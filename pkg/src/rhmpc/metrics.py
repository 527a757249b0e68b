"""Absolute and relative control-performance indices."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateReferenceError, DimensionError

ROW_NAMES = ("RIAE1", "RIAE2", "RITAE1", "RITAE2", "RITAE3", "RITAE4", "RIAVU1", "RIAVU2")


@dataclass(frozen=True)
class EventWindow:
    """Time-weighted error window on output ``output`` starting at ``t_c``."""

    output: int
    t_c: float
    T_w: float


def _pair(e, t):
    e = np.asarray(e, dtype=float).ravel()
    t = np.asarray(t, dtype=float).ravel()
    if e.shape != t.shape:
        raise DimensionError(f"signal has {e.size} samples but {t.size} times")
    return e, t


def _trapz(f, t):
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(t)))


def iae(e, t) -> float:
    """Trapezoidal integral of ``|e|``."""
    e, t = _pair(e, t)
    return _trapz(np.abs(e), t)


def itae(e, t, t_c: float, T_w: float) -> float:
    """Trapezoidal integral of ``(t - t_c) |e|`` over ``[t_c, t_c + T_w]``."""
    e, t = _pair(e, t)
    tol = 1e-9 * max(1.0, abs(t_c) + T_w)
    if T_w <= 0 or t_c < t[0] - tol or t_c + T_w > t[-1] + tol:
        raise ValueError(f"window [{t_c}, {t_c + T_w}] lies outside the trace [{t[0]}, {t[-1]}]")
    m = (t >= t_c - tol) & (t <= t_c + T_w + tol)
    return _trapz((t[m] - t_c) * np.abs(e[m]), t[m])


def iavu(u, t=None) -> float:
    """Total variation ``sum |u[k+1] - u[k]|``."""
    u = np.asarray(u, dtype=float).ravel()
    if t is not None:
        u, _ = _pair(u, t)
    return float(np.sum(np.abs(np.diff(u))))


def absolute_indices(t, e, u, events: Sequence[EventWindow]) -> np.ndarray:
    """The eight absolute indices in report order (IAE per output, ITAE per window, IAVU per input)."""
    e = np.asarray(e, dtype=float)
    u = np.asarray(u, dtype=float)
    vals = [iae(e[:, j], t) for j in range(e.shape[1])]
    vals += [itae(e[:, w.output], t, w.t_c, w.T_w) for w in events]
    vals += [iavu(u[:, j], t) for j in range(u.shape[1])]
    return np.array(vals)


@dataclass(frozen=True)
class IndexReport:
    names: Tuple[str, ...]
    ratios: np.ndarray
    test_values: np.ndarray
    ref_values: np.ndarray
    weights: np.ndarray
    J: float

    def as_dict(self):
        d = {n: float(r) for n, r in zip(self.names, self.ratios)}
        d["J"] = float(self.J)
        return d

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "ratio", "test", "reference", "weight"])
            for n, r, a, b, wt in zip(self.names, self.ratios, self.test_values, self.ref_values, self.weights):
                w.writerow([n, repr(float(r)), repr(float(a)), repr(float(b)), repr(float(wt))])
            w.writerow(["J", repr(float(self.J)), "", "", ""])

    def table(self) -> str:
        lines = [f"{'Index':<8}{'Value':>12}"]
        lines += [f"{n:<8}{r:>12.4f}" for n, r in zip(self.names, self.ratios)]
        lines.append(f"{'J':<8}{self.J:>12.4f}")
        return "\n".join(lines)


def combine(ratios, weights=None) -> float:
    ratios = np.asarray(ratios, dtype=float)
    w = np.ones_like(ratios) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != ratios.shape or np.any(w < 0) or not np.sum(w) > 0:
        raise ValueError("weights must be non-negative, one per index, with a positive sum")
    return float(np.sum(w * ratios) / np.sum(w))


def compare(test, ref, events: Sequence[EventWindow], weights: Optional[Sequence[float]] = None) -> IndexReport:
    """Relative indices ``test / ref`` and their weighted mean ``J``.

    Both arguments are trace logs (anything with ``t``, ``r_d``, ``y`` and
    ``u_applied`` arrays) that share one sampling grid.  Identical traces give
    ratios of exactly one, even where the underlying index is zero.
    """
    if test.t.shape != ref.t.shape or not np.array_equal(test.t, ref.t):
        raise DimensionError("test and reference traces must share one time grid")
    events = list(events)
    if len(events) != 4:
        raise ValueError(f"expected four event windows, got {len(events)}")
    a = absolute_indices(test.t, test.r_d - test.y, test.u_applied, events)
    b = absolute_indices(ref.t, ref.r_d - ref.y, ref.u_applied, events)
    names = ROW_NAMES if a.size == len(ROW_NAMES) else tuple(f"R{i + 1}" for i in range(a.size))
    ratios = np.empty_like(a)
    for i, (x, y) in enumerate(zip(a, b)):
        if x == y:
            ratios[i] = 1.0
        elif y == 0.0:
            raise DegenerateReferenceError(f"reference index {names[i]} is zero", row=names[i])
        else:
            ratios[i] = x / y
    w = np.ones_like(ratios) if weights is None else np.asarray(weights, dtype=float)
    return IndexReport(names, ratios, a, b, w, combine(ratios, w))
