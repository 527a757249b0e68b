"""Continuous Luenberger observer with pole placement by duality."""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_sylvester

from .errors import DimensionError, DivergenceError, RankDeficiencyError
from .model import StateSpaceModel, _vec, rk4_step, steps_per_interval

log = logging.getLogger(__name__)

_PLACEMENT_TOL = 1e-8


def observability_matrix(A, C) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def _check_poles(poles, n):
    poles = np.asarray(poles, dtype=complex).ravel()
    if poles.size != n:
        raise DimensionError(f"need {n} poles, got {poles.size}")
    if not np.all(np.isfinite(poles)):
        raise ValueError("poles must be finite")
    remaining = list(poles)
    while remaining:
        p = remaining.pop(0)
        if abs(p.imag) <= 1e-12 * max(1.0, abs(p)):
            continue
        match = [i for i, q in enumerate(remaining) if abs(q - np.conj(p)) <= 1e-9 * max(1.0, abs(p))]
        if not match:
            raise ValueError(f"pole set is not closed under conjugation: {p} has no partner")
        remaining.pop(match[0])
    return poles


def pole_error(A, G, C, poles) -> float:
    """Largest distance between eig(A - G C) and the requested poles, after sorting."""
    eig = np.linalg.eigvals(np.asarray(A) - np.asarray(G) @ np.asarray(C))
    key = lambda z: (round(z.real, 6), round(z.imag, 6))
    a = np.array(sorted(eig, key=key))
    b = np.array(sorted(np.asarray(poles, dtype=complex), key=key))
    return float(np.max(np.abs(a - b)))


def ackermann(A, b, poles) -> np.ndarray:
    """State-feedback row ``k`` with ``eig(A - b k) = poles`` for a single input ``b``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    n = A.shape[0]
    ctrb = np.column_stack([np.linalg.matrix_power(A, i) @ b for i in range(n)])
    rank = np.linalg.matrix_rank(ctrb)
    if rank < n:
        raise RankDeficiencyError(f"single-channel pair is not controllable (rank {rank} < {n})", rank=rank)
    coeffs = np.real(np.poly(poles))
    phi = sum(c * np.linalg.matrix_power(A, n - i) for i, c in enumerate(coeffs))
    e_n = np.zeros(n)
    e_n[-1] = 1.0
    return np.linalg.solve(ctrb.T, e_n) @ phi


def _real_pole_block(poles) -> np.ndarray:
    """Real block-diagonal matrix whose spectrum is ``poles``."""
    poles = list(np.asarray(poles, dtype=complex))
    n = len(poles)
    L = np.zeros((n, n))
    i = 0
    used = [False] * n
    pos = 0
    while i < n:
        if used[i]:
            i += 1
            continue
        p = poles[i]
        used[i] = True
        if abs(p.imag) <= 1e-12 * max(1.0, abs(p)):
            L[pos, pos] = p.real
            pos += 1
        else:
            j = next(k for k in range(n) if not used[k] and abs(poles[k] - np.conj(p)) <= 1e-9 * max(1.0, abs(p)))
            used[j] = True
            a, w = p.real, abs(p.imag)
            L[pos : pos + 2, pos : pos + 2] = [[a, w], [-w, a]]
            pos += 2
        i += 1
    return L


def _sylvester_gain(A, C, poles, shift=0):
    """Parametric placement: solve ``A^T X - X L = C^T H`` and take ``G = (H X^-1)^T``."""
    n, p = A.shape[0], C.shape[0]
    L = _real_pole_block(poles)
    H = np.zeros((p, n))
    for j in range(n):
        H[(j + shift) % p, j] = 1.0
    X = solve_sylvester(A.T, -L, C.T @ H)
    if np.linalg.cond(X) > 1e12:
        raise np.linalg.LinAlgError("ill-conditioned Sylvester solution")
    return np.linalg.solve(X.T, H.T)


def _unit_rank_gain(A, C, poles, q):
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    k = ackermann(A.T, C.T @ q, poles)
    return np.outer(k, q)


def place_poles(A, C, poles: Sequence[complex], method: str = "sylvester") -> np.ndarray:
    """Observer gain ``G`` such that ``eig(A - G C)`` equals ``poles``.

    Parameters
    ----------
    A : (n, n) array_like
    C : (p, n) array_like
    poles : sequence of n complex values, closed under conjugation
    method : {"sylvester", "unit-rank"}
        Multi-output strategy.  ``"sylvester"`` solves a Sylvester equation
        with a fixed cyclic parameter matrix; ``"unit-rank"`` reduces to a
        single output through the direction ``[1, ..., 1]/sqrt(p)`` and then
        each unit direction.  Either falls back to the other when it cannot
        meet the placement tolerance.

    Raises
    ------
    RankDeficiencyError
        If ``(A, C)`` is not observable.
    ValueError
        If the pole set is not self-conjugate.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n, p = A.shape[0], C.shape[0]
    if A.shape != (n, n) or C.shape[1] != n:
        raise DimensionError(f"incompatible shapes A{A.shape}, C{C.shape}")
    poles = _check_poles(poles, n)
    rank = np.linalg.matrix_rank(observability_matrix(A, C))
    if rank < n:
        raise RankDeficiencyError(f"pair (A, C) is unobservable: observability rank {rank} < {n}", rank=rank)
    if method not in ("sylvester", "unit-rank"):
        raise ValueError(f"unknown placement method {method!r}")

    if p == 1:
        return ackermann(A.T, C[0], poles).reshape(n, 1)

    sylvester = [lambda s=s: _sylvester_gain(A, C, poles, s) for s in range(p)]
    directions = [np.ones(p)] + [np.eye(p)[j] for j in range(p)]
    unit_rank = [lambda q=q: _unit_rank_gain(A, C, poles, q) for q in directions]
    attempts = sylvester + unit_rank if method == "sylvester" else unit_rank + sylvester
    best, best_err = None, np.inf
    for attempt in attempts:
        try:
            G = attempt()
        except (np.linalg.LinAlgError, RankDeficiencyError, StopIteration):
            continue
        if not np.all(np.isfinite(G)):
            continue
        err = pole_error(A, G, C, poles)
        if err <= _PLACEMENT_TOL * max(1.0, float(np.max(np.abs(poles)))):
            return G
        if err < best_err:
            best, best_err = G, err
    if best is None:
        raise RankDeficiencyError("no placement strategy produced a gain", rank=rank)
    log.warning("pole placement residual %.3g exceeds tolerance", best_err)
    return best


class LuenbergerObserver:
    """Sampled continuous-time observer ``xhat' = (A - G C) xhat + G (y - D u) + B u``.

    Between samples ``y`` and ``u`` are held constant and the observer ODE is
    integrated with RK4 steps of ``dt_step``.
    """

    def __init__(
        self,
        model: StateSpaceModel,
        poles: Optional[Sequence[complex]] = None,
        dt_sample: float = 1.0,
        G=None,
        x_hat0=None,
        dt_step: float = 0.1,
        method: str = "sylvester",
    ):
        if model.is_discrete:
            raise ValueError("observer requires a continuous-time model")
        if G is None:
            if poles is None:
                raise ValueError("pass either poles or G")
            G = place_poles(model.A, model.C, poles, method=method)
        G = np.atleast_2d(np.asarray(G, dtype=float))
        if G.shape != (model.n_x, model.n_y):
            raise DimensionError(f"G must have shape {(model.n_x, model.n_y)}, got {G.shape}")
        self.model = model
        self.G = G
        self.poles = None if poles is None else np.asarray(poles, dtype=complex)
        self.dt_sample = float(dt_sample)
        self.dt_step = float(dt_step)
        self._n_steps = steps_per_interval(self.dt_sample, self.dt_step)
        self._x0 = np.zeros(model.n_x) if x_hat0 is None else _vec(x_hat0, model.n_x, "x_hat0")
        self.x_hat = self._x0.copy()
        self._A_obs = model.A - G @ model.C

    def reset(self, x_hat0=None):
        self.x_hat = self._x0.copy() if x_hat0 is None else _vec(x_hat0, self.model.n_x, "x_hat0")

    def _rhs(self, t, x, drive):
        return self._A_obs @ x + drive

    def update(self, y, u) -> np.ndarray:
        """Advance the estimate one sample with ``y`` and ``u`` held; returns the new estimate."""
        m = self.model
        y = _vec(y, m.n_y, "y")
        u = _vec(u, m.n_u, "u")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(u))):
            raise ValueError("observer inputs must be finite")
        drive = self.G @ (y - m.D @ u) + m.B @ u
        h = self.dt_sample / self._n_steps
        x = self.x_hat
        for k in range(self._n_steps):
            x = rk4_step(self._rhs, k * h, x, drive, h)
        if not np.all(np.isfinite(x)):
            raise DivergenceError("observer state became non-finite", time=self.dt_sample)
        self.x_hat = x
        return x.copy()


def observer_update(obs: LuenbergerObserver, y, u) -> np.ndarray:
    return obs.update(y, u)


def error_model(model: StateSpaceModel, G) -> StateSpaceModel:
    """Joint plant/observer model with state ``[x; xhat]`` under a shared input.

    With ``y = C x + D u`` fed to the observer, the difference ``xhat - x``
    obeys ``e' = (A - G C) e`` whatever the input.
    """
    A, B, C = model.A, model.B, model.C
    G = np.asarray(G, dtype=float)
    n = model.n_x
    A_aug = np.block([[A, np.zeros((n, n))], [G @ C, A - G @ C]])
    B_aug = np.vstack([B, B])
    C_aug = np.hstack([-np.eye(n), np.eye(n)])
    return StateSpaceModel(A_aug, B_aug, C_aug)
