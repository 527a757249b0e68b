"""Linear state-space models, RK4 integration and zero-order-hold discretization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import DimensionError, DivergenceError
from .grid import ControlGrid

Dynamics = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class StateSpaceModel:
    """LTI quadruple ``(A, B, C, D)``.

    ``dt`` is ``None`` for a continuous-time model and the sample period in
    seconds for a discrete-time one.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: Optional[np.ndarray] = None
    dt: Optional[float] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        n_x = A.shape[0]
        if B.ndim == 1:
            B = B.reshape(n_x, -1)
        if C.ndim == 1:
            C = C.reshape(-1, n_x)
        B, C = np.atleast_2d(B), np.atleast_2d(C)
        D = np.zeros((C.shape[0], B.shape[1])) if self.D is None else np.atleast_2d(np.asarray(self.D, dtype=float))
        if A.shape != (n_x, n_x):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n_x:
            raise DimensionError(f"B must have {n_x} rows, got {B.shape}")
        if C.shape[1] != n_x:
            raise DimensionError(f"C must have {n_x} columns, got {C.shape}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(f"D must have shape {(C.shape[0], B.shape[1])}, got {D.shape}")
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} contains non-finite entries")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("discrete model requires dt > 0")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def is_discrete(self) -> bool:
        return self.dt is not None

    @property
    def form(self) -> str:
        return "discrete" if self.is_discrete else "continuous"

    def dynamics(self, t, x, u):
        return self.A @ x + self.B @ u


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if len(self.states) != t.size or len(self.outputs) != t.size:
            raise DimensionError("states/outputs must have one row per time")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _vec(v, n, name):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (n,):
        raise DimensionError(f"{name} must have shape ({n},), got {v.shape}")
    return v


def step_discrete(m: StateSpaceModel, x, u) -> np.ndarray:
    """One step of ``x+ = A x + B u`` for a discrete model."""
    if not m.is_discrete:
        raise ValueError("step_discrete requires a discrete-time model")
    return m.A @ _vec(x, m.n_x, "x") + m.B @ _vec(u, m.n_u, "u")


def output(m: StateSpaceModel, x, u) -> np.ndarray:
    return m.C @ _vec(x, m.n_x, "x") + m.D @ _vec(u, m.n_u, "u")


def rk4_step(f: Dynamics, t, x, u, h):
    k1 = f(t, x, u)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1, u)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2, u)
    k4 = f(t + h, x + h * k3, u)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def steps_per_interval(length, dt_step) -> int:
    """Number of RK4 steps of size ``dt_step`` that tile ``length`` exactly."""
    if not dt_step > 0:
        raise ValueError("dt_step must be positive")
    n = int(round(length / dt_step))
    if n < 1 or abs(n * dt_step - length) > 1e-9 * max(1.0, length):
        raise ValueError(f"dt_step={dt_step} does not divide the interval length {length} evenly")
    return n


def integrate_rk4(
    dynamics: Union[StateSpaceModel, Dynamics],
    x0,
    u_grid: Optional[ControlGrid],
    dt_step: float,
    t_span: Optional[Sequence[float]] = None,
) -> Trajectory:
    """Fixed-step classical Runge-Kutta integration under piecewise-constant input.

    Parameters
    ----------
    dynamics : StateSpaceModel or callable
        A continuous model, or ``f(t, x, u) -> xdot``.
    x0 : array_like
        Initial state.
    u_grid : ControlGrid or None
        Input held on each interval. ``None`` integrates an autonomous system
        over ``t_span`` with an empty input vector.
    dt_step : float
        Integration step; must tile every control interval exactly.

    Returns
    -------
    Trajectory
        Samples at every integration step, endpoints included. For a model the
        outputs are ``C x + D u``; for a bare function they repeat the states.
    """
    if isinstance(dynamics, StateSpaceModel):
        if dynamics.is_discrete:
            raise ValueError("integrate_rk4 requires a continuous-time model")
        model = dynamics
        f = dynamics.dynamics
    else:
        model = None
        f = dynamics
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if model is not None:
        x = _vec(x, model.n_x, "x0")
    if u_grid is None:
        if t_span is None:
            raise ValueError("t_span is required when no control grid is given")
        n_u = model.n_u if model is not None else 0
        u_grid = ControlGrid(np.asarray(t_span, dtype=float), np.zeros((1, n_u)))

    times = [float(u_grid.breakpoints[0])]
    states = [x.copy()]
    inputs = [u_grid.values[0]]
    for i in range(u_grid.N):
        t0, t1 = u_grid.breakpoints[i], u_grid.breakpoints[i + 1]
        n = steps_per_interval(t1 - t0, dt_step)
        h = (t1 - t0) / n
        u = u_grid.values[i]
        for k in range(n):
            t = t0 + k * h
            x = rk4_step(f, t, x, u, h)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"non-finite state at t={t + h:g}", time=t + h)
            times.append(t0 + (k + 1) * h)
            states.append(x)
            inputs.append(u)
    states = np.array(states)
    if model is not None:
        outputs = states @ model.C.T + np.array(inputs) @ model.D.T
    else:
        outputs = states.copy()
    return Trajectory(np.array(times), states, outputs)


def expm_series(M, tol=1e-12, max_terms=60) -> np.ndarray:
    """Matrix exponential by scaling and squaring a truncated Taylor series."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix exponential of non-finite matrix")
    norm = np.linalg.norm(M, 1)
    s = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    X = M / (2.0**s)
    E = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, max_terms + 1):
        term = term @ X / k
        E = E + term
        if np.linalg.norm(term, 1) <= tol * np.linalg.norm(E, 1):
            break
    for _ in range(s):
        E = E @ E
    return E


def discretize_zoh(m: StateSpaceModel, dt: float) -> StateSpaceModel:
    """Zero-order-hold equivalent of a continuous model at sample period ``dt``."""
    if m.is_discrete:
        raise ValueError("model is already discrete")
    if not dt > 0:
        raise ValueError("dt must be positive")
    n, k = m.n_x, m.n_u
    aug = np.zeros((n + k, n + k))
    aug[:n, :n] = m.A
    aug[:n, n:] = m.B
    E = expm_series(aug * dt)
    return StateSpaceModel(E[:n, :n], E[:n, n:], m.C, m.D, dt=dt)


def predict(m: StateSpaceModel, x, u_seq, N_p: int) -> np.ndarray:
    """Output predictions ``y(i+k|i)`` for ``k = 1..N_p``.

    ``u_seq[k]`` is applied on step ``k``; the output at step ``k`` pairs the
    predicted state with ``u_seq[k]`` (or the last input for ``k = N_p``).
    """
    if not m.is_discrete:
        raise ValueError("predict requires a discrete-time model")
    u_seq = np.asarray(u_seq, dtype=float).reshape(-1, m.n_u) if np.size(u_seq) else np.zeros((0, m.n_u))
    if u_seq.shape[0] < N_p:
        raise DimensionError(f"need at least N_p={N_p} inputs, got {u_seq.shape[0]}")
    x = _vec(x, m.n_x, "x")
    out = np.empty((N_p, m.n_y))
    for k in range(N_p):
        x = m.A @ x + m.B @ u_seq[k]
        u_next = u_seq[min(k + 1, u_seq.shape[0] - 1)]
        out[k] = m.C @ x + m.D @ u_next
    return out
