"""Receding-horizon controller built on the single-shooting OCP solver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionError, DivergenceError
from .grid import ControlGrid
from .model import StateSpaceModel, _vec
from .ocp import OcpProblem, SolveOptions, SolveResult, solve

log = logging.getLogger(__name__)


def _default_solver() -> SolveOptions:
    return SolveOptions(max_iters=30, penalty_rounds=1)


@dataclass(frozen=True)
class RmpcConfig:
    """Controller tuning, expressed in the model's (deviation) coordinates.

    ``dt_step`` is the RK4 step used inside the prediction; ``None`` means one
    step per sample.
    """

    W_y: np.ndarray
    N_p: int
    u_min: np.ndarray
    u_max: np.ndarray
    N_u: int = 1
    dt_sample: float = 1.0
    solver: SolveOptions = field(default_factory=_default_solver)
    warm_start: bool = True
    dt_step: Optional[float] = None

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W_y, dtype=float))
        u_min = np.asarray(self.u_min, dtype=float).ravel()
        u_max = np.asarray(self.u_max, dtype=float).ravel()
        if W.shape[0] != W.shape[1]:
            raise ConfigError("W_y must be square", key="W_y")
        if not np.allclose(W, W.T, rtol=0, atol=1e-12) or np.min(np.linalg.eigvalsh(0.5 * (W + W.T))) <= 0:
            raise ConfigError("W_y must be symmetric positive definite", key="W_y")
        if int(self.N_p) != self.N_p or self.N_p < 1:
            raise ConfigError("N_p must be a positive integer", key="N_p")
        if int(self.N_u) != self.N_u or not 1 <= self.N_u <= self.N_p:
            raise ConfigError("N_u must satisfy 1 <= N_u <= N_p", key="N_u")
        if not self.dt_sample > 0:
            raise ConfigError("dt_sample must be positive", key="dt_sample")
        if u_min.shape != u_max.shape or np.any(u_min >= u_max):
            raise ConfigError("u_min < u_max must hold componentwise", key="u_min")
        object.__setattr__(self, "W_y", W)
        object.__setattr__(self, "u_min", u_min)
        object.__setattr__(self, "u_max", u_max)
        object.__setattr__(self, "N_p", int(self.N_p))
        object.__setattr__(self, "N_u", int(self.N_u))

    @property
    def horizon(self) -> float:
        return self.N_p * self.dt_sample


@dataclass
class RmpcState:
    u_prev_grid: Optional[ControlGrid] = None
    last_result: Optional[SolveResult] = None
    u_prev_applied: Optional[np.ndarray] = None
    fallback: bool = False


def build_ocp(m: StateSpaceModel, x_hat, r_mpc, cfg: RmpcConfig) -> OcpProblem:
    """Tracking problem over ``[0, N_p * dt_sample]`` with weight ``W_y`` on both terms.

    The running cost is ``(C x + D u - r)' W (C x + D u - r)``; the endpoint
    cost applies the same weight to ``C x(b) - r``.  The initial state is
    fixed to ``x_hat`` and passed to the solver separately.
    """
    if m.is_discrete:
        raise ValueError("build_ocp requires a continuous-time model")
    _vec(x_hat, m.n_x, "x_hat")
    r = _vec(r_mpc, m.n_y, "r_mpc")
    if cfg.W_y.shape != (m.n_y, m.n_y):
        raise DimensionError(f"W_y must be {m.n_y}x{m.n_y}")
    if cfg.u_min.shape != (m.n_u,):
        raise DimensionError(f"control bounds must have {m.n_u} entries")
    A, B, C, D, W = m.A, m.B, m.C, m.D, cfg.W_y
    W2 = W + W.T

    def dynamics(t, x, u):
        return A @ x + B @ u

    def jac(t, x, u):
        return A, B

    def running(t, x, u):
        e = C @ x + D @ u - r
        return float(e @ W @ e)

    def running_grad(t, x, u):
        we = W2 @ (C @ x + D @ u - r)
        return C.T @ we, D.T @ we

    def endpoint(xi, xb):
        e = C @ xb - r
        return float(e @ W @ e)

    def endpoint_grad(xi, xb):
        return np.zeros_like(xi), C.T @ (W2 @ (C @ xb - r))

    return OcpProblem(
        horizon=(0.0, cfg.horizon),
        dynamics=dynamics,
        n_x=m.n_x,
        n_u=m.n_u,
        running_cost=running,
        endpoint_cost=endpoint,
        control_lower=cfg.u_min,
        control_upper=cfg.u_max,
        dt_step=cfg.dt_sample if cfg.dt_step is None else cfg.dt_step,
        dynamics_jac=jac,
        running_cost_grad=running_grad,
        endpoint_cost_grad=endpoint_grad,
    )


def _shift_by_sample(grid: ControlGrid, dt: float) -> ControlGrid:
    """Previous plan advanced by one sample; the tail repeats the last value."""
    bp = grid.breakpoints
    mids = 0.5 * (bp[:-1] + bp[1:]) + dt
    values = np.array([grid.value_at(min(t, bp[-1])) for t in mids])
    return grid.with_values(values)


def initial_guess(state: RmpcState, cfg: RmpcConfig, n_u: int) -> ControlGrid:
    if cfg.warm_start and state.u_prev_grid is not None:
        values = _shift_by_sample(state.u_prev_grid, cfg.dt_sample).values
    else:
        u = np.zeros(n_u) if state.u_prev_applied is None else state.u_prev_applied
        values = np.tile(u, (cfg.N_u, 1))
    values = np.clip(values, cfg.u_min, cfg.u_max)
    return ControlGrid.uniform(0.0, cfg.horizon, values)


def control_step(state: RmpcState, m: StateSpaceModel, x_hat, r_mpc, cfg: RmpcConfig) -> np.ndarray:
    """Solve the horizon problem from the current estimate and return the first move.

    The result lies in ``[u_min, u_max]`` exactly.  If the solver diverges
    the previous move is repeated and ``state.fallback`` is set.
    """
    p = build_ocp(m, x_hat, r_mpc, cfg)
    u0 = initial_guess(state, cfg, m.n_u)
    try:
        res = solve(p, u0, np.asarray(x_hat, dtype=float), cfg.solver)
    except DivergenceError as exc:
        log.warning("controller solve diverged: %s; holding previous input", exc)
        state.fallback = True
        prev = np.zeros(m.n_u) if state.u_prev_applied is None else state.u_prev_applied
        return np.clip(prev, cfg.u_min, cfg.u_max)
    state.fallback = False
    state.last_result = res
    state.u_prev_grid = res.u_star
    u = np.clip(res.u_star.values[0], cfg.u_min, cfg.u_max)
    state.u_prev_applied = u
    return u.copy()


class RmpcController:
    """Stateful wrapper pairing a model, a configuration and the warm-start state."""

    def __init__(self, model: StateSpaceModel, cfg: RmpcConfig):
        self.model = model
        self.cfg = cfg
        self.state = RmpcState()

    def reset(self):
        self.state = RmpcState()

    def step(self, x_hat, r_mpc) -> np.ndarray:
        return control_step(self.state, self.model, x_hat, r_mpc, self.cfg)
