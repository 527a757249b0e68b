"""Built-in optimal control test problems.

Each solve preset is a :class:`Preset` bundling a problem with its starting
point.  Gradient batteries are lists of ``(problem, controls, initial_state)``
triples on which the two gradient modes are compared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from .grid import ControlGrid
from .ocp import OcpProblem


@dataclass(frozen=True)
class Preset:
    problem: OcpProblem
    u0: ControlGrid
    xi0: np.ndarray
    description: str


def _integrator_lq(n_intervals: int) -> Preset:
    # xdot = u, x(0) = 1, f = x(1)^2 + int u^2
    p = OcpProblem(
        horizon=(0.0, 1.0),
        dynamics=lambda t, x, u: u.copy(),
        n_x=1,
        n_u=1,
        running_cost=lambda t, x, u: float(u @ u),
        endpoint_cost=lambda xi, xb: float(xb @ xb),
        dynamics_jac=lambda t, x, u: (np.zeros((1, 1)), np.eye(1)),
        running_cost_grad=lambda t, x, u: (np.zeros(1), 2.0 * u),
        endpoint_cost_grad=lambda xi, xb: (np.zeros(1), 2.0 * xb),
    )
    u0 = ControlGrid.uniform(0.0, 1.0, np.zeros((n_intervals, 1)))
    return Preset(p, u0, np.array([1.0]), f"integrator LQ, {n_intervals} interval(s)")


def _clipped() -> Preset:
    p = OcpProblem(
        horizon=(0.0, 1.0),
        dynamics=lambda t, x, u: np.zeros(1),
        n_x=1,
        n_u=1,
        running_cost=lambda t, x, u: float((u[0] - 1.0) ** 2),
        control_lower=0.0,
        control_upper=0.5,
    )
    u0 = ControlGrid.uniform(0.0, 1.0, np.zeros((4, 1)))
    return Preset(p, u0, np.zeros(1), "bound-active quadratic, u in [0, 0.5]")


def _endpoint_target() -> Preset:
    # xdot = u, x(0) = 0, min int u^2 subject to x(1) = 1: u* = 1, f* = 1
    p = OcpProblem(
        horizon=(0.0, 1.0),
        dynamics=lambda t, x, u: u.copy(),
        n_x=1,
        n_u=1,
        running_cost=lambda t, x, u: float(u @ u),
        endpoint_eq=[lambda xi, xb: xb[0] - 1.0],
    )
    u0 = ControlGrid.uniform(0.0, 1.0, np.zeros((2, 1)))
    return Preset(p, u0, np.zeros(1), "minimum energy transfer to x(1) = 1")


def _scalar_lq() -> Preset:
    p = OcpProblem(
        horizon=(0.0, 2.0),
        dynamics=lambda t, x, u: -x + u,
        n_x=1,
        n_u=1,
        running_cost=lambda t, x, u: float(x @ x + 0.1 * u @ u),
        endpoint_cost=lambda xi, xb: float(5.0 * xb @ xb),
        dt_step=0.1,
    )
    u0 = ControlGrid.uniform(0.0, 2.0, np.array([[0.3], [-0.7], [1.1], [0.2], [-0.4]]))
    return Preset(p, u0, np.array([1.5]), "scalar stable LQ, 5 intervals")


def _zero_cost() -> Preset:
    p = OcpProblem(
        horizon=(0.0, 1.0),
        dynamics=lambda t, x, u: -x + u,
        n_x=2,
        n_u=1,
    )
    u0 = ControlGrid.uniform(0.0, 1.0, np.array([[0.5], [-1.0], [2.0]]))
    return Preset(p, u0, np.array([1.0, -1.0]), "no cost terms")


SOLVE_PRESETS: Dict[str, Callable[[], Preset]] = {
    "lq-1interval": lambda: _integrator_lq(1),
    "lq-4interval": lambda: _integrator_lq(4),
    "clipped": _clipped,
    "endpoint-target": _endpoint_target,
    "lq-scalar": _scalar_lq,
    "zero-cost": _zero_cost,
}


Instance = Tuple[OcpProblem, ControlGrid, np.ndarray]


def random_smooth_instance(rng: np.random.Generator) -> Instance:
    """A random nonlinear problem with at most 4 states, 2 controls and 10 intervals.

    Dynamics are a stable linear part plus a bounded ``tanh`` coupling; costs
    are quadratic plus a smooth cross term, so every derivative exists.
    """
    n_x = int(rng.integers(1, 5))
    n_u = int(rng.integers(1, 3))
    N = int(rng.integers(1, 11))
    T = float(rng.uniform(0.5, 2.0))
    A = rng.normal(size=(n_x, n_x)) - 2.0 * np.eye(n_x)
    B = rng.normal(size=(n_x, n_u))
    E = 0.3 * rng.normal(size=(n_x, n_x))
    Q = np.diag(rng.uniform(0.1, 2.0, n_x))
    R = np.diag(rng.uniform(0.1, 1.0, n_u))
    S = np.diag(rng.uniform(0.5, 3.0, n_x))
    c = 0.2 * rng.normal(size=n_x)

    def h(t, x, u):
        return A @ x + B @ u + E @ np.tanh(x) + 0.1 * np.sin(t) * c

    def l(t, x, u):
        return float(x @ Q @ x + u @ R @ u + 0.1 * np.sin(x[0]) * u[0])

    def g(xi, xb):
        return float(xb @ S @ xb + 0.2 * xi @ xb)

    bounded = bool(rng.integers(0, 2))
    p = OcpProblem(
        horizon=(0.0, T),
        dynamics=h,
        n_x=n_x,
        n_u=n_u,
        running_cost=l,
        endpoint_cost=g,
        initial_bounds=(-2.0 * np.ones(n_x), 2.0 * np.ones(n_x)) if bounded else None,
        dt_step=T / N / int(rng.integers(1, 4)),
    )
    u = ControlGrid.uniform(0.0, T, rng.normal(size=(N, n_u)))
    xi = rng.uniform(-1.0, 1.0, n_x)
    return p, u, xi


def random_battery(count: int = 24, seed: int = 20240101) -> List[Instance]:
    rng = np.random.default_rng(seed)
    return [random_smooth_instance(rng) for _ in range(count)]


def gradcheck_battery(name: str) -> List[Instance]:
    """Instances checked by the ``gradcheck`` command for preset ``name``."""
    if name == "random":
        return random_battery()
    if name not in SOLVE_PRESETS:
        raise KeyError(name)
    pre = SOLVE_PRESETS[name]()
    return [(pre.problem, pre.u0, pre.xi0)]


PRESET_NAMES = tuple(SOLVE_PRESETS) + ("random",)
