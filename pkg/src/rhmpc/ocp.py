"""Constrained optimal control by direct single shooting.

Problem class::

    min  g_o(xi, x(b)) + int_a^b l_o(t, x, u) dt
    s.t. xdot = h(t, x, u),  x(a) = xi
         u_min(t) <= u(t) <= u_max(t),  xi_min <= xi <= xi_max
         l_ti(t, x, u) <= 0,  g_ei(xi, x(b)) <= 0,  g_ee(xi, x(b)) = 0

Controls are piecewise constant on a uniform grid.  The running cost is
accumulated by the same RK4 stages that advance the state, and the gradient
is the exact discrete adjoint of that scheme.  Box bounds are handled by
projection; all other constraints enter through quadratic penalties.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DimensionError, DivergenceError
from .grid import ControlGrid
from .model import Trajectory, steps_per_interval

log = logging.getLogger(__name__)

_RK4_WEIGHTS = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0)


@dataclass
class OcpProblem:
    """Optimal control problem description.

    Bounds may be constant vectors or callables of time.  ``initial_bounds``
    makes the initial state a decision variable; otherwise it is fixed to the
    value passed to :func:`solve`.  The optional ``*_jac``/``*_grad`` hooks
    supply analytic derivatives; missing ones are formed by central
    differences.
    """

    horizon: Tuple[float, float]
    dynamics: Callable
    n_x: int
    n_u: int
    running_cost: Optional[Callable] = None
    endpoint_cost: Optional[Callable] = None
    control_lower: object = -np.inf
    control_upper: object = np.inf
    initial_bounds: Optional[Tuple[Sequence[float], Sequence[float]]] = None
    trajectory_ineq: List[Callable] = field(default_factory=list)
    endpoint_ineq: List[Callable] = field(default_factory=list)
    endpoint_eq: List[Callable] = field(default_factory=list)
    dt_step: Optional[float] = None
    dynamics_jac: Optional[Callable] = None
    running_cost_grad: Optional[Callable] = None
    endpoint_cost_grad: Optional[Callable] = None

    def __post_init__(self):
        a, b = self.horizon
        if not a < b:
            raise ValueError(f"horizon must satisfy a < b, got {self.horizon}")
        for t in np.linspace(a, b, 11):
            lo, hi = self.bounds_at(t)
            if np.any(lo > hi):
                raise ValueError(f"control bounds cross at t={t:g}")
        if self.initial_bounds is not None:
            lo = np.asarray(self.initial_bounds[0], dtype=float)
            hi = np.asarray(self.initial_bounds[1], dtype=float)
            if lo.shape != (self.n_x,) or hi.shape != (self.n_x,):
                raise DimensionError("initial_bounds must be two n_x-vectors")
            if np.any(lo > hi):
                raise ValueError("initial-state bounds cross")
            self.initial_bounds = (lo, hi)

    def bounds_at(self, t):
        lo = self.control_lower(t) if callable(self.control_lower) else self.control_lower
        hi = self.control_upper(t) if callable(self.control_upper) else self.control_upper
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (self.n_u,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (self.n_u,))
        return lo, hi

    @property
    def has_constraints(self) -> bool:
        return bool(self.trajectory_ineq or self.endpoint_ineq or self.endpoint_eq)

    @property
    def free_initial_state(self) -> bool:
        return self.initial_bounds is not None


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 100
    grad_mode: str = "adjoint"
    fd_step: float = 1e-6
    armijo_c1: float = 1e-4
    armijo_backtrack: float = 0.5
    armijo_max_backtracks: int = 30
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_rounds: int = 4
    tol_grad: float = 1e-6
    tol_constraint: float = 1e-6

    def __post_init__(self):
        if self.grad_mode not in ("adjoint", "finite_difference"):
            raise ConfigError(f"unknown grad_mode {self.grad_mode!r}", key="grad_mode")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0", key="max_iters")
        for name in ("fd_step", "tol_grad", "tol_constraint", "penalty_init", "armijo_c1"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive", key=name)
        if not 0 < self.armijo_backtrack < 1:
            raise ConfigError("armijo_backtrack must lie in (0, 1)", key="armijo_backtrack")
        if self.penalty_growth < 1 or self.penalty_rounds < 1:
            raise ConfigError("penalty_growth must be >= 1 and penalty_rounds >= 1", key="penalty_rounds")


@dataclass(frozen=True)
class SolveResult:
    u_star: ControlGrid
    xi_star: np.ndarray
    x_star: Trajectory
    f_star: float
    iterations: int
    constraint_violation: float
    converged: bool
    grad_norm: float
    history: Tuple[Tuple[float, ...], ...] = ()


# -- derivative helpers -------------------------------------------------------

def _fd_jacobian(fun, v, eps=1e-6):
    """Central-difference Jacobian of ``fun`` (vector or scalar valued) at ``v``."""
    v = np.asarray(v, dtype=float)
    f0 = np.atleast_1d(fun(v))
    J = np.empty((f0.size, v.size))
    for i in range(v.size):
        h = eps * max(1.0, abs(v[i]))
        vp = v.copy()
        vm = v.copy()
        vp[i] += h
        vm[i] -= h
        J[:, i] = (np.atleast_1d(fun(vp)) - np.atleast_1d(fun(vm))) / (2 * h)
    return J


def _dyn_jac(p: OcpProblem, t, x, u):
    if p.dynamics_jac is not None:
        hx, hu = p.dynamics_jac(t, x, u)
        return np.asarray(hx, dtype=float), np.asarray(hu, dtype=float)
    hx = _fd_jacobian(lambda z: p.dynamics(t, z, u), x)
    hu = _fd_jacobian(lambda w: p.dynamics(t, x, w), u)
    return hx, hu


def _scalar_grad2(fun, a, b):
    ga = _fd_jacobian(lambda z: fun(z, b), a)
    gb = _fd_jacobian(lambda w: fun(a, w), b)
    return ga, gb


def _running_grad(p: OcpProblem, rho, t, x, u):
    """Gradient of ``l_o + rho * sum max(0, l_ti)^2`` with respect to (x, u)."""
    if p.running_cost is None:
        lx, lu = np.zeros(p.n_x), np.zeros(p.n_u)
    elif p.running_cost_grad is not None:
        lx, lu = p.running_cost_grad(t, x, u)
        lx, lu = np.asarray(lx, dtype=float), np.asarray(lu, dtype=float)
    else:
        jx, ju = _scalar_grad2(lambda z, w: p.running_cost(t, z, w), x, u)
        lx, lu = jx[0], ju[0]
    if rho and p.trajectory_ineq:
        for con in p.trajectory_ineq:
            c = np.atleast_1d(con(t, x, u))
            active = np.maximum(c, 0.0)
            if np.any(active > 0):
                jx, ju = _scalar_grad2(lambda z, w: con(t, z, w), x, u)
                lx = lx + rho * 2.0 * active @ jx
                lu = lu + rho * 2.0 * active @ ju
    return lx, lu


def _endpoint_grad(p: OcpProblem, rho, xi, xb):
    """Gradient of the penalized endpoint term with respect to (xi, x(b))."""
    if p.endpoint_cost is None:
        gxi, gxb = np.zeros(p.n_x), np.zeros(p.n_x)
    elif p.endpoint_cost_grad is not None:
        gxi, gxb = p.endpoint_cost_grad(xi, xb)
        gxi, gxb = np.asarray(gxi, dtype=float), np.asarray(gxb, dtype=float)
    else:
        ja, jb = _scalar_grad2(p.endpoint_cost, xi, xb)
        gxi, gxb = ja[0], jb[0]
    if rho:
        for con in p.endpoint_ineq:
            c = np.maximum(np.atleast_1d(con(xi, xb)), 0.0)
            if np.any(c > 0):
                ja, jb = _scalar_grad2(con, xi, xb)
                gxi = gxi + rho * 2.0 * c @ ja
                gxb = gxb + rho * 2.0 * c @ jb
        for con in p.endpoint_eq:
            c = np.atleast_1d(con(xi, xb))
            ja, jb = _scalar_grad2(con, xi, xb)
            gxi = gxi + rho * 2.0 * c @ ja
            gxb = gxb + rho * 2.0 * c @ jb
    return gxi, gxb


# -- forward pass ------------------------------------------------------------

@dataclass
class _Pass:
    cost: float            # g_o + int l_o
    penalty: float         # unweighted penalty sum
    violation: float
    xi: np.ndarray
    times: np.ndarray
    states: np.ndarray
    steps: list            # (interval, t, h, Z1, Z2, Z3, Z4)

    def augmented(self, rho):
        return self.cost + rho * self.penalty


def _check_grid(p: OcpProblem, u: ControlGrid):
    if u.n_u != p.n_u:
        raise DimensionError(f"control grid has {u.n_u} channels, problem expects {p.n_u}")
    a, b = u.span
    if abs(a - p.horizon[0]) > 1e-9 or abs(b - p.horizon[1]) > 1e-9:
        raise ValueError(f"control grid spans [{a}, {b}], horizon is {p.horizon}")


def _stage_ineq(p: OcpProblem, t, x, u):
    pen = 0.0
    worst = 0.0
    for con in p.trajectory_ineq:
        c = np.atleast_1d(con(t, x, u))
        pos = np.maximum(c, 0.0)
        pen += float(pos @ pos)
        worst = max(worst, float(pos.max(initial=0.0)))
    return pen, worst


def _forward(p: OcpProblem, u: ControlGrid, xi, store=False) -> _Pass:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (p.n_x,):
        raise DimensionError(f"initial state must have shape ({p.n_x},), got {xi.shape}")
    x = xi.copy()
    f, lo = p.dynamics, p.running_cost
    has_l = lo is not None
    has_ti = bool(p.trajectory_ineq)
    q = 0.0
    q_pen = 0.0
    worst = 0.0
    times = [u.breakpoints[0]]
    states = [x]
    steps = [] if store else None
    for i in range(u.N):
        t0, t1 = u.breakpoints[i], u.breakpoints[i + 1]
        n = 1 if p.dt_step is None else steps_per_interval(t1 - t0, p.dt_step)
        h = (t1 - t0) / n
        ui = u.values[i]
        for k in range(n):
            t = t0 + k * h
            tm, te = t + 0.5 * h, t + h
            Z1 = x
            k1 = f(t, Z1, ui)
            Z2 = x + 0.5 * h * k1
            k2 = f(tm, Z2, ui)
            Z3 = x + 0.5 * h * k2
            k3 = f(tm, Z3, ui)
            Z4 = x + h * k3
            k4 = f(te, Z4, ui)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"non-finite state at t={te:g}", time=te)
            if has_l:
                q += (h / 6.0) * (lo(t, Z1, ui) + 2.0 * lo(tm, Z2, ui) + 2.0 * lo(tm, Z3, ui) + lo(te, Z4, ui))
            if has_ti:
                for w, ts, Z in zip(_RK4_WEIGHTS, (t, tm, tm, te), (Z1, Z2, Z3, Z4)):
                    pen, wv = _stage_ineq(p, ts, Z, ui)
                    q_pen += w * h * pen
                    worst = max(worst, wv)
            times.append(te)
            states.append(x)
            if store:
                steps.append((i, t, h, Z1, Z2, Z3, Z4))
    cost = q + (float(p.endpoint_cost(xi, x)) if p.endpoint_cost is not None else 0.0)
    pen_end = 0.0
    for con in p.endpoint_ineq:
        c = np.maximum(np.atleast_1d(con(xi, x)), 0.0)
        pen_end += float(c @ c)
        worst = max(worst, float(c.max(initial=0.0)))
    for con in p.endpoint_eq:
        c = np.atleast_1d(con(xi, x))
        pen_end += float(c @ c)
        worst = max(worst, float(np.abs(c).max(initial=0.0)))
    if not np.isfinite(cost) or not np.isfinite(q_pen + pen_end):
        raise DivergenceError("non-finite cost", time=u.breakpoints[-1])
    return _Pass(cost, q_pen + pen_end, worst, xi, np.array(times), np.array(states), steps)


def _trajectory(fw: _Pass) -> Trajectory:
    return Trajectory(fw.times, fw.states, fw.states.copy())


def _adjoint(p: OcpProblem, u: ControlGrid, fw: _Pass, rho):
    """Reverse sweep through the stored RK4 stages."""
    gxi, lam = _endpoint_grad(p, rho, fw.xi, fw.states[-1])
    grad_u = np.zeros_like(u.values)
    for i, t, h, Z1, Z2, Z3, Z4 in reversed(fw.steps):
        ui = u.values[i]
        tm, te = t + 0.5 * h, t + h
        kb = [h * w * lam for w in _RK4_WEIGHTS]
        lam_new = lam.copy()
        ub = np.zeros(p.n_u)
        # stage 4, then 3, 2, 1; each feeds the previous stage's k-adjoint
        for s, ts, Z, feed in ((3, te, Z4, 1.0), (2, tm, Z3, 0.5), (1, tm, Z2, 0.5), (0, t, Z1, None)):
            hx, hu = _dyn_jac(p, ts, Z, ui)
            lx, lu = _running_grad(p, rho, ts, Z, ui)
            w = h * _RK4_WEIGHTS[s]
            Zb = hx.T @ kb[s] + w * lx
            ub += hu.T @ kb[s] + w * lu
            lam_new += Zb
            if feed is not None:
                kb[s - 1] = kb[s - 1] + feed * h * Zb
        lam = lam_new
        grad_u[i] += ub
    gxi = gxi + lam
    return grad_u, gxi


# -- public operations ----------------------------------------------------------

def evaluate_cost(p: OcpProblem, u: ControlGrid, xi) -> Tuple[float, Trajectory]:
    """Cost ``g_o(xi, x(b)) + int l_o dt`` and the state trajectory."""
    _check_grid(p, u)
    fw = _forward(p, u, xi)
    return fw.cost, _trajectory(fw)


def _objective_and_grad(p, u, xi, rho, mode="adjoint", fd_step=1e-6):
    if mode == "adjoint":
        fw = _forward(p, u, xi, store=True)
        gu, gxi = _adjoint(p, u, fw, rho)
        return fw, gu, gxi
    fw = _forward(p, u, xi)
    gu = np.zeros_like(u.values)
    flat = u.values.ravel()
    for j in range(flat.size):
        hstep = _fd_increment(flat[j], fd_step)
        up, um = flat.copy(), flat.copy()
        up[j] += hstep
        um[j] -= hstep
        fp = _forward(p, u.with_values(up), xi).augmented(rho)
        fm = _forward(p, u.with_values(um), xi).augmented(rho)
        gu.flat[j] = (fp - fm) / (2 * hstep)
    gxi = np.zeros(p.n_x)
    if p.free_initial_state:
        xi = np.asarray(xi, dtype=float)
        for j in range(p.n_x):
            hstep = _fd_increment(xi[j], fd_step)
            xp, xm = xi.copy(), xi.copy()
            xp[j] += hstep
            xm[j] -= hstep
            gxi[j] = (_forward(p, u, xp).augmented(rho) - _forward(p, u, xm).augmented(rho)) / (2 * hstep)
    return fw, gu, gxi


def _fd_increment(v, fd_step):
    h = fd_step * max(1.0, abs(v))
    if v + h == v or v - h == v:
        raise ConfigError(f"fd_step={fd_step} underflows at parameter value {v!r}", key="fd_step")
    return h


def gradient(p: OcpProblem, u: ControlGrid, xi, mode="adjoint", fd_step=1e-6):
    """Gradient of the cost with respect to the control values and the initial state.

    Returns
    -------
    grad_u : ndarray, shape (N, n_u)
    grad_xi : ndarray, shape (n_x,)
        Zero unless the initial state is a decision variable.
    """
    if mode not in ("adjoint", "finite_difference"):
        raise ConfigError(f"unknown gradient mode {mode!r}", key="grad_mode")
    if not fd_step > 0:
        raise ConfigError("fd_step must be positive", key="fd_step")
    _check_grid(p, u)
    _, gu, gxi = _objective_and_grad(p, u, xi, 0.0, mode, fd_step)
    if not p.free_initial_state:
        gxi = np.zeros(p.n_x)
    return gu, gxi


def control_bounds(p: OcpProblem, grid: ControlGrid):
    """Per-interval bounds: the intersection of the bounds at both breakpoints."""
    lo = np.empty_like(grid.values)
    hi = np.empty_like(grid.values)
    for i in range(grid.N):
        l0, h0 = p.bounds_at(grid.breakpoints[i])
        l1, h1 = p.bounds_at(grid.breakpoints[i + 1])
        lo[i] = np.maximum(l0, l1)
        hi[i] = np.minimum(h0, h1)
    if np.any(lo > hi):
        raise ValueError("control bounds are empty on some interval")
    return lo, hi


def project(p: OcpProblem, grid: ControlGrid) -> ControlGrid:
    lo, hi = control_bounds(p, grid)
    return grid.with_values(np.clip(grid.values, lo, hi))


class _Decision:
    """Flat view of the decision vector: control values, then the free initial state."""

    def __init__(self, p: OcpProblem, grid: ControlGrid, xi):
        self.p = p
        self.grid = grid
        self.nu = grid.values.size
        lo, hi = control_bounds(p, grid)
        lo, hi = lo.ravel(), hi.ravel()
        self.xi_fixed = np.asarray(xi, dtype=float)
        if p.free_initial_state:
            lo = np.concatenate([lo, p.initial_bounds[0]])
            hi = np.concatenate([hi, p.initial_bounds[1]])
        self.lo, self.hi = lo, hi

    def pack(self, values, xi):
        if self.p.free_initial_state:
            return np.concatenate([np.ravel(values), xi])
        return np.ravel(values).copy()

    def unpack(self, z):
        grid = self.grid.with_values(z[: self.nu])
        xi = z[self.nu:] if self.p.free_initial_state else self.xi_fixed
        return grid, xi

    def project(self, z):
        return np.clip(z, self.lo, self.hi)


def solve(p: OcpProblem, u0: ControlGrid, xi0, opts: Optional[SolveOptions] = None) -> SolveResult:
    """Projected-gradient single shooting with Armijo backtracking and penalty escalation.

    Each round minimizes the cost plus ``rho`` times the squared constraint
    violations; ``rho`` grows by ``penalty_growth`` until the violation drops
    below ``tol_constraint`` or ``penalty_rounds`` is used up.  The trial step
    of every iteration is a Barzilai-Borwein estimate, shortened until the
    Armijo condition along the projection arc holds, so accepted iterates
    never increase the penalized cost of their round.
    """
    opts = opts or SolveOptions()
    _check_grid(p, u0)
    dec = _Decision(p, u0, xi0)
    z = dec.project(dec.pack(u0.values, np.asarray(xi0, dtype=float)))

    constrained = p.has_constraints
    rounds = opts.penalty_rounds if constrained else 1
    rho = opts.penalty_init if constrained else 0.0

    def evaluate(zv, with_grad):
        grid, xi = dec.unpack(zv)
        if not with_grad:
            return _forward(p, grid, xi), None
        fw, gu, gxi = _objective_and_grad(p, grid, xi, rho, opts.grad_mode, opts.fd_step)
        g = dec.pack(gu, gxi) if p.free_initial_state else gu.ravel()
        return fw, g

    iterations = 0
    history = []
    candidates = []
    alpha0 = None
    for _ in range(rounds):
        fw, g = evaluate(z, True)
        f = fw.augmented(rho)
        round_hist = [f]
        alpha = alpha0
        while True:
            step_unit = dec.project(z - g) - z
            pg_norm = float(np.linalg.norm(step_unit))
            if pg_norm <= opts.tol_grad or iterations >= opts.max_iters:
                break
            if alpha is None:
                alpha = 1.0 / max(float(np.abs(g).max()), 1e-12)
            accepted = False
            for _bt in range(opts.armijo_max_backtracks + 1):
                z_try = dec.project(z - alpha * g)
                d = z_try - z
                if not np.any(d):
                    break
                try:
                    fw_try, _ = evaluate(z_try, False)
                except DivergenceError:
                    alpha *= opts.armijo_backtrack
                    continue
                f_try = fw_try.augmented(rho)
                if f_try <= f + opts.armijo_c1 * float(g @ d):
                    accepted = True
                    break
                alpha *= opts.armijo_backtrack
            iterations += 1
            if not accepted:
                log.debug("line search stalled after %d iterations", iterations)
                break
            fw_new, g_new = evaluate(z_try, True)
            s, yv = z_try - z, g_new - g
            sy = float(s @ yv)
            alpha = float(s @ s) / sy if sy > 0 else alpha / opts.armijo_backtrack
            alpha = min(max(alpha, 1e-12), 1e12)
            z, fw, g, f = z_try, fw_new, g_new, fw_new.augmented(rho)
            round_hist.append(f)
        alpha0 = alpha
        history.append(tuple(round_hist))
        candidates.append((z.copy(), fw, pg_norm))
        if fw.violation <= opts.tol_constraint:
            break
        rho *= opts.penalty_growth

    def rank(c):
        _, fwc, _ = c
        excess = max(fwc.violation - opts.tol_constraint, 0.0)
        return (excess, fwc.cost)

    z_best, fw_best, pg_best = min(candidates, key=rank)
    grid, xi = dec.unpack(z_best)
    converged = pg_best <= opts.tol_grad and fw_best.violation <= opts.tol_constraint
    return SolveResult(
        u_star=grid,
        xi_star=np.array(xi, dtype=float),
        x_star=_trajectory(fw_best),
        f_star=float(fw_best.cost),
        iterations=iterations,
        constraint_violation=float(fw_best.violation),
        converged=bool(converged),
        grad_norm=pg_best,
        history=tuple(history),
    )
