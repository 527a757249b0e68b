"""Surrogate plant, scenario scripting and the sampled closed loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .ci import CiCompensator
from .errors import DimensionError, DivergenceError
from .model import StateSpaceModel, _vec, output, rk4_step, steps_per_interval
from .mpc import RmpcConfig, RmpcController
from .observer import LuenbergerObserver

log = logging.getLogger(__name__)


class SurrogatePlant:
    """Linear deviation-variable core wrapped in absolute units.

    The plant clips commands to ``[u_min, u_max]``, scales the input matrix
    column-wise by ``gain_mismatch``, integrates with RK4 and optionally passes
    the linear output through ``y + eps * diag(y) M y``.  Gaussian process
    noise (``sigma_w``, added to the state once per sample) and measurement
    noise (``sigma_v``) are drawn from a generator seeded by :meth:`reset`.
    """

    def __init__(
        self,
        core: StateSpaceModel,
        u_op,
        y_op,
        u_min,
        u_max,
        gain_mismatch=None,
        nonlinearity_eps: float = 0.0,
        coupling=None,
        sigma_w=None,
        sigma_v=None,
        dt_step: float = 0.1,
        seed: Optional[int] = 0,
    ):
        if core.is_discrete:
            raise ValueError("plant core must be continuous-time")
        self.core = core
        self.u_op = _vec(u_op, core.n_u, "u_op")
        self.y_op = _vec(y_op, core.n_y, "y_op")
        self.u_min = _vec(u_min, core.n_u, "u_min")
        self.u_max = _vec(u_max, core.n_u, "u_max")
        if np.any(self.u_min >= self.u_max):
            raise ValueError("input limits must satisfy lower < upper")
        self.gain_mismatch = np.ones(core.n_u) if gain_mismatch is None else _vec(gain_mismatch, core.n_u, "gain_mismatch")
        self.nonlinearity_eps = float(nonlinearity_eps)
        self.coupling = np.eye(core.n_y) if coupling is None else np.asarray(coupling, dtype=float)
        if self.coupling.shape != (core.n_y, core.n_y):
            raise DimensionError(f"coupling must be {core.n_y}x{core.n_y}")
        self.sigma_w = np.zeros(core.n_x) if sigma_w is None else _vec(sigma_w, core.n_x, "sigma_w")
        self.sigma_v = np.zeros(core.n_y) if sigma_v is None else _vec(sigma_v, core.n_y, "sigma_v")
        if np.any(self.sigma_w < 0) or np.any(self.sigma_v < 0):
            raise ValueError("noise standard deviations must be non-negative")
        self.dt_step = float(dt_step)
        self._B = core.B * self.gain_mismatch
        self.seed = seed
        self.reset(seed)

    # -- state -----------------------------------------------------------------
    def reset(self, seed: Optional[int] = None, x0=None):
        self.x = np.zeros(self.core.n_x) if x0 is None else _vec(x0, self.core.n_x, "x0")
        self.u_dev = np.zeros(self.core.n_u)
        self.output_offset = np.zeros(self.core.n_y)
        self.t = 0.0
        self.rng = np.random.default_rng(self.seed if seed is None else seed)

    @property
    def n_x(self) -> int:
        return self.core.n_x

    @property
    def n_u(self) -> int:
        return self.core.n_u

    @property
    def n_y(self) -> int:
        return self.core.n_y

    def clip(self, u_command) -> np.ndarray:
        return np.clip(_vec(u_command, self.n_u, "u_command"), self.u_min, self.u_max)

    def _f(self, t, x, u):
        return self.core.A @ x + self._B @ u

    def output_map(self, y_lin) -> np.ndarray:
        if self.nonlinearity_eps == 0.0:
            return y_lin
        return y_lin + self.nonlinearity_eps * y_lin * (self.coupling @ y_lin)

    def noise_free_output(self) -> np.ndarray:
        """Absolute output from the current state and the held input."""
        y_lin = output(self.core, self.x, self.u_dev)
        return self.y_op + self.output_map(y_lin) + self.output_offset

    def measure(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return ``(y, y_noisefree)`` in absolute units."""
        y_nf = self.noise_free_output()
        if np.any(self.sigma_v > 0):
            return y_nf + self.sigma_v * self.rng.normal(size=self.n_y), y_nf
        return y_nf.copy(), y_nf

    def advance(self, u_command, dt) -> np.ndarray:
        """Clip, hold ``u_command`` for ``dt`` seconds and return the applied input."""
        if not dt > 0:
            raise ValueError("dt must be positive")
        u_abs = self.clip(u_command)
        u = u_abs - self.u_op
        n = steps_per_interval(dt, min(self.dt_step, dt))
        h = dt / n
        x = self.x
        for k in range(n):
            x = rk4_step(self._f, self.t + k * h, x, u, h)
        if np.any(self.sigma_w > 0):
            x = x + self.sigma_w * self.rng.normal(size=self.n_x)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"plant state became non-finite at t={self.t + dt:g}", time=self.t + dt)
        self.x = x
        self.u_dev = u
        self.t += dt
        return u_abs


def plant_step(p: SurrogatePlant, u_command, dt) -> np.ndarray:
    """Apply ``u_command`` for one step and return the new (noisy) absolute output."""
    p.advance(u_command, dt)
    return p.measure()[0]


# -- scenario ----------------------------------------------------------------------

@dataclass(frozen=True)
class Disturbance:
    """Step disturbance starting at ``time``.

    ``target="output"`` adds a persistent offset to output ``index``;
    ``target="state"`` shifts state ``index`` once.
    """

    time: float
    target: str
    index: int
    offset: float

    def __post_init__(self):
        if self.target not in ("output", "state"):
            raise ValueError(f"disturbance target must be 'output' or 'state', got {self.target!r}")


@dataclass(frozen=True)
class Scenario:
    duration: float
    references: Tuple[Tuple[Tuple[float, float], ...], ...]
    disturbances: Tuple[Disturbance, ...] = ()
    initial_reference: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        refs = tuple(tuple((float(t), float(v)) for t, v in ch) for ch in self.references)
        for ch in refs:
            times = [t for t, _ in ch]
            if any(t < 0 or t > self.duration for t in times) or any(b < a for a, b in zip(times, times[1:])):
                raise ValueError("reference step times must be non-decreasing and within [0, duration]")
        dist = tuple(self.disturbances)
        dtimes = [d.time for d in dist]
        if any(t < 0 or t > self.duration for t in dtimes) or any(b < a for a, b in zip(dtimes, dtimes[1:])):
            raise ValueError("disturbance times must be non-decreasing and within [0, duration]")
        object.__setattr__(self, "references", refs)
        object.__setattr__(self, "disturbances", dist)

    def reference(self, t: float, default) -> np.ndarray:
        base = np.asarray(default if self.initial_reference is None else self.initial_reference, dtype=float)
        r = base.copy()
        for j, ch in enumerate(self.references):
            for ts, v in ch:
                if t >= ts - 1e-9:
                    r[j] = v
        return r

    def n_samples(self, dt_sample: float) -> int:
        return steps_per_interval(self.duration, dt_sample)


# -- controllers -------------------------------------------------------------------

@dataclass
class StepInfo:
    r_mpc: np.ndarray
    x_hat: np.ndarray
    iterations: int = 0
    converged: bool = False
    fallback: bool = False


class RmpcCiController:
    """Observer, conditional-integral shaper and receding-horizon controller in series.

    All internal signals are deviations from the plant's operating point.
    """

    def __init__(self, model: StateSpaceModel, cfg: RmpcConfig, observer: LuenbergerObserver,
                 ci: CiCompensator, u_op, y_op):
        self.model = model
        self.cfg = cfg
        self.observer = observer
        self.ci = ci
        self.rmpc = RmpcController(model, cfg)
        self.u_op = np.asarray(u_op, dtype=float)
        self.y_op = np.asarray(y_op, dtype=float)
        self._k = 0
        self._u_prev = np.zeros(model.n_u)

    def reset(self):
        self.observer.reset()
        self.ci.reset()
        self.rmpc.reset()
        self._k = 0
        self._u_prev = np.zeros(self.model.n_u)

    def command(self, r_d, y, u_applied_prev):
        y_dev = y - self.y_op
        if self._k > 0:
            self.observer.update(y_dev, u_applied_prev - self.u_op)
        self._k += 1
        x_hat = self.observer.x_hat.copy()
        r_mpc = self.ci.shape_reference(r_d - self.y_op, y_dev)
        u_dev = self.rmpc.step(x_hat, r_mpc)
        st = self.rmpc.state
        res = st.last_result
        info = StepInfo(
            r_mpc=r_mpc + self.y_op,
            x_hat=x_hat,
            iterations=0 if st.fallback or res is None else res.iterations,
            converged=False if st.fallback or res is None else res.converged,
            fallback=st.fallback,
        )
        return self.u_op + u_dev, info


class PidController:
    """Adapter running a :class:`~rhmpc.baseline.DecentralizedPid` in the loop."""

    def __init__(self, pid, n_x: int):
        self.pid = pid
        self.n_x = n_x

    def reset(self):
        self.pid.reset()

    def command(self, r_d, y, u_applied_prev):
        u = self.pid.step(r_d, y)
        nan = np.full(self.n_x, np.nan)
        return u, StepInfo(r_mpc=np.asarray(r_d, dtype=float).copy(), x_hat=nan)


class ConstantController:
    def __init__(self, u, n_x: int):
        self.u = np.asarray(u, dtype=float)
        self.n_x = n_x

    def reset(self):
        pass

    def command(self, r_d, y, u_applied_prev):
        return self.u.copy(), StepInfo(r_mpc=np.asarray(r_d, dtype=float).copy(), x_hat=np.full(self.n_x, np.nan))


# -- trace -----------------------------------------------------------------------

_VECTOR_FIELDS = ("r_d", "r_mpc", "y", "y_noisefree", "x_true", "x_hat", "u_command", "u_applied")
_SCALAR_FIELDS = ("solver_iterations", "solver_converged", "fallback_flag")


@dataclass
class TraceLog:
    """Per-sample record of a closed-loop run (absolute units except ``x_true``/``x_hat``)."""

    t: np.ndarray
    r_d: np.ndarray
    r_mpc: np.ndarray
    y: np.ndarray
    y_noisefree: np.ndarray
    x_true: np.ndarray
    x_hat: np.ndarray
    u_command: np.ndarray
    u_applied: np.ndarray
    solver_iterations: np.ndarray
    solver_converged: np.ndarray
    fallback_flag: np.ndarray

    def __len__(self):
        return self.t.size

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    def columns(self) -> List[str]:
        cols = ["t"]
        for name in _VECTOR_FIELDS:
            cols += [f"{name}_{j}" for j in range(getattr(self, name).shape[1])]
        return cols + list(_SCALAR_FIELDS)

    def rows(self):
        for k in range(len(self)):
            row = [repr(float(self.t[k]))]
            for name in _VECTOR_FIELDS:
                row += [repr(float(v)) for v in getattr(self, name)[k]]
            row += [str(int(getattr(self, name)[k])) for name in _SCALAR_FIELDS]
            yield row

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            w.writerows(self.rows())

    @classmethod
    def from_csv(cls, path) -> "TraceLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(v) for v in row] for row in reader], dtype=float).reshape(-1, len(header))
        col = {name: i for i, name in enumerate(header)}
        kw = {"t": data[:, col["t"]]}
        for name in _VECTOR_FIELDS:
            idx = [i for h, i in col.items() if h.rsplit("_", 1)[0] == name and h.rsplit("_", 1)[1].isdigit()]
            kw[name] = data[:, sorted(idx)]
        for name in _SCALAR_FIELDS:
            kw[name] = data[:, col[name]].astype(int)
        return cls(**kw)


def run_closed_loop(p: SurrogatePlant, controller, sc: Scenario, dt_sample: float,
                    seed: Optional[int] = None) -> TraceLog:
    """Simulate ``sc`` with ``controller`` commanding ``p`` once per sample.

    Each sample: apply scheduled disturbances, measure, let the controller
    compute a command, clip it to the plant limits, log, then integrate the
    plant over the sample.
    """
    n = sc.n_samples(dt_sample)
    p.reset(seed)
    controller.reset()
    n_x, n_y, n_u = p.n_x, p.n_y, p.n_u
    buf = {name: np.empty((n, w)) for name, w in (
        ("r_d", n_y), ("r_mpc", n_y), ("y", n_y), ("y_noisefree", n_y), ("x_true", n_x),
        ("x_hat", n_x), ("u_command", n_u), ("u_applied", n_u))}
    iters = np.zeros(n, dtype=int)
    conv = np.zeros(n, dtype=int)
    fb = np.zeros(n, dtype=int)
    times = np.arange(n) * dt_sample
    pending = list(sc.disturbances)
    u_prev = p.u_op.copy()
    for k in range(n):
        t = times[k]
        while pending and pending[0].time <= t + 1e-9:
            d = pending.pop(0)
            if d.target == "output":
                p.output_offset[d.index] += d.offset
            else:
                p.x[d.index] += d.offset
        y, y_nf = p.measure()
        r_d = sc.reference(t, p.y_op)
        try:
            u_cmd, info = controller.command(r_d, y, u_prev)
        except DivergenceError as exc:
            raise DivergenceError(f"controller diverged at t={t:g}: {exc}", time=t) from exc
        u_app = p.clip(u_cmd)
        buf["r_d"][k] = r_d
        buf["r_mpc"][k] = info.r_mpc
        buf["y"][k] = y
        buf["y_noisefree"][k] = y_nf
        buf["x_true"][k] = p.x
        buf["x_hat"][k] = info.x_hat
        buf["u_command"][k] = u_cmd
        buf["u_applied"][k] = u_app
        iters[k] = info.iterations
        conv[k] = int(info.converged)
        fb[k] = int(info.fallback)
        try:
            p.advance(u_app, dt_sample)
        except DivergenceError as exc:
            raise DivergenceError(f"plant diverged during the sample starting at t={t:g}", time=t) from exc
        u_prev = u_app
    return TraceLog(t=times, solver_iterations=iters, solver_converged=conv, fallback_flag=fb, **buf)


def surrogate_core(dc_gain, time_constants, split=0.5) -> StateSpaceModel:
    """Two-state chain per output: a measured state fed by a hidden slower state.

    For output ``i`` with measured state ``m = 2i`` and hidden state ``h = 2i + 1``::

        x_m' = (-x_m + x_h + s K_i u) / tau_m
        x_h' = (-x_h + (1 - s) K_i u) / tau_h

    so the DC gain from ``u`` to ``y_i = x_m`` is the row ``K_i``.
    """
    K = np.asarray(dc_gain, dtype=float)
    taus = np.asarray(time_constants, dtype=float)
    n_y, n_u = K.shape
    split = np.broadcast_to(np.asarray(split, dtype=float), (n_y,))
    if taus.shape != (n_y, 2) or np.any(taus <= 0):
        raise DimensionError("time_constants must be positive pairs (tau_measured, tau_hidden) per output")
    if np.any((split < 0) | (split > 1)):
        raise ValueError("split must lie in [0, 1]")
    n_x = 2 * n_y
    A = np.zeros((n_x, n_x))
    B = np.zeros((n_x, n_u))
    C = np.zeros((n_y, n_x))
    for i in range(n_y):
        m, h = 2 * i, 2 * i + 1
        tm, th = taus[i]
        A[m, m] = -1.0 / tm
        A[m, h] = 1.0 / tm
        A[h, h] = -1.0 / th
        B[m] = split[i] * K[i] / tm
        B[h] = (1.0 - split[i]) * K[i] / th
        C[i, m] = 1.0
    return StateSpaceModel(A, B, C)
