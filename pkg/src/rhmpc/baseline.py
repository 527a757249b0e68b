"""Decentralized discrete PID baseline and its step-response tuning rule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import DimensionError
from .model import StateSpaceModel, discretize_zoh

#: (input index, output index) per loop: the valve follows superheat, the
#: compressor follows the secondary outlet temperature.
DEFAULT_PAIRING: Tuple[Tuple[int, int], ...] = ((0, 1), (1, 0))


class DecentralizedPid:
    """Independent positional PID loops with clamping anti-windup.

    Loop ``i`` drives input ``pairing[i][0]`` from the error on output
    ``pairing[i][1]``::

        u = u_op + kp e + ki I + kd D,   I = sum(e dt),
        D = alpha D + (1 - alpha) (e - e_prev) / dt

    The integrator holds its value whenever the command formed with the
    current integrator already violates a limit and the error would push it
    further out; the step that first reaches a limit is still integrated.
    """

    def __init__(self, kp, ki, u_op, u_min, u_max, dt_sample: float = 1.0, kd=None,
                 deriv_filter=None, pairing: Sequence[Tuple[int, int]] = DEFAULT_PAIRING):
        self.pairing = tuple((int(a), int(b)) for a, b in pairing)
        n = len(self.pairing)
        inputs = sorted(a for a, _ in self.pairing)
        if inputs != list(range(n)):
            raise DimensionError("pairing must assign every input exactly once")

        def vec(v, name, default=0.0):
            v = np.full(n, default) if v is None else np.asarray(v, dtype=float).ravel()
            if v.shape != (n,):
                raise DimensionError(f"{name} must have {n} entries")
            return v

        self.kp = vec(kp, "kp")
        self.ki = vec(ki, "ki")
        self.kd = vec(kd, "kd")
        self.alpha = vec(deriv_filter, "deriv_filter")
        if np.any((self.alpha < 0) | (self.alpha >= 1)):
            raise ValueError("deriv_filter must lie in [0, 1)")
        self.u_op = vec(u_op, "u_op")
        self.u_min = vec(u_min, "u_min")
        self.u_max = vec(u_max, "u_max")
        if np.any(self.u_min >= self.u_max):
            raise ValueError("u_min < u_max must hold componentwise")
        if not dt_sample > 0:
            raise ValueError("dt_sample must be positive")
        self.dt = float(dt_sample)
        self._in = np.array([a for a, _ in self.pairing])
        self._out = np.array([b for _, b in self.pairing])
        self.reset()

    def reset(self):
        n = len(self.pairing)
        self.integrator = np.zeros(n)
        self.deriv = np.zeros(n)
        self.e_prev = None

    def step(self, r_d, y) -> np.ndarray:
        """Clipped command for the current sample; inputs are in absolute units."""
        e_all = np.asarray(r_d, dtype=float) - np.asarray(y, dtype=float)
        e = e_all[self._out]
        de = np.zeros_like(e) if self.e_prev is None else (e - self.e_prev) / self.dt
        self.deriv = self.alpha * self.deriv + (1.0 - self.alpha) * de
        self.e_prev = e
        u_op, lo, hi = self.u_op[self._in], self.u_min[self._in], self.u_max[self._in]

        u_pre = u_op + self.kp * e + self.ki * self.integrator + self.kd * self.deriv
        push = self.ki * e
        windup = ((u_pre >= hi) & (push > 0)) | ((u_pre <= lo) & (push < 0))
        self.integrator = np.where(windup, self.integrator, self.integrator + e * self.dt)
        u_loop = u_op + self.kp * e + self.ki * self.integrator + self.kd * self.deriv
        u = np.empty_like(u_loop)
        u[self._in] = np.clip(u_loop, lo, hi)
        return u


def pid_step(c: DecentralizedPid, r_d, y) -> np.ndarray:
    return c.step(r_d, y)


@dataclass(frozen=True)
class FopdtFit:
    gain: float
    tau: float
    theta: float


def fit_fopdt(m: StateSpaceModel, input_index: int, output_index: int, dt: float = 0.05,
              t_end: float = 2000.0) -> FopdtFit:
    """Two-point (28.3 % / 63.2 %) first-order-plus-dead-time fit of a unit step response."""
    d = discretize_zoh(m, dt)
    n = int(round(t_end / dt))
    x = np.zeros(m.n_x)
    bu = d.B[:, input_index]
    ys = np.empty(n)
    for k in range(n):
        ys[k] = m.C[output_index] @ x + m.D[output_index, input_index]
        x = d.A @ x + bu
    t = np.arange(n) * dt
    gain = ys[-1]
    frac = ys / gain
    t28 = t[np.argmax(frac >= 0.283)]
    t63 = t[np.argmax(frac >= 0.632)]
    tau = 1.5 * (t63 - t28)
    theta = max(t63 - tau, 0.0)
    return FopdtFit(float(gain), float(tau), float(theta))


def simc_pi(fit: FopdtFit, tau_c: float) -> Tuple[float, float]:
    """SIMC PI rule: ``Kc = tau / (K (tau_c + theta))``, ``tau_I = min(tau, 4 (tau_c + theta))``."""
    kc = fit.tau / (fit.gain * (tau_c + fit.theta))
    tau_i = min(fit.tau, 4.0 * (tau_c + fit.theta))
    return kc, kc / tau_i


def tune_decentralized(m: StateSpaceModel, pairing=DEFAULT_PAIRING, tau_c_ratio: float = 1.0 / 3.0):
    """PI gains per loop from paired step responses, with ``tau_c = tau_c_ratio * tau``.

    Returns
    -------
    kp, ki : ndarray
        Ordered by loop (that is, by ``pairing``).
    """
    kp, ki = [], []
    for a, b in pairing:
        fit = fit_fopdt(m, a, b)
        c, i = simc_pi(fit, tau_c_ratio * fit.tau)
        kp.append(c)
        ki.append(i)
    return np.array(kp), np.array(ki)
