"""JSON run configuration: defaults, validation and object construction.

Every section is optional.  User values are merged over :data:`DEFAULTS`;
any key not present in the defaults is rejected with its dotted path.
Signals are given in absolute units (seconds, degrees Celsius, percent,
hertz) and converted to deviations internally.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from .baseline import DecentralizedPid
from .ci import CiCompensator
from .errors import ConfigError
from .metrics import EventWindow
from .model import StateSpaceModel
from .mpc import RmpcConfig
from .observer import LuenbergerObserver
from .ocp import SolveOptions
from .plant import (ConstantController, Disturbance, PidController, RmpcCiController, Scenario,
                    SurrogatePlant, surrogate_core)

#: Surrogate core: steady-state gains (rows T_sec_evap_out, TSH; columns A_v, N)
#: and (measured, hidden) time constants in seconds per output.
SURROGATE_DC_GAIN = [[0.06, -0.30], [-0.35, -0.25]]
SURROGATE_TIME_CONSTANTS = [[40.0, 90.0], [10.0, 30.0]]
SURROGATE_SPLIT = 0.5

#: SIMC PI gains for the default surrogate, from
#: ``baseline.tune_decentralized(surrogate_core(...), tau_c_ratio=1/3)``,
#: rounded to four decimals.  Loop order follows the pairing (A_v, N).
PID_KP = [-8.5714, -10.0]
PID_KI = [-0.3495, -0.1180]

DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "controller": "rmpc",
    "plant": {
        "core": {
            "dc_gain": SURROGATE_DC_GAIN,
            "time_constants": SURROGATE_TIME_CONSTANTS,
            "split": SURROGATE_SPLIT,
            "A": None,
            "B": None,
            "C": None,
            "D": None,
        },
        "u_op": [48.79, 36.45],
        "y_op": [-22.15, 14.65],
        "u_min": [10.0, 30.0],
        "u_max": [100.0, 50.0],
        "gain_mismatch": [1.2, 0.8],
        "nonlinearity": {"eps": 0.0, "coupling": None},
        "noise": {"sigma_w": None, "sigma_v": None},
        "dt_step": 0.1,
    },
    "rmpc": {
        "W_y": [[2.5, 0.0], [0.0, 2.0]],
        "N_p": 10,
        "N_u": 1,
        "dt_step": None,
        "warm_start": True,
        "solver": {
            "max_iters": 30,
            "grad_mode": "adjoint",
            "fd_step": 1e-6,
            "armijo_c1": 1e-4,
            "armijo_backtrack": 0.5,
            "armijo_max_backtracks": 30,
            "penalty_init": 10.0,
            "penalty_growth": 10.0,
            "penalty_rounds": 1,
            "tol_grad": 1e-6,
            "tol_constraint": 1e-6,
        },
    },
    "ci": {"K_I": [0.2, 0.25], "e_th": [0.05, 0.3]},
    "observer": {"poles": [-1.0, -2.0, -3.0, -4.0], "dt_step": 0.1, "method": "sylvester"},
    "pid": {"kp": PID_KP, "ki": PID_KI, "kd": [0.0, 0.0], "deriv_filter": [0.0, 0.0],
            "pairing": [[0, 1], [1, 0]]},
    "scenario": {
        "duration": 1200.0,
        "dt_sample": 1.0,
        "references": [[[120.0, -23.15]], [[540.0, 10.65]]],
        "disturbances": [
            {"time": 840.0, "target": "output", "index": 0, "offset": 0.5},
            {"time": 840.0, "target": "output", "index": 1, "offset": -1.0},
        ],
    },
    "metrics": {
        "events": [
            {"output": 0, "t_c": 120.0, "T_w": 300.0},
            {"output": 1, "t_c": 540.0, "T_w": 300.0},
            {"output": 0, "t_c": 840.0, "T_w": 300.0},
            {"output": 1, "t_c": 840.0, "T_w": 300.0},
        ],
        "weights": [1.0] * 8,
    },
    "output": {"trace": "trace.csv", "report": "report.csv"},
}

# Sections whose value is a free-form list or matrix rather than a key tree.
_LEAF_KEYS = {"references", "disturbances", "events", "weights", "pairing", "coupling",
              "dc_gain", "time_constants", "A", "B", "C", "D", "W_y", "poles", "K_I", "e_th",
              "u_op", "y_op", "u_min", "u_max", "gain_mismatch", "sigma_w", "sigma_v",
              "kp", "ki", "kd", "deriv_filter"}

#: Keys that must be given whenever their section appears in a user file.
_REQUIRED_WHEN_PRESENT = {"pid": ("kp", "ki")}


def _merge(base, user, path=""):
    if not isinstance(user, dict):
        raise ConfigError(f"{path or 'config'} must be an object", key=path or "config")
    out = copy.deepcopy(base)
    for key, value in user.items():
        full = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key '{full}'", key=full)
        if isinstance(base[key], dict) and key not in _LEAF_KEYS:
            out[key] = _merge(base[key], value, full)
        else:
            out[key] = copy.deepcopy(value)
    return out


def merge_config(user: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    user = {} if user is None else user
    for section, keys in _REQUIRED_WHEN_PRESENT.items():
        if isinstance(user, dict) and section in user and isinstance(user[section], dict):
            for k in keys:
                if k not in user[section]:
                    raise ConfigError(f"section '{section}' is missing required key '{section}.{k}'",
                                      key=f"{section}.{k}")
    return _merge(DEFAULTS, user)


def load_config(path) -> Dict[str, Any]:
    try:
        with open(path) as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}", key="config") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}", key="config") from exc
    return merge_config(user)


def _arr(cfg, key, shape=None):
    try:
        a = np.asarray(cfg, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{key}' must be numeric", key=key) from exc
    if shape is not None and a.shape != shape:
        raise ConfigError(f"'{key}' must have shape {shape}, got {a.shape}", key=key)
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"'{key}' must be finite", key=key)
    return a


@dataclass
class RunSetup:
    """Objects built from a merged configuration."""

    config: Dict[str, Any]
    model: StateSpaceModel
    plant: SurrogatePlant
    scenario: Scenario
    dt_sample: float
    rmpc: RmpcConfig
    events: list
    weights: np.ndarray
    seed: int

    def controller(self, kind: Optional[str] = None):
        kind = kind or self.config["controller"]
        if kind == "rmpc":
            return build_rmpc_controller(self)
        if kind == "pid":
            return build_pid_controller(self)
        if kind == "constant":
            return ConstantController(self.plant.u_op, self.plant.n_x)
        raise ConfigError(f"unknown controller '{kind}'", key="controller")


def build_core(c) -> StateSpaceModel:
    explicit = [c[k] is not None for k in ("A", "B", "C")]
    try:
        if all(explicit):
            return StateSpaceModel(_arr(c["A"], "plant.core.A"), _arr(c["B"], "plant.core.B"),
                                   _arr(c["C"], "plant.core.C"),
                                   None if c["D"] is None else _arr(c["D"], "plant.core.D"))
        if any(explicit):
            raise ConfigError("plant.core needs all of A, B and C when any is given", key="plant.core")
        return surrogate_core(_arr(c["dc_gain"], "plant.core.dc_gain"),
                              _arr(c["time_constants"], "plant.core.time_constants"), c["split"])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid plant.core: {exc}", key="plant.core") from exc


def build(cfg: Dict[str, Any], seed: Optional[int] = None) -> RunSetup:
    """Validate a merged configuration and build the model, plant and scenario."""
    model = build_core(cfg["plant"]["core"])
    pc = cfg["plant"]
    nu, ny, nx = model.n_u, model.n_y, model.n_x
    nl, noise = pc["nonlinearity"], pc["noise"]
    try:
        plant = SurrogatePlant(
            model,
            _arr(pc["u_op"], "plant.u_op", (nu,)),
            _arr(pc["y_op"], "plant.y_op", (ny,)),
            _arr(pc["u_min"], "plant.u_min", (nu,)),
            _arr(pc["u_max"], "plant.u_max", (nu,)),
            gain_mismatch=_arr(pc["gain_mismatch"], "plant.gain_mismatch", (nu,)),
            nonlinearity_eps=float(nl["eps"]),
            coupling=None if nl["coupling"] is None else _arr(nl["coupling"], "plant.nonlinearity.coupling", (ny, ny)),
            sigma_w=None if noise["sigma_w"] is None else _arr(noise["sigma_w"], "plant.noise.sigma_w", (nx,)),
            sigma_v=None if noise["sigma_v"] is None else _arr(noise["sigma_v"], "plant.noise.sigma_v", (ny,)),
            dt_step=float(pc["dt_step"]),
            seed=int(cfg["seed"] if seed is None else seed),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid plant section: {exc}", key="plant") from exc

    sc = cfg["scenario"]
    try:
        refs = sc["references"]
        if len(refs) != ny:
            raise ConfigError(f"scenario.references needs one step list per output ({ny})", key="scenario.references")
        dists = []
        for i, d in enumerate(sc["disturbances"]):
            unknown = set(d) - {"time", "target", "index", "offset"}
            if unknown:
                key = f"scenario.disturbances[{i}].{sorted(unknown)[0]}"
                raise ConfigError(f"unknown configuration key '{key}'", key=key)
            dists.append(Disturbance(float(d["time"]), d.get("target", "output"), int(d["index"]), float(d["offset"])))
        scenario = Scenario(float(sc["duration"]), refs, tuple(dists))
        dt_sample = float(sc["dt_sample"])
        scenario.n_samples(dt_sample)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario section: {exc}", key="scenario") from exc

    rc = cfg["rmpc"]
    try:
        solver = SolveOptions(**rc["solver"])
    except TypeError as exc:
        raise ConfigError(f"invalid rmpc.solver: {exc}", key="rmpc.solver") from exc
    except ConfigError as exc:
        raise ConfigError(str(exc), key=f"rmpc.solver.{exc.key}") from exc
    try:
        rmpc = RmpcConfig(
            W_y=_arr(rc["W_y"], "rmpc.W_y", (ny, ny)),
            N_p=rc["N_p"],
            N_u=rc["N_u"],
            dt_sample=dt_sample,
            u_min=plant.u_min - plant.u_op,
            u_max=plant.u_max - plant.u_op,
            solver=solver,
            warm_start=bool(rc["warm_start"]),
            dt_step=None if rc["dt_step"] is None else float(rc["dt_step"]),
        )
    except ConfigError as exc:
        raise ConfigError(str(exc), key=f"rmpc.{exc.key}") from exc

    mc = cfg["metrics"]
    try:
        events = [EventWindow(int(e["output"]), float(e["t_c"]), float(e["T_w"])) for e in mc["events"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid metrics.events: {exc}", key="metrics.events") from exc
    if len(events) != 4:
        raise ConfigError("metrics.events must list four windows", key="metrics.events")
    weights = _arr(mc["weights"], "metrics.weights", (8,))
    if np.any(weights < 0) or not weights.sum() > 0:
        raise ConfigError("metrics.weights must be non-negative with a positive sum", key="metrics.weights")
    if cfg["controller"] not in ("rmpc", "pid"):
        raise ConfigError(f"unknown controller '{cfg['controller']}'", key="controller")
    return RunSetup(cfg, model, plant, scenario, dt_sample, rmpc, events, weights,
                    int(cfg["seed"] if seed is None else seed))


def build_rmpc_controller(setup: RunSetup) -> RmpcCiController:
    cfg = setup.config
    oc, cc = cfg["observer"], cfg["ci"]
    ny = setup.model.n_y
    try:
        poles = np.asarray(oc["poles"], dtype=complex)
        obs = LuenbergerObserver(setup.model, poles, dt_sample=setup.dt_sample,
                                 dt_step=float(oc["dt_step"]), method=oc["method"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid observer section: {exc}", key="observer") from exc
    try:
        ci = CiCompensator(_arr(cc["K_I"], "ci.K_I"), _arr(cc["e_th"], "ci.e_th", (ny,)))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid ci section: {exc}", key="ci") from exc
    return RmpcCiController(setup.model, setup.rmpc, obs, ci, setup.plant.u_op, setup.plant.y_op)


def build_pid_controller(setup: RunSetup) -> PidController:
    pc = setup.config["pid"]
    try:
        pid = DecentralizedPid(
            kp=_arr(pc["kp"], "pid.kp"),
            ki=_arr(pc["ki"], "pid.ki"),
            kd=_arr(pc["kd"], "pid.kd"),
            deriv_filter=_arr(pc["deriv_filter"], "pid.deriv_filter"),
            u_op=setup.plant.u_op,
            u_min=setup.plant.u_min,
            u_max=setup.plant.u_max,
            dt_sample=setup.dt_sample,
            pairing=[tuple(p) for p in pc["pairing"]],
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid pid section: {exc}", key="pid") from exc
    return PidController(pid, setup.model.n_x)


def default_setup(seed: Optional[int] = None, **overrides) -> RunSetup:
    """Setup from the defaults, optionally overriding whole sections or keys."""
    return build(merge_config(overrides), seed=seed)
