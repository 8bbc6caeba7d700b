"""Configuration: built-in defaults, YAML overrides, dataclass assembly.

Every constant a scenario depends on appears here so a run is fully
reproducible from its resolved config file.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import yaml

from .dcee import DceeConfig
from .errors import ConfigError
from .extremum_seeking import EsConfig
from .observer import ObserverConfig
from .plant import MotorParams

DEFAULT_CONFIG: dict = {
    "motor": {
        "R_s": 0.05,        # Ohm
        "L_d": 0.0008,      # H
        "L_q": 0.002,       # H
        "psi_f": 0.12,      # Wb
        "p_n": 3,
        "U_dc": 310.0,      # V
        "I_smax": 120.0,    # A
        "T_N": 36.0,        # N*m
        "n_N": 3000.0,      # r/min
        "J": 0.01,          # kg*m^2
        "B_visc": 0.001,    # N*m*s/rad
    },
    "simulation": {
        "dt": 1.0e-6,            # plant integration step (s)
        "T_s": 1.0e-4,           # control sampling time (s)
        "load_ramp": 0.01,       # smooth-load ramp duration (s)
        "current_bound_factor": 10.0,  # divergence bound as a multiple of I_smax
        "lock_speed": False,
        "noise": {               # optional Gaussian measurement noise (std devs)
            "current": 0.0,      # A, on sampled i_d and i_q
            "speed": 0.0,        # rad/s, on sampled omega_m
            "torque": 0.0,       # N*m, on the torque measurement
        },
    },
    "speed_loop": {"bandwidth_hz": 20.0},
    # current PIs execute at the plant step; see foc.make_current_pis
    "current_loop": {"bandwidth_hz": 5000.0},
    "dcee": {
        "k_x": 0.08,
        "delta_x": 0.1,          # A
        "forgetting": 0.99,
        "n_estimators": 5,
        "max_saturated_ticks": 500,
        "psi_f_init": 0.25,      # Wb, pinned estimator's initial flux guess
        "L_qd_init": 0.0005,     # H, pinned estimator's initial saliency guess
        "psi_spread": [0.5, 2.5],   # multiplier range over psi_f_init
        "L_spread": [0.4, 1.2],     # multiplier range over L_qd_init
        "P0": [1.0, 1.0e-4],        # initial covariance diagonal
    },
    "es": {
        "f_inj": 5000.0,       # Hz
        "a_inj": 0.01,         # rad
        "k_int": 200.0,        # integrator gain on the per-unit torque gradient
        "torque_scale": None,  # demod normalization; None means the motor's T_N
    },
    "observer": {
        "omega_min": 10.0,  # rad/s electrical
        "tau_f": 0.0005,    # s
    },
    # Five-segment study: i_d=0 warm-up and loading, then the MTPA strategy
    # under full load, a load drop, and a speed drop.
    "timeline": [
        {"t_start": 0.0, "t_end": 0.2, "speed_rpm": 3000.0, "load": 0.0,
         "mode": "id0", "torque_source": "ideal"},
        {"t_start": 0.2, "t_end": 0.4, "speed_rpm": 3000.0, "load": 36.0,
         "mode": "id0", "torque_source": "ideal"},
        {"t_start": 0.4, "t_end": 0.6, "speed_rpm": 3000.0, "load": 36.0,
         "mode": "dcee", "torque_source": "ideal"},
        {"t_start": 0.6, "t_end": 0.8, "speed_rpm": 3000.0, "load": 18.0,
         "mode": "dcee", "torque_source": "ideal"},
        {"t_start": 0.8, "t_end": 1.0, "speed_rpm": 1500.0, "load": 18.0,
         "mode": "dcee", "torque_source": "ideal"},
    ],
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key == "timeline":
            out[key] = copy.deepcopy(val)  # timelines replace, never merge
        elif isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | None = None) -> dict:
    """Built-in defaults, optionally overridden by a YAML file."""
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            user = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if user is None:
        user = {}
    if not isinstance(user, dict):
        raise ConfigError(f"config file {path} must contain a mapping at top level")
    unknown = set(user) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return _deep_merge(DEFAULT_CONFIG, user)


def dump_config(cfg: dict, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=False)


@dataclass
class SimOptions:
    dt: float = 1.0e-6
    T_s: float = 1.0e-4
    load_ramp: float = 0.01
    current_bound_factor: float = 10.0
    lock_speed: bool = False
    noise_current: float = 0.0
    noise_speed: float = 0.0
    noise_torque: float = 0.0

    def __post_init__(self):
        if self.dt <= 0.0 or self.T_s <= 0.0:
            raise ConfigError("dt and T_s must be positive")
        ratio = self.T_s / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ConfigError("T_s must be a whole multiple of dt")
        if self.load_ramp <= 0.0:
            raise ConfigError("load_ramp must be positive")

    @property
    def steps_per_tick(self) -> int:
        return int(round(self.T_s / self.dt))


@dataclass
class ControllerSetup:
    dcee: DceeConfig
    es: EsConfig
    observer: ObserverConfig
    speed_bandwidth_hz: float = 20.0
    current_bandwidth_hz: float = 5000.0
    bank_psi_spread: tuple = (0.5, 2.5)
    bank_L_spread: tuple = (0.4, 1.2)
    bank_P0: tuple = (1.0, 1e-4)
    psi_f_init: float = 0.25
    L_qd_init: float = 0.0005


def _build(section: dict, cls, rename=None, **extra):
    kwargs = dict(section)
    for src, dst in (rename or {}).items():
        if src in kwargs:
            kwargs[dst] = kwargs.pop(src)
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {cls.__name__} settings: {exc}") from exc


def motor_params(cfg: dict) -> MotorParams:
    return _build(cfg["motor"], MotorParams)

def sim_options(cfg: dict) -> SimOptions:
    sim = dict(cfg["simulation"])
    noise = sim.pop("noise", {})
    return _build(sim, SimOptions,
                  noise_current=float(noise.get("current", 0.0)),
                  noise_speed=float(noise.get("speed", 0.0)),
                  noise_torque=float(noise.get("torque", 0.0)))

def controller_setup(cfg: dict) -> ControllerSetup:
    d = dict(cfg["dcee"])
    bank_kwargs = {
        "bank_psi_spread": tuple(d.pop("psi_spread")),
        "bank_L_spread": tuple(d.pop("L_spread")),
        "bank_P0": tuple(d.pop("P0")),
        "psi_f_init": float(d.pop("psi_f_init")),
        "L_qd_init": float(d.pop("L_qd_init")),
    }
    dcee = _build(d, DceeConfig, rename={"forgetting": "lam"},
                  T_s=cfg["simulation"]["T_s"])
    es_section = dict(cfg["es"])
    if es_section.get("torque_scale") is None:
        es_section["torque_scale"] = float(cfg["motor"]["T_N"])
    es = _build(es_section, EsConfig)
    obs = _build(cfg["observer"], ObserverConfig)
    return ControllerSetup(
        dcee=dcee, es=es, observer=obs,
        speed_bandwidth_hz=float(cfg["speed_loop"]["bandwidth_hz"]),
        current_bandwidth_hz=float(cfg["current_loop"]["bandwidth_hz"]),
        **bank_kwargs,
    )
