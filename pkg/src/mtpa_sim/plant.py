"""Continuous-time IPMSM model in the rotor dq frame, integrated at a fixed step.

Electrical (rotor-aligned dq frame):
    di_d/dt = (u_d - R_s i_d + w_r L_q i_q) / L_d
    di_q/dt = (u_q - R_s i_q - w_r (L_d i_d + psi_f)) / L_q
    w_r = p_n * w_m

Torque and mechanics:
    T_e = 1.5 p_n (psi_f i_q + (L_d - L_q) i_d i_q)
    dw_m/dt = (T_e - B_visc w_m - T_L) / J

Copper loss:
    P_cu = 3 R_s (i_d^2 + i_q^2)

Integration is classical 4th-order Runge-Kutta with the inputs held constant
over each step (zero-order hold).  The hot path is a numba kernel so that a
1 s scenario at a 1 us step stays in the tens of milliseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from numba import njit

from .errors import SimulationDiverged

SQRT3 = math.sqrt(3.0)


@dataclass
class MotorParams:
    """Nameplate and electrical constants plus mechanical constants."""

    R_s: float        # stator resistance (Ohm)
    L_d: float        # d-axis inductance (H)
    L_q: float        # q-axis inductance (H)
    psi_f: float      # permanent magnet flux linkage (Wb)
    p_n: int          # pole pairs
    U_dc: float       # DC-link voltage (V)
    I_smax: float     # current limit (A)
    T_N: float        # rated torque (N*m)
    n_N: float        # rated speed (r/min)
    J: float = 0.01   # rotor inertia (kg*m^2)
    B_visc: float = 0.001  # viscous friction coefficient (N*m*s/rad)

    def __post_init__(self):
        for name in ("R_s", "L_d", "L_q", "psi_f", "J"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"MotorParams.{name} must be strictly positive")
        if self.L_q <= self.L_d:
            raise ValueError("MotorParams requires L_q > L_d (saliency)")
        if self.p_n < 1:
            raise ValueError("MotorParams.p_n must be >= 1")
        if self.I_smax <= 0.0 or self.U_dc <= 0.0:
            raise ValueError("MotorParams.I_smax and U_dc must be positive")

    @property
    def L_qd(self) -> float:
        """Saliency L_q - L_d (H)."""
        return self.L_q - self.L_d

    @property
    def u_limit(self) -> float:
        """Linear-modulation voltage ceiling of an ideal inverter (V)."""
        return self.U_dc / SQRT3


@dataclass
class MotorState:
    """Plant state advanced by the simulator."""

    i_d: float = 0.0      # A
    i_q: float = 0.0      # A
    omega_m: float = 0.0  # mechanical speed (rad/s)
    t: float = 0.0        # s


@dataclass
class PlantInput:
    """dq voltages and load torque, held constant over an integration step."""

    u_d: float = 0.0  # V
    u_q: float = 0.0  # V
    T_L: float = 0.0  # N*m


def electromagnetic_torque(i_d: float, i_q: float, params: MotorParams) -> float:
    """Torque from the permanent-magnet and reluctance components (N*m)."""
    return 1.5 * params.p_n * (params.psi_f * i_q + (params.L_d - params.L_q) * i_d * i_q)


def copper_loss(i_d: float, i_q: float, R_s: float) -> float:
    """Resistive winding loss 3 R_s i_s^2 (W)."""
    return 3.0 * R_s * (i_d * i_d + i_q * i_q)


def plant_derivatives(state: MotorState, inp: PlantInput, params: MotorParams):
    """Time derivatives (di_d/dt, di_q/dt, dw_m/dt) at the given state and input."""
    w_r = params.p_n * state.omega_m
    did = (inp.u_d - params.R_s * state.i_d + w_r * params.L_q * state.i_q) / params.L_d
    diq = (inp.u_q - params.R_s * state.i_q - w_r * (params.L_d * state.i_d + params.psi_f)) / params.L_q
    T_e = electromagnetic_torque(state.i_d, state.i_q, params)
    dw = (T_e - params.B_visc * state.omega_m - inp.T_L) / params.J
    return did, diq, dw


def limit_voltage(u_d: float, u_q: float, U_dc: float):
    """Clamp the voltage vector magnitude to U_dc/sqrt(3), preserving its angle.

    Returns (u_d, u_q, saturated).
    """
    limit = U_dc / SQRT3
    mag = math.hypot(u_d, u_q)
    if mag > limit:
        scale = limit / mag
        return u_d * scale, u_q * scale, True
    return u_d, u_q, False


@njit(cache=True)
def _rk4_steps(i_d, i_q, w_m, u_d, u_q, T_L,
               R_s, L_d, L_q, psi_f, p_n, J, B_visc,
               dt, n_steps, lock_speed):
    """Advance the dq/mechanical states by n_steps RK4 steps of size dt.

    Inputs are zero-order-held.  lock_speed freezes omega_m (dyno mode).
    Also returns the torque averaged over the interval, the anti-aliased
    value a real torque readout sampled once per interval would deliver.
    """
    T_sum = 0.0
    for _ in range(n_steps):
        w_r = p_n * w_m
        k1d = (u_d - R_s * i_d + w_r * L_q * i_q) / L_d
        k1q = (u_q - R_s * i_q - w_r * (L_d * i_d + psi_f)) / L_q
        T_e = 1.5 * p_n * (psi_f * i_q + (L_d - L_q) * i_d * i_q)
        k1w = 0.0 if lock_speed else (T_e - B_visc * w_m - T_L) / J

        d2 = i_d + 0.5 * dt * k1d
        q2 = i_q + 0.5 * dt * k1q
        w2 = w_m + 0.5 * dt * k1w
        w_r = p_n * w2
        k2d = (u_d - R_s * d2 + w_r * L_q * q2) / L_d
        k2q = (u_q - R_s * q2 - w_r * (L_d * d2 + psi_f)) / L_q
        T_e = 1.5 * p_n * (psi_f * q2 + (L_d - L_q) * d2 * q2)
        k2w = 0.0 if lock_speed else (T_e - B_visc * w2 - T_L) / J

        d3 = i_d + 0.5 * dt * k2d
        q3 = i_q + 0.5 * dt * k2q
        w3 = w_m + 0.5 * dt * k2w
        w_r = p_n * w3
        k3d = (u_d - R_s * d3 + w_r * L_q * q3) / L_d
        k3q = (u_q - R_s * q3 - w_r * (L_d * d3 + psi_f)) / L_q
        T_e = 1.5 * p_n * (psi_f * q3 + (L_d - L_q) * d3 * q3)
        k3w = 0.0 if lock_speed else (T_e - B_visc * w3 - T_L) / J

        d4 = i_d + dt * k3d
        q4 = i_q + dt * k3q
        w4 = w_m + dt * k3w
        w_r = p_n * w4
        k4d = (u_d - R_s * d4 + w_r * L_q * q4) / L_d
        k4q = (u_q - R_s * q4 - w_r * (L_d * d4 + psi_f)) / L_q
        T_e = 1.5 * p_n * (psi_f * q4 + (L_d - L_q) * d4 * q4)
        k4w = 0.0 if lock_speed else (T_e - B_visc * w4 - T_L) / J

        i_d += dt * (k1d + 2.0 * k2d + 2.0 * k3d + k4d) / 6.0
        i_q += dt * (k1q + 2.0 * k2q + 2.0 * k3q + k4q) / 6.0
        w_m += dt * (k1w + 2.0 * k2w + 2.0 * k3w + k4w) / 6.0
        T_sum += 1.5 * p_n * (psi_f * i_q + (L_d - L_q) * i_d * i_q)
    return i_d, i_q, w_m, T_sum / n_steps


def advance_plant_avg(state: MotorState, inp: PlantInput, params: MotorParams,
                      dt: float, n_steps: int, lock_speed: bool = False,
                      current_bound: float | None = None):
    """Integrate n_steps fixed steps of size dt under a zero-order-held input.

    Returns (new state, interval-averaged torque).  Raises SimulationDiverged
    when a current magnitude exceeds current_bound (default 10 * I_smax) or
    any state stops being finite.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if dt > 2.0 * params.L_d / params.R_s:
        raise ValueError("dt exceeds the integration stability margin 2*L_d/R_s")
    i_d, i_q, w_m, T_avg = _rk4_steps(
        state.i_d, state.i_q, state.omega_m,
        inp.u_d, inp.u_q, inp.T_L,
        params.R_s, params.L_d, params.L_q, params.psi_f, float(params.p_n),
        params.J, params.B_visc, dt, n_steps, lock_speed,
    )
    bound = 10.0 * params.I_smax if current_bound is None else current_bound
    if not (math.isfinite(i_d) and math.isfinite(i_q) and math.isfinite(w_m)):
        raise SimulationDiverged(f"non-finite plant state at t={state.t + n_steps * dt:.6f} s")
    if abs(i_d) > bound or abs(i_q) > bound:
        raise SimulationDiverged(
            f"current magnitude exceeded {bound:.1f} A at t={state.t + n_steps * dt:.6f} s "
            f"(i_d={i_d:.1f}, i_q={i_q:.1f})"
        )
    new_state = replace(state, i_d=i_d, i_q=i_q, omega_m=w_m, t=state.t + n_steps * dt)
    return new_state, T_avg


def advance_plant(state: MotorState, inp: PlantInput, params: MotorParams,
                  dt: float, n_steps: int, lock_speed: bool = False,
                  current_bound: float | None = None) -> MotorState:
    """advance_plant_avg without the averaged-torque output."""
    return advance_plant_avg(state, inp, params, dt, n_steps, lock_speed,
                             current_bound)[0]


def step_plant(state: MotorState, inp: PlantInput, params: MotorParams, dt: float,
               lock_speed: bool = False, current_bound: float | None = None) -> MotorState:
    """Advance the plant by one integration step of size dt."""
    return advance_plant(state, inp, params, dt, 1, lock_speed, current_bound)
