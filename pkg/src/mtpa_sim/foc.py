"""Cascade PI loops: speed PI producing i_s*, dq current PIs with decoupling.

The i_d=0 and extremum-seeking strategies close the current loops here; the
dual-control strategy outputs voltages directly and bypasses them.

Rate split: the speed PI and the reference generation run once per control
tick, while the scenario harness executes the current PIs at the fast plant
step (the drive-typical arrangement: current regulation at the modulator
rate, outer loops decimated).  Running the current loops at the control
tick instead leaves the injected MTPA-search ripple mid-transient at every
sample, which rotates it off the commanded constant-current circle and
biases the extremum-seeking demodulation beyond its steady-state band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .plant import MotorParams, limit_voltage


@dataclass
class PiState:
    kp: float
    ki: float
    out_min: float
    out_max: float
    integ: float = 0.0

    def __post_init__(self):
        if self.out_min >= self.out_max:
            raise ValueError("PiState requires out_min < out_max")

    def reset(self):
        self.integ = 0.0


def pi_step(st: PiState, error: float, T_s: float) -> float:
    # Anti-windup: the integrator is clamped to the output band and frozen
    # while the output is saturated in the error's direction.  Pure clamping
    # is not enough here: the speed loop can only command braking through
    # friction, so any windup-driven overshoot would take seconds to decay.
    u_unsat = st.kp * error + st.integ
    deeper = (u_unsat >= st.out_max and error > 0.0) or \
             (u_unsat <= st.out_min and error < 0.0)
    if not deeper:
        st.integ += st.ki * error * T_s
        if st.integ > st.out_max:
            st.integ = st.out_max
        elif st.integ < st.out_min:
            st.integ = st.out_min
    u = st.kp * error + st.integ
    if u > st.out_max:
        u = st.out_max
    elif u < st.out_min:
        u = st.out_min
    return u


def speed_pi(omega_ref: float, omega_m: float, st: PiState, T_s: float) -> float:
    """Speed loop: returns the current magnitude reference i_s* in [0, I_smax]."""
    return pi_step(st, omega_ref - omega_m, T_s)


def current_pi_decoupled(refs, meas, omega_r: float, params: MotorParams,
                         st_d: PiState, st_q: PiState, T_s: float):
    """dq current PIs with cross-coupling/back-EMF feedforward.

    u_d = PI_d(e_d) - w_r L_q i_q
    u_q = PI_q(e_q) + w_r (L_d i_d + psi_f)
    The pair is vector-clamped to the inverter ceiling U_dc/sqrt(3).
    """
    i_d, i_q = meas
    u_d = pi_step(st_d, refs[0] - i_d, T_s) - omega_r * params.L_q * i_q
    u_q = pi_step(st_q, refs[1] - i_q, T_s) + omega_r * (params.L_d * i_d + params.psi_f)
    u_d, u_q, _ = limit_voltage(u_d, u_q, params.U_dc)
    return u_d, u_q


def make_speed_pi(params: MotorParams, bandwidth_hz: float = 20.0) -> PiState:
    """Gains from the rigid-body model with the i_d=0 torque constant.

    kp = J*wc/KT places the crossover at wc; the integrator zero sits at
    wc/4 so load steps recover well inside a 0.2 s scenario segment.
    Output band [0, I_smax]: the strategies here only command positive
    torque.
    """
    wc = 2.0 * math.pi * bandwidth_hz
    kt = 1.5 * params.p_n * params.psi_f
    kp = params.J * wc / kt
    return PiState(kp=kp, ki=kp * wc / 4.0, out_min=0.0, out_max=params.I_smax)


def make_current_pis(params: MotorParams, bandwidth_hz: float = 5000.0):
    """Pole-placement gains kp = L*wc, ki = R_s*wc for each axis.

    The default bandwidth assumes execution at the fast plant step; it keeps
    the current settled well within each half-period of the 5 kHz search
    ripple while staying two decades under the integration rate.
    """
    wc = 2.0 * math.pi * bandwidth_hz
    lim = params.u_limit
    st_d = PiState(kp=params.L_d * wc, ki=params.R_s * wc, out_min=-lim, out_max=lim)
    st_q = PiState(kp=params.L_q * wc, ki=params.R_s * wc, out_min=-lim, out_max=lim)
    return st_d, st_q
