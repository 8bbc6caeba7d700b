"""Voltage-model torque observer, the "observed torque" measurement source.

Steady-state flux from the dq voltage balance (divide-by-speed form):

    psi_d_hat = (u_q - R_s i_q) / w_r
    psi_q_hat = -(u_d - R_s i_d) / w_r
    T_hat     = 1.5 p_n (psi_d_hat i_q - psi_q_hat i_d)

Exact whenever current derivatives vanish; during current transients the
neglected L di/dt terms make the estimate lag and ring, which is the
mechanism that degrades torque-feedback strategies fed from it.  The output
passes through a first-order low-pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class ObserverConfig:
    omega_min: float = 10.0  # minimum |electrical speed| for validity (rad/s)
    tau_f: float = 5e-4      # output low-pass time constant (s)

    def __post_init__(self):
        if self.omega_min <= 0.0:
            raise ValueError("omega_min must be positive")
        if self.tau_f < 0.0:
            raise ValueError("tau_f must be non-negative")


class LowSpeedError(RuntimeError):
    """Observer undefined below omega_min; callers hold the last valid value."""


def _flux_estimates(u_d, u_q, i_d, i_q, omega_r, R_s):
    psi_d = (u_q - R_s * i_q) / omega_r
    psi_q = -(u_d - R_s * i_d) / omega_r
    return psi_d, psi_q


def observe_torque(u_d: float, u_q: float, i_d: float, i_q: float,
                   omega_r: float, R_s: float, cfg: ObserverConfig,
                   p_n: int) -> float:
    """Unfiltered algebraic torque estimate (N*m).

    Raises LowSpeedError when |omega_r| < cfg.omega_min.
    """
    if abs(omega_r) < cfg.omega_min:
        raise LowSpeedError(f"|omega_r|={abs(omega_r):.2f} rad/s below {cfg.omega_min}")
    psi_d, psi_q = _flux_estimates(u_d, u_q, i_d, i_q, omega_r, R_s)
    return 1.5 * p_n * (psi_d * i_q - psi_q * i_d)


class TorqueObserver:
    """Stateful wrapper: low-speed hold plus first-order output filter."""

    def __init__(self, cfg: ObserverConfig, R_s: float, p_n: int, T_s: float):
        self.cfg = cfg
        self.R_s = R_s
        self.p_n = p_n
        self.alpha = math.exp(-T_s / cfg.tau_f) if cfg.tau_f > 0.0 else 0.0
        self.T_filt = 0.0
        self.last_raw = 0.0
        self.psi_d = 0.0
        self.psi_q = 0.0
        self.valid = False

    def update(self, u_d, u_q, i_d, i_q, omega_r):
        """One control-tick update; returns the filtered torque estimate (N*m)."""
        if abs(omega_r) >= self.cfg.omega_min:
            self.psi_d, self.psi_q = _flux_estimates(u_d, u_q, i_d, i_q, omega_r, self.R_s)
            self.last_raw = 1.5 * self.p_n * (self.psi_d * i_q - self.psi_q * i_d)
            self.valid = True
        else:
            self.valid = False  # hold last_raw
        self.T_filt = self.alpha * self.T_filt + (1.0 - self.alpha) * self.last_raw
        return self.T_filt
