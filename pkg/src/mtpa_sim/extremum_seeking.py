"""Extremum-seeking MTPA baseline: square-wave angle injection, successive-
sample demodulation, integrator.

A square wave of amplitude a_inj rides on the current vector angle, so the
perturbation is real and produces measurable torque ripple.  The gradient of
torque over angle is recovered by differencing consecutive torque samples
against the injected sign and driven to zero by an integrator:

    g    = s * (T(k) - T(k-1)) / (2 a_inj)
    beta = clamp(beta + k_int * g * T_s, [0, pi/2))

Timing matters: the torque sampled at tick k reflects the injection applied
over the preceding interval, so the demodulating sign s must be the one
commanded at tick k-1.  EsController keeps that bookkeeping; with the
default 5 kHz injection at a 0.1 ms control period the sign flips every
tick.  No band-pass/low-pass demodulation filters are used, which keeps the
baseline's loop delay minimal.

The torque fed to the demodulator is normalized by torque_scale (the rated
torque).  The integrator gain then acts on a per-unit gradient; on this
machine the same gain applied to absolute newton-metres would make every
newton-metre of tick-to-tick torque fluctuation move the angle by ~1 rad,
an unusable loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError

_HALF_PI = 0.5 * math.pi


@dataclass
class EsConfig:
    f_inj: float = 5000.0     # injection frequency (Hz)
    a_inj: float = 0.01       # injection amplitude (rad); 0 disables injection
    k_int: float = 200.0      # integrator gain on the per-unit gradient (rad/s)
    torque_scale: float = 36.0  # torque normalization, typically the rated torque (N*m)
    torque_source: str = "ideal"  # ideal | observed

    def __post_init__(self):
        if self.f_inj <= 0.0:
            raise ValueError("f_inj must be positive")
        if self.a_inj < 0.0:
            raise ValueError("a_inj must be non-negative")
        if self.k_int <= 0.0:
            raise ValueError("k_int must be positive")
        if self.torque_scale <= 0.0:
            raise ValueError("torque_scale must be positive")
        if self.torque_source not in ("ideal", "observed"):
            raise ValueError("torque_source must be 'ideal' or 'observed'")


def ticks_per_half_period(cfg: EsConfig, T_s: float) -> int:
    """Control ticks per injection half-period; must be a whole number >= 1."""
    if cfg.f_inj > 0.5 / T_s:
        raise ConfigError(
            f"injection at {cfg.f_inj} Hz is not representable at a {T_s} s control period")
    n = 1.0 / (2.0 * cfg.f_inj * T_s)
    if abs(n - round(n)) > 1e-9 * n or round(n) < 1:
        raise ConfigError(
            f"half-period of {cfg.f_inj} Hz is {n} control ticks; need a whole number >= 1")
    return int(round(n))


def injection_signal(tick_index: int, cfg: EsConfig, T_s: float) -> float:
    """Square-wave angle increment +/-a_inj for the given control tick."""
    half = ticks_per_half_period(cfg, T_s)
    sign = 1.0 if (tick_index // half) % 2 == 0 else -1.0
    return cfg.a_inj * sign


def es_demodulate_and_integrate(T_meas: float, prev_T_meas: float, inj_sign: float,
                                beta_state: float, cfg: EsConfig, T_s: float) -> float:
    """One demodulate-and-integrate step; returns the updated angle state.

    inj_sign is the sign of the injection applied over the interval that
    produced T_meas.  With a_inj == 0 there is nothing to demodulate and the
    state passes through unchanged.
    """
    if cfg.a_inj == 0.0:
        return beta_state
    g = inj_sign * (T_meas - prev_T_meas) / (2.0 * cfg.a_inj)
    beta = beta_state + cfg.k_int * g * T_s
    return min(max(beta, 0.0), math.nextafter(_HALF_PI, 0.0))


def es_references(beta_state: float, i_s_ref: float, delta_beta: float = 0.0):
    """dq current references at the angle beta_state + delta_beta.

    The injection rides on the angle, so the perturbation reaches the real
    currents (and hence the torque), unlike virtual-injection schemes.
    """
    angle = beta_state + delta_beta
    # + 0.0 normalizes -0.0 so a disabled injection is bit-identical to id0
    return -i_s_ref * math.sin(angle) + 0.0, i_s_ref * math.cos(angle)


class EsController:
    """Synchronous demodulation state machine.

    The angle updates once per injection period, comparing the samples
    taken at the two half-period boundaries while the angle state was held.
    The torque sampled at tick k reflects the injection applied over the
    preceding interval, so the pair demodulated at a period boundary is
    (previous tick, this tick) against the sign active one tick ago, and
    the integrator advances by the full period it just observed.
    """

    def __init__(self, cfg: EsConfig, T_s: float, beta0: float = 0.0):
        self.cfg = cfg
        self.T_s = T_s
        self.half = ticks_per_half_period(cfg, T_s)
        self.beta = beta0
        self.tick_index = 0
        self.history: list[float] = []  # per-unit torque samples, most recent last
        self.prev_sign = 1.0
        self.last_grad = 0.0

    def tick(self, T_meas: float, i_s_ref: float):
        """Returns ((i_d_ref, i_q_ref), beta, gradient_estimate, injected_sign).

        T_meas is in newton-metres; demodulation happens on the per-unit
        value T_meas / torque_scale.
        """
        T_pu = T_meas / self.cfg.torque_scale
        self.history.append(T_pu)
        if len(self.history) > self.half + 1:
            self.history.pop(0)
        period = 2 * self.half
        at_boundary = self.tick_index >= period and self.tick_index % period == 0
        if at_boundary and self.cfg.a_inj > 0.0:
            # sample at the previous half-period boundary vs the sample now;
            # the sign active over the interval ending now is prev_sign
            prev_T = self.history[0]
            self.last_grad = self.prev_sign * (T_pu - prev_T) / (2.0 * self.cfg.a_inj)
            self.beta = es_demodulate_and_integrate(
                T_pu, prev_T, self.prev_sign, self.beta, self.cfg,
                period * self.T_s)
        inj = injection_signal(self.tick_index, self.cfg, self.T_s)
        refs = es_references(self.beta, i_s_ref, inj)
        self.prev_sign = 1.0 if inj >= 0.0 else -1.0
        self.tick_index += 1
        return refs, self.beta, self.last_grad, self.prev_sign
