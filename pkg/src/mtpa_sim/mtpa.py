"""Closed-form MTPA geometry and an independent brute-force oracle.

For a salient machine (L_q > L_d) the minimum-current operating point for a
demanded current magnitude i_s lies at the vector angle beta (measured from
the q-axis toward negative d):

    i_base = psi_f / (L_q - L_d)
    beta   = asin( (sqrt(i_base^2 + 8 i_s^2) - i_base) / (4 i_s) )
    i_d*   = -i_s sin(beta),  i_q* = i_s cos(beta)

The oracle sweeps beta on a dense grid and refines with golden-section
search; it shares no code with the closed form and is used to validate it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this saliency the base current blows up and the MTPA point is
# numerically indistinguishable from i_d = 0.
EPS_L = 1e-5

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class DegenerateSaliencyError(ValueError):
    """MTPA is undefined for vanishing saliency; callers fall back to i_d=0."""


class UnreachableTorqueError(ValueError):
    """Demanded torque exceeds what the current limit allows on the MTPA curve."""


@dataclass
class MtpaPoint:
    i_base: float   # psi_f / (L_q - L_d) (A)
    beta: float     # current vector angle (rad)
    i_d_ref: float  # A
    i_q_ref: float  # A
    i_s_ref: float  # A


def mtpa_point(i_s_ref: float, psi_f: float, L_qd: float) -> MtpaPoint:
    """Minimum-current dq reference pair for current magnitude i_s_ref."""
    if psi_f <= 0.0:
        raise ValueError("psi_f must be positive")
    if L_qd <= EPS_L:
        raise DegenerateSaliencyError(f"saliency {L_qd!r} H is at or below the {EPS_L} H guard")
    if i_s_ref < 0.0:
        raise ValueError("i_s_ref must be non-negative")
    i_base = psi_f / L_qd
    if i_s_ref == 0.0:
        return MtpaPoint(i_base, 0.0, 0.0, 0.0, 0.0)
    arg = (math.sqrt(i_base * i_base + 8.0 * i_s_ref * i_s_ref) - i_base) / (4.0 * i_s_ref)
    # rounding can push the argument marginally above 1 near the guard region
    beta = math.asin(min(1.0, max(0.0, arg)))
    return MtpaPoint(i_base, beta,
                     -i_s_ref * math.sin(beta), i_s_ref * math.cos(beta), i_s_ref)


def mtpa_refs_array(i_s_ref: float, psi_f: np.ndarray, L_qd: np.ndarray):
    """Vectorized dq reference pairs for arrays of (psi_f, L_qd) estimates.

    Returns (i_d_refs, i_q_refs, valid) where entries with psi_f <= 0 or
    L_qd <= EPS_L are flagged invalid and left at the i_d=0 point
    (0, i_s_ref); the caller decides the fallback policy.
    """
    psi_f = np.asarray(psi_f, dtype=float)
    L_qd = np.asarray(L_qd, dtype=float)
    valid = (psi_f > 0.0) & (L_qd > EPS_L)
    i_d = np.zeros_like(psi_f)
    i_q = np.full_like(psi_f, float(i_s_ref))
    if i_s_ref > 0.0 and np.any(valid):
        i_base = psi_f[valid] / L_qd[valid]
        arg = (np.sqrt(i_base * i_base + 8.0 * i_s_ref * i_s_ref) - i_base) / (4.0 * i_s_ref)
        beta = np.arcsin(np.clip(arg, 0.0, 1.0))
        i_d[valid] = -i_s_ref * np.sin(beta)
        i_q[valid] = i_s_ref * np.cos(beta)
    return i_d, i_q, valid


def _torque_at_angle(beta: float, i_s: float, psi_f: float, L_qd: float, p_n: int) -> float:
    # torque with i_d = -i_s sin(beta), i_q = i_s cos(beta); |i_d| = i_s sin(beta)
    i_d_mag = i_s * math.sin(beta)
    i_q = i_s * math.cos(beta)
    return 1.5 * p_n * (psi_f * i_q + L_qd * i_d_mag * i_q)


def mtpa_oracle(i_s_ref: float, psi_f: float, L_qd: float,
                grid_points: int = 2000, p_n: int = 3) -> MtpaPoint:
    """Brute-force MTPA point: grid sweep plus golden-section refinement.

    Evaluates torque at fixed i_s_ref over beta in [0, pi/2] and returns the
    maximizer, refined to 1e-9 rad.  Deliberately independent of mtpa_point.
    """
    if grid_points < 1000:
        raise ValueError("grid_points must be >= 1000")
    i_base = psi_f / L_qd
    if i_s_ref == 0.0:
        return MtpaPoint(i_base, 0.0, 0.0, 0.0, 0.0)
    betas = np.linspace(0.0, 0.5 * math.pi, grid_points)
    torques = [_torque_at_angle(b, i_s_ref, psi_f, L_qd, p_n) for b in betas]
    k = int(np.argmax(torques))
    lo = betas[max(k - 1, 0)]
    hi = betas[min(k + 1, grid_points - 1)]
    # golden-section maximization on the bracketed unimodal interval
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1 = _torque_at_angle(x1, i_s_ref, psi_f, L_qd, p_n)
    f2 = _torque_at_angle(x2, i_s_ref, psi_f, L_qd, p_n)
    while hi - lo > 1e-9:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = _torque_at_angle(x2, i_s_ref, psi_f, L_qd, p_n)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = _torque_at_angle(x1, i_s_ref, psi_f, L_qd, p_n)
    beta = 0.5 * (lo + hi)
    return MtpaPoint(i_base, beta,
                     -i_s_ref * math.sin(beta), i_s_ref * math.cos(beta), i_s_ref)


def mtpa_curve_torque(i_s_ref: float, psi_f: float, L_qd: float, p_n: int) -> float:
    """Torque produced at the MTPA point for current magnitude i_s_ref (N*m)."""
    pt = mtpa_point(i_s_ref, psi_f, L_qd)
    return 1.5 * p_n * (psi_f * pt.i_q_ref + L_qd * (-pt.i_d_ref) * pt.i_q_ref)


def torque_to_current(T_ref: float, psi_f: float, L_qd: float, p_n: int,
                      i_smax: float) -> float:
    """Minimal current magnitude whose MTPA point produces T_ref, by bisection.

    Torque is strictly increasing in i_s along the MTPA curve, so plain
    bisection on [0, i_smax] converges; tolerance is 1e-6 relative.
    """
    if T_ref < 0.0:
        raise ValueError("T_ref must be non-negative")
    if T_ref == 0.0:
        return 0.0
    if mtpa_curve_torque(i_smax, psi_f, L_qd, p_n) < T_ref:
        raise UnreachableTorqueError(
            f"torque {T_ref} N*m exceeds the MTPA torque at the {i_smax} A limit")
    lo, hi = 0.0, i_smax
    while hi - lo > 1e-6 * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if mtpa_curve_torque(mid, psi_f, L_qd, p_n) < T_ref:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
