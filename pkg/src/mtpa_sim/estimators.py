"""Bank of forgetting-factor RLS estimators for theta = [psi_f, L_q - L_d].

The normalized torque 2*T_e/(3*p_n) is linear in theta through the regressor
phi = [i_q, -i_d*i_q], so each estimator runs a standard 2-parameter RLS with
exponential forgetting.  Several estimators with different initial guesses
share the same data stream; their spread quantifies remaining uncertainty and
their per-estimator MTPA references feed the dual-control objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mtpa import mtpa_refs_array


def regressor(i_d: float, i_q: float) -> np.ndarray:
    """Basis vector phi = [i_q, -i_d*i_q]."""
    return np.array([i_q, -i_d * i_q])


def normalized_torque(T_e: float, p_n: int) -> float:
    """Torque scaled to the regression output: 2*T_e/(3*p_n) (Wb*A)."""
    if p_n < 1:
        raise ValueError("p_n must be >= 1")
    return 2.0 * T_e / (3.0 * p_n)


@dataclass
class ParamEstimate:
    """One estimator: parameter vector [psi_f_hat, L_qd_hat] and 2x2 covariance."""

    theta_hat: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        self.theta_hat = np.asarray(self.theta_hat, dtype=float).reshape(2)
        self.P = np.asarray(self.P, dtype=float).reshape(2, 2)

    @property
    def psi_f_hat(self) -> float:
        return float(self.theta_hat[0])

    @property
    def L_qd_hat(self) -> float:
        return float(self.theta_hat[1])

    def copy(self) -> "ParamEstimate":
        return ParamEstimate(self.theta_hat.copy(), self.P.copy())


def rls_update(est: ParamEstimate, phi: np.ndarray, T_e1_meas: float,
               lam: float) -> ParamEstimate:
    """One forgetting-factor RLS step; returns a new estimate.

    K = P phi / (lam + phi' P phi)
    theta <- theta + K (y - phi' theta)
    P <- (P - K phi' P) / lam, then symmetrized.

    Unrolled 2x2 scalar arithmetic: this runs millions of times in property
    checks and the denominator lam + phi'P phi > 0 is guaranteed by P > 0.
    """
    if not (0.0 < lam <= 1.0):
        raise ValueError("forgetting factor must be in (0, 1]")
    f0, f1 = float(phi[0]), float(phi[1])
    t0, t1 = est.theta_hat
    p00, p01 = est.P[0]
    p10, p11 = est.P[1]
    pf0 = p00 * f0 + p01 * f1
    pf1 = p10 * f0 + p11 * f1
    denom = lam + f0 * pf0 + f1 * pf1
    k0, k1 = pf0 / denom, pf1 / denom
    err = T_e1_meas - (f0 * t0 + f1 * t1)
    # phi' P rows
    fp0 = f0 * p00 + f1 * p10
    fp1 = f0 * p01 + f1 * p11
    q00 = (p00 - k0 * fp0) / lam
    q01 = (p01 - k0 * fp1) / lam
    q10 = (p10 - k1 * fp0) / lam
    q11 = (p11 - k1 * fp1) / lam
    off = 0.5 * (q01 + q10)
    return ParamEstimate(
        np.array([t0 + k0 * err, t1 + k1 * err]),
        np.array([[q00, off], [off, q11]]),
    )


class EstimatorBank:
    """N parallel RLS estimators sharing one data stream.

    State is held as stacked arrays (theta: (N,2), P: (N,2,2)) so a bank
    update is a handful of vector operations regardless of N.
    """

    def __init__(self, theta: np.ndarray, P: np.ndarray, lam: float):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        P = np.asarray(P, dtype=float)
        if P.ndim == 2:
            P = P[None, :, :]
        if theta.shape[0] < 1 or theta.shape[1] != 2 or P.shape != (theta.shape[0], 2, 2):
            raise ValueError("bank needs theta (N,2) and P (N,2,2) with N >= 1")
        if not (0.0 < lam <= 1.0):
            raise ValueError("forgetting factor must be in (0, 1]")
        self.theta = theta
        self.P = P
        self.lam = float(lam)

    @classmethod
    def from_estimates(cls, estimates, lam: float) -> "EstimatorBank":
        theta = np.stack([e.theta_hat for e in estimates])
        P = np.stack([e.P for e in estimates])
        return cls(theta, P, lam)

    @classmethod
    def spread_init(cls, n: int, psi_f_init: float, L_qd_init: float,
                    lam: float, psi_span=(0.5, 2.5), L_span=(0.4, 1.2),
                    P0_diag=(1.0, 1e-4)) -> "EstimatorBank":
        """Deterministic initialization: estimator 0 pinned at the nominal
        guess, the rest spread over multiplier ranges of that guess (psi
        ascending, saliency descending, so no two estimators coincide)."""
        if n < 1:
            raise ValueError("need at least one estimator")
        theta = np.empty((n, 2))
        theta[0] = (psi_f_init, L_qd_init)
        if n > 1:
            psi_m = np.linspace(psi_span[0], psi_span[1], n - 1)
            L_m = np.linspace(L_span[0], L_span[1], n - 1)[::-1]
            theta[1:, 0] = psi_m * psi_f_init
            theta[1:, 1] = L_m * L_qd_init
        P = np.tile(np.diag(P0_diag).astype(float), (n, 1, 1))
        return cls(theta, P, lam)

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    @property
    def estimators(self) -> list[ParamEstimate]:
        return [ParamEstimate(self.theta[j].copy(), self.P[j].copy())
                for j in range(self.n)]

    @property
    def psi_f_mean(self) -> float:
        return float(self.theta[:, 0].mean())

    @property
    def L_qd_mean(self) -> float:
        return float(self.theta[:, 1].mean())

    def copy(self) -> "EstimatorBank":
        return EstimatorBank(self.theta.copy(), self.P.copy(), self.lam)


def bank_update(bank: EstimatorBank, phi: np.ndarray, T_e1_meas: float) -> EstimatorBank:
    """Apply one RLS step with shared (phi, measurement) to every estimator.

    Returns a new bank; the input bank is never mutated (the dual-control
    predictor relies on this to run hypothetical updates on copies).
    """
    phi = np.asarray(phi, dtype=float)
    Pphi = bank.P @ phi                              # (N,2)
    denom = bank.lam + Pphi @ phi                    # (N,)
    K = Pphi / denom[:, None]
    err = T_e1_meas - bank.theta @ phi               # (N,)
    theta = bank.theta + K * err[:, None]
    phiTP = np.einsum("j,njk->nk", phi, bank.P)      # (N,2) rows phi'P
    P = (bank.P - K[:, :, None] * phiTP[:, None, :]) / bank.lam
    P = 0.5 * (P + P.transpose(0, 2, 1))
    return EstimatorBank(theta, P, bank.lam)


def bank_references(bank: EstimatorBank, i_s_ref: float):
    """Per-estimator MTPA reference pairs and their ensemble mean.

    Returns (refs, r_bar): refs is (N,2) rows [i_d_ref, i_q_ref], r_bar its
    componentwise mean.  An estimator whose parameters are degenerate
    (psi_f_hat <= 0 or saliency at/below the guard) contributes the i_d=0
    point (0, i_s_ref) so the mean stays defined during early transients.
    """
    i_d, i_q, _valid = mtpa_refs_array(i_s_ref, bank.theta[:, 0], bank.theta[:, 1])
    refs = np.column_stack([i_d, i_q])
    return refs, refs.mean(axis=0)
