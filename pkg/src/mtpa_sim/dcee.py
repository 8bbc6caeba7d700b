"""Dual-control MTPA: track the ensemble-mean optimum while probing to shrink
ensemble disagreement.

Per control tick the controller
  1. feeds the measured normalized torque to every estimator (real update),
  2. evaluates the objective D = ||x - r_bar||^2 + (1/N) sum_j ||r_bar - r_j||^2,
     where r_j are per-estimator MTPA references at the commanded current
     magnitude and r_bar is their mean,
  3. forms a per-axis forward-difference gradient of the one-step-ahead
     objective: each probe x + dx*e_i predicts the next measurement from the
     ensemble, applies a hypothetical RLS update to a bank copy, and
     re-evaluates D there,
  4. turns the gradient into dq voltages through the nominal discrete current
     model: u = -B^-1 (A x + k_x grad), with the back-EMF term restored from
     the ensemble-mean flux estimate.

The first cost term pulls the currents to the believed optimum
(exploitation); the second rewards states whose predicted data pull the
estimators together (exploration).  Both shrink as identification converges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SimulationDiverged
from .estimators import EstimatorBank, bank_references, bank_update, regressor

_AXES = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))


@dataclass
class DceeConfig:
    k_x: float = 0.08       # adaptive gain on the objective gradient
    delta_x: float = 0.1    # probe increment per axis (A)
    lam: float = 0.99       # RLS forgetting factor
    n_estimators: int = 5
    T_s: float = 1e-4       # control sampling time (s)
    max_saturated_ticks: int = 500  # consecutive saturated-voltage ticks before abort

    def __post_init__(self):
        if self.k_x <= 0.0:
            raise ValueError("k_x must be positive")
        if self.delta_x <= 0.0:
            raise ValueError("delta_x must be positive")
        if not (0.0 < self.lam <= 1.0):
            raise ValueError("forgetting factor must be in (0, 1]")
        if self.n_estimators < 1:
            raise ValueError("need at least one estimator")
        if self.T_s <= 0.0:
            raise ValueError("T_s must be positive")


@dataclass
class DiscreteModel:
    """Forward-Euler current model x(k+1) = (I + A) x(k) + B u(k), u = [u_d, u_q1]."""

    A: np.ndarray
    B: np.ndarray

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return x + self.A @ x + self.B @ u


def build_discrete_model(R_s: float, L_d: float, L_q: float,
                         omega_r: float, T_s: float) -> DiscreteModel:
    A = T_s * np.array([[-R_s / L_d, omega_r * L_q / L_d],
                        [-omega_r * L_d / L_q, -R_s / L_q]])
    B = T_s * np.array([[1.0 / L_d, 0.0],
                        [0.0, 1.0 / L_q]])
    return DiscreteModel(A, B)


def _cost_terms(x: np.ndarray, refs: np.ndarray, r_bar: np.ndarray):
    e = x - r_bar
    exploit = float(e @ e)
    d = refs - r_bar
    explore = float(np.mean(np.einsum("ij,ij->i", d, d)))
    return exploit, explore


def dual_cost(x, bank: EstimatorBank, i_s_ref: float) -> float:
    """Objective D(x) = exploitation + exploration (A^2)."""
    refs, r_bar = bank_references(bank, i_s_ref)
    exploit, explore = _cost_terms(np.asarray(x, dtype=float), refs, r_bar)
    return exploit + explore


def predict_torque(x_probe, bank: EstimatorBank) -> float:
    """Ensemble-mean prediction of the normalized torque at a probe state."""
    phi = regressor(x_probe[0], x_probe[1])
    return float(np.mean(bank.theta @ phi))


def predicted_cost(x, delta, bank: EstimatorBank, i_s_ref: float) -> float:
    """One-step-ahead objective at x + delta.

    The next measurement is unavailable, so it is replaced by the ensemble
    prediction and a hypothetical RLS update runs on a bank copy; the
    caller's bank is never touched.
    """
    x_next = np.asarray(x, dtype=float) + np.asarray(delta, dtype=float)
    phi = regressor(x_next[0], x_next[1])
    y_pred = float(np.mean(bank.theta @ phi))
    hyp = bank_update(bank, phi, y_pred)
    return dual_cost(x_next, hyp, i_s_ref)


def cost_gradient(x, bank: EstimatorBank, i_s_ref: float, delta_x: float) -> np.ndarray:
    """Per-axis forward difference of the predicted objective (two probes)."""
    if delta_x <= 0.0:
        raise ValueError("delta_x must be positive")
    base = dual_cost(x, bank, i_s_ref)
    return np.array([
        (predicted_cost(x, delta_x * _AXES[0], bank, i_s_ref) - base) / delta_x,
        (predicted_cost(x, delta_x * _AXES[1], bank, i_s_ref) - base) / delta_x,
    ])


def control_output(x, grad, model: DiscreteModel, cfg: DceeConfig,
                   psi_f_hat: float, omega_r: float):
    """Voltages realizing x(k+1) = x(k) - k_x * grad on the nominal model.

    Solves B u = -(A x + k_x grad) for u = [u_d, u_q1], then restores the
    q-axis back-EMF term: u_q = u_q1 + w_r * psi_f_hat.
    """
    x = np.asarray(x, dtype=float)
    rhs = model.A @ x + cfg.k_x * np.asarray(grad, dtype=float)
    # B is diagonal with strictly positive entries
    u_d = -rhs[0] / model.B[0, 0]
    u_q1 = -rhs[1] / model.B[1, 1]
    return u_d, u_q1 + omega_r * psi_f_hat


@dataclass
class DceeDiagnostics:
    cost: float
    exploit: float
    explore: float
    grad: np.ndarray
    r_bar: np.ndarray
    theta: np.ndarray          # (N,2) snapshot after the real update
    psi_f_mean: float
    L_qd_mean: float
    saturated: bool = field(default=False)


def dcee_tick(x, T_e1_meas: float, i_s_ref: float, bank: EstimatorBank,
              cfg: DceeConfig, model: DiscreteModel, omega_r: float):
    """One full control tick; returns ((u_d, u_q), updated bank, diagnostics)."""
    x = np.asarray(x, dtype=float)
    bank = bank_update(bank, regressor(x[0], x[1]), T_e1_meas)
    refs, r_bar = bank_references(bank, i_s_ref)
    exploit, explore = _cost_terms(x, refs, r_bar)
    grad = cost_gradient(x, bank, i_s_ref, cfg.delta_x)
    u = control_output(x, grad, model, cfg, bank.psi_f_mean, omega_r)
    diag = DceeDiagnostics(
        cost=exploit + explore, exploit=exploit, explore=explore,
        grad=grad, r_bar=r_bar, theta=bank.theta.copy(),
        psi_f_mean=bank.psi_f_mean, L_qd_mean=bank.L_qd_mean,
    )
    return u, bank, diag


class DceeController:
    """Stateful wrapper owning the bank and the saturation watchdog."""

    def __init__(self, bank: EstimatorBank, cfg: DceeConfig,
                 R_s: float, L_d: float, L_q: float, u_limit: float):
        self.bank = bank
        self.cfg = cfg
        self.R_s, self.L_d, self.L_q = R_s, L_d, L_q
        self.u_limit = u_limit
        self.saturated_ticks = 0

    def tick(self, x, T_e1_meas: float, i_s_ref: float, omega_r: float):
        model = build_discrete_model(self.R_s, self.L_d, self.L_q, omega_r, self.cfg.T_s)
        u, self.bank, diag = dcee_tick(x, T_e1_meas, i_s_ref, self.bank,
                                       self.cfg, model, omega_r)
        if u[0] * u[0] + u[1] * u[1] > self.u_limit * self.u_limit:
            self.saturated_ticks += 1
            diag.saturated = True
            if self.saturated_ticks > self.cfg.max_saturated_ticks:
                raise SimulationDiverged(
                    f"commanded voltage saturated for {self.saturated_ticks} consecutive ticks")
        else:
            self.saturated_ticks = 0
        return u, diag
