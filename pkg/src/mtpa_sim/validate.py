"""Self-contained invariant suite behind the `validate` CLI subcommand.

Each check returns (name, passed, detail).  Sizes are trimmed relative to
the full test suite so the whole sweep stays interactive; the checked
properties are the same.
"""

from __future__ import annotations

import math
import os
import tempfile

import numpy as np

from .config import SimOptions, controller_setup, load_config, motor_params
from .dcee import dual_cost, predicted_cost
from .estimators import (EstimatorBank, ParamEstimate, bank_references, bank_update,
                         regressor, rls_update)
from .mtpa import EPS_L, mtpa_oracle, mtpa_point
from .observer import ObserverConfig, observe_torque
from .plant import MotorParams, MotorState, PlantInput, advance_plant, electromagnetic_torque
from .report import export_csv
from .scenario import ScenarioTimeline, Segment, run_scenario


def _default_params() -> MotorParams:
    return motor_params(load_config(None))


def check_mtpa_oracle_equivalence(n: int = 200) -> tuple:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(n):
        psi = rng.uniform(0.02, 0.5)
        lqd = rng.uniform(10.0 * EPS_L, 5e-3)
        i_s = rng.uniform(0.1, 200.0)
        a = mtpa_point(i_s, psi, lqd).beta
        b = mtpa_oracle(i_s, psi, lqd, 2000).beta
        worst = max(worst, abs(a - b))
    return ("mtpa closed form vs brute-force oracle",
            worst < 1e-6, f"max |dbeta| = {worst:.2e} rad over {n} triples")


def check_rls_vs_batch(n: int = 400) -> tuple:
    rng = np.random.default_rng(3)
    theta_true = np.array([0.12, 1.2e-3])
    theta0 = np.array([0.25, 5.0e-4])
    P0 = np.diag([1.0, 1e-4])
    est = ParamEstimate(theta0.copy(), P0.copy())
    H = np.linalg.inv(P0)
    b = H @ theta0
    for _ in range(n):
        i_d = rng.uniform(-60.0, 0.0)
        i_q = rng.uniform(1.0, 80.0)
        phi = regressor(i_d, i_q)
        y = float(phi @ theta_true)
        est = rls_update(est, phi, y, 1.0)
        H += np.outer(phi, phi)
        b += phi * y
    batch = np.linalg.solve(H, b)
    rel = float(np.max(np.abs(est.theta_hat - batch) / np.abs(batch)))
    return ("RLS at lambda=1 equals prior-regularized batch least squares",
            rel < 1e-9, f"max relative deviation {rel:.2e} over {n} samples")


def check_covariance_spd(n: int = 100_000) -> tuple:
    rng = np.random.default_rng(11)
    bank = EstimatorBank.spread_init(3, 0.25, 5e-4, lam=0.99)
    ok = True
    detail = ""
    for k in range(n):
        i_d = rng.uniform(-80.0, 0.0)
        i_q = rng.uniform(0.0, 100.0)
        phi = regressor(i_d, i_q)
        y = float(phi @ np.array([0.12, 1.2e-3])) + rng.normal(0.0, 1e-3)
        bank = bank_update(bank, phi, y)
        if k % 1000 == 0:
            asym = np.max(np.abs(bank.P - bank.P.transpose(0, 2, 1)))
            eigs = np.linalg.eigvalsh(bank.P)
            if asym > 1e-12 * np.max(np.abs(bank.P)) or np.any(eigs <= 0.0):
                ok = False
                detail = f"violation at update {k}: asym={asym:.2e}, min eig={eigs.min():.2e}"
                break
    if ok:
        detail = f"symmetric positive definite through {n} updates"
    return ("covariance stays symmetric positive definite", ok, detail)


def check_dual_cost_identities() -> tuple:
    rng = np.random.default_rng(5)
    ok = True
    detail = "non-negative; zero iff aligned with zero spread"
    for _ in range(50):
        theta = rng.uniform([0.05, 2e-4], [0.4, 3e-3], size=(1, 2))
        bank = EstimatorBank(np.repeat(theta, 4, axis=0),
                             np.tile(np.diag([1.0, 1e-4]), (4, 1, 1)), 0.99)
        i_s = rng.uniform(0.0, 100.0)
        x = rng.uniform(-50.0, 50.0, size=2)
        d = dual_cost(x, bank, i_s)
        if d < 0.0:
            ok, detail = False, f"negative cost {d}"
            break
        _, r_bar = bank_references(bank, i_s)
        if abs(dual_cost(r_bar, bank, i_s)) > 1e-18:
            ok, detail = False, "cloned bank has nonzero cost at its own mean"
            break
    return ("dual objective non-negativity and zero-spread identity", ok, detail)


def check_hypothetical_purity() -> tuple:
    rng = np.random.default_rng(13)
    bank = EstimatorBank.spread_init(5, 0.25, 5e-4, lam=0.99)
    for _ in range(20):
        phi = regressor(rng.uniform(-50, 0), rng.uniform(0, 80))
        bank = bank_update(bank, phi, rng.normal(0.0, 2.0))
    before = (bank.theta.tobytes(), bank.P.tobytes())
    for _ in range(20):
        predicted_cost(rng.uniform(-50, 50, 2), rng.uniform(-1, 1, 2), bank,
                       rng.uniform(0, 100))
    after = (bank.theta.tobytes(), bank.P.tobytes())
    ok = before == after
    return ("hypothetical updates never mutate the real bank", ok,
            "bit-identical bank state" if ok else "bank state changed")


def check_integration_order() -> tuple:
    params = _default_params()
    inp = PlantInput(u_d=-20.0, u_q=100.0, T_L=5.0)
    finals = []
    for dt in (4e-6, 2e-6, 1e-6):
        st = MotorState(i_d=-10.0, i_q=40.0, omega_m=200.0)
        st = advance_plant(st, inp, params, dt, int(round(2e-3 / dt)))
        finals.append(np.array([st.i_d, st.i_q, st.omega_m]))
    d1 = np.linalg.norm(finals[0] - finals[1])
    d2 = np.linalg.norm(finals[1] - finals[2])
    order = math.log2(d1 / d2) if d2 > 0 else float("inf")
    return ("fixed-step integrator shows 4th-order convergence",
            order >= 3.5, f"observed order {order:.2f}")


def check_observer_steady_state() -> tuple:
    params = _default_params()
    cfg = ObserverConfig()
    worst = 0.0
    rng = np.random.default_rng(17)
    for _ in range(50):
        i_d = rng.uniform(-60.0, 0.0)
        i_q = rng.uniform(1.0, 90.0)
        w_r = rng.uniform(100.0, 1000.0)
        u_d = params.R_s * i_d - w_r * params.L_q * i_q
        u_q = params.R_s * i_q + w_r * (params.L_d * i_d + params.psi_f)
        T_hat = observe_torque(u_d, u_q, i_d, i_q, w_r, params.R_s, cfg, params.p_n)
        T_true = electromagnetic_torque(i_d, i_q, params)
        worst = max(worst, abs(T_hat - T_true) / max(abs(T_true), 1e-9))
    return ("observer exact at steady state", worst < 1e-3,
            f"max relative error {worst:.2e}")


def check_determinism() -> tuple:
    cfg = load_config(None)
    params = motor_params(cfg)
    ctrl = controller_setup(cfg)
    sim = SimOptions()
    timeline = ScenarioTimeline([
        Segment(0.0, 0.05, 3000.0, 0.0, "id0", "ideal"),
        Segment(0.05, 0.1, 3000.0, 36.0, "dcee", "ideal"),
    ])
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for i in range(2):
            res = run_scenario(timeline, params, ctrl, sim)
            p = os.path.join(tmp, f"run{i}.csv")
            export_csv(res.log, p)
            with open(p, "rb") as fh:
                blobs.append(fh.read())
    ok = blobs[0] == blobs[1]
    return ("identical config produces byte-identical CSV", ok,
            f"{len(blobs[0])} bytes compared")


ALL_CHECKS = (
    check_mtpa_oracle_equivalence,
    check_rls_vs_batch,
    check_covariance_spd,
    check_dual_cost_identities,
    check_hypothetical_purity,
    check_integration_order,
    check_observer_steady_state,
    check_determinism,
)


def run_all(verbose: bool = True) -> bool:
    all_ok = True
    for check in ALL_CHECKS:
        name, ok, detail = check()
        all_ok &= ok
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
