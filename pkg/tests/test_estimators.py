import numpy as np
import pytest

from mtpa_sim import (EstimatorBank, ParamEstimate, bank_references, bank_update,
                      mtpa_point, normalized_torque, regressor, rls_update)

THETA_TRUE = np.array([0.12, 1.2e-3])
THETA_GUESS = np.array([0.25, 5.0e-4])


def fresh_estimate():
    return ParamEstimate(THETA_GUESS.copy(), np.diag([1.0, 1e-4]))


def excite(rng):
    i_d = rng.uniform(-60.0, 0.0)
    i_q = rng.uniform(1.0, 80.0)
    return regressor(i_d, i_q)


def test_regressor_values():
    assert regressor(0.0, 0.0).tolist() == [0.0, 0.0]
    assert regressor(-1.0, 1.0).tolist() == [1.0, 1.0]
    phi = regressor(-23.1, 54.2)
    assert phi[0] == pytest.approx(54.2)
    assert phi[1] == pytest.approx(1252.02)


def test_normalized_torque():
    assert normalized_torque(36.0, 3) == pytest.approx(8.0)
    assert normalized_torque(0.0, 3) == 0.0
    assert normalized_torque(18.0, 3) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        normalized_torque(1.0, 0)


def test_zero_innovation_no_motion():
    est = fresh_estimate()
    phi = regressor(-10.0, 40.0)
    y = float(phi @ est.theta_hat)
    out = rls_update(est, phi, y, 0.99)
    assert np.allclose(out.theta_hat, est.theta_hat)


def test_zero_regressor_inflates_covariance():
    est = fresh_estimate()
    out = rls_update(est, np.zeros(2), 5.0, 0.95)
    assert np.allclose(out.theta_hat, est.theta_hat)
    assert np.allclose(out.P, est.P / 0.95)


def test_iq_zero_never_changes_theta():
    est = fresh_estimate()
    out = rls_update(est, regressor(-50.0, 0.0), 3.0, 0.99)
    assert np.allclose(out.theta_hat, est.theta_hat)


def test_convergence_from_study_initials():
    rng = np.random.default_rng(3)
    est = fresh_estimate()
    for _ in range(500):
        phi = excite(rng)
        est = rls_update(est, phi, float(phi @ THETA_TRUE), 0.99)
    assert np.max(np.abs(est.theta_hat - THETA_TRUE) / THETA_TRUE) < 1e-6


def test_rls_equals_regularized_batch_at_lambda_one():
    rng = np.random.default_rng(4)
    est = fresh_estimate()
    H = np.linalg.inv(est.P)
    b = H @ est.theta_hat
    for _ in range(400):
        phi = excite(rng)
        y = float(phi @ THETA_TRUE)
        est = rls_update(est, phi, y, 1.0)
        H += np.outer(phi, phi)
        b += phi * y
    batch = np.linalg.solve(H, b)
    assert np.max(np.abs(est.theta_hat - batch) / np.abs(batch)) < 1e-9


def test_tracking_after_parameter_step():
    # well-conditioned excitation: pure-flux regressors (i_d = 0) mixed with
    # salient ones decorrelate the two columns of phi
    def excite_rich(rng):
        i_d = 0.0 if rng.random() < 0.3 else rng.uniform(-80.0, -5.0)
        return regressor(i_d, rng.uniform(1.0, 80.0))

    rng = np.random.default_rng(5)
    lam = 0.98
    est = fresh_estimate()
    for _ in range(600):
        phi = excite_rich(rng)
        est = rls_update(est, phi, float(phi @ THETA_TRUE), lam)
    theta2 = THETA_TRUE * np.array([1.5, 0.7])
    horizon = int(5.0 / (1.0 - lam))
    for _ in range(horizon):
        phi = excite_rich(rng)
        est = rls_update(est, phi, float(phi @ theta2), lam)
    assert np.max(np.abs(est.theta_hat - theta2) / theta2) < 0.01


def test_covariance_spd_under_random_updates():
    rng = np.random.default_rng(6)
    est = fresh_estimate()
    for k in range(20_000):
        phi = excite(rng)
        est = rls_update(est, phi, float(phi @ THETA_TRUE) + rng.normal(0, 1e-3), 0.99)
        if k % 1000 == 0:
            assert np.max(np.abs(est.P - est.P.T)) <= 1e-12 * np.max(np.abs(est.P))
            assert np.all(np.linalg.eigvalsh(est.P) > 0.0)


def test_bank_of_one_equals_single_update():
    est = fresh_estimate()
    bank = EstimatorBank.from_estimates([est.copy()], 0.99)
    phi = regressor(-12.0, 33.0)
    up_est = rls_update(est, phi, 5.0, 0.99)
    up_bank = bank_update(bank, phi, 5.0)
    assert np.allclose(up_bank.theta[0], up_est.theta_hat, rtol=1e-12)
    assert np.allclose(up_bank.P[0], up_est.P, rtol=1e-12)


def test_bank_matches_per_estimator_updates():
    rng = np.random.default_rng(7)
    bank = EstimatorBank.spread_init(5, 0.25, 5e-4, lam=0.99)
    singles = bank.estimators
    for _ in range(50):
        phi = excite(rng)
        y = float(phi @ THETA_TRUE)
        bank = bank_update(bank, phi, y)
        singles = [rls_update(e, phi, y, 0.99) for e in singles]
    for j, est in enumerate(singles):
        assert np.allclose(bank.theta[j], est.theta_hat, rtol=1e-10)
        assert np.allclose(bank.P[j], est.P, rtol=1e-10)


def test_identical_estimators_stay_identical():
    theta = np.tile(THETA_GUESS, (4, 1))
    P = np.tile(np.diag([1.0, 1e-4]), (4, 1, 1))
    bank = EstimatorBank(theta, P, 0.99)
    rng = np.random.default_rng(8)
    for _ in range(100):
        bank = bank_update(bank, excite(rng), rng.normal(0, 2.0))
    assert np.all(bank.theta == bank.theta[0])


def test_bank_converges_and_spread_vanishes():
    rng = np.random.default_rng(9)
    bank = EstimatorBank.spread_init(5, 0.25, 5e-4, lam=0.99)
    assert np.unique(bank.theta, axis=0).shape[0] == 5  # distinct initials
    for _ in range(800):
        phi = excite(rng)
        bank = bank_update(bank, phi, float(phi @ THETA_TRUE))
    assert np.max(np.abs(bank.theta - THETA_TRUE) / THETA_TRUE) < 1e-6
    refs, r_bar = bank_references(bank, 58.9)
    spread = np.mean(np.sum((refs - r_bar) ** 2, axis=1))
    assert spread < 1e-12


def test_bank_update_is_pure():
    bank = EstimatorBank.spread_init(3, 0.25, 5e-4, lam=0.99)
    before = (bank.theta.tobytes(), bank.P.tobytes())
    bank_update(bank, regressor(-5.0, 20.0), 3.0)
    assert (bank.theta.tobytes(), bank.P.tobytes()) == before


def test_bank_references_mean_and_fallback():
    bank = EstimatorBank.spread_init(4, 0.25, 5e-4, lam=0.99)
    refs, r_bar = bank_references(bank, 58.9)
    assert np.allclose(r_bar, refs.mean(axis=0))
    for j in range(4):
        pt = mtpa_point(58.9, bank.theta[j, 0], bank.theta[j, 1])
        assert refs[j, 0] == pytest.approx(pt.i_d_ref, rel=1e-12)
    # degenerate estimator falls back to the i_d = 0 point
    theta = np.array([[0.12, 1.2e-3], [0.12, -1.0e-3]])
    bad = EstimatorBank(theta, np.tile(np.diag([1.0, 1e-4]), (2, 1, 1)), 0.99)
    refs, _ = bank_references(bad, 40.0)
    assert (refs[1] == [0.0, 40.0]).all()


def test_pinned_estimator_initialization():
    bank = EstimatorBank.spread_init(5, 0.25, 5e-4, lam=0.99,
                                     psi_span=(0.5, 2.5), L_span=(0.4, 1.2))
    assert bank.theta[0].tolist() == [0.25, 5e-4]
    assert bank.theta[0, 0] / bank.theta[0, 1] == pytest.approx(500.0)
    assert bank.theta[1:, 0].min() >= 0.5 * 0.25 - 1e-12
    assert bank.theta[1:, 0].max() <= 2.5 * 0.25 + 1e-12


def test_bank_validation():
    with pytest.raises(ValueError):
        EstimatorBank(np.zeros((0, 2)), np.zeros((0, 2, 2)), 0.99)
    with pytest.raises(ValueError):
        EstimatorBank(np.zeros((2, 2)), np.zeros((2, 2, 2)), 1.5)
