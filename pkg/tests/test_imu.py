"""IMU model tests: mean propagation against analytic kinematics, the
discretized covariance against independent quadrature, and the transition
matrix against its known polynomial block structure."""

import numpy as np
import pytest

from iekf_kit import errorprop, imu, lie
from iekf_kit.exceptions import NegativeRange, NonPositiveDt


def random_state(rng):
    return imu.ImuState(
        lie.so3_exp(rng.normal(0.0, 0.5, 3)),
        rng.normal(0.0, 5.0, 3),
        rng.normal(0.0, 1.0, 3),
        rng.normal(0.0, 0.01, 3),
        rng.normal(0.0, 0.05, 3))


def test_propagate_mean_free_fall():
    st = imu.ImuState.identity()
    meas = imu.ImuMeasurement(np.zeros(3), np.zeros(3))
    out = imu.propagate_mean(st, meas, 2.0)
    g = imu.DEFAULT_GRAVITY
    assert np.allclose(out.v, 2.0 * g)
    assert np.allclose(out.p, 2.0 * g)  # 0.5 * g * t^2 at t = 2
    assert np.allclose(out.R, np.eye(3))


def test_propagate_mean_bias_correction():
    rng = np.random.default_rng(0)
    st = random_state(rng)
    w = rng.normal(0.0, 0.3, 3)
    a = rng.normal(0.0, 1.0, 3)
    # feeding measurement = signal + bias must reproduce the unbiased step
    clean = imu.propagate_mean(
        imu.ImuState(st.R, st.p, st.v, np.zeros(3), np.zeros(3)),
        imu.ImuMeasurement(w, a), 0.01)
    biased = imu.propagate_mean(st, imu.ImuMeasurement(w + st.b_omega,
                                                       a + st.b_a), 0.01)
    assert np.abs(clean.R - biased.R).max() < 1e-14
    assert np.abs(clean.p - biased.p).max() < 1e-14


def test_propagate_mean_rejects_bad_dt():
    st = imu.ImuState.identity()
    meas = imu.ImuMeasurement(np.zeros(3), np.zeros(3))
    with pytest.raises(NonPositiveDt):
        imu.propagate_mean(st, meas, 0.0)
    with pytest.raises(NonPositiveDt):
        imu.propagate_covariance(np.eye(15), np.zeros((15, 15)),
                                 np.zeros((15, 12)), np.eye(12), -0.1)


def test_error_matrix_a_is_nilpotent():
    A = imu.imu_error_matrix_a()
    assert np.abs(np.linalg.matrix_power(A, 3)).max() == 0.0


def test_full_f_is_nilpotent():
    rng = np.random.default_rng(1)
    F, _ = imu.error_jacobians(random_state(rng))
    assert np.abs(np.linalg.matrix_power(F, 4)).max() == 0.0


def test_error_jacobians_zero_delta_bit_identical():
    rng = np.random.default_rng(2)
    st = random_state(rng)
    F0, G0 = imu.error_jacobians(st)
    Fz, Gz = imu.error_jacobians(st, xi_delta=np.zeros(9))
    assert np.array_equal(F0, Fz)
    assert np.array_equal(G0, Gz)


def test_error_jacobians_block_structure():
    rng = np.random.default_rng(3)
    st = random_state(rng)
    F, G = imu.error_jacobians(st)
    assert F.shape == (15, 15)
    assert G.shape == (15, 12)
    # bias rows are static; bias noise enters with identity
    assert np.abs(F[9:, :]).max() == 0.0
    assert np.array_equal(G[9:15, 6:12], np.eye(6))
    # noise map blocks: attitude sees R, velocity sees R for accel noise
    assert np.allclose(G[:3, :3], st.R)
    assert np.allclose(G[6:9, 3:6], st.R)
    assert np.allclose(G[3:6, :3], lie.so3_hat(st.p) @ st.R)


def test_propagate_covariance_matches_quadrature():
    """Van-Loan discretization vs Simpson quadrature of the exact integral."""
    rng = np.random.default_rng(4)
    st = random_state(rng)
    F, G = imu.error_jacobians(st)
    Q = np.diag(rng.uniform(0.5, 2.0, 12))
    P = np.eye(15) * 0.1
    dt = 0.05
    out = imu.propagate_covariance(P, F, G, Q, dt)

    def phi(s):
        return errorprop.loglinear_transition(F, s)
    n = 200
    s = np.linspace(0.0, dt, 2 * n + 1)
    vals = [phi(dt - si) @ G @ Q @ G.T @ phi(dt - si).T for si in s]
    h = dt / (2 * n)
    Qd = h / 3.0 * (vals[0] + vals[-1]
                    + 4.0 * sum(vals[1:-1:2]) + 2.0 * sum(vals[2:-2:2]))
    ref = phi(dt) @ P @ phi(dt).T + Qd
    assert np.abs(out - ref).max() / np.abs(ref).max() < 1e-10


def test_propagate_covariance_pure_diffusion():
    # F = 0: P <- P + dt * G Q G^T exactly
    rng = np.random.default_rng(5)
    G = rng.normal(0.0, 1.0, (15, 12))
    Q = np.diag(rng.uniform(0.1, 1.0, 12))
    P = np.eye(15)
    out = imu.propagate_covariance(P, np.zeros((15, 15)), G, Q, 0.3)
    assert np.abs(out - (P + 0.3 * G @ Q @ G.T)).max() < 1e-12


def test_transition_matrix_polynomial_display():
    # Phi = exp(F dt) carries dt*I, dt*g^ and (dt^2/2) g^ in the pose rows
    st = imu.ImuState.identity()
    F, _ = imu.error_jacobians(st)
    dt = 0.1
    Phi = errorprop.loglinear_transition(F, dt)
    G = lie.so3_hat(imu.DEFAULT_GRAVITY)
    assert np.allclose(Phi[3:6, 6:9], dt * np.eye(3))
    assert np.allclose(Phi[6:9, :3], dt * G)
    assert np.allclose(Phi[3:6, :3], 0.5 * dt * dt * G)


def test_imitating_error_sampling():
    rng = np.random.default_rng(6)
    xi = imu.sample_imitating_error(0.5, rng)
    assert xi.shape == (9,)
    assert np.abs(xi[:3]).max() <= 0.5
    assert np.abs(xi[3:]).max() == 0.0
    assert np.array_equal(imu.sample_imitating_error(0.0, rng), np.zeros(9))
    with pytest.raises(NegativeRange):
        imu.sample_imitating_error(-0.1, rng)


def test_noise_spec_q_matrix():
    spec = imu.ImuNoiseSpec()
    Q = spec.q_imu()
    assert Q.shape == (12, 12)
    assert np.allclose(np.diag(Q)[:3], spec.sigma_gw ** 2)
    assert np.allclose(np.diag(Q)[3:6], spec.sigma_aw ** 2)
    assert np.allclose(np.diag(Q)[9:12], spec.sigma_abw ** 2)
    with pytest.raises(ValueError):
        imu.ImuNoiseSpec(sigma_gw=-1.0)


def test_imitated_jacobian_premultiplies_noise_map():
    rng = np.random.default_rng(7)
    st = random_state(rng)
    xi_d = imu.sample_imitating_error(0.4, rng)
    F, G = imu.error_jacobians(st, xi_delta=xi_d)
    B = imu.imu_noise_matrix_b(st)
    JiB = lie.sen_left_jacobian_inv(xi_d) @ B
    assert np.allclose(G[:9, :6], JiB)
    assert np.allclose(F[:9, 9:15], -JiB)
