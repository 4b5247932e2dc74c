"""IMU kinematics on SE_2(3) with gyro/accel biases.

Error-state ordering throughout: (xi_omega, xi_p, xi_v, b_omega_err, b_a_err),
a 15-dimensional vector.  The pose part is the right-invariant log error of
the SE_2(3) state with columns (p, v); the bias part is a plain vector
difference.  Noise ordering: (n_omega, n_a, n_b_omega, n_b_a), 12-dimensional.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lie
from .errorprop import expm_nilpotent_or_series
from .exceptions import NegativeRange, NonPositiveDt

DEFAULT_GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass
class ImuState:
    """Orientation, position, velocity and the two IMU biases."""

    R: np.ndarray
    p: np.ndarray
    v: np.ndarray
    b_omega: np.ndarray
    b_a: np.ndarray

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))

    def copy(self):
        return ImuState(self.R.copy(), self.p.copy(), self.v.copy(),
                        self.b_omega.copy(), self.b_a.copy())

    def as_group(self):
        """SE_2(3) embedding with columns (p, v)."""
        return lie.sen_from_parts(self.R, [self.p, self.v])


@dataclass
class ImuMeasurement:
    """One gyro/accelerometer sample (body rates, specific force)."""

    omega: np.ndarray
    accel: np.ndarray
    t: float = 0.0


@dataclass
class ImuNoiseSpec:
    """Continuous-time noise densities and the gravity constant.

    Defaults are the white-noise / random-walk densities of a consumer-grade
    MEMS unit (the values used by the simulation study).
    """

    sigma_gw: float = 1.6968e-04
    sigma_aw: float = 2.0000e-03
    sigma_gbw: float = 1.9393e-05
    sigma_abw: float = 3.0000e-03
    gravity: np.ndarray = field(default_factory=lambda: DEFAULT_GRAVITY.copy())

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)
        for name in ("sigma_gw", "sigma_aw", "sigma_gbw", "sigma_abw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def q_imu(self):
        """12x12 diagonal process-noise density matrix."""
        return np.diag(np.repeat(
            [self.sigma_gw ** 2, self.sigma_aw ** 2,
             self.sigma_gbw ** 2, self.sigma_abw ** 2], 3))


def propagate_mean(state, meas, dt, gravity=None):
    """One propagation step with bias-corrected inputs held constant.

    R <- R Exp((w_m - b_w) dt); v and p by the constant-acceleration rule with
    the world-frame acceleration R(a_m - b_a) + g evaluated at the step start.
    Biases are unchanged.
    """
    if dt <= 0:
        raise NonPositiveDt(f"dt = {dt}")
    g = DEFAULT_GRAVITY if gravity is None else np.asarray(gravity, dtype=float)
    w = np.asarray(meas.omega, dtype=float) - state.b_omega
    a_body = np.asarray(meas.accel, dtype=float) - state.b_a
    a_world = state.R @ a_body + g
    R_new = state.R @ lie.so3_exp(w * dt)
    v_new = state.v + a_world * dt
    p_new = state.p + state.v * dt + 0.5 * a_world * dt * dt
    return ImuState(R_new, p_new, v_new, state.b_omega.copy(), state.b_a.copy())


def imu_error_matrix_a(gravity=None):
    """9x9 pose-error drift matrix: zero except dp/dv = I and dv/domega = g^."""
    g = DEFAULT_GRAVITY if gravity is None else np.asarray(gravity, dtype=float)
    A = np.zeros((9, 9))
    A[3:6, 6:9] = np.eye(3)
    A[6:9, :3] = lie.so3_hat(g)
    return A


def imu_noise_matrix_b(state):
    """9x6 map from (n_omega, n_a) into the pose-error rate."""
    B = np.zeros((9, 6))
    B[:3, :3] = state.R
    B[3:6, :3] = lie.so3_hat(state.p) @ state.R
    B[6:9, :3] = lie.so3_hat(state.v) @ state.R
    B[6:9, 3:6] = state.R
    return B


def error_jacobians(state, xi_delta=None, gravity=None):
    """Continuous-time error Jacobians (F, G) of the augmented 15-state.

    With ``xi_delta`` None the small-error linearization is used (inverse left
    Jacobian taken as identity); otherwise the noise map B is premultiplied by
    J(ad_{xi_delta})^-1, the imitated-Jacobian compensation.

    The bias-noise block of G is the 6x6 identity: the gyro and accel bias
    noises are three-dimensional each.
    """
    A = imu_error_matrix_a(gravity)
    B = imu_noise_matrix_b(state)
    if xi_delta is not None:
        B = lie.sen_left_jacobian_inv(xi_delta) @ B
    F = np.zeros((15, 15))
    F[:9, :9] = A
    F[:9, 9:15] = -B
    G = np.zeros((15, 12))
    G[:9, :6] = B
    G[9:15, 6:12] = np.eye(6)
    return F, G


def propagate_covariance(P, F, G, Q, dt):
    """Discrete covariance step P <- Phi P Phi^T + Q_d.

    Phi and the exact integral Q_d = int_0^dt Phi(s) G Q G^T Phi(s)^T ds are
    obtained jointly from one block matrix exponential; the result is
    symmetrized.
    """
    if dt <= 0:
        raise NonPositiveDt(f"dt = {dt}")
    P = np.asarray(P, dtype=float)
    F = np.asarray(F, dtype=float)
    d = F.shape[0]
    M = np.zeros((2 * d, 2 * d))
    M[:d, :d] = -F
    M[:d, d:] = G @ np.asarray(Q, dtype=float) @ np.asarray(G, dtype=float).T
    M[d:, d:] = F.T
    E = expm_nilpotent_or_series(M * dt)
    Phi = E[d:, d:].T
    Qd = Phi @ E[:d, d:]
    P_new = Phi @ P @ Phi.T + Qd
    return 0.5 * (P_new + P_new.T)


def sample_imitating_error(r, rng):
    """Draw the imitation error: orientation components iid uniform on
    [-r, r], position/velocity slots zero."""
    if r < 0:
        raise NegativeRange(f"r = {r}")
    xi = np.zeros(9)
    xi[:3] = rng.uniform(-r, r, 3)
    return xi
