"""Five estimator variants on one predict/update skeleton.

Variants: "ekf" and "qekf" (conventional world-frame error-state model, the
latter carrying its attitude mean as a quaternion), "fej" (same model with
first-estimate anchors for position-dependent measurement Jacobians), "iekf"
(right-invariant error model), and "ij_iekf" (iekf with imitated-Jacobian
covariance compensation of range r).

Error-state layout: (xi_omega, xi_p, xi_v, bg_err, ba_err[, landmarks...,
clones...]).  The covariance describes the "correction" convention: the
vector c such that applying c to the estimate recovers the truth --
left-multiplicative exp(c) on the group part for the invariant variants,
world-frame rotation times additive vector parts for the EKF family.
Measurement builders must therefore supply H with residual ~ H c + noise;
the gain times residual is then applied directly as a correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import imu as imu_model
from . import lie
from .exceptions import SingularCovariance, SingularInnovation

INVARIANT_TAGS = ("iekf", "ij_iekf")
EKF_FAMILY_TAGS = ("ekf", "qekf", "fej")
ALL_TAGS = EKF_FAMILY_TAGS + INVARIANT_TAGS


@dataclass(frozen=True)
class FilterVariant:
    """Estimator tag plus the imitation range r (ij_iekf only)."""

    tag: str
    r: float = 0.0

    def __post_init__(self):
        if self.tag not in ALL_TAGS:
            raise ValueError(f"unknown variant tag {self.tag!r}")
        if self.tag != "ij_iekf" and self.r != 0.0:
            raise ValueError("r is only meaningful for ij_iekf")
        if self.tag == "ij_iekf" and self.r < 0.0:
            raise ValueError("r must be non-negative")

    @property
    def invariant(self):
        return self.tag in INVARIANT_TAGS

    @property
    def label(self):
        if self.tag == "ij_iekf":
            return f"ij_iekf-{self.r:g}"
        return self.tag


@dataclass
class LinearMeasurement:
    """Linearized measurement: residual ~ H c + noise, noise ~ N(0, N)."""

    residual: np.ndarray
    H: np.ndarray
    N: np.ndarray


@dataclass
class CloneEntry:
    """Stored camera pose (world frame) with its timestamp."""

    t: float
    R: np.ndarray
    p: np.ndarray


# --- quaternion helpers for the qekf attitude mean (wxyz convention) -------

def quat_from_rot(R):
    w = np.sqrt(max(0.0, 1.0 + np.trace(R))) / 2.0
    if w > 1e-8:
        x = (R[2, 1] - R[1, 2]) / (4 * w)
        y = (R[0, 2] - R[2, 0]) / (4 * w)
        z = (R[1, 0] - R[0, 1]) / (4 * w)
        q = np.array([w, x, y, z])
    else:
        # fall back through the rotation vector; fine away from identity
        v = lie.so3_log(R)
        a = np.linalg.norm(v)
        q = np.concatenate([[np.cos(a / 2)], np.sin(a / 2) * v / a])
    return q / np.linalg.norm(q)


def rot_from_quat(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_from_rotvec(v):
    a = np.linalg.norm(v)
    if a < 1e-12:
        return np.array([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]])
    return np.concatenate([[np.cos(a / 2.0)], np.sin(a / 2.0) * v / a])


# ---------------------------------------------------------------------------

def ekf_error_jacobians(state, meas, gravity=None, n_landmarks=0):
    """Conventional world-frame error-state Jacobians for the EKF family.

    Landmark error rows are zero (static landmarks, additive errors).
    """
    g = imu_model.DEFAULT_GRAVITY if gravity is None else np.asarray(gravity, float)
    del g  # gravity cancels out of the world-frame error model
    a_body = np.asarray(meas.accel, dtype=float) - state.b_a
    a_world_hat = lie.so3_hat(state.R @ a_body)
    d = 15 + 3 * n_landmarks
    F = np.zeros((d, d))
    F[:3, 9:12] = -state.R
    F[3:6, 6:9] = np.eye(3)
    F[6:9, :3] = -a_world_hat
    F[6:9, 12:15] = -state.R
    G = np.zeros((d, 12))
    G[:3, :3] = state.R
    G[6:9, 3:6] = state.R
    G[9:15, 6:12] = np.eye(6)
    return F, G


def invariant_error_jacobians(state, landmarks=None, xi_delta=None, gravity=None):
    """Right-invariant error Jacobians, optionally for the landmark-augmented
    state on SE_{m+2}(3) and/or with imitated-Jacobian compensation.

    ``xi_delta`` is the 9-vector imitation error; its orientation part is the
    only nonzero slot and is shared by every block row of the inverse left
    Jacobian on the augmented group.
    """
    g = imu_model.DEFAULT_GRAVITY if gravity is None else np.asarray(gravity, float)
    m = 0 if landmarks is None else len(landmarks)
    nrows = 9 + 3 * m
    A = np.zeros((nrows, nrows))
    A[3:6, 6:9] = np.eye(3)
    A[6:9, :3] = lie.so3_hat(g)
    B = np.zeros((nrows, 6))
    B[:3, :3] = state.R
    B[3:6, :3] = lie.so3_hat(state.p) @ state.R
    B[6:9, :3] = lie.so3_hat(state.v) @ state.R
    B[6:9, 3:6] = state.R
    for j in range(m):
        B[9 + 3 * j:12 + 3 * j, :3] = lie.so3_hat(np.asarray(landmarks[j])) @ state.R
    if xi_delta is not None:
        xi_ext = np.zeros(3 * (m + 3))
        xi_ext[:9] = xi_delta
        B = lie.sen_left_jacobian_inv(xi_ext) @ B
    d = nrows + 6
    F = np.zeros((d, d))
    F[:9, :9] = A[:9, :9]
    # reorder: rows are (pose 0:9, bias 9:15, landmarks 15:); A/B were built
    # with landmarks directly after the pose, so split them apart here.
    F[:9, 9:15] = -B[:9]
    F[15:, 9:15] = -B[9:]
    F[15:, :9] = A[9:, :9]
    F[:9, 15:] = A[:9, 9:]
    G = np.zeros((d, 12))
    G[:9, :6] = B[:9]
    G[15:, :6] = B[9:]
    G[9:15, 6:12] = np.eye(6)
    return F, G


class FilterInstance:
    """Mutable filter state: mean, covariance, and bookkeeping.

    Single-writer: predict/update/clone mutate the instance and must be
    serialized externally; distinct instances are independent.
    """

    def __init__(self, variant, state, P, noise, rng=None,
                 landmarks=None, gravity=None):
        self.variant = variant
        self.state = state.copy()
        self.P = np.array(P, dtype=float)
        self.noise = noise
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.landmarks = None if landmarks is None else np.array(landmarks, float)
        self.clones = []
        self.gravity = (noise.gravity if gravity is None
                        else np.asarray(gravity, dtype=float))
        self.anchor_state = state.copy() if variant.tag == "fej" else None
        self.anchor_landmarks = (None if self.landmarks is None
                                 else self.landmarks.copy())
        self._quat = quat_from_rot(state.R) if variant.tag == "qekf" else None
        self._q_cache = None
        expected = self.core_dim
        if self.P.shape != (expected, expected):
            raise ValueError(f"P must be {expected}x{expected}")

    # -- dimensions ---------------------------------------------------------

    @property
    def n_landmarks(self):
        return 0 if self.landmarks is None else len(self.landmarks)

    @property
    def core_dim(self):
        return 15 + 3 * self.n_landmarks

    @property
    def dim(self):
        return self.core_dim + 6 * len(self.clones)

    def clone_index(self, i):
        """First covariance row of clone i."""
        return self.core_dim + 6 * i

    # -- predict ------------------------------------------------------------

    def predict(self, meas, dt):
        """Mean propagation plus variant-specific covariance propagation."""
        if self.variant.tag == "ij_iekf":
            xi_delta = imu_model.sample_imitating_error(self.variant.r, self.rng)
            F, G = invariant_error_jacobians(
                self.state, self.landmarks, xi_delta, self.gravity)
        elif self.variant.invariant:
            F, G = invariant_error_jacobians(
                self.state, self.landmarks, None, self.gravity)
        else:
            F, G = ekf_error_jacobians(
                self.state, meas, self.gravity, self.n_landmarks)
        self.state = imu_model.propagate_mean(self.state, meas, dt, self.gravity)
        if self.anchor_state is not None:
            self.anchor_state = imu_model.propagate_mean(
                self.anchor_state, meas, dt, self.gravity)
        if self._quat is not None:
            self._quat = quat_from_rot(self.state.R)
        c = self.core_dim
        Q = self._q_cache
        if Q is None:
            Q = self._q_cache = self.noise.q_imu()
        # F is nilpotent (F^4 = 0): the transition is an exact cubic and the
        # noise integral is midpoint-accurate to O(dt^3), an order below the
        # linearization error already accepted per step.
        F2 = F @ F
        F3 = F2 @ F
        Phi = np.eye(c) + dt * F + (dt * dt / 2) * F2 + (dt ** 3 / 6) * F3
        Phi_h = (np.eye(c) + (dt / 2) * F + (dt * dt / 8) * F2
                 + (dt ** 3 / 48) * F3)
        GQG = G @ Q @ G.T
        Qd = dt * (Phi_h @ GQG @ Phi_h.T)
        Pcc = Phi @ self.P[:c, :c] @ Phi.T + Qd
        if self.clones:
            self.P[:c, c:] = Phi @ self.P[:c, c:]
            self.P[c:, :c] = self.P[:c, c:].T
        self.P[:c, :c] = Pcc
        self.P = 0.5 * (self.P + self.P.T)

    # -- update -------------------------------------------------------------

    def update(self, m: LinearMeasurement):
        self.update_raw(m.residual, m.H, m.N)

    def update_raw(self, residual, H, N):
        """Kalman update; the gain-weighted residual is applied directly as a
        correction in this filter's error convention.

        Raises:
            SingularInnovation: if the innovation covariance has condition
                number above 1e12.  The state is left unchanged.
        """
        residual = np.asarray(residual, dtype=float)
        H = np.asarray(H, dtype=float)
        N = np.asarray(N, dtype=float)
        if H.shape[1] != self.dim:
            raise ValueError(f"H has {H.shape[1]} columns, state dim {self.dim}")
        PHt = self.P @ H.T
        S = H @ PHt + N
        S = 0.5 * (S + S.T)
        eig = np.linalg.eigvalsh(S)
        if eig[0] <= 0 or eig[-1] / eig[0] > 1e12:
            raise SingularInnovation(
                f"innovation condition number {eig[-1] / max(eig[0], 1e-300):.3e}")
        K = cho_solve(cho_factor(S), PHt.T).T
        self.apply_correction(K @ residual)
        self.P = self.P - K @ (H @ self.P)
        self.P = 0.5 * (self.P + self.P.T)

    def apply_correction(self, d):
        """Apply a correction vector in this filter's error convention."""
        d = np.asarray(d, dtype=float)
        st = self.state
        m = self.n_landmarks
        if self.variant.invariant:
            # joint pose+landmark correction on SE_{m+2}(3), left-multiplied
            tangent = np.concatenate([d[:9], d[15:15 + 3 * m]])
            cols = [st.p, st.v] + ([] if m == 0 else list(self.landmarks))
            X = lie.sen_from_parts(st.R, cols)
            X = lie.sen_exp(tangent) @ X
            st.R = lie.sen_rotation(X)
            new_cols = lie.sen_columns(X)
            st.p, st.v = new_cols[0], new_cols[1]
            if m:
                self.landmarks = np.array(new_cols[2:])
            for i, cl in enumerate(self.clones):
                k = self.clone_index(i)
                Xc = lie.sen_exp(d[k:k + 6]) @ lie.sen_from_parts(cl.R, [cl.p])
                cl.R = lie.sen_rotation(Xc)
                cl.p = lie.sen_columns(Xc)[0]
        else:
            if self._quat is not None:
                self._quat = quat_mul(quat_from_rotvec(d[:3]), self._quat)
                self._quat /= np.linalg.norm(self._quat)
                st.R = rot_from_quat(self._quat)
            else:
                st.R = lie.so3_exp(d[:3]) @ st.R
            st.p = st.p + d[3:6]
            st.v = st.v + d[6:9]
            if m:
                self.landmarks = self.landmarks + d[15:15 + 3 * m].reshape(m, 3)
            for i, cl in enumerate(self.clones):
                k = self.clone_index(i)
                cl.R = lie.so3_exp(d[k:k + 3]) @ cl.R
                cl.p = cl.p + d[k + 3:k + 6]
        st.b_omega = st.b_omega + d[9:12]
        st.b_a = st.b_a + d[12:15]

    # -- clones -------------------------------------------------------------

    def clone_camera_pose(self, t, R_cam, p_cam):
        """Append a camera-pose clone and augment the covariance."""
        J = np.zeros((6, self.dim))
        if self.variant.invariant:
            # right-invariant camera-pose error equals the IMU pose error
            J[:3, :3] = np.eye(3)
            J[3:6, 3:6] = np.eye(3)
        else:
            J[:3, :3] = np.eye(3)
            J[3:6, 3:6] = np.eye(3)
            J[3:6, :3] = -lie.so3_hat(p_cam - self.state.p)
        PJt = self.P @ J.T
        self.P = np.block([[self.P, PJt], [PJt.T, J @ PJt]])
        self.P = 0.5 * (self.P + self.P.T)
        self.clones.append(CloneEntry(t, np.array(R_cam), np.array(p_cam)))

    def marginalize_clone(self, i):
        """Drop clone i and its covariance rows/columns."""
        k = self.clone_index(i)
        keep = np.r_[0:k, k + 6:self.dim]
        self.P = self.P[np.ix_(keep, keep)]
        del self.clones[i]

    # -- evaluation ---------------------------------------------------------

    def nees(self, truth):
        """DOF-normalized position and orientation NEES against a truth state.

        Orientation error is log(R_hat R^T); position error follows this
        filter's error convention (invariant: p_hat - R_tilde p; EKF family:
        p_hat - p).
        """
        R_tilde = self.state.R @ truth.R.T
        ang_err = lie.so3_log(R_tilde)
        if self.variant.invariant:
            pos_err = self.state.p - R_tilde @ truth.p
        else:
            pos_err = self.state.p - truth.p
        out = []
        for err, sl in ((pos_err, slice(3, 6)), (ang_err, slice(0, 3))):
            block = self.P[sl, sl]
            if abs(np.linalg.det(block)) < 1e-30:
                raise SingularCovariance("NEES block determinant below 1e-30")
            out.append(float(err @ np.linalg.solve(block, err)) / 3.0)
        return out[0], out[1]

    def errors(self, truth):
        """(pos_err_vec, ang_err_vec) in this filter's convention."""
        R_tilde = self.state.R @ truth.R.T
        ang_err = lie.so3_log(R_tilde)
        if self.variant.invariant:
            pos_err = self.state.p - R_tilde @ truth.p
        else:
            pos_err = self.state.p - truth.p
        return pos_err, ang_err


def invariant_initial_covariance(state, sig, landmarks=None):
    """Transport a diagonal world-frame prior (sig: 15-vector of std devs,
    plus 3 per landmark) into right-invariant coordinates.

    The invariant position/velocity/landmark errors pick up the orientation
    error through the lever arms p^, v^, f^.
    """
    m = 0 if landmarks is None else len(landmarks)
    d = 15 + 3 * m
    sig = np.asarray(sig, dtype=float)
    T = np.eye(d)
    T[3:6, :3] = lie.so3_hat(state.p)
    T[6:9, :3] = lie.so3_hat(state.v)
    for j in range(m):
        T[15 + 3 * j:18 + 3 * j, :3] = lie.so3_hat(np.asarray(landmarks[j]))
    return T @ np.diag(sig ** 2) @ T.T
