"""Matrix Lie group numerics for SO(3), SE(3) and SE_n(3).

Group elements are represented by their (3+n) x (3+n) matrix embedding

    [ R | t_1 ... t_n ]
    [ 0 |     I_n     ]

and tangent vectors by flat arrays of length 3*(n+1) ordered as
(omega, v_1, ..., v_n).

Column ordering convention: for SE_2(3) the columns are (p, v), i.e. position
first, velocity second.  This matches the row structure of the IMU error
Jacobians used throughout the filter code, even though some references list
the columns the other way around.

All functions are pure; none mutate their inputs.
"""

from __future__ import annotations

import numpy as np

from .exceptions import AngleNearPi, SingularJacobian

# Switchover to Taylor-series branches.  Keeps relative error below ~1e-12
# without catastrophic cancellation in the sin/cos closed forms.
SMALL_ANGLE = 1e-6

# Logarithm domain restriction: theta must stay below pi - NEAR_PI_MARGIN.
NEAR_PI_MARGIN = 1e-6

# Left-Jacobian invertibility margin around nonzero multiples of 2*pi.
SINGULARITY_MARGIN = 1e-6

_EYE3 = np.eye(3)


def so3_hat(w):
    """Map a 3-vector to its skew-symmetric matrix."""
    w = np.asarray(w, dtype=float)
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def so3_vee(W):
    """Inverse of :func:`so3_hat` (exact on skew-symmetric input)."""
    W = np.asarray(W, dtype=float)
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def _sin_cos_coeffs(theta):
    """Coefficients a = sin(t)/t and b = (1-cos(t))/t^2 with Taylor fallback."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0 - t2 * t2 * t2 / 5040.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0 - t2 * t2 * t2 / 40320.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return a, b


def so3_exp(w):
    """Rodrigues formula; 4-term Taylor branch below the small-angle threshold."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    W = so3_hat(w)
    a, b = _sin_cos_coeffs(theta)
    return _EYE3 + a * W + b * (W @ W)


def so3_log(R):
    """Rotation vector of R.

    Raises:
        AngleNearPi: if the rotation angle is within NEAR_PI_MARGIN of pi,
            where the logarithm is ill-conditioned.
    """
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    if theta >= np.pi - NEAR_PI_MARGIN:
        raise AngleNearPi(f"rotation angle {theta:.12f} too close to pi")
    axis_times_2sin = so3_vee(R - R.T)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        # theta / (2 sin theta) expanded around 0.
        factor = 0.5 * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
                        + 31.0 * t2 * t2 * t2 / 15120.0)
    else:
        factor = theta / (2.0 * np.sin(theta))
    return factor * axis_times_2sin


def so3_left_jacobian(w):
    """Left Jacobian of SO(3): J = I + b*W + c*W^2 with the sin/cos closed form."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    W = so3_hat(w)
    _, b = _sin_cos_coeffs(theta)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        c = (1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
             - t2 * t2 * t2 / 362880.0)
    else:
        c = (theta - np.sin(theta)) / (theta ** 3)
    return _EYE3 + b * W + c * (W @ W)


def so3_left_jacobian_inv(w):
    """Inverse left Jacobian of SO(3).

    Raises:
        SingularJacobian: if |w| is within SINGULARITY_MARGIN of a nonzero
            multiple of 2*pi, where J drops rank.
    """
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    _check_jacobian_angle(theta)
    W = so3_hat(w)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        d = (1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
             + t2 * t2 * t2 / 1209600.0)
    else:
        d = (1.0 - theta * np.sin(theta) / (2.0 * (1.0 - np.cos(theta)))) / (theta * theta)
    return _EYE3 - 0.5 * W + d * (W @ W)


def _check_jacobian_angle(theta):
    if theta < np.pi:
        return
    k = round(theta / (2.0 * np.pi))
    if k >= 1 and abs(theta - 2.0 * np.pi * k) < SINGULARITY_MARGIN:
        raise SingularJacobian(
            f"|omega| = {theta:.9f} within {SINGULARITY_MARGIN} of {k}*2pi")


def se3_q_matrix(theta_vec, v):
    """Q block of the SE(3) left Jacobian (the coupling of v into the
    translation rows), in the standard five-term closed form.

    Equals the double series sum_{n,m} hat(theta)^n hat(v) hat(theta)^m
    / (n+m+2)!, which the test suite uses as an oracle.
    """
    theta_vec = np.asarray(theta_vec, dtype=float)
    v = np.asarray(v, dtype=float)
    t = float(np.linalg.norm(theta_vec))
    T = so3_hat(theta_vec)
    V = so3_hat(v)
    t2 = t * t
    if t < SMALL_ANGLE:
        c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0
        c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0 - t2 * t2 * t2 / 3628800.0
        c3 = 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0
    else:
        st, ct = np.sin(t), np.cos(t)
        c1 = (t - st) / t ** 3
        c2 = (t2 + 2.0 * ct - 2.0) / (2.0 * t ** 4)
        c3 = (2.0 * t - 3.0 * st + t * ct) / (2.0 * t ** 5)
    TV = T @ V
    VT = V @ T
    TVT = TV @ T
    return (0.5 * V
            + c1 * (TV + VT + TVT)
            + c2 * (T @ TV + VT @ T - 3.0 * TVT)
            + c3 * (TVT @ T + T @ TVT))


# ---------------------------------------------------------------------------
# SE_n(3)
# ---------------------------------------------------------------------------

def tangent_n(xi):
    """Number of translation slots n for a flat tangent vector."""
    xi = np.asarray(xi)
    if xi.ndim != 1 or xi.size % 3 != 0 or xi.size < 3:
        raise ValueError(f"tangent length {xi.size} is not a positive multiple of 3")
    return xi.size // 3 - 1


def split_tangent(xi):
    """(omega, [v_1, ..., v_n]) view of a flat tangent vector."""
    xi = np.asarray(xi, dtype=float)
    n = tangent_n(xi)
    return xi[:3], [xi[3 * (i + 1):3 * (i + 2)] for i in range(n)]


def sen_hat(xi, n=None):
    """Lie-algebra matrix embedding of a flat tangent vector.

    Raises:
        ValueError: if a declared n disagrees with the vector length.
    """
    xi = np.asarray(xi, dtype=float)
    n_inferred = tangent_n(xi)
    if n is not None and n != n_inferred:
        raise ValueError(f"declared n={n} but tangent has n={n_inferred}")
    n = n_inferred
    M = np.zeros((3 + n, 3 + n))
    M[:3, :3] = so3_hat(xi[:3])
    for i in range(n):
        M[:3, 3 + i] = xi[3 * (i + 1):3 * (i + 2)]
    return M


def sen_vee(M):
    """Inverse of :func:`sen_hat` (exact)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0] - 3
    xi = np.empty(3 * (n + 1))
    xi[:3] = so3_vee(M[:3, :3])
    for i in range(n):
        xi[3 * (i + 1):3 * (i + 2)] = M[:3, 3 + i]
    return xi


def sen_from_parts(R, columns):
    """Group element from a rotation and its list of 3-vector columns."""
    R = np.asarray(R, dtype=float)
    n = len(columns)
    X = np.eye(3 + n)
    X[:3, :3] = R
    for i, t in enumerate(columns):
        X[:3, 3 + i] = np.asarray(t, dtype=float)
    return X


def sen_rotation(X):
    return np.asarray(X, dtype=float)[:3, :3]


def sen_columns(X):
    X = np.asarray(X, dtype=float)
    n = X.shape[0] - 3
    return [X[:3, 3 + i].copy() for i in range(n)]


def sen_inverse(X):
    """Group inverse: (R, t_i) -> (R^T, -R^T t_i)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0] - 3
    Rt = X[:3, :3].T
    Xi = np.eye(3 + n)
    Xi[:3, :3] = Rt
    Xi[:3, 3:] = -Rt @ X[:3, 3:]
    return Xi


def sen_exp(xi):
    """Exponential map: Rodrigues on the rotation, t_i = J(omega) v_i."""
    omega, vs = split_tangent(xi)
    R = so3_exp(omega)
    J = so3_left_jacobian(omega)
    return sen_from_parts(R, [J @ v for v in vs])


def sen_log(X):
    """Logarithm map, the exact inverse of :func:`sen_exp` inside the
    injectivity radius.

    Raises:
        AngleNearPi: if the rotation angle is within NEAR_PI_MARGIN of pi.
    """
    X = np.asarray(X, dtype=float)
    omega = so3_log(X[:3, :3])
    Jinv = so3_left_jacobian_inv(omega)
    n = X.shape[0] - 3
    xi = np.empty(3 * (n + 1))
    xi[:3] = omega
    for i in range(n):
        xi[3 * (i + 1):3 * (i + 2)] = Jinv @ X[:3, 3 + i]
    return xi


def sen_adjoint(X):
    """Matrix of Ad_X: R on the block diagonal, t_i^ R in the first block column."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0] - 3
    R = X[:3, :3]
    A = np.zeros((3 * (n + 1), 3 * (n + 1)))
    A[:3, :3] = R
    for i in range(n):
        r = 3 * (i + 1)
        A[r:r + 3, r:r + 3] = R
        A[r:r + 3, :3] = so3_hat(X[:3, 3 + i]) @ R
    return A


def sen_ad(xi):
    """Matrix of ad_xi: omega^ on the block diagonal, v_i^ in the first block column."""
    omega, vs = split_tangent(xi)
    n = len(vs)
    W = so3_hat(omega)
    A = np.zeros((3 * (n + 1), 3 * (n + 1)))
    A[:3, :3] = W
    for i, v in enumerate(vs):
        r = 3 * (i + 1)
        A[r:r + 3, r:r + 3] = W
        A[r:r + 3, :3] = so3_hat(v)
    return A


def sen_left_jacobian(xi):
    """Left Jacobian of SE_n(3), sum_i ad(xi)^i / (i+1)!, via the closed-form
    block layout: J(omega) blocks on the diagonal, Q_omega(v_i) in the first
    block column."""
    omega, vs = split_tangent(xi)
    n = len(vs)
    Jso3 = so3_left_jacobian(omega)
    J = np.zeros((3 * (n + 1), 3 * (n + 1)))
    J[:3, :3] = Jso3
    for i, v in enumerate(vs):
        r = 3 * (i + 1)
        J[r:r + 3, r:r + 3] = Jso3
        J[r:r + 3, :3] = se3_q_matrix(omega, v)
    return J


def sen_left_jacobian_inv(xi):
    """Inverse of :func:`sen_left_jacobian`.

    Block layout: J(omega)^-1 on the diagonal, -J^-1 Q_omega(v_i) J^-1 in the
    first block column.

    Raises:
        SingularJacobian: if |omega| is within SINGULARITY_MARGIN of a nonzero
            multiple of 2*pi.
    """
    omega, vs = split_tangent(xi)
    n = len(vs)
    Jinv = so3_left_jacobian_inv(omega)
    Ji = np.zeros((3 * (n + 1), 3 * (n + 1)))
    Ji[:3, :3] = Jinv
    for i, v in enumerate(vs):
        r = 3 * (i + 1)
        Ji[r:r + 3, r:r + 3] = Jinv
        Ji[r:r + 3, :3] = -Jinv @ se3_q_matrix(omega, v) @ Jinv
    return Ji
