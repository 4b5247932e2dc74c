"""Lie-core tests: oracles are truncated series, matrix exponentials, and
finite roundtrips; closed forms are never trusted against themselves."""

import numpy as np
import pytest
from scipy.linalg import expm

from iekf_kit import lie
from iekf_kit.exceptions import AngleNearPi, SingularJacobian


def series_exp(M, terms=30):
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for i in range(1, terms):
        term = term @ M / i
        out = out + term
    return out


def series_left_jacobian(xi, terms=25):
    ad = lie.sen_ad(xi)
    out = np.eye(ad.shape[0])
    term = np.eye(ad.shape[0])
    for i in range(1, terms):
        term = term @ ad / (i + 1)
        out = out + term
    return out


def q_double_series(theta, v, terms=30):
    """sum_{n,m} hat(theta)^n hat(v) hat(theta)^m / (n+m+2)!"""
    T = lie.so3_hat(theta)
    V = lie.so3_hat(v)
    from math import factorial
    Tp = [np.eye(3)]
    for _ in range(terms):
        Tp.append(Tp[-1] @ T)
    out = np.zeros((3, 3))
    for n in range(terms):
        for m in range(terms - n):
            out += Tp[n] @ V @ Tp[m] / factorial(n + m + 2)
    return out


def test_hat_vee_roundtrip():
    rng = np.random.default_rng(0)
    for n in (0, 1, 2, 3):
        xi = rng.normal(size=3 * (n + 1))
        assert np.array_equal(lie.sen_vee(lie.sen_hat(xi)), xi)


def test_sen_hat_rejects_wrong_declared_n():
    with pytest.raises(ValueError):
        lie.sen_hat(np.zeros(9), n=1)
    with pytest.raises(ValueError):
        lie.tangent_n(np.zeros(4))


def test_so3_exp_matches_series():
    rng = np.random.default_rng(1)
    for _ in range(100):
        w = rng.normal(0, 1.0, 3)
        assert np.abs(lie.so3_exp(w) - series_exp(lie.so3_hat(w))).max() < 1e-12


def test_so3_exp_small_angle_branch():
    for scale in (1e-12, 1e-9, 1e-7):
        w = np.array([1.0, -2.0, 0.5]) * scale
        assert np.abs(lie.so3_exp(w) - series_exp(lie.so3_hat(w))).max() < 1e-15


def test_sen_exp_matches_matrix_exponential():
    rng = np.random.default_rng(2)
    for n in (1, 2, 3):
        for _ in range(50):
            xi = rng.normal(0, 0.8, 3 * (n + 1))
            assert np.abs(lie.sen_exp(xi)
                          - series_exp(lie.sen_hat(xi))).max() < 1e-12


def test_log_exp_roundtrip_1000_samples():
    # 1000 seeded samples on SE_2(3) with |omega| <= 3.0, error < 1e-9
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        xi = rng.normal(0, 1.0, 9)
        nrm = np.linalg.norm(xi[:3])
        if nrm > 3.0:
            xi[:3] *= 3.0 / nrm * rng.uniform(0.1, 1.0)
        back = lie.sen_log(lie.sen_exp(xi))
        worst = max(worst, np.abs(back - xi).max())
    assert worst < 1e-9


def test_log_raises_near_pi():
    w = np.array([np.pi - 1e-9, 0.0, 0.0])
    with pytest.raises(AngleNearPi):
        lie.so3_log(lie.so3_exp(w))


def test_left_jacobian_matches_series():
    # 500 samples with |omega| <= 2, relative Frobenius error < 1e-10
    rng = np.random.default_rng(4)
    for n in (1, 2):
        worst = 0.0
        for _ in range(250):
            xi = rng.normal(0, 0.7, 3 * (n + 1))
            nrm = np.linalg.norm(xi[:3])
            if nrm > 2.0:
                xi[:3] *= 2.0 / nrm
            J = lie.sen_left_jacobian(xi)
            S = series_left_jacobian(xi)
            worst = max(worst, np.linalg.norm(J - S) / np.linalg.norm(S))
        assert worst < 1e-10


def test_left_jacobian_inverse_is_inverse():
    rng = np.random.default_rng(5)
    for _ in range(200):
        xi = rng.normal(0, 0.8, 9)
        J = lie.sen_left_jacobian(xi)
        Ji = lie.sen_left_jacobian_inv(xi)
        assert np.abs(J @ Ji - np.eye(9)).max() < 1e-9


def test_jacobian_inverse_raises_near_2pi():
    w = np.zeros(9)
    w[0] = 2.0 * np.pi
    with pytest.raises(SingularJacobian):
        lie.sen_left_jacobian_inv(w)
    # near pi the Jacobian is still fine
    w[0] = np.pi
    lie.sen_left_jacobian_inv(w)


def test_q_matrix_against_double_series():
    rng = np.random.default_rng(6)
    for _ in range(100):
        theta = rng.normal(0, 0.6, 3)
        v = rng.normal(0, 1.0, 3)
        Q = lie.se3_q_matrix(theta, v)
        S = q_double_series(theta, v)
        assert np.abs(Q - S).max() < 1e-12


def test_q_matrix_small_angle_branch():
    rng = np.random.default_rng(7)
    v = rng.normal(0, 1.0, 3)
    for scale in (1e-12, 1e-8, 1e-7):
        theta = np.array([0.3, -0.7, 0.2]) * scale
        Q = lie.se3_q_matrix(theta, v)
        S = q_double_series(theta, v)
        assert np.abs(Q - S).max() < 1e-14


def test_adjoint_conjugation_identity():
    # Ad_X as a matrix: X hat(xi) X^-1 = hat(Ad_X xi)
    rng = np.random.default_rng(8)
    for _ in range(50):
        X = lie.sen_exp(rng.normal(0, 0.8, 9))
        xi = rng.normal(0, 1.0, 9)
        lhs = X @ lie.sen_hat(xi) @ lie.sen_inverse(X)
        rhs = lie.sen_hat(lie.sen_adjoint(X) @ xi)
        assert np.abs(lhs - rhs).max() < 1e-10


def test_ad_is_commutator():
    rng = np.random.default_rng(9)
    for _ in range(50):
        a = rng.normal(0, 1.0, 9)
        b = rng.normal(0, 1.0, 9)
        lhs = lie.sen_hat(lie.sen_ad(a) @ b)
        A, B = lie.sen_hat(a), lie.sen_hat(b)
        assert np.abs(lhs - (A @ B - B @ A)).max() < 1e-12


def test_exp_of_ad_equals_adjoint_of_exp():
    rng = np.random.default_rng(10)
    for _ in range(50):
        xi = rng.normal(0, 0.7, 9)
        lhs = expm(lie.sen_ad(xi))
        rhs = lie.sen_adjoint(lie.sen_exp(xi))
        assert np.abs(lhs - rhs).max() < 1e-10


def test_adjoint_conjugation_identity_200_pairs():
    # exp(A) B exp(-A) = exp(ad_A) B for algebra elements A, B
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        a = rng.normal(0, 0.5, 9)
        b = rng.normal(0, 0.5, 9)
        lhs = lie.sen_exp(a) @ lie.sen_hat(b) @ lie.sen_inverse(lie.sen_exp(a))
        rhs = lie.sen_hat(expm(lie.sen_ad(a)) @ b)
        worst = max(worst, np.abs(lhs - rhs).max())
    assert worst < 1e-9


def test_inverse_is_group_inverse():
    rng = np.random.default_rng(12)
    for n in (1, 2, 3):
        X = lie.sen_exp(rng.normal(0, 0.8, 3 * (n + 1)))
        assert np.abs(X @ lie.sen_inverse(X) - np.eye(3 + n)).max() < 1e-12


def test_runtime_parameter_n_shared_code_path():
    # one code path for every n: exp/log roundtrips at n = 5
    rng = np.random.default_rng(13)
    xi = rng.normal(0, 0.5, 18)
    assert np.abs(lie.sen_log(lie.sen_exp(xi)) - xi).max() < 1e-10
