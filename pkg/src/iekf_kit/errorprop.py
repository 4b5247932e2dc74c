"""Closed-form log-error dynamics on se_n(3) and supporting integrators.

Two equivalent descriptions of the multiplicative error between a reference
trajectory and a noisy open-loop tracker are implemented:

* the group-level ODE for eta itself (used as an integration oracle), and
* the closed-form ODE for xi = log(eta)^vee, whose only nonlinear term is the
  inverse left Jacobian multiplying the noise.

Both the left form (body-frame inputs) and the right form (fixed-frame inputs,
noise transported by the adjoint of the estimate) are provided.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from . import lie
from .exceptions import F0NotCompatible, StepRejected

ANGLE_DOMAIN = 2.0 * np.pi - 1e-6


def left_error_rate(xi, vb, w, A):
    """Rate of the left log-error: -ad(vb) xi + J(-ad_xi)^-1 w + A xi."""
    xi = np.asarray(xi, dtype=float)
    return (-lie.sen_ad(vb) @ xi
            + lie.sen_left_jacobian_inv(-xi) @ np.asarray(w, dtype=float)
            + np.asarray(A, dtype=float) @ xi)


def right_error_rate(xi, vg, w, adjoint_of_estimate, A):
    """Rate of the right log-error: ad(vg) xi + J(ad_xi)^-1 Ad_est w + A xi."""
    xi = np.asarray(xi, dtype=float)
    return (lie.sen_ad(vg) @ xi
            + lie.sen_left_jacobian_inv(xi)
            @ (np.asarray(adjoint_of_estimate, dtype=float) @ np.asarray(w, dtype=float))
            + np.asarray(A, dtype=float) @ xi)


def validate_group_affine(f0, n, trials=100, tol=1e-8, seed=0):
    """Check f0(X1 X2) = f0(X1) X2 + X1 f0(X2) on random group pairs.

    Raises:
        F0NotCompatible: if the property fails beyond tol on any pair.
    """
    rng = np.random.default_rng(seed)
    dim = 3 * (n + 1)
    for _ in range(trials):
        x1 = lie.sen_exp(rng.normal(0.0, 0.8, dim))
        x2 = lie.sen_exp(rng.normal(0.0, 0.8, dim))
        lhs = f0(x1 @ x2)
        rhs = f0(x1) @ x2 + x1 @ f0(x2)
        scale = max(1.0, float(np.abs(lhs).max()))
        if np.abs(lhs - rhs).max() > tol * scale:
            raise F0NotCompatible(
                f"property violated by {np.abs(lhs - rhs).max():.3e}")


def group_error_rate(eta, vb=None, vg=None, w=None, f0=None, side="left",
                     estimate=None):
    """Matrix-valued rate of the invariant error eta.

    Left form:  eta_dot = -vb^ eta + eta vb^ + eta w^ + f0(eta)
    Right form: eta_dot =  vg^ eta - eta vg^ + (Ad_est w)^ eta + f0(eta)

    ``estimate`` is the group element whose adjoint transports the noise in
    the right form; identity when omitted.  Used only as an integration
    oracle for cross-validating the log-error ODE.
    """
    eta = np.asarray(eta, dtype=float)
    dim = eta.shape[0] - 3
    zero = np.zeros(3 * (dim + 1))
    w_hat = lie.sen_hat(w if w is not None else zero)
    drift = f0(eta) if f0 is not None else np.zeros_like(eta)
    if side == "left":
        vb_hat = lie.sen_hat(vb if vb is not None else zero)
        return -vb_hat @ eta + eta @ vb_hat + eta @ w_hat + drift
    if side == "right":
        vg_hat = lie.sen_hat(vg if vg is not None else zero)
        if estimate is not None:
            w_hat = estimate @ w_hat @ lie.sen_inverse(estimate)
        return vg_hat @ eta - eta @ vg_hat + w_hat @ eta + drift
    raise ValueError(f"unknown side {side!r}")


def integrate_error(rate_fn, xi0, horizon, step, noise_path=None):
    """Integrate a log-error ODE with the classical 4th-order one-step method.

    ``rate_fn(t, xi, w)`` gives the deterministic-plus-noise rate; the noise
    sample ``w`` is held constant over each step (zero when ``noise_path`` is
    None).  ``noise_path`` may be an array of per-step samples or a callable
    of the step start time.

    Returns:
        (times, xis): arrays of shape (k+1,) and (k+1, dim).

    Raises:
        StepRejected: if any accepted state leaves the supported angle domain.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    xi = np.array(xi0, dtype=float)
    n_steps = int(round(horizon / step))
    times = np.empty(n_steps + 1)
    xis = np.empty((n_steps + 1, xi.size))
    times[0] = 0.0
    xis[0] = xi
    zero_w = np.zeros(xi.size)
    for k in range(n_steps):
        t = k * step
        if noise_path is None:
            w = zero_w
        elif callable(noise_path):
            w = np.asarray(noise_path(t), dtype=float)
        else:
            w = np.asarray(noise_path[k], dtype=float)
        k1 = rate_fn(t, xi, w)
        k2 = rate_fn(t + step / 2.0, xi + step / 2.0 * k1, w)
        k3 = rate_fn(t + step / 2.0, xi + step / 2.0 * k2, w)
        k4 = rate_fn(t + step, xi + step * k3, w)
        xi = xi + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.linalg.norm(xi[:3]) >= ANGLE_DOMAIN:
            raise StepRejected(f"|omega| left the domain at t={t + step:.6f}")
        times[k + 1] = t + step
        xis[k + 1] = xi
    return times, xis


def integrate_group_error(eta0, rate_fn, horizon, step):
    """RK4 on a matrix-valued eta ODE; oracle counterpart of integrate_error.

    ``rate_fn(t, eta)`` returns the matrix rate (noise handling is the
    caller's business, typically via a closure over a frozen noise path).
    """
    eta = np.array(eta0, dtype=float)
    n_steps = int(round(horizon / step))
    times = np.empty(n_steps + 1)
    etas = np.empty((n_steps + 1,) + eta.shape)
    times[0] = 0.0
    etas[0] = eta
    for k in range(n_steps):
        t = k * step
        k1 = rate_fn(t, eta)
        k2 = rate_fn(t + step / 2.0, eta + step / 2.0 * k1)
        k3 = rate_fn(t + step / 2.0, eta + step / 2.0 * k2)
        k4 = rate_fn(t + step, eta + step * k3)
        eta = eta + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        times[k + 1] = t + step
        etas[k + 1] = eta
    return times, etas


def expm_nilpotent_or_series(M, max_terms=None):
    """Matrix exponential via the exact finite polynomial when M is nilpotent,
    falling back to the scaled-and-squared routine otherwise."""
    M = np.asarray(M, dtype=float)
    dim = M.shape[0]
    limit = dim + 1 if max_terms is None else max_terms
    out = np.eye(dim)
    term = np.eye(dim)
    for i in range(1, limit):
        term = term @ M / i
        if not np.any(term):
            return out
        out = out + term
    return expm(M)


def loglinear_transition(A, dt):
    """Transition matrix Phi = exp(A dt).

    Exact finite polynomial when A is nilpotent (the IMU error dynamics),
    scaled-and-squared series otherwise.
    """
    A = np.asarray(A, dtype=float)
    return expm_nilpotent_or_series(A * dt)
