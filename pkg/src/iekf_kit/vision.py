"""Camera geometry, landmark/feature measurement models, and the
sliding-window (stochastic-cloning) visual update.

Pixel conventions: intrinsic matrix K = [[fx,0,cx],[0,fy,cy],[0,0,1]],
measurements are 2-vectors (u, v).  Two projection modes are supported:

* "pinhole": u = fx x/z + cx, defined for z > 0 only;
* "bearing": the ray x/|x| is scaled by K and dehomogenized.  On z > 0 this
  coincides with the pinhole map (and shares its Jacobian); its domain error
  at the origin differs (zero range rather than non-positive depth).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lie
from .exceptions import (BehindCamera, DegenerateGeometry, Diverged,
                         ZeroRange)

DEPTH_EPS = 1e-9
RANGE_EPS = 1e-12
RANK_RTOL = 1e-10


@dataclass
class CameraModel:
    """Intrinsics, image bounds, and projection mode."""

    fx: float = 250.0
    fy: float = 250.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    mode: str = "pinhole"

    def __post_init__(self):
        if self.mode not in ("pinhole", "bearing"):
            raise ValueError(f"unknown projection mode {self.mode!r}")

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def project(self, x_cam):
        """Project a camera-frame point to pixels.

        Raises:
            ZeroRange: bearing mode, point at the camera center.
            BehindCamera: non-positive depth (dehomogenization undefined).
        """
        x_cam = np.asarray(x_cam, dtype=float)
        if self.mode == "bearing":
            rng = np.linalg.norm(x_cam)
            if rng < RANGE_EPS:
                raise ZeroRange("point at the camera center")
            y = self.K @ (x_cam / rng)
            if y[2] <= DEPTH_EPS / max(rng, 1.0):
                raise BehindCamera(f"depth {x_cam[2]:.3e}")
            return y[:2] / y[2]
        if x_cam[2] <= DEPTH_EPS:
            raise BehindCamera(f"depth {x_cam[2]:.3e}")
        return np.array([self.fx * x_cam[0] / x_cam[2] + self.cx,
                         self.fy * x_cam[1] / x_cam[2] + self.cy])

    def projection_jacobian(self, x_cam):
        """2x3 derivative of project() w.r.t. the camera-frame point.

        The bearing map equals the pinhole map wherever both are defined, so
        the Jacobian is shared; only the domain guards differ.
        """
        x, y, z = np.asarray(x_cam, dtype=float)
        if self.mode == "bearing" and np.linalg.norm(x_cam) < RANGE_EPS:
            raise ZeroRange("point at the camera center")
        if z <= DEPTH_EPS:
            raise BehindCamera(f"depth {z:.3e}")
        return np.array([[self.fx / z, 0.0, -self.fx * x / z ** 2],
                         [0.0, self.fy / z, -self.fy * y / z ** 2]])

    def in_view(self, x_cam, margin=0.0):
        try:
            uv = self.project(x_cam)
        except (BehindCamera, ZeroRange):
            return False
        return (margin <= uv[0] <= self.width - margin
                and margin <= uv[1] <= self.height - margin)


@dataclass
class Extrinsics:
    """Camera pose in the IMU (body) frame."""

    R_ic: np.ndarray = field(default_factory=lambda: np.eye(3))
    p_ic: np.ndarray = field(default_factory=lambda: np.zeros(3))


def camera_pose(state, ext):
    """World-frame camera pose (R_c, p_c) for an IMU state and extrinsics."""
    return state.R @ ext.R_ic, state.p + state.R @ ext.p_ic


def world_to_camera(R_c, p_c, f_world):
    return R_c.T @ (np.asarray(f_world, dtype=float) - p_c)


# --- landmark updates against the live state -------------------------------

def landmark_measurement(filt, model, ext, f_world, pixel, sigma_px,
                         landmark_index=None):
    """Residual, H, N for one landmark observation from the current state.

    ``landmark_index`` selects an in-state landmark (columns for its error are
    filled); None means the landmark position is known exactly.  H follows the
    filter's error convention, so the gain-weighted residual is a correction.
    """
    st = filt.state
    R_c, p_c = camera_pose(st, ext)
    x_cam = world_to_camera(R_c, p_c, f_world)
    J_pi = model.projection_jacobian(x_cam)
    S = ext.R_ic.T @ st.R.T
    H = np.zeros((2, filt.dim))
    if filt.variant.invariant:
        if landmark_index is None:
            H[:, 0:3] = J_pi @ S @ lie.so3_hat(f_world)
            H[:, 3:6] = -J_pi @ S
        else:
            # orientation dependence cancels for an in-state landmark
            H[:, 3:6] = -J_pi @ S
            k = 15 + 3 * landmark_index
            H[:, k:k + 3] = J_pi @ S
    else:
        p_ref = st.p
        f_ref = np.asarray(f_world, dtype=float)
        if filt.anchor_state is not None:
            p_ref = filt.anchor_state.p
            if landmark_index is not None and filt.anchor_landmarks is not None:
                f_ref = filt.anchor_landmarks[landmark_index]
        H[:, 0:3] = J_pi @ S @ lie.so3_hat(f_ref - p_ref)
        H[:, 3:6] = -J_pi @ S
        if landmark_index is not None:
            k = 15 + 3 * landmark_index
            H[:, k:k + 3] = J_pi @ S
    residual = np.asarray(pixel, dtype=float) - model.project(x_cam)
    N = np.eye(2) * sigma_px ** 2
    return residual, H, N


# --- clone-based (sliding window) updates ----------------------------------

def clone_feature_jacobians(filt, model, clone_index, f_world):
    """(residual_pred, H_x row pair, H_f row pair) for one clone observation
    of a triangulated feature at f_world.

    H_x covers the full filter state; H_f is the 2x3 feature block to be
    removed by nullspace projection.
    """
    cl = filt.clones[clone_index]
    x_cam = world_to_camera(cl.R, cl.p, f_world)
    J_pi = model.projection_jacobian(x_cam)
    S = cl.R.T
    H_x = np.zeros((2, filt.dim))
    k = filt.clone_index(clone_index)
    if filt.variant.invariant:
        H_x[:, k:k + 3] = J_pi @ S @ lie.so3_hat(f_world)
    else:
        H_x[:, k:k + 3] = J_pi @ S @ lie.so3_hat(
            np.asarray(f_world, dtype=float) - cl.p)
    H_x[:, k + 3:k + 6] = -J_pi @ S
    H_f = J_pi @ S
    return model.project(x_cam), H_x, H_f


def nullspace_project(residual, H_x, H_f):
    """Remove the feature-error columns by projecting onto the left nullspace
    of H_f (2k x 3).

    Raises:
        DegenerateGeometry: if H_f is rank deficient (no 3D constraint).
    """
    H_f = np.asarray(H_f, dtype=float)
    if H_f.shape[0] < 4:
        raise DegenerateGeometry("need at least two observations")
    Q, Rf = np.linalg.qr(H_f, mode="complete")
    if np.abs(np.diag(Rf)[:3]).min() <= RANK_RTOL * np.abs(Rf).max():
        raise DegenerateGeometry("feature Jacobian is rank deficient")
    Q2 = Q[:, 3:]
    return Q2.T @ residual, Q2.T @ H_x


def triangulate(model, poses, pixels, max_iters=20, step_tol=1e-8):
    """Triangulate a world point from pixel tracks over known camera poses.

    Linear (midpoint/DLT) initialization followed by Gauss-Newton on the
    reprojection error.

    Raises:
        DegenerateGeometry: parallel/degenerate rays (no linear solution).
        Diverged: Gauss-Newton did not reach the step tolerance.
    """
    A_rows, b_rows = [], []
    for (R_c, p_c), uv in zip(poses, pixels):
        ray = np.linalg.solve(model.K, np.array([uv[0], uv[1], 1.0]))
        ray = R_c @ (ray / np.linalg.norm(ray))
        P = np.eye(3) - np.outer(ray, ray)
        A_rows.append(P)
        b_rows.append(P @ p_c)
    A = np.vstack(A_rows)
    b = np.concatenate(b_rows)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[2] <= RANK_RTOL * sv[0]:
        raise DegenerateGeometry("rays do not intersect transversally")
    f, *_ = np.linalg.lstsq(A, b, rcond=None)
    for _ in range(max_iters):
        JtJ = np.zeros((3, 3))
        Jtr = np.zeros(3)
        for (R_c, p_c), uv in zip(poses, pixels):
            x_cam = world_to_camera(R_c, p_c, f)
            if x_cam[2] <= DEPTH_EPS:
                raise Diverged("refined point moved behind a camera")
            J = model.projection_jacobian(x_cam) @ R_c.T
            r = np.asarray(uv, dtype=float) - model.project(x_cam)
            JtJ += J.T @ J
            Jtr += J.T @ r
        try:
            step = np.linalg.solve(JtJ, Jtr)
        except np.linalg.LinAlgError as e:
            raise DegenerateGeometry(str(e)) from e
        f = f + step
        if np.linalg.norm(step) < step_tol:
            return f
    raise Diverged(f"no convergence in {max_iters} iterations")


class SlidingWindowUpdater:
    """Stochastic-cloning visual front end driving a FilterInstance.

    Maintains a window of camera-pose clones and per-feature pixel tracks;
    when a track ends (feature lost or the window slides past its first
    observation) the feature is triangulated, its stacked measurement is
    projected off the feature error, and the filter is updated.
    """

    def __init__(self, model, ext, max_clones=11, max_features=40,
                 sigma_px=1.0):
        self.model = model
        self.ext = ext
        self.max_clones = max_clones
        self.max_features = max_features
        self.sigma_px = sigma_px
        self.tracks = {}          # feature id -> list of (clone seq, pixel)
        self._seq = 0             # monotone id of the next clone
        self._window = []         # clone seqs aligned with filt.clones

    def ingest(self, filt, t, observations):
        """One camera epoch: clone, extend tracks, update on dead tracks,
        slide the window.

        ``observations`` maps feature id -> pixel measurement.
        """
        R_c, p_c = camera_pose(filt.state, self.ext)
        filt.clone_camera_pose(t, R_c, p_c)
        self._window.append(self._seq)
        self._seq += 1
        for fid, uv in observations.items():
            self.tracks.setdefault(fid, []).append(
                (self._window[-1], np.asarray(uv, dtype=float)))
        dead = [fid for fid in self.tracks if fid not in observations]
        if len(self._window) > self.max_clones:
            oldest = self._window[0]
            dead += [fid for fid, tr in self.tracks.items()
                     if tr[0][0] == oldest and fid not in dead]
        n_updated = self._flush(filt, dead)
        if len(self._window) > self.max_clones:
            self._drop_clone(filt, 0)
        return n_updated

    def _flush(self, filt, feature_ids):
        rows_r, rows_H = [], []
        used = 0
        for fid in feature_ids:
            track = self.tracks.pop(fid)
            if used >= self.max_features:
                continue
            track = [(s, uv) for s, uv in track if s in self._window]
            if len(track) < 3:
                continue
            idx = [self._window.index(s) for s, _ in track]
            poses = [(filt.clones[i].R, filt.clones[i].p) for i in idx]
            pixels = [uv for _, uv in track]
            try:
                f = triangulate(self.model, poses, pixels)
            except (DegenerateGeometry, Diverged):
                continue
            r_stack, Hx_stack, Hf_stack = [], [], []
            try:
                for i, uv in zip(idx, pixels):
                    pred, H_x, H_f = clone_feature_jacobians(
                        filt, self.model, i, f)
                    r_stack.append(uv - pred)
                    Hx_stack.append(H_x)
                    Hf_stack.append(H_f)
                r0, H0 = nullspace_project(np.concatenate(r_stack),
                                           np.vstack(Hx_stack),
                                           np.vstack(Hf_stack))
            except (DegenerateGeometry, BehindCamera, ZeroRange):
                continue
            rows_r.append(r0)
            rows_H.append(H0)
            used += 1
        if not rows_r:
            return 0
        residual = np.concatenate(rows_r)
        H = np.vstack(rows_H)
        N = np.eye(len(residual)) * self.sigma_px ** 2
        filt.update_raw(residual, H, N)
        return used

    def _drop_clone(self, filt, i):
        filt.marginalize_clone(i)
        del self._window[i]


# --- observability ----------------------------------------------------------

def observability_matrix(dt, k, gravity=None):
    """Stacked observability matrix of the landmark-observation error system
    and its numerical rank.

    The 12-state (orientation, position, velocity, one landmark) invariant
    error dynamics are propagated by the exact transition Phi(dt); the
    measurement row reads the landmark-minus-position error.  Returns
    (O, rank, nullspace_dim) with rank from an SVD at a relative threshold.
    """
    from . import imu as imu_model
    from .errorprop import loglinear_transition
    F = np.zeros((12, 12))
    F[:9, :9] = imu_model.imu_error_matrix_a(gravity)
    Phi = loglinear_transition(F, dt)
    H = np.zeros((3, 12))
    H[:, 3:6] = -np.eye(3)
    H[:, 9:12] = np.eye(3)
    rows = []
    Pk = np.eye(12)
    for _ in range(k):
        rows.append(H @ Pk)
        Pk = Phi @ Pk
    O = np.vstack(rows)
    sv = np.linalg.svd(O, compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0]))
    return O, rank, 12 - rank
