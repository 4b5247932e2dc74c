"""Synthetic trajectory, sensor synthesis, and the Monte Carlo study.

The reference trajectory is a smooth closed 3D Lissajous curve flown with a
yaw-follows-velocity attitude policy (heading aligned with the horizontal
velocity, zero roll/pitch), so the body rate is a pure yaw rate and every
kinematic quantity is available in closed form.

Sensor models: gyro/accel with additive white noise and random-walk biases,
and a down-looking camera observing point landmarks scattered below the
trajectory.  IMU samples are taken at the interval midpoint so that exact
dead reckoning of the noise-free stream stays within centimeters of the
analytic trajectory over a hundred seconds.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import imu as imu_model
from . import lie
from . import vision
from .exceptions import BehindCamera, EmptyReport, OutOfDomain, ZeroRange
from .filters import (FilterInstance, FilterVariant,
                      invariant_initial_covariance)
from .imu import ImuMeasurement, ImuNoiseSpec, ImuState


@dataclass
class TrajectorySpec:
    """Closed-form reference path p(t) = (ax cos(wx t), ay sin(wy t),
    az sin(wz t + phz)) with heading locked to the horizontal velocity."""

    ax: float = 50.0
    ay: float = 40.0
    az: float = 20.0
    wx: float = 0.075
    wy: float = 0.05
    wz: float = 0.05
    phz: float = 1.0

    def position(self, t):
        return np.array([self.ax * np.cos(self.wx * t),
                         self.ay * np.sin(self.wy * t),
                         self.az * np.sin(self.wz * t + self.phz)])

    def velocity(self, t):
        return np.array([-self.ax * self.wx * np.sin(self.wx * t),
                         self.ay * self.wy * np.cos(self.wy * t),
                         self.az * self.wz * np.cos(self.wz * t + self.phz)])

    def acceleration(self, t):
        return np.array([-self.ax * self.wx ** 2 * np.cos(self.wx * t),
                         -self.ay * self.wy ** 2 * np.sin(self.wy * t),
                         -self.az * self.wz ** 2 * np.sin(self.wz * t + self.phz)])

    def yaw(self, t):
        v = self.velocity(t)
        return np.arctan2(v[1], v[0])

    def yaw_rate(self, t):
        v = self.velocity(t)
        a = self.acceleration(t)
        return (v[0] * a[1] - v[1] * a[0]) / (v[0] ** 2 + v[1] ** 2)

    def attitude(self, t):
        c, s = np.cos(self.yaw(t)), np.sin(self.yaw(t))
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def omega_body(self, t):
        return np.array([0.0, 0.0, self.yaw_rate(t)])

    def state(self, t):
        """ImuState at time t (zero biases)."""
        return ImuState(self.attitude(t), self.position(t), self.velocity(t),
                        np.zeros(3), np.zeros(3))


# camera optic axis along -z of the body: a down-looking camera when the
# attitude is yaw-only
DOWN_CAMERA = vision.Extrinsics(
    R_ic=np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]),
    p_ic=np.zeros(3))


@dataclass
class Scenario:
    """Everything that defines one simulated world (before seeding)."""

    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    duration: float = 60.0
    imu_rate: float = 200.0
    cam_rate: float = 20.0
    noise: ImuNoiseSpec = field(default_factory=ImuNoiseSpec)
    camera: vision.CameraModel = field(default_factory=vision.CameraModel)
    extrinsics: vision.Extrinsics = field(
        default_factory=lambda: DOWN_CAMERA)
    n_landmarks: int = 12
    pixel_sigma: float = 1.0
    max_range: float = 110.0
    landmark_box: tuple = ((-60.0, 60.0), (-50.0, 50.0), (-80.0, -50.0))

    def truth_state(self, t):
        if t < 0.0 or t > self.duration:
            raise OutOfDomain(f"t = {t} outside [0, {self.duration}]")
        return self.trajectory.state(t)

    def make_landmarks(self, rng, n=None):
        """Draw the landmark field.

        Dense fields (50 points or more) are uniform in the landmark box.
        Sparse fields are stratified along the flight path with lateral
        jitter scaled to the viewing depth, so several landmarks stay in
        view of the down-looking camera at every epoch; coordinates are
        clipped to the box.
        """
        n = self.n_landmarks if n is None else n
        lo = np.array([b[0] for b in self.landmark_box])
        hi = np.array([b[1] for b in self.landmark_box])
        if n >= 50:
            return rng.uniform(lo, hi, (n, 3))
        ts = (np.arange(n) + 0.5
              + rng.uniform(-0.2, 0.2, n)) * self.duration / n
        pts = np.empty((n, 3))
        for i, t in enumerate(ts):
            p = self.trajectory.position(t)
            pts[i, 2] = rng.uniform(lo[2], hi[2])
            depth = p[2] - pts[i, 2]
            pts[i, :2] = p[:2] + rng.uniform(-0.35, 0.35, 2) * depth
        return np.clip(pts, lo, hi)


@dataclass
class TruthData:
    """One realization of the true world: states at IMU epochs, the IMU
    stream, and the landmark field."""

    times: np.ndarray
    states: list
    measurements: list
    landmarks: np.ndarray


def synthesize_truth(scenario, rng, with_noise=True, landmarks=None):
    """Simulate the true trajectory with random-walk biases and build the IMU
    measurement stream.

    The clean measurement at step k is the discrete increment of the analytic
    trajectory (rate from the attitude increment log, specific force from the
    velocity increment); the emitted reading adds the current bias and white
    noise.  The true states are the exact one-step propagation of the clean
    stream, so the filter's motion model has no discretization mismatch
    against the truth, and the chain tracks the analytic curve to within
    centimeters over a hundred seconds (checked in the test suite).
    """
    sc = scenario
    dt = 1.0 / sc.imu_rate
    n = int(round(sc.duration * sc.imu_rate))
    g = sc.noise.gravity
    sw = sc.noise.sigma_gw / np.sqrt(dt) if with_noise else 0.0
    sa = sc.noise.sigma_aw / np.sqrt(dt) if with_noise else 0.0
    sbw = sc.noise.sigma_gbw * np.sqrt(dt) if with_noise else 0.0
    sba = sc.noise.sigma_abw * np.sqrt(dt) if with_noise else 0.0
    b_w = np.zeros(3)
    b_a = np.zeros(3)
    st = sc.trajectory.state(0.0)
    states = [st]
    meas = []
    times = np.arange(n + 1) * dt
    for k in range(n):
        t0, t1 = k * dt, (k + 1) * dt
        R_k = sc.trajectory.attitude(t0)
        dv = sc.trajectory.velocity(t1) - sc.trajectory.velocity(t0)
        clean = ImuMeasurement(
            lie.so3_log(R_k.T @ sc.trajectory.attitude(t1)) / dt,
            R_k.T @ (dv / dt - g),
            t=t0)
        meas.append(ImuMeasurement(
            clean.omega + b_w + sw * rng.standard_normal(3),
            clean.accel + b_a + sa * rng.standard_normal(3),
            t=clean.t))
        b_w = b_w + sbw * rng.standard_normal(3)
        b_a = b_a + sba * rng.standard_normal(3)
        prev = states[-1]
        clean_state = ImuState(prev.R, prev.p, prev.v,
                               np.zeros(3), np.zeros(3))
        nxt = imu_model.propagate_mean(clean_state, clean, dt, g)
        nxt.b_omega = b_w.copy()
        nxt.b_a = b_a.copy()
        states.append(nxt)
    if landmarks is None:
        landmarks = sc.make_landmarks(rng)
    return TruthData(times, states, meas, landmarks)


def visible_landmarks(scenario, state, landmarks):
    """Indices of landmarks inside the truth camera frustum and range."""
    R_c, p_c = vision.camera_pose(state, scenario.extrinsics)
    out = []
    for j, f in enumerate(landmarks):
        x = vision.world_to_camera(R_c, p_c, f)
        if x[2] < 1.0 or np.linalg.norm(x) > scenario.max_range:
            continue
        if scenario.camera.in_view(x):
            out.append(j)
    return out


def camera_frame(scenario, state, landmarks, rng):
    """Noisy pixel observations {landmark index: (u, v)} for one epoch."""
    R_c, p_c = vision.camera_pose(state, scenario.extrinsics)
    obs = {}
    for j in visible_landmarks(scenario, state, landmarks):
        uv = scenario.camera.project(
            vision.world_to_camera(R_c, p_c, landmarks[j]))
        obs[j] = uv + scenario.pixel_sigma * rng.standard_normal(2)
    return obs


@dataclass
class InitSpec:
    """Standard deviations of the initial estimate perturbation (per axis)."""

    sigma_theta: float = 0.1
    sigma_p: float = 0.5
    sigma_v: float = 0.1
    sigma_bw: float = 0.0
    sigma_ba: float = 0.0
    sigma_f: float = 0.5

    def sigmas(self, n_landmarks=0):
        base = np.repeat([self.sigma_theta, self.sigma_p, self.sigma_v,
                          self.sigma_bw, self.sigma_ba], 3)
        return np.concatenate([base, np.full(3 * n_landmarks, self.sigma_f)])


def perturbed_filter(variant, truth0, landmarks, init, scenario, rng):
    """Build a filter whose initial error is drawn from the stated prior.

    The perturbation is applied in world-frame coordinates so the EKF-family
    prior is exactly diagonal; the invariant prior is the same uncertainty
    transported into right-invariant coordinates.
    """
    m = len(landmarks)
    sig = init.sigmas(m)
    e = sig * rng.standard_normal(len(sig))
    st = ImuState(
        lie.so3_exp(e[0:3]) @ truth0.R,
        truth0.p + e[3:6],
        truth0.v + e[6:9],
        truth0.b_omega + e[9:12],
        truth0.b_a + e[12:15])
    lm_est = landmarks + e[15:].reshape(m, 3)
    if variant.invariant:
        P0 = invariant_initial_covariance(st, sig, lm_est)
    else:
        P0 = np.diag(sig ** 2)
    return FilterInstance(variant, st, P0, scenario.noise,
                          rng=np.random.default_rng(rng.integers(2 ** 63)),
                          landmarks=lm_est, gravity=scenario.noise.gravity)


def run_filter(scenario, truth, frames, filt):
    """Drive one filter through one truth realization with in-state landmark
    updates at the camera rate.

    ``frames`` is the list of camera epochs (dicts of pixel observations),
    shared across variants for paired-noise comparisons.  Returns a list of
    per-epoch tuples (t, pos_nees, ang_nees, |pos_err|, |ang_err|).
    """
    dt = 1.0 / scenario.imu_rate
    every = max(1, int(round(scenario.imu_rate / scenario.cam_rate)))
    records = []
    fi = 0
    for k, meas in enumerate(truth.measurements):
        filt.predict(meas, dt)
        if (k + 1) % every == 0:
            t = truth.times[k + 1]
            st_true = truth.states[k + 1]
            obs = frames[fi]
            fi += 1
            if obs:
                rows_r, rows_H = [], []
                for j, uv in obs.items():
                    try:
                        r, H, _ = vision.landmark_measurement(
                            filt, scenario.camera, scenario.extrinsics,
                            filt.landmarks[j], uv, scenario.pixel_sigma,
                            landmark_index=j)
                    except (BehindCamera, ZeroRange):
                        # predicted landmark outside the projection domain;
                        # drop the observation this epoch
                        continue
                    rows_r.append(r)
                    rows_H.append(H)
                if rows_r:
                    residual = np.concatenate(rows_r)
                    N = np.eye(len(residual)) * scenario.pixel_sigma ** 2
                    filt.update_raw(residual, np.vstack(rows_H), N)
            pos_nees, ang_nees = filt.nees(st_true)
            pos_err, ang_err = filt.errors(st_true)
            records.append((t, pos_nees, ang_nees,
                            float(np.linalg.norm(pos_err)),
                            float(np.linalg.norm(ang_err))))
    return records


@dataclass
class MonteCarloReport:
    """Per-variant, per-run, per-epoch records of NEES and error norms."""

    variants: list
    records: dict          # label -> list over runs of list of tuples
    n_runs: int
    seed: int

    def aggregate(self):
        """Mean NEES and RMSE per variant over all runs and epochs.

        Raises:
            EmptyReport: if a variant has no records.
        """
        out = {}
        for v in self.variants:
            rows = [r for run in self.records[v.label] for r in run]
            if not rows:
                raise EmptyReport(f"no records for {v.label}")
            arr = np.array(rows)
            out[v.label] = {
                "mean_pos_nees": float(arr[:, 1].mean()),
                "mean_ang_nees": float(arr[:, 2].mean()),
                "pos_rmse": float(np.sqrt((arr[:, 3] ** 2).mean())),
                "ang_rmse": float(np.sqrt((arr[:, 4] ** 2).mean())),
                "epochs": int(len(arr)),
            }
        return out


def monte_carlo_single_run(scenario, variants, init, seed, run_index):
    """One paired run: every variant sees the same truth realization, sensor
    noise, and initial perturbation; only the estimator differs.

    Seeding is a pure function of (seed, run_index), so results do not depend
    on execution order or parallelism degree.
    """
    children = np.random.SeedSequence(seed, spawn_key=(run_index,)).spawn(3)
    rng_truth = np.random.default_rng(children[0])
    rng_cam = np.random.default_rng(children[1])
    rng_init = np.random.default_rng(children[2])
    truth = synthesize_truth(scenario, rng_truth)
    every = max(1, int(round(scenario.imu_rate / scenario.cam_rate)))
    frames = []
    for k in range(len(truth.measurements)):
        if (k + 1) % every == 0:
            frames.append(camera_frame(
                scenario, truth.states[k + 1], truth.landmarks, rng_cam))
    init_state = rng_init.bit_generator.state
    out = {}
    for v in variants:
        rng_init.bit_generator.state = init_state
        filt = perturbed_filter(v, truth.states[0], truth.landmarks,
                                init, scenario, rng_init)
        out[v.label] = run_filter(scenario, truth, frames, filt)
    return out


def run_monte_carlo(scenario, variants, n_runs=50, seed=0, init=None,
                    progress=None, parallelism=1):
    """Paired-seed Monte Carlo study over independent runs.

    ``parallelism`` > 1 maps runs over a process pool; the report is
    assembled in run order either way.
    """
    init = InitSpec() if init is None else init
    records = {v.label: [] for v in variants}
    if parallelism > 1 and n_runs > 1:
        import concurrent.futures
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=min(parallelism, n_runs)) as pool:
            futures = [pool.submit(monte_carlo_single_run, scenario,
                                   variants, init, seed, i)
                       for i in range(n_runs)]
            done = 0
            for _ in concurrent.futures.as_completed(futures):
                done += 1
                if progress is not None:
                    progress(done, n_runs)
            results = [f.result() for f in futures]
    else:
        results = []
        for i in range(n_runs):
            results.append(monte_carlo_single_run(
                scenario, variants, init, seed, i))
            if progress is not None:
                progress(i + 1, n_runs)
    for res in results:
        for v in variants:
            records[v.label].append(res[v.label])
    return MonteCarloReport(list(variants), records, n_runs, seed)


# --- sliding-window (clone-based) single run -------------------------------

def run_sliding_window(scenario, truth, variant=None, seed=0,
                       max_clones=11, max_features=40, updates=True):
    """One run of the clone-based visual-inertial pipeline starting from the
    true initial state; with ``updates=False`` the same filter dead-reckons.

    Returns (times, position error norms) sampled at the camera rate.
    """
    variant = FilterVariant("iekf") if variant is None else variant
    rng_cam = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    prior = np.repeat([1e-3, 1e-3, 1e-3, 2e-3, 2e-2], 3)
    filt = FilterInstance(
        variant, truth.states[0], np.diag(prior ** 2),
        scenario.noise, gravity=scenario.noise.gravity)
    upd = vision.SlidingWindowUpdater(
        scenario.camera, scenario.extrinsics, max_clones=max_clones,
        max_features=max_features, sigma_px=scenario.pixel_sigma)
    dt = 1.0 / scenario.imu_rate
    every = max(1, int(round(scenario.imu_rate / scenario.cam_rate)))
    times, errs = [], []
    for k, meas in enumerate(truth.measurements):
        filt.predict(meas, dt)
        if (k + 1) % every == 0:
            t = truth.times[k + 1]
            st_true = truth.states[k + 1]
            if updates:
                obs = camera_frame(scenario, st_true, truth.landmarks,
                                   rng_cam)
                upd.ingest(filt, t, obs)
            times.append(t)
            errs.append(float(np.linalg.norm(filt.state.p - st_true.p)))
    return np.array(times), np.array(errs)


# --- artifact writers -------------------------------------------------------

def _atomic_write(path, writer):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_reports(report, out_dir, scenario=None, extra_meta=None):
    """Write report_<variant>.csv, summary.csv and meta.json atomically."""
    os.makedirs(out_dir, exist_ok=True)
    for v in report.variants:
        path = os.path.join(out_dir, f"report_{v.label}.csv")

        def body(fh, label=v.label):
            w = csv.writer(fh)
            w.writerow(["run", "t", "pos_nees", "ang_nees",
                        "pos_err", "ang_err"])
            for run_i, run in enumerate(report.records[label]):
                for row in run:
                    w.writerow([run_i] + [f"{x:.9g}" for x in row])
        _atomic_write(path, body)
    agg = report.aggregate()

    def summary(fh):
        w = csv.writer(fh)
        w.writerow(["variant", "mean_pos_nees", "mean_ang_nees",
                    "pos_rmse", "ang_rmse", "epochs", "runs"])
        for v in report.variants:
            a = agg[v.label]
            w.writerow([v.label, f"{a['mean_pos_nees']:.9g}",
                        f"{a['mean_ang_nees']:.9g}",
                        f"{a['pos_rmse']:.9g}", f"{a['ang_rmse']:.9g}",
                        a["epochs"], report.n_runs])
    _atomic_write(os.path.join(out_dir, "summary.csv"), summary)
    meta = {
        "seed": report.seed,
        "n_runs": report.n_runs,
        "variants": [v.label for v in report.variants],
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "numpy": np.__version__,
    }
    if scenario is not None:
        meta["scenario"] = {
            "duration": scenario.duration,
            "imu_rate": scenario.imu_rate,
            "cam_rate": scenario.cam_rate,
            "n_landmarks": scenario.n_landmarks,
            "pixel_sigma": scenario.pixel_sigma,
        }
    if extra_meta:
        meta.update(extra_meta)
    _atomic_write(os.path.join(out_dir, "meta.json"),
                  lambda fh: json.dump(meta, fh, indent=2))
